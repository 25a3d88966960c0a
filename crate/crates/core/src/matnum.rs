//! Small dense linear algebra kernel.
//!
//! Everything in this crate works on tiny dense systems (a handful of states,
//! QPs with at most a few hundred variables), so a row-major `Vec<f64>` is all
//! we need. Vectors are plain slices.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};

/// Relative pivot threshold used by the LU factorization.
pub const PIVOT_TOL: f64 = 1e-12;
/// Default relative tolerance for numerical rank.
pub const RANK_TOL: f64 = 1e-9;
/// Symmetry tolerance accepted by [`cholesky`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Dense row-major matrix with at least one row and one column and finite entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self[(i, j)])?;
            }
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(nrows, ncols, data)
    }

    /// 1x1 matrix.
    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(1, 1, vec![v])
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Single-column matrix.
    pub fn column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ · v` without forming the transpose.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.rows != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply transpose of {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    /// `vᵀ · self · v`.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        let mv = self.mul_vec(v)?;
        Ok(dot(v, &mv))
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }

    fn zip_with(&self, rhs: &Matrix, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot {op} {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn try_add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "subtract", |a, b| a - b)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// `(self + selfᵀ) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// The operator impls panic on shape mismatch; use the `try_*` methods on
// untrusted input.
impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        self.try_add(rhs).expect("matrix add shape mismatch")
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        self.try_sub(rhs).expect("matrix sub shape mismatch")
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs).expect("matrix mul shape mismatch")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// LU factorization with partial pivoting, `P·M = L·U`.
#[derive(Debug, Clone)]
pub struct Lu {
    factors: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                m.rows, m.cols
            )));
        }
        let n = m.rows;
        let scale: Vec<f64> = (0..n)
            .map(|i| m.row(i).iter().fold(0.0, |a: f64, v| a.max(v.abs())))
            .collect();
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))
                .unwrap_or(k);
            let pivot = a[(p, k)];
            if scale[perm[p]] == 0.0 || pivot.abs() < PIVOT_TOL * scale[perm[p]] {
                return Err(Error::SingularMatrix { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            for i in k + 1..n {
                let l = a[(i, k)] / pivot;
                a[(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        a[(i, j)] -= l * a[(k, j)];
                    }
                }
            }
        }
        Ok(Self { factors: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.factors.rows
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has length {}, expected {n}",
                b.len()
            )));
        }
        let a = &self.factors;
        let mut z: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&a.row(i)[..i], &z[..i]);
            z[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&a.row(i)[i + 1..], &z[i + 1..]);
            z[i] = (z[i] - s) / a[(i, i)];
        }
        Ok(z)
    }

    /// Solves `M·X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        let bt = b.transpose();
        let mut xt = Matrix::zeros(b.cols, b.rows);
        for j in 0..b.cols {
            let col = self.solve(bt.row(j))?;
            xt.data[j * b.rows..(j + 1) * b.rows].copy_from_slice(&col);
        }
        Ok(xt.transpose())
    }
}

/// Solves `M·z = b` by partial-pivoting LU.
pub fn solve_linear(m: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if m.is_square() && b.len() != m.rows {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            m.rows
        )));
    }
    Lu::new(m)?.solve(b)
}

/// Lower-triangular `L` with `L·Lᵀ = M`.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if !m.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let d = m[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if d <= 0.0 || d.is_nan() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let s = m[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L·Lᵀ·z = b` given the Cholesky factor `L`.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    debug_assert_eq!(b.len(), n);
    let mut z = b.to_vec();
    for i in 0..n {
        let s = dot(&l.row(i)[..i], &z[..i]);
        z[i] = (z[i] - s) / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = 0.0;
        for k in i + 1..n {
            s += l[(k, i)] * z[k];
        }
        z[i] = (z[i] - s) / l[(i, i)];
    }
    z
}

/// Numerical rank from Householder QR with column pivoting: the number of
/// `|R_ii|` exceeding `tol · |R_00|`.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    let (rows, cols) = (m.rows, m.cols);
    let mut a = m.clone();
    let mut colnorm: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| a[(i, j)].powi(2)).sum())
        .collect();
    let steps = rows.min(cols);
    let mut diag = Vec::with_capacity(steps);
    for k in 0..steps {
        let p = (k..cols)
            .max_by(|&i, &j| colnorm[i].total_cmp(&colnorm[j]))
            .unwrap_or(k);
        if p != k {
            for i in 0..rows {
                a.data.swap(i * cols + k, i * cols + p);
            }
            colnorm.swap(k, p);
        }
        let norm = (k..rows).map(|i| a[(i, k)].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag.push(0.0);
            continue;
        }
        let alpha = if a[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..cols {
                let s: f64 = v.iter().enumerate().map(|(t, vi)| vi * a[(k + t, j)]).sum();
                let f = 2.0 * s / vnorm2;
                for (t, vi) in v.iter().enumerate() {
                    a[(k + t, j)] -= f * vi;
                }
            }
        }
        diag.push(a[(k, k)].abs());
        // Recompute the trailing column norms; downdating is not worth the
        // cancellation risk at these sizes.
        for (j, cn) in colnorm.iter_mut().enumerate().skip(k + 1) {
            *cn = (k + 1..rows).map(|i| a[(i, j)].powi(2)).sum();
        }
    }
    let largest = diag.first().copied().unwrap_or(0.0);
    if largest == 0.0 {
        return 0;
    }
    diag.iter().filter(|&&d| d > tol * largest).count()
}

/// Reduces a square matrix to upper Hessenberg form by Householder reflections.
pub fn hessenberg(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Hessenberg reduction needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    let mut a = m.clone();
    for k in 0..n.saturating_sub(2) {
        let norm = (k + 1..n).map(|i| a[(i, k)].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[(k + 1, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // A <- H A
        for j in 0..n {
            let s: f64 = v.iter().enumerate().map(|(t, vi)| vi * a[(k + 1 + t, j)]).sum();
            let f = 2.0 * s / vnorm2;
            for (t, vi) in v.iter().enumerate() {
                a[(k + 1 + t, j)] -= f * vi;
            }
        }
        // A <- A H
        for i in 0..n {
            let s: f64 = v.iter().enumerate().map(|(t, vi)| vi * a[(i, k + 1 + t)]).sum();
            let f = 2.0 * s / vnorm2;
            for (t, vi) in v.iter().enumerate() {
                a[(i, k + 1 + t)] -= f * vi;
            }
        }
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
    Ok(a)
}

/// All eigenvalues as `(re, im)` pairs: Hessenberg reduction followed by
/// Francis double-shift QR.
///
/// `tol` is the relative subdiagonal deflation threshold (clamped to machine
/// epsilon); `max_iters` bounds the QR sweeps spent on any one eigenvalue.
pub fn eigenvalues(m: &Matrix, max_iters: usize, tol: f64) -> Result<Vec<(f64, f64)>> {
    let h = hessenberg(m)?;
    let n = h.rows;
    let eps = tol.max(f64::EPSILON);
    // 1-based working copy keeps the classic index arithmetic readable.
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = h[(i, j)];
        }
    }
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }

    let mut nn = n;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() <= eps * s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[nn - 1][nn - 1];
            let mut w = a[nn][nn - 1] * a[nn - 1][nn];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != 0.0 {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn = nn.saturating_sub(2);
                break;
            }
            if its >= max_iters {
                return Err(Error::NoConvergence {
                    what: "shifted QR eigenvalue iteration",
                    iterations: its,
                });
            }
            if its > 0 && its % 10 == 0 {
                // exceptional shift
                t += x;
                for i in 1..=nn {
                    a[i][i] -= x;
                }
                let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let (mut p, mut q, mut r);
            let mut m = nn - 2;
            loop {
                let z = a[m][m];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = 0.0;
                    if k != nn - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = a[k][j] + q * a[k + 1][j];
                        if k != nn - 1 {
                            p += r * a[k + 2][j];
                            a[k + 2][j] -= p * z;
                        }
                        a[k + 1][j] -= p * y;
                        a[k][j] -= p * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l..=mmin {
                        p = x * a[i][k] + y * a[i][k + 1];
                        if k != nn - 1 {
                            p += z * a[i][k + 2];
                            a[i][k + 2] -= p * r;
                        }
                        a[i][k + 1] -= p * q;
                        a[i][k] -= p;
                    }
                }
                k += 1;
            }
        }
    }
    Ok((1..=n).map(|i| (wr[i], wi[i])).collect())
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(m: &Matrix, max_iters: usize, tol: f64) -> Result<f64> {
    Ok(eigenvalues(m, max_iters, tol)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

/// Spectral radius with the defaults used throughout the crate.
pub fn spectral_radius_default(m: &Matrix) -> Result<f64> {
    spectral_radius(m, 100, f64::EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFiniteEntry { row: 0, col: 1 })
        ));
        assert!(Matrix::new(0, 3, vec![]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn solve_identity() {
        let z = solve_linear(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn solve_scalar_example_block() {
        let z = solve_linear(&m(&[&[1.0, 1.0], &[1.0, 0.0]]), &[0.0, 1.0]).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-15);
        assert!((z[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn solve_singular() {
        let r = solve_linear(&m(&[&[1.0, 1.0], &[2.0, 2.0]]), &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::SingularMatrix { .. })));
        let r = solve_linear(&m(&[&[1.0, 0.0], &[0.0, 0.0]]), &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn solve_dimension_mismatch() {
        let r = solve_linear(&Matrix::identity(2), &[1.0]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
        let r = solve_linear(&Matrix::zeros(2, 3), &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky(&Matrix::identity(2)).unwrap(), Matrix::identity(2));
        assert_eq!(cholesky(&m(&[&[4.0]])).unwrap(), m(&[&[2.0]]));
        assert!(matches!(
            cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
        assert!(matches!(
            cholesky(&m(&[&[1.0, 2.0], &[0.0, 1.0]])),
            Err(Error::NotSymmetric)
        ));
    }

    #[test]
    fn cholesky_solve_matches_lu() {
        let a = m(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let l = cholesky(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x1 = cholesky_solve(&l, &b);
        let x2 = solve_linear(&a, &b).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&Matrix::identity(3), RANK_TOL), 3);
        assert_eq!(rank(&m(&[&[1.0, 1.0], &[0.0, 0.0]]), RANK_TOL), 1);
        assert_eq!(rank(&m(&[&[1.0, 1.0], &[1.0, 1.0]]), RANK_TOL), 1);
        assert_eq!(rank(&Matrix::zeros(2, 3), RANK_TOL), 0);
        assert_eq!(rank(&m(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.1]]), RANK_TOL), 2);
    }

    #[test]
    fn spectral_radius_examples() {
        let r = spectral_radius_default(&m(&[&[2.0]])).unwrap();
        assert_eq!(r, 2.0);
        let r = spectral_radius_default(&m(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(r, 0.0);
        let r = spectral_radius_default(&m(&[&[2.0 - 1.618]])).unwrap();
        assert!((r - 0.382).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_complex_pair() {
        // rotation scaled by 0.9: eigenvalues 0.9·e^{±iθ}
        let (c, s) = (0.3f64.cos() * 0.9, 0.3f64.sin() * 0.9);
        let r = spectral_radius_default(&m(&[&[c, -s], &[s, c]])).unwrap();
        assert!((r - 0.9).abs() < 1e-12);
        // companion matrix of (z-0.5)(z^2+0.64): roots 0.5, ±0.8i
        let comp = m(&[&[0.5, -0.64, 0.32], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let r = spectral_radius_default(&comp).unwrap();
        assert!((r - 0.8).abs() < 1e-12, "{r}");
    }

    #[test]
    fn hessenberg_preserves_trace_and_shape() {
        let a = m(&[
            &[1.0, 2.0, 3.0, 4.0],
            &[5.0, 6.0, 7.0, 8.0],
            &[9.0, 1.0, 2.0, 3.0],
            &[4.0, 5.0, 6.0, 7.5],
        ]);
        let h = hessenberg(&a).unwrap();
        let tr_a: f64 = (0..4).map(|i| a[(i, i)]).sum();
        let tr_h: f64 = (0..4).map(|i| h[(i, i)]).sum();
        assert!((tr_a - tr_h).abs() < 1e-12);
        for i in 2..4 {
            for j in 0..i - 1 {
                assert_eq!(h[(i, j)], 0.0);
            }
        }
    }

    fn arb_matrix(max_n: usize) -> impl Strategy<Value = Matrix> {
        (1..=max_n).prop_flat_map(|n| {
            prop::collection::vec(-2.0f64..2.0, n * n)
                .prop_map(move |d| Matrix::new(n, n, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn solve_residual_small(
            (a, b) in (1usize..6).prop_flat_map(|n| (
                prop::collection::vec(-1.0f64..1.0, n * n),
                prop::collection::vec(-10.0f64..10.0, n),
            ))
        ) {
            let n = b.len();
            // diagonal boost keeps the condition number modest
            let mut a = Matrix::new(n, n, a).unwrap();
            for i in 0..n {
                a[(i, i)] += 3.0 * n as f64;
            }
            let z = solve_linear(&a, &b).unwrap();
            let res = vec_sub(&a.mul_vec(&z).unwrap(), &b);
            prop_assert!(norm_inf(&res) <= 1e-8 * norm_inf(&b).max(1e-300));
        }

        #[test]
        fn cholesky_recovers_factor(
            (n, d) in (1usize..5).prop_flat_map(|n| (Just(n), prop::collection::vec(-1.0f64..1.0, n * n)))
        ) {
            let mut l = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..i {
                    l[(i, j)] = d[i * n + j];
                }
                l[(i, i)] = 0.5 + d[i * n + i].abs();
            }
            let a = (&l * &l.transpose()).symmetrized();
            let l2 = cholesky(&a).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((l[(i, j)] - l2[(i, j)]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn spectral_radius_homogeneous(a in arb_matrix(6), alpha in -3.0f64..3.0) {
            let r = spectral_radius_default(&a).unwrap();
            let ra = spectral_radius_default(&a.scale(alpha)).unwrap();
            prop_assert!((ra - alpha.abs() * r).abs() <= 1e-8 * (1.0 + r), "{ra} vs {}", alpha.abs() * r);
        }

        #[test]
        fn rank_transpose_invariant(
            (r, c, d) in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(-3i32..3, r * c)))
        ) {
            // integer entries make exact rank deficiency common
            let a = Matrix::new(r, c, d.into_iter().map(f64::from).collect()).unwrap();
            prop_assert_eq!(rank(&a, RANK_TOL), rank(&a.transpose(), RANK_TOL));
        }
    }
}
