//! Problem files: JSON documents describing a tracking problem.

use std::path::Path;

use avgtrack::{LinearSystem, LinearTermConvention, Matrix, MpcConfig, TrackingProblem};
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub r_ss: Vec<f64>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub mpc: Option<MpcSection>,
    #[serde(default)]
    pub convention: Option<ConventionName>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    #[serde(rename = "N")]
    pub horizon: Option<usize>,
    #[serde(rename = "L")]
    pub rollout: Option<usize>,
    pub qp_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConventionName {
    Paper,
    Exact,
}

/// A validated problem file.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub problem: TrackingProblem,
    pub convention: LinearTermConvention,
    pub x0: Option<Vec<f64>>,
    pub mpc: MpcConfig,
    /// Matches the scalar example shipped in `data/`.
    pub bundled_scalar: bool,
}

pub fn load(path: &Path) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|f| match f {
        Failure::Usage(msg) => Failure::Usage(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str) -> Result<Loaded, Failure> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| {
        Failure::Usage(format!("line {} column {}: {e}", e.line(), e.column()))
    })?;
    let bad = |key: &str, msg: String| Failure::Usage(format!("line {}: key \"{key}\": {msg}", key_line(text, key)));
    let mat = |key: &str, rows: &[Vec<f64>]| Matrix::from_rows(rows).map_err(|e| bad(key, e.to_string()));

    let a = mat("A", &file.a)?;
    let n = a.rows();
    if !a.is_square() {
        return Err(bad("A", format!("must be square, got {}x{}", a.rows(), a.cols())));
    }
    let b = mat("B", &file.b)?;
    if b.rows() != n {
        return Err(bad("B", format!("needs {n} rows to match A, got {}", b.rows())));
    }
    let m = b.cols();
    let c = mat("C", &file.c)?;
    if c.cols() != n {
        return Err(bad("C", format!("needs {n} columns to match A, got {}", c.cols())));
    }
    let p = c.rows();
    let q = mat("Q", &file.q)?;
    if q.rows() != p || q.cols() != p {
        return Err(bad("Q", format!("must be {p}x{p}, got {}x{}", q.rows(), q.cols())));
    }
    let r = mat("R", &file.r)?;
    if r.rows() != m || r.cols() != m {
        return Err(bad("R", format!("must be {m}x{m}, got {}x{}", r.rows(), r.cols())));
    }
    if file.r_ss.len() != p {
        return Err(bad("r_ss", format!("needs {p} entries, got {}", file.r_ss.len())));
    }
    if let Some(x0) = &file.x0 {
        if x0.len() != n {
            return Err(bad("x0", format!("needs {n} entries, got {}", x0.len())));
        }
    }
    let sys = LinearSystem::new(a, b, c).map_err(|e| bad("A", e.to_string()))?;
    let problem = TrackingProblem::new(sys, q, r, file.r_ss.clone()).map_err(|e| match e {
        avgtrack::Error::NotPositiveDefinite { .. } | avgtrack::Error::NotSymmetric => {
            bad("Q", format!("Q and R must be symmetric positive definite ({e})"))
        }
        other => bad("r_ss", other.to_string()),
    })?;

    let mut mpc = MpcConfig::default();
    if let Some(sec) = file.mpc {
        mpc.horizon = sec.horizon.unwrap_or(mpc.horizon);
        mpc.rollout = sec.rollout.unwrap_or(mpc.rollout);
        mpc.qp_tol = sec.qp_tol.unwrap_or(mpc.qp_tol);
    }
    mpc.validate().map_err(|e| bad("mpc", e.to_string()))?;

    let convention = match file.convention {
        Some(ConventionName::Exact) => LinearTermConvention::ExactExpansion,
        _ => LinearTermConvention::PaperLinearTerms,
    };
    let one = |m: &Vec<Vec<f64>>| m.len() == 1 && m[0] == [1.0];
    let bundled_scalar = file.a == [[2.0]]
        && one(&file.b)
        && one(&file.c)
        && one(&file.q)
        && one(&file.r)
        && file.r_ss == [1.0]
        && convention == LinearTermConvention::PaperLinearTerms;
    Ok(Loaded {
        problem,
        convention,
        x0: file.x0,
        mpc,
        bundled_scalar,
    })
}

/// 1-based line of the first occurrence of `"key"`, or 1.
fn key_line(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.find(&needle)
        .map_or(1, |pos| text[..pos].matches('\n').count() + 1)
}
