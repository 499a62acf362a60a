//! Convex quadratic program data, validation and JSON file format.
//!
//! ```text
//!     minimize     1/2 x' Q x + c' x
//!     subject to   A x  = b
//!                  B x <= d
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

pub use crate::linalg::eigenvalues_symmetric;

/// Smallest eigenvalue of Q accepted as positive semidefinite.
pub const PSD_TOL: f64 = -1e-8;
/// Smallest eigenvalue of Q accepted as positive definite (oracle requirement).
pub const PD_TOL: f64 = 1e-10;
/// Pivot threshold for the rank test, relative to `||A||_inf`.
pub const RANK_PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: Matrix,
    pub c: Vector,
    pub a_eq: Matrix,
    pub b_eq: Vector,
    pub a_ineq: Matrix,
    pub b_ineq: Vector,
}

/// Dimensions `(n, m, h)`: variables, equality rows, inequality rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub h: usize,
}

impl Dims {
    /// Length of the network state `y = (x; v)`.
    pub fn state_len(&self) -> usize {
        self.n + self.h
    }
}

impl QpProblem {
    /// Checks shapes and finiteness only. Q is stored exactly as given.
    pub fn from_raw(
        q: Matrix,
        c: Vector,
        a_eq: Matrix,
        b_eq: Vector,
        a_ineq: Matrix,
        b_ineq: Vector,
    ) -> Result<Self> {
        let n = c.len();
        let m = b_eq.len();
        let h = b_ineq.len();
        let shape = |r: usize, c: usize| format!("{r}x{c}");
        if n == 0 || m == 0 || h == 0 {
            return Err(Error::Dimension {
                field: if n == 0 {
                    "c"
                } else if m == 0 {
                    "b"
                } else {
                    "d"
                },
                expected: "at least one entry".into(),
                actual: "0".into(),
            });
        }
        if q.shape() != (n, n) {
            return Err(Error::Dimension {
                field: "Q",
                expected: shape(n, n),
                actual: shape(q.nrows(), q.ncols()),
            });
        }
        if a_eq.shape() != (m, n) {
            return Err(Error::Dimension {
                field: "A",
                expected: shape(m, n),
                actual: shape(a_eq.nrows(), a_eq.ncols()),
            });
        }
        if a_ineq.shape() != (h, n) {
            return Err(Error::Dimension {
                field: "B",
                expected: shape(h, n),
                actual: shape(a_ineq.nrows(), a_ineq.ncols()),
            });
        }
        if m > n {
            return Err(Error::Dimension {
                field: "A",
                expected: format!("at most {n} rows"),
                actual: m.to_string(),
            });
        }
        let fields: [(&'static str, &[f64]); 6] = [
            ("Q", q.as_slice()),
            ("c", c.as_slice()),
            ("A", a_eq.as_slice()),
            ("b", b_eq.as_slice()),
            ("B", a_ineq.as_slice()),
            ("d", b_ineq.as_slice()),
        ];
        for (field, values) in fields {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { field });
            }
        }
        Ok(Self {
            q,
            c,
            a_eq,
            b_eq,
            a_ineq,
            b_ineq,
        })
    }

    /// Builds a validated problem: Q is replaced by its symmetric part, then
    /// A must have full row rank and Q must be positive semidefinite.
    pub fn new(
        q: Matrix,
        c: Vector,
        a_eq: Matrix,
        b_eq: Vector,
        a_ineq: Matrix,
        b_ineq: Vector,
    ) -> Result<Self> {
        let mut p = Self::from_raw(q, c, a_eq, b_eq, a_ineq, b_ineq)?;
        p.q = (&p.q + p.q.transpose()) * 0.5;

        let rank = linalg::row_rank(&p.a_eq, RANK_PIVOT_TOL);
        if rank < p.a_eq.nrows() {
            return Err(Error::RankDeficient {
                rank,
                rows: p.a_eq.nrows(),
            });
        }
        let min_eigenvalue = p.min_eigenvalue()?;
        if min_eigenvalue < PSD_TOL {
            return Err(Error::IndefiniteQ { min_eigenvalue });
        }
        Ok(p)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.c.len(),
            m: self.b_eq.len(),
            h: self.b_ineq.len(),
        }
    }

    /// Smallest eigenvalue of the symmetric part of Q.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let sym = (&self.q + self.q.transpose()) * 0.5;
        Ok(eigenvalues_symmetric(&sym)?[0])
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }
}

/// On-disk problem format. Matrices are arrays of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(rename = "B")]
    pub b_ineq: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

fn rows_to_matrix(field: &'static str, rows: &[Vec<f64>], ncols: usize) -> Result<Matrix> {
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Dimension {
            field,
            expected: format!("rows of length {ncols}"),
            actual: format!("row of length {}", bad.len()),
        });
    }
    Ok(linalg::from_rows(rows, ncols))
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<QpProblem> {
        let n = self.c.len();
        let q = rows_to_matrix("Q", &self.q, n)?;
        let a = rows_to_matrix("A", &self.a, n)?;
        let bi = rows_to_matrix("B", &self.b_ineq, n)?;
        QpProblem::new(
            q,
            Vector::from_vec(self.c),
            a,
            Vector::from_vec(self.b),
            bi,
            Vector::from_vec(self.d),
        )
    }

    pub fn from_problem(p: &QpProblem) -> Self {
        Self {
            q: linalg::to_rows(&p.q),
            c: p.c.iter().copied().collect(),
            a: linalg::to_rows(&p.a_eq),
            b: p.b_eq.iter().copied().collect(),
            b_ineq: linalg::to_rows(&p.a_ineq),
            d: p.b_ineq.iter().copied().collect(),
            id: None,
            metadata: None,
        }
    }
}

/// Reads the raw file (no validation beyond JSON shape).
pub fn read_problem_file(path: &Path) -> Result<ProblemFile> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn load_problem(path: &Path) -> Result<QpProblem> {
    read_problem_file(path)?.into_problem()
}

pub fn save_problem(p: &QpProblem, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&ProblemFile::from_problem(p))
        .map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Report-only validation; never fails.
pub fn validate(p: &QpProblem) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, pass: bool, value: f64| {
        checks.push(Check {
            name: name.to_string(),
            pass,
            value,
        })
    };

    let defect = linalg::symmetry_defect(&p.q);
    push("q_symmetric", defect <= linalg::SYMMETRY_TOL, defect);

    let sym = (&p.q + p.q.transpose()) * 0.5;
    let min_eig = eigenvalues_symmetric(&sym)
        .map(|e| e[0])
        .unwrap_or(f64::NAN);
    push("q_positive_semidefinite", min_eig >= PSD_TOL, min_eig);
    push("q_positive_definite", min_eig >= PD_TOL, min_eig);

    let m = p.a_eq.nrows();
    let rank = linalg::row_rank(&p.a_eq, RANK_PIVOT_TOL);
    push("a_full_row_rank", rank == m, rank as f64);

    // least-norm solution of Ax = b through the normal equations
    let gram = &p.a_eq * p.a_eq.transpose();
    let eq_residual = match gram.cholesky() {
        Some(ch) => {
            let x = p.a_eq.transpose() * ch.solve(&p.b_eq);
            (&p.a_eq * x - &p.b_eq).norm()
        }
        None => f64::INFINITY,
    };
    push(
        "equality_feasible",
        eq_residual <= 1e-8 * (1.0 + p.b_eq.norm()),
        eq_residual,
    );
    ValidationReport { checks }
}
