//! Ground-truth QP solutions by exhaustive active-set enumeration.
//!
//! Every subset `S` of inequality rows is tried as the active set: the KKT
//! system
//!
//! ```text
//! [ Q    A^T  B_S^T ] [  x  ]   [ -c  ]
//! [ A    0    0     ] [ -u  ] = [  b  ]
//! [ B_S  0    0     ] [ v_S ]   [ d_S ]
//! ```
//!
//! is solved directly, and the candidate is kept when the remaining rows are
//! satisfied and `v_S >= 0`. With `2^h` subsets this is only meant for small
//! `h`, where it serves as an auditable reference for the network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::network::build_projectors;
use crate::problem::{QpProblem, PD_TOL};

const MULTIPLIER_TOL: f64 = 1e-10;
const SLACK_TOL: f64 = 1e-10;
const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktSolution {
    #[serde(rename = "x")]
    pub x_star: Vec<f64>,
    #[serde(rename = "u")]
    pub u_star: Vec<f64>,
    #[serde(rename = "v")]
    pub v_star: Vec<f64>,
    /// Zero-based indices of the active inequality rows.
    pub active_set: Vec<usize>,
    pub objective: f64,
    /// Subsets whose KKT matrix was singular and were therefore skipped.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<Vec<usize>>,
}

impl KktSolution {
    pub fn x(&self) -> Vector {
        Vector::from_column_slice(&self.x_star)
    }

    /// `y* = (x*; v*)`, the matching network state.
    pub fn stacked(&self) -> Vector {
        Vector::from_iterator(
            self.x_star.len() + self.v_star.len(),
            self.x_star.iter().chain(&self.v_star).copied(),
        )
    }
}

/// Subsets of `0..h` in lexicographic order of their sorted index lists.
fn subsets_lex(h: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0..1u64 << h)
        .map(|mask| (0..h).filter(|i| mask >> i & 1 == 1).collect())
        .collect();
    out.sort();
    out
}

fn solve_subset(p: &QpProblem, active: &[usize]) -> Option<(Vector, Vector, Vector)> {
    let dims = p.dims();
    let (n, m, k) = (dims.n, dims.m, active.len());
    let size = n + m + k;
    let mut kkt = Matrix::zeros(size, size);
    let mut rhs = Vector::zeros(size);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.q);
    kkt.view_mut((0, n), (n, m)).copy_from(&p.a_eq.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(&p.a_eq);
    for (j, &row) in active.iter().enumerate() {
        for col in 0..n {
            kkt[(col, n + m + j)] = p.a_ineq[(row, col)];
            kkt[(n + m + j, col)] = p.a_ineq[(row, col)];
        }
        rhs[n + m + j] = p.b_ineq[row];
    }
    rhs.rows_mut(0, n).copy_from(&(-&p.c));
    rhs.rows_mut(n, m).copy_from(&p.b_eq);

    let z = linalg::solve_dense(&kkt, &rhs)?;
    let x = z.rows(0, n).into_owned();
    let u = -z.rows(n, m).into_owned();
    let v_active = z.rows(n + m, k).into_owned();
    Some((x, u, v_active))
}

pub fn solve(p: &QpProblem) -> Result<KktSolution> {
    let min_eigenvalue = p.min_eigenvalue()?;
    if min_eigenvalue < PD_TOL {
        return Err(Error::NotPositiveDefinite { min_eigenvalue });
    }
    let h = p.dims().h;
    let mut best: Option<KktSolution> = None;
    let mut skipped = Vec::new();

    for active in subsets_lex(h) {
        let Some((x, u, v_active)) = solve_subset(p, &active) else {
            skipped.push(active);
            continue;
        };
        if v_active.iter().any(|v| *v < -MULTIPLIER_TOL) {
            continue;
        }
        let slack = &p.b_ineq - &p.a_ineq * &x;
        let inactive_ok = (0..h)
            .filter(|i| !active.contains(i))
            .all(|i| slack[i] >= -SLACK_TOL * (1.0 + p.b_ineq[i].abs()));
        if !inactive_ok {
            continue;
        }
        let objective = p.objective(&x);
        if best
            .as_ref()
            .is_some_and(|b| objective >= b.objective - TIE_TOL)
        {
            continue;
        }
        let mut v = vec![0.0; h];
        for (j, &row) in active.iter().enumerate() {
            v[row] = v_active[j].max(0.0);
        }
        best = Some(KktSolution {
            x_star: x.iter().copied().collect(),
            u_star: u.iter().copied().collect(),
            v_star: v,
            active_set: active,
            objective,
            skipped: Vec::new(),
        });
    }
    let mut sol = best.ok_or(Error::Infeasible)?;
    sol.skipped = skipped;
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max |Q x + c - A^T u + B^T v|`
    pub stationarity: f64,
    /// `max |A x - b|`
    pub primal_eq: f64,
    /// `max (B x - d)_+`
    pub primal_ineq: f64,
    /// `max |v_i (d - B x)_i|`
    pub comp_slack: f64,
    /// `max (-v)_+`
    pub dual_feas: f64,
    /// `|| (I - M)(Q x + c + B^T v) + N (A x - b) ||_2`, the projected form of
    /// stationarity that the network's equilibrium equation encodes.
    pub projected_stationarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.primal_eq,
            self.primal_ineq,
            self.comp_slack,
            self.dual_feas,
            self.projected_stationarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn amax(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

pub fn kkt_residuals(p: &QpProblem, sol: &KktSolution) -> Result<KktResiduals> {
    let x = sol.x();
    let u = Vector::from_column_slice(&sol.u_star);
    let v = Vector::from_column_slice(&sol.v_star);
    let dims = p.dims();
    if x.len() != dims.n || u.len() != dims.m || v.len() != dims.h {
        return Err(Error::Dimension {
            field: "solution",
            expected: format!("({}, {}, {})", dims.n, dims.m, dims.h),
            actual: format!("({}, {}, {})", x.len(), u.len(), v.len()),
        });
    }
    let grad = &p.q * &x + &p.c + p.a_ineq.transpose() * &v;
    let stationarity = amax(&(&grad - p.a_eq.transpose() * &u));
    let eq = &p.a_eq * &x - &p.b_eq;
    let slack = &p.b_ineq - &p.a_ineq * &x;
    let primal_ineq = slack
        .iter()
        .fold(0.0_f64, |a, s| if -s > a { -s } else { a });
    let comp_slack = v
        .iter()
        .zip(slack.iter())
        .fold(0.0_f64, |a, (vi, si)| a.max((vi * si).abs()));
    let dual_feas = v
        .iter()
        .fold(0.0_f64, |a, vi| if -vi > a { -vi } else { a });

    let (m, n_proj) = build_projectors(p)?;
    let i_minus_m = Matrix::identity(dims.n, dims.n) - m;
    let projected = &i_minus_m * &grad + &n_proj * &eq;

    Ok(KktResiduals {
        stationarity,
        primal_eq: amax(&eq),
        primal_ineq,
        comp_slack,
        dual_feas,
        projected_stationarity: projected.norm(),
    })
}
