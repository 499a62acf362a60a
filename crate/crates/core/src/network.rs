//! Projection network construction.
//!
//! The equality multiplier is eliminated through the orthogonal projector
//! `M = A^T (A A^T)^{-1} A` and `N = A^T (A A^T)^{-1}`. The network state is
//! `y = (x; v)` with `v >= 0` the inequality multipliers, and its equilibria
//! are the solutions of `y = P_U(y - alpha (W y + p))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::problem::{Dims, QpProblem};

/// Largest tolerated condition estimate of `A A^T`.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub alpha: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl NetworkParams {
    pub fn new(alpha: f64, gamma: f64, kappa: f64) -> Result<Self> {
        let p = Self {
            alpha,
            gamma,
            kappa,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParam {
                name: "alpha",
                reason: format!("must be finite and > 0, got {}", self.alpha),
            });
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidParam {
                name: "kappa",
                reason: format!("must be finite and > 0, got {}", self.kappa),
            });
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidParam {
                name: "gamma",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Linear map taking the n-row coupling terms down to h rows.
///
/// `Zero` drops the coupling entirely, which is the same network as `gamma = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HSelector {
    #[default]
    Zero,
    FirstHRows,
}

impl HSelector {
    fn apply(self, x: &Matrix, h: usize) -> Matrix {
        match self {
            HSelector::Zero => Matrix::zeros(h, x.ncols()),
            HSelector::FirstHRows => x.rows(0, h).into_owned(),
        }
    }
}

/// The box `U = { l <= y <= j }` with `l = (-inf_n; 0_h)` and `j = +inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn for_dims(n: usize, h: usize) -> Self {
        let mut lower = vec![f64::NEG_INFINITY; n];
        lower.extend(std::iter::repeat_n(0.0, h));
        Self {
            lower,
            upper: vec![f64::INFINITY; n + h],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

/// Componentwise clamp into the box.
pub fn project_box(s: &Vector, bounds: &BoxSet) -> Vector {
    debug_assert_eq!(s.len(), bounds.len());
    Vector::from_iterator(
        s.len(),
        s.iter()
            .zip(bounds.lower.iter().zip(&bounds.upper))
            .map(|(&si, (&lo, &hi))| si.max(lo).min(hi)),
    )
}

#[derive(Debug, Clone)]
pub struct ProjectionNetwork {
    pub m: Matrix,
    pub n: Matrix,
    pub w: Matrix,
    pub p: Vector,
    pub bounds: BoxSet,
    pub params: NetworkParams,
    pub selector: HSelector,
    pub dims: Dims,
}

/// Returns `(M, N)` with `N^T` solving `(A A^T) N^T = A` by Cholesky.
pub fn build_projectors(problem: &QpProblem) -> Result<(Matrix, Matrix)> {
    let a = &problem.a_eq;
    let gram = a * a.transpose();
    let eig = linalg::eigenvalues_symmetric(&gram)?;
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond > MAX_GRAM_CONDITION {
        return Err(Error::IllConditioned { cond });
    }
    let chol = gram.cholesky().ok_or(Error::IllConditioned {
        cond: f64::INFINITY,
    })?;
    let n_proj = chol.solve(a).transpose();
    let m = &n_proj * a;
    Ok((m, n_proj))
}

/// Assembles `W` and `p` blockwise:
///
/// ```text
/// W = [ G                    H              ]    G = (I - M) Q + M
///     [ gamma S(G) - B       gamma S(H)     ]    H = (I - M) B^T
///
/// p = [ q ; d + gamma S(q) ]                     q = (I - M) c - N b
/// ```
pub fn build_network(
    problem: &QpProblem,
    params: NetworkParams,
    selector: HSelector,
) -> Result<ProjectionNetwork> {
    params.check()?;
    let dims = problem.dims();
    let Dims { n, h, .. } = dims;
    if selector == HSelector::FirstHRows && n < h {
        return Err(Error::InvalidParam {
            name: "selector",
            reason: format!("first_h_rows needs n >= h, got n = {n}, h = {h}"),
        });
    }

    let (m, n_proj) = build_projectors(problem)?;
    let i_minus_m = Matrix::identity(n, n) - &m;
    let g = &i_minus_m * &problem.q + &m;
    let hb = &i_minus_m * problem.a_ineq.transpose();
    let q = &i_minus_m * &problem.c - &n_proj * &problem.b_eq;

    let gamma = params.gamma;
    let q_col = Matrix::from_column_slice(n, 1, q.as_slice());
    let sel_g = selector.apply(&g, h) * gamma - &problem.a_ineq;
    let sel_h = selector.apply(&hb, h) * gamma;
    let sel_q = selector.apply(&q_col, h) * gamma;

    let mut w = Matrix::zeros(n + h, n + h);
    w.view_mut((0, 0), (n, n)).copy_from(&g);
    w.view_mut((0, n), (n, h)).copy_from(&hb);
    w.view_mut((n, 0), (h, n)).copy_from(&sel_g);
    w.view_mut((n, n), (h, h)).copy_from(&sel_h);

    let mut p = Vector::zeros(n + h);
    p.rows_mut(0, n).copy_from(&q);
    for i in 0..h {
        p[n + i] = problem.b_ineq[i] + sel_q[(i, 0)];
    }

    Ok(ProjectionNetwork {
        m,
        n: n_proj,
        w,
        p,
        bounds: BoxSet::for_dims(n, h),
        params,
        selector,
        dims,
    })
}

impl ProjectionNetwork {
    pub fn state_len(&self) -> usize {
        self.dims.state_len()
    }

    /// `P_U(y - alpha (W y + p))`
    pub fn projected_step(&self, y: &Vector) -> Vector {
        let s = y - (&self.w * y + &self.p) * self.params.alpha;
        project_box(&s, &self.bounds)
    }

    pub fn fixed_point_residual(&self, y: &Vector) -> f64 {
        (y - self.projected_step(y)).norm()
    }

    /// Right-hand side of the delayed dynamics:
    /// `-kappa y + (kappa - 1) P_U(y_d - alpha (W y_d + p)) + P_U(y - alpha (W y + p))`.
    pub fn rhs(&self, _t: f64, y_now: &Vector, y_delayed: &Vector) -> Vector {
        let kappa = self.params.kappa;
        let mut out = self.projected_step(y_now) - y_now * kappa;
        if kappa != 1.0 {
            out += self.projected_step(y_delayed) * (kappa - 1.0);
        }
        out
    }

    /// Splits a state into `(x, v)`.
    pub fn split(&self, y: &Vector) -> (Vec<f64>, Vec<f64>) {
        let n = self.dims.n;
        (y.as_slice()[..n].to_vec(), y.as_slice()[n..].to_vec())
    }

    pub fn to_dump(&self) -> NetworkDump {
        NetworkDump {
            dims: self.dims,
            params: self.params,
            selector: self.selector,
            m: linalg::to_rows(&self.m),
            n: linalg::to_rows(&self.n),
            w: linalg::to_rows(&self.w),
            p: self.p.iter().copied().collect(),
            lower: self.bounds.lower.iter().map(|v| ExtReal(*v)).collect(),
            upper: self.bounds.upper.iter().map(|v| ExtReal(*v)).collect(),
        }
    }
}

pub fn fixed_point_residual(y: &Vector, net: &ProjectionNetwork) -> f64 {
    net.fixed_point_residual(y)
}

pub fn rhs(t: f64, y_now: &Vector, y_delayed: &Vector, net: &ProjectionNetwork) -> Vector {
    net.rhs(t, y_now, y_delayed)
}

/// Extended real serialized as a number, or `"inf"` / `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtReal(pub f64);

impl Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ExtReal(v)),
            Raw::Text(t) if t == "inf" || t == "+inf" => Ok(ExtReal(f64::INFINITY)),
            Raw::Text(t) if t == "-inf" => Ok(ExtReal(f64::NEG_INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad extended real {t:?}"))),
        }
    }
}

/// Row-major JSON view of a built network, as printed by `qpnet build`.
///
/// It can be read back for stability checks on hand-made networks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDump {
    pub dims: Dims,
    pub params: NetworkParams,
    #[serde(default)]
    pub selector: HSelector,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    pub n: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub lower: Vec<ExtReal>,
    pub upper: Vec<ExtReal>,
}

impl NetworkDump {
    pub fn into_network(self) -> Result<ProjectionNetwork> {
        self.params.check()?;
        let Dims { n, m, h } = self.dims;
        let k = n + h;
        let check = |field: &'static str, rows: &[Vec<f64>], r: usize, c: usize| {
            if rows.len() != r || rows.iter().any(|row| row.len() != c) {
                return Err(Error::Dimension {
                    field,
                    expected: format!("{r}x{c}"),
                    actual: format!("{} rows", rows.len()),
                });
            }
            Ok(linalg::from_rows(rows, c))
        };
        let mm = check("M", &self.m, n, n)?;
        let nn = check("N", &self.n, n, m)?;
        let w = check("W", &self.w, k, k)?;
        if self.p.len() != k || self.lower.len() != k || self.upper.len() != k {
            return Err(Error::Dimension {
                field: "p",
                expected: k.to_string(),
                actual: self.p.len().to_string(),
            });
        }
        Ok(ProjectionNetwork {
            m: mm,
            n: nn,
            w,
            p: Vector::from_vec(self.p),
            bounds: BoxSet {
                lower: self.lower.into_iter().map(|e| e.0).collect(),
                upper: self.upper.into_iter().map(|e| e.0).collect(),
            },
            params: self.params,
            selector: self.selector,
            dims: self.dims,
        })
    }
}
