#![allow(dead_code)]

use std::path::PathBuf;

use qpnet::dde::{self, DelaySpec, FnField, HistoryFn, IntegrationConfig};
use qpnet::network::{build_projectors, project_box, BoxSet, ProjectionNetwork};
use qpnet::problem::{load_problem, QpProblem};
use qpnet::{Matrix, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn load(name: &str) -> QpProblem {
    load_problem(&fixture(name)).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, range: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-range..=range))
}

pub fn random_vector(rng: &mut ChaCha8Rng, len: usize, range: f64) -> Vector {
    Vector::from_fn(len, |_, _| rng.random_range(-range..=range))
}

/// Determinant by cofactor expansion, for Gram checks that avoid the library's own
/// factorizations.
pub fn det_small(m: &Matrix) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => (0..m.ncols())
            .map(|j| {
                let minor = m.clone().remove_row(0).remove_column(j);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[(0, j)] * det_small(&minor)
            })
            .sum(),
    }
}

/// Random `m x n` matrix whose Gram determinant is bounded away from zero.
pub fn random_full_rank(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
    loop {
        let a = random_matrix(rng, m, n, 2.0);
        if det_small(&(&a * a.transpose())) > 0.05 {
            return a;
        }
    }
}

/// Strictly convex QP with a known feasible point `x0` (so never infeasible).
pub fn random_convex_problem(rng: &mut ChaCha8Rng, n: usize, m: usize, h: usize) -> QpProblem {
    let r = random_matrix(rng, n, n, 1.0);
    let q = r.transpose() * &r + Matrix::identity(n, n) * 0.5;
    let c = random_vector(rng, n, 3.0);
    let a = random_full_rank(rng, m, n);
    let x0 = random_vector(rng, n, 2.0);
    let b = &a * &x0;
    let bi = random_matrix(rng, h, n, 2.0);
    let d = &bi * &x0 + Vector::from_fn(h, |_, _| rng.random_range(0.0..1.0));
    QpProblem::new(q, c, a, b, bi, d).unwrap()
}

/// `count` random problems with `n <= 4`, `m < n` and `h <= min(3, n)`.
pub fn random_problems(rng: &mut ChaCha8Rng, count: usize) -> Vec<QpProblem> {
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=4);
            let m = rng.random_range(1..n);
            let h = rng.random_range(1..=n.min(3));
            random_convex_problem(rng, n, m, h)
        })
        .collect()
}

/// Worst violation of `M^2 = M`, `M^T = M`, `M A^T = A^T` and `A N = I`.
pub fn projector_law_defect(a: &Matrix) -> f64 {
    let (m, n) = (a.nrows(), a.ncols());
    let p = QpProblem::new(
        Matrix::identity(n, n),
        Vector::zeros(n),
        a.clone(),
        Vector::zeros(m),
        Matrix::zeros(1, n),
        Vector::from_element(1, 1.0),
    )
    .unwrap();
    let (mm, nn) = build_projectors(&p).unwrap();
    let at = a.transpose();
    [
        (&mm * &mm - &mm).amax(),
        (mm.transpose() - &mm).amax(),
        (&mm * &at - &at).amax(),
        (a * &nn - Matrix::identity(m, m)).amax(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// `(||P(x) - P(y)|| - ||x - y||, ||P(P(x)) - P(x)||)`.
pub fn box_defects(x: &Vector, y: &Vector, bounds: &BoxSet) -> (f64, f64) {
    let (px, py) = (project_box(x, bounds), project_box(y, bounds));
    let expansion = (&px - &py).norm() - (x - y).norm();
    let idem = (project_box(&px, bounds) - &px).norm();
    (expansion, idem)
}

/// Exact solution of `y' = -y(t - 1)`, `y = 1` for `t <= 0`, built piece by
/// piece: on `[k - 1, k]` with local `s = t - (k - 1)`,
/// `p_k(s) = p_k(0) - int_0^s p_{k-1}`.
pub fn unit_delay_exact(t_end: usize) -> impl Fn(f64) -> f64 {
    let mut pieces: Vec<Vec<f64>> = vec![vec![1.0]];
    for k in 1..=t_end {
        let prev = &pieces[k - 1];
        let start: f64 = prev.iter().sum();
        let mut next = vec![start];
        next.extend(prev.iter().enumerate().map(|(j, c)| -c / (j + 1) as f64));
        pieces.push(next);
    }
    move |t: f64| {
        if t <= 0.0 {
            return 1.0;
        }
        let k = (t.ceil() as usize).clamp(1, pieces.len() - 1);
        let s = t - (k - 1) as f64;
        pieces[k].iter().rev().fold(0.0, |acc, c| acc * s + c)
    }
}

/// Max error of RK4 on the unit-delay problem over `[0, t_end]`.
pub fn unit_delay_error(step: f64, t_end: usize) -> f64 {
    let field = FnField {
        dim: 1,
        f: |_t: f64, _y: &Vector, yd: &Vector| -yd,
    };
    let cfg = IntegrationConfig {
        step,
        t_end: t_end as f64,
        converge_tol: 1e-300,
        stall_window: 1.0,
    };
    let history = HistoryFn::Constant(Vector::from_element(1, 1.0));
    let traj = dde::integrate_field(&field, &DelaySpec::constant(1.0), &history, &cfg).unwrap();
    let exact = unit_delay_exact(t_end);
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(t, y)| (y[0] - exact(*t)).abs())
        .fold(0.0, f64::max)
}

/// Largest deviation from `y_star` when the history sits at `y_star`.
pub fn equilibrium_drift(
    net: &ProjectionNetwork,
    y_star: &Vector,
    delay: &DelaySpec,
    cfg: &IntegrationConfig,
) -> f64 {
    let traj = dde::integrate(net, delay, &HistoryFn::Constant(y_star.clone()), cfg).unwrap();
    traj.states
        .iter()
        .map(|y| (y - y_star).norm())
        .fold(0.0, f64::max)
}

/// Final-state difference between step `h` and `h / 2`, without early stopping.
pub fn step_halving_gap(
    net: &ProjectionNetwork,
    delay: &DelaySpec,
    history: &HistoryFn,
    step: f64,
    t_end: f64,
) -> f64 {
    let run = |step: f64| {
        let cfg = IntegrationConfig {
            step,
            t_end,
            converge_tol: 1e-300,
            stall_window: 1.0,
        };
        dde::integrate(net, delay, history, &cfg).unwrap()
    };
    let (coarse, fine) = (run(step), run(step / 2.0));
    assert_eq!(coarse.t_last(), fine.t_last());
    (coarse.final_state() - fine.final_state()).norm()
}

/// Minimum of a 2-D problem with one equality row by scanning 2000 points of
/// the feasible segment of the line `a x = b`.
pub fn grid_minimum_2d(p: &QpProblem) -> Option<f64> {
    let a = p.a_eq.row(0);
    let (a0, a1, b) = (a[0], a[1], p.b_eq[0]);
    let norm2 = a0 * a0 + a1 * a1;
    let base = Vector::from_vec(vec![a0 * b / norm2, a1 * b / norm2]);
    let dir = Vector::from_vec(vec![-a1, a0]) / norm2.sqrt();

    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..p.a_ineq.nrows() {
        let row = p.a_ineq.row(i).transpose();
        let slope = row.dot(&dir);
        let room = p.b_ineq[i] - row.dot(&base);
        if slope.abs() < 1e-14 {
            if room < 0.0 {
                return None;
            }
        } else if slope > 0.0 {
            hi = hi.min(room / slope);
        } else {
            lo = lo.max(room / slope);
        }
    }
    if lo > hi {
        return None;
    }
    // objective along the line is convex in s, so its constrained minimizer is
    // the clamp of the unconstrained one; centre a 10-wide window there
    let qd = &p.q * &dir;
    let s_free = -(dir.dot(&(&p.q * &base)) + p.c.dot(&dir)) / dir.dot(&qd);
    let centre = s_free.clamp(lo, hi);
    let (wlo, whi) = ((centre - 5.0).max(lo), (centre + 5.0).min(hi));
    let count = 2000;
    (0..count)
        .map(|i| {
            let s = if count == 1 || whi == wlo {
                wlo
            } else {
                wlo + (whi - wlo) * i as f64 / (count - 1) as f64
            };
            p.objective(&(&base + &dir * s))
        })
        .reduce(f64::min)
}

pub fn random_2d_problem(rng: &mut ChaCha8Rng) -> QpProblem {
    random_convex_problem(rng, 2, 1, 2)
}
