//! Exponential-stability margin of the delayed network.
//!
//! The network is globally exponentially stable when
//! `(|kappa - 1| + 1) ||I - alpha W|| - kappa < 0`, with `||.||` the induced
//! 2-norm. The margin is a sufficient condition only; observed decay rates are
//! fitted separately by [`fit_decay_rate`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dde::Trajectory;
use crate::linalg::{Matrix, Vector};
use crate::network::ProjectionNetwork;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 100_000;
const RESTART_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `||I - alpha W||_2`
    pub norm: f64,
    pub margin: f64,
    pub stable: bool,
    pub alpha: f64,
    pub kappa: f64,
    /// `(|kappa - 1| + 1) ||I - alpha W|| - alpha`, the variant with alpha as the
    /// subtrahend. Reported for reference only; it does not decide `stable`.
    pub margin_alpha_subtrahend: f64,
}

impl StabilityReport {
    pub fn from_norm(norm: f64, alpha: f64, kappa: f64) -> Self {
        let factor = (kappa - 1.0).abs() + 1.0;
        let margin = factor * norm - kappa;
        Self {
            norm,
            margin,
            stable: margin < 0.0,
            alpha,
            kappa,
            margin_alpha_subtrahend: factor * norm - alpha,
        }
    }
}

fn power_iteration(sts: &Matrix, start: Vector) -> f64 {
    let mut u = start;
    let norm = u.norm();
    if norm == 0.0 {
        return 0.0;
    }
    u /= norm;
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let next = sts * &u;
        // Rayleigh quotient; dividing by u.u keeps exact cases (S = I) exact
        let next_lambda = u.dot(&next) / u.dot(&u);
        let next_norm = next.norm();
        if next_norm == 0.0 {
            return 0.0;
        }
        u = next / next_norm;
        let converged = (next_lambda - lambda).abs() <= POWER_TOL * next_lambda.abs();
        lambda = next_lambda;
        if converged {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Largest singular value, by power iteration on `S^T S`.
///
/// Runs from `(1, ..., 1) / sqrt(k)` and from one fixed-seed random start and
/// keeps the larger estimate.
pub fn spectral_norm(s: &Matrix) -> f64 {
    let k = s.ncols();
    if k == 0 || s.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let sts = s.transpose() * s;
    let ones = Vector::from_element(k, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let random = Vector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
    power_iteration(&sts, ones).max(power_iteration(&sts, random))
}

pub fn stability_margin_for(w: &Matrix, alpha: f64, kappa: f64) -> StabilityReport {
    let k = w.nrows();
    let map = Matrix::identity(k, k) - w * alpha;
    StabilityReport::from_norm(spectral_norm(&map), alpha, kappa)
}

pub fn stability_margin(net: &ProjectionNetwork) -> StabilityReport {
    stability_margin_for(&net.w, net.params.alpha, net.params.kappa)
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

pub fn default_alpha_grid() -> Vec<f64> {
    log_grid(1e-4, 2.0, 200)
}

/// Picks the grid point with the smallest margin; ties go to the earlier point.
///
/// `W` does not depend on alpha, so one built network serves the whole grid.
/// Returns `None` when no point has a negative margin.
pub fn search_alpha_for(w: &Matrix, kappa: f64, grid: &[f64]) -> Option<(f64, StabilityReport)> {
    let mut best: Option<StabilityReport> = None;
    for &alpha in grid.iter().filter(|a| **a > 0.0) {
        let report = stability_margin_for(w, alpha, kappa);
        if best.is_none_or(|b| report.margin < b.margin) {
            best = Some(report);
        }
    }
    best.filter(|r| r.stable).map(|r| (r.alpha, r))
}

pub fn search_alpha(
    net: &ProjectionNetwork,
    kappa: f64,
    grid: &[f64],
) -> Option<(f64, StabilityReport)> {
    search_alpha_for(&net.w, kappa, grid)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecayFitError {
    #[error("trajectory is already at equilibrium; decay rate undefined")]
    AtEquilibrium,
    #[error("only {0} samples in the fitting window, need at least 10")]
    TooFewSamples(usize),
}

pub const DECAY_MIN_SAMPLES: usize = 10;

/// Least-squares slope of `ln ||y(t) - y*||` against `t`.
///
/// Only samples with `||y - y*||` within `[1e-10, 1e-1]` times the initial
/// distance enter the fit. A negative slope means exponential decay.
pub fn fit_decay_rate(traj: &Trajectory, y_star: &Vector) -> Result<f64, DecayFitError> {
    let dist: Vec<f64> = traj.states.iter().map(|y| (y - y_star).norm()).collect();
    if dist.iter().all(|d| *d < 1e-12) {
        return Err(DecayFitError::AtEquilibrium);
    }
    let initial = dist[0];
    let (lo, hi) = (1e-10 * initial, 1e-1 * initial);
    let points: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&dist)
        .filter(|(_, d)| **d >= lo && **d <= hi && **d > 1e-12)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    if points.len() < DECAY_MIN_SAMPLES {
        return Err(DecayFitError::TooFewSamples(points.len()));
    }
    let k = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_l = points.iter().map(|p| p.1).sum::<f64>() / k;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, l) in &points {
        sxy += (t - mean_t) * (l - mean_l);
        sxx += (t - mean_t) * (t - mean_t);
    }
    Ok(sxy / sxx)
}
