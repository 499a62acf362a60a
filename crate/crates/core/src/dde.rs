//! Method-of-steps integration of delayed dynamics.
//!
//! Classical fixed-step RK4. Delayed states `y(t - tau(t))` come from the
//! history function when the query time is not positive, and otherwise from
//! cubic Hermite interpolation over the stored `(state, derivative)` samples.
//! The step must not exceed the smallest delay, so every delayed query made
//! during a step lands at or before the step's start.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::network::ProjectionNetwork;

/// A vector field `dy/dt = f(t, y(t), y(t - tau(t)))`.
pub trait DelayField {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, y: &Vector, y_delayed: &Vector) -> Vector;

    /// Convergence measure recorded alongside each sample. Fields without one
    /// return NaN, which never triggers early stopping.
    fn residual(&self, _y: &Vector) -> f64 {
        f64::NAN
    }
}

impl DelayField for ProjectionNetwork {
    fn dim(&self) -> usize {
        self.state_len()
    }

    fn eval(&self, t: f64, y: &Vector, y_delayed: &Vector) -> Vector {
        self.rhs(t, y, y_delayed)
    }

    fn residual(&self, y: &Vector) -> f64 {
        self.fixed_point_residual(y)
    }
}

/// Closure-backed field, mostly for tests and scalar experiments.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> DelayField for FnField<F>
where
    F: Fn(f64, &Vector, &Vector) -> Vector,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &Vector, y_delayed: &Vector) -> Vector {
        (self.f)(t, y, y_delayed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayKind {
    Constant,
    Sinusoidal,
}

/// `tau(t) = tau0` or `tau(t) = tau0 + amplitude * sin(omega * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub kind: DelayKind,
    pub tau0: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub omega: f64,
}

impl DelaySpec {
    pub fn constant(tau0: f64) -> Self {
        Self {
            kind: DelayKind::Constant,
            tau0,
            amplitude: 0.0,
            omega: 0.0,
        }
    }

    pub fn sinusoidal(tau0: f64, amplitude: f64, omega: f64) -> Self {
        Self {
            kind: DelayKind::Sinusoidal,
            tau0,
            amplitude,
            omega,
        }
    }

    pub fn tau(&self, t: f64) -> f64 {
        match self.kind {
            DelayKind::Constant => self.tau0,
            DelayKind::Sinusoidal => self.tau0 + self.amplitude * (self.omega * t).sin(),
        }
    }

    /// Upper bound on the delay; history must cover `[-max_delay, 0]`.
    pub fn max_delay(&self) -> f64 {
        match self.kind {
            DelayKind::Constant => self.tau0,
            DelayKind::Sinusoidal => self.tau0 + self.amplitude,
        }
    }

    pub fn min_delay(&self) -> f64 {
        match self.kind {
            DelayKind::Constant => self.tau0,
            DelayKind::Sinusoidal => self.tau0 - self.amplitude,
        }
    }

    /// Identically zero delay: the delayed argument is the current state.
    pub fn is_zero(&self) -> bool {
        self.max_delay() == 0.0
    }

    pub fn check(&self) -> Result<()> {
        let finite = self.tau0.is_finite() && self.amplitude.is_finite() && self.omega.is_finite();
        if !finite || self.tau0 < 0.0 || self.amplitude < 0.0 {
            return Err(Error::Config(format!(
                "delay parameters must be finite and non-negative: {self:?}"
            )));
        }
        if self.kind == DelayKind::Sinusoidal && self.amplitude > 0.0 && self.amplitude >= self.tau0
        {
            return Err(Error::Config(format!(
                "sinusoidal delay needs amplitude < tau0 (got {} >= {})",
                self.amplitude, self.tau0
            )));
        }
        Ok(())
    }
}

/// Initial function on `[-max_delay, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub enum HistoryFn {
    Constant(Vector),
    /// Piecewise-linear through ascending sample times.
    Sampled {
        times: Vec<f64>,
        values: Vec<Vector>,
    },
}

impl HistoryFn {
    pub fn dim(&self) -> usize {
        match self {
            HistoryFn::Constant(v) => v.len(),
            HistoryFn::Sampled { values, .. } => values.first().map_or(0, |v| v.len()),
        }
    }

    pub fn eval(&self, t: f64) -> Vector {
        match self {
            HistoryFn::Constant(v) => v.clone(),
            HistoryFn::Sampled { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0].clone();
                }
                if t >= times[last] {
                    return values[last].clone();
                }
                let i = times.partition_point(|s| *s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                &values[i] * (1.0 - w) + &values[i + 1] * w
            }
        }
    }

    fn check(&self, dim: usize, max_delay: f64) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::Dimension {
                field: "history",
                expected: dim.to_string(),
                actual: self.dim().to_string(),
            });
        }
        if let HistoryFn::Sampled { times, values } = self {
            if times.len() != values.len() || times.is_empty() {
                return Err(Error::Config(
                    "sampled history needs one value per time".into(),
                ));
            }
            if values.iter().any(|v| v.len() != dim) {
                return Err(Error::Config(
                    "sampled history values differ in length".into(),
                ));
            }
            if times.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("sampled history times must increase".into()));
            }
            if times[0] > -max_delay || *times.last().unwrap() < 0.0 {
                return Err(Error::Config(format!(
                    "sampled history must cover [{}, 0]",
                    -max_delay
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub step: f64,
    pub t_end: f64,
    pub converge_tol: f64,
    pub stall_window: f64,
}

impl IntegrationConfig {
    pub fn check(&self, delay: &DelaySpec) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        positive("step", self.step)?;
        positive("t_end", self.t_end)?;
        positive("converge_tol", self.converge_tol)?;
        positive("stall_window", self.stall_window)?;
        delay.check()?;
        if delay.tau0 > 0.0 && self.step > delay.tau0 / 4.0 {
            return Err(Error::Config(format!(
                "step {} too large for delay: need step <= tau0 / 4 = {}",
                self.step,
                delay.tau0 / 4.0
            )));
        }
        if !delay.is_zero() && self.step > delay.min_delay() {
            return Err(Error::Config(format!(
                "step {} exceeds the smallest delay {}",
                self.step,
                delay.min_delay()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub derivatives: Vec<Vector>,
    pub residuals: Vec<f64>,
    pub history: HistoryFn,
    pub max_delay: f64,
    pub step: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_last(&self) -> f64 {
        *self.times.last().expect("trajectory has an initial sample")
    }

    pub fn final_state(&self) -> &Vector {
        self.states
            .last()
            .expect("trajectory has an initial sample")
    }

    pub fn final_residual(&self) -> f64 {
        *self
            .residuals
            .last()
            .expect("trajectory has an initial sample")
    }

    /// Dense output on `[-max_delay, t_last]`. Exact at stored samples.
    ///
    /// Hermite interpolation needs derivatives at both interval ends, so the
    /// usable range during integration ends at the last sample that has one.
    pub fn sample_state(&self, t: f64) -> Result<Vector> {
        // before the first derivative is known only t = 0 is reachable
        let last = self.derivatives.len().saturating_sub(1);
        let hi = self.times[last];
        if !(t >= -self.max_delay && t <= hi) {
            return Err(Error::OutOfRange {
                t,
                lo: -self.max_delay,
                hi,
            });
        }
        if t < 0.0 {
            return Ok(self.history.eval(t));
        }
        let i = ((t / self.step).floor() as usize).min(last.saturating_sub(1));
        if t == self.times[i] {
            return Ok(self.states[i].clone());
        }
        if i + 1 > last {
            return Ok(self.states[last].clone());
        }
        if t == self.times[i + 1] {
            return Ok(self.states[i + 1].clone());
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(&self.states[i] * h00
            + &self.derivatives[i] * (h10 * h)
            + &self.states[i + 1] * h01
            + &self.derivatives[i + 1] * (h11 * h))
    }

    /// CSV with header `t,y1,...,yK,residual`, 16 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let k = self.states.first().map_or(0, |s| s.len());
        let mut header = String::from("t");
        for i in 1..=k {
            header.push_str(&format!(",y{i}"));
        }
        header.push_str(",residual");
        writeln!(out, "{header}")?;
        for ((t, y), r) in self.times.iter().zip(&self.states).zip(&self.residuals) {
            write!(out, "{t:.15e}")?;
            for v in y.iter() {
                write!(out, ",{v:.15e}")?;
            }
            writeln!(out, ",{r:.15e}")?;
        }
        Ok(())
    }
}

fn delayed_state(traj: &Trajectory, delay: &DelaySpec, t: f64, y_stage: &Vector) -> Result<Vector> {
    if delay.is_zero() {
        return Ok(y_stage.clone());
    }
    traj.sample_state(t - delay.tau(t))
}

/// Integrates any delayed field from `history` until `cfg.t_end`.
///
/// Stops early once `field.residual` has stayed at or below
/// `cfg.converge_tol` for `cfg.stall_window` time units.
pub fn integrate_field<F: DelayField + ?Sized>(
    field: &F,
    delay: &DelaySpec,
    history: &HistoryFn,
    cfg: &IntegrationConfig,
) -> Result<Trajectory> {
    cfg.check(delay)?;
    let dim = field.dim();
    history.check(dim, delay.max_delay())?;

    let step = cfg.step;
    let n_steps = (cfg.t_end / step - 1e-9).ceil() as usize;
    let y0 = history.eval(0.0);
    let mut traj = Trajectory {
        times: vec![0.0],
        residuals: vec![field.residual(&y0)],
        states: vec![y0],
        derivatives: Vec::with_capacity(n_steps + 1),
        history: history.clone(),
        max_delay: delay.max_delay(),
        step,
    };
    let mut below_since = (traj.residuals[0] <= cfg.converge_tol).then_some(0.0);

    let mut k = 0;
    loop {
        let t = traj.times[k];
        let y = traj.states[k].clone();
        let f1 = field.eval(t, &y, &delayed_state(&traj, delay, t, &y)?);
        traj.derivatives.push(f1.clone());

        let settled = below_since.is_some_and(|t0| t - t0 >= cfg.stall_window);
        if k == n_steps || settled {
            break;
        }

        let half = t + 0.5 * step;
        let next_t = (k + 1) as f64 * step;
        let y2 = &y + &f1 * (0.5 * step);
        let f2 = field.eval(half, &y2, &delayed_state(&traj, delay, half, &y2)?);
        let y3 = &y + &f2 * (0.5 * step);
        let f3 = field.eval(half, &y3, &delayed_state(&traj, delay, half, &y3)?);
        let y4 = &y + &f3 * step;
        let f4 = field.eval(next_t, &y4, &delayed_state(&traj, delay, next_t, &y4)?);
        let y_next = y + (f1 + (f2 + f3) * 2.0 + f4) * (step / 6.0);

        if y_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: next_t });
        }
        let r = field.residual(&y_next);
        if r <= cfg.converge_tol {
            below_since.get_or_insert(next_t);
        } else {
            below_since = None;
        }
        traj.times.push(next_t);
        traj.states.push(y_next);
        traj.residuals.push(r);
        k += 1;
    }
    Ok(traj)
}

pub fn integrate(
    net: &ProjectionNetwork,
    delay: &DelaySpec,
    history: &HistoryFn,
    cfg: &IntegrationConfig,
) -> Result<Trajectory> {
    integrate_field(net, delay, history, cfg)
}

pub fn sample_state(traj: &Trajectory, t: f64) -> Result<Vector> {
    traj.sample_state(t)
}

/// Constant histories with components uniform in `[-range, range]`.
///
/// Multiplier components are not clipped to the box; the dynamics project them.
pub fn random_histories(count: usize, n: usize, h: usize, range: f64, seed: u64) -> Vec<HistoryFn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            HistoryFn::Constant(Vector::from_fn(n + h, |_, _| {
                if range > 0.0 {
                    rng.random_range(-range..=range)
                } else {
                    0.0
                }
            }))
        })
        .collect()
}
