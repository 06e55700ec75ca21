//! Gradient descent with the negation check.
//!
//! Each iteration compares `f(−x_i)` with `f(x_i)`, keeps the better sign as
//! `x̃_i` (ties keep `x_i`), then steps `x_{i+1} = x̃_i − ν ṽ_{x̃_i}`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm, Rng, Vector};
use crate::output::fmt_sci;
use crate::risk::{Evaluator, RecoveryProblem};

/// How the first iterate is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Explicit(Vec<f64>),
    /// i.i.d. `N(0, 1/k)` entries from the given seed.
    SeededGaussian { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub negation_check: bool,
    pub init: Init,
    /// Stop once an update leaves the iterate bit-for-bit unchanged. Every
    /// later iteration would repeat it, so the returned point is the same as
    /// running to `max_iters`.
    #[serde(default = "default_true")]
    pub stop_when_stalled: bool,
}

fn default_true() -> bool {
    true
}

impl SolverConfig {
    /// Step `2^d/d²`, machine-epsilon gradient tolerance, 50000 iterations,
    /// negation check on, seeded Gaussian start.
    pub fn standard(depth: usize, init_seed: u64) -> Result<Self> {
        Ok(SolverConfig {
            step_size: default_step_size(depth)?,
            max_iters: DEFAULT_MAX_ITERS,
            grad_tol: f64::EPSILON,
            negation_check: true,
            init: Init::SeededGaussian { seed: init_seed },
            stop_when_stalled: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::invalid(format!("grad_tol must be nonnegative, got {}", self.grad_tol)));
        }
        if let Init::Explicit(x) = &self.init {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("initial point must be finite"));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_MAX_ITERS: usize = 50_000;

/// `2^d / d²`
pub fn default_step_size(depth: usize) -> Result<f64> {
    if depth < 1 {
        return Err(Error::invalid("network depth must be at least 1"));
    }
    let d = depth as f64;
    Ok(2f64.powi(depth as i32) / (d * d))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iter: usize,
    /// `f(x̃_i)`
    pub f: f64,
    /// `‖ṽ_{x̃_i}‖`
    pub grad_norm: f64,
    pub negated: bool,
    pub rel_err: Option<f64>,
    /// The iterate was exactly zero and had to be nudged.
    pub perturbed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTol,
    MaxIters,
    Stalled,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradientTol => "gradient-tol",
            Termination::MaxIters => "max-iters",
            Termination::Stalled => "stalled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub records: Vec<IterateRecord>,
    pub termination: Option<Termination>,
}

impl IterateTrace {
    /// Number of updates performed.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    pub fn rel_errors(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.rel_err).collect()
    }

    /// CSV `iter,f,grad_norm,negated,rel_err`; `rel_err` is empty when the
    /// ground truth is unknown.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,f,grad_norm,negated,rel_err")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iter,
                fmt_sci(r.f),
                fmt_sci(r.grad_norm),
                u8::from(r.negated),
                r.rel_err.map(fmt_sci).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x_hat: Vector,
    pub trace: IterateTrace,
    /// `G(x_hat)`
    pub signal: Vector,
}

fn initial_point(p: &RecoveryProblem, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let k = p.latent_dim();
    match &cfg.init {
        Init::Explicit(x) => {
            if x.len() != k {
                return Err(Error::invalid(format!(
                    "initial point has dimension {}, expected {k}",
                    x.len()
                )));
            }
            Ok(x.clone())
        }
        Init::SeededGaussian { seed } => {
            Ok(Rng::new(*seed).gaussian_vec(k, (1.0 / k as f64).sqrt()))
        }
    }
}

/// Deterministic nudge applied when an iterate is exactly zero.
fn nudge_from_zero(x: &mut [f64], scale: f64) {
    let c = 1e-12 * scale / (x.len() as f64).sqrt();
    x.iter_mut().for_each(|v| *v = c);
}

/// Runs the negation-checked gradient iteration until `‖ṽ‖ < grad_tol`, the
/// iterate stalls, or `max_iters` updates have been taken.
pub fn solve(p: &RecoveryProblem, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let k = p.latent_dim();
    let scale = p.ground_truth().map_or(1.0, Vector::norm).max(f64::MIN_POSITIVE);
    let mut x = initial_point(p, cfg)?;
    let mut neg = vec![0.0; k];
    let mut dir = vec![0.0; k];
    let mut here = Evaluator::new(p);
    let mut there = Evaluator::new(p);
    let mut trace = IterateTrace { records: Vec::new(), termination: None };

    for iter in 0..=cfg.max_iters {
        let perturbed = x.iter().all(|&v| v == 0.0);
        if perturbed {
            nudge_from_zero(&mut x, scale);
        }
        let mut f = here.objective(p, &x);
        let mut negated = false;
        if cfg.negation_check {
            neg.iter_mut().zip(&x).for_each(|(n, v)| *n = -v);
            let f_neg = there.objective(p, &neg);
            if f_neg < f {
                std::mem::swap(&mut x, &mut neg);
                std::mem::swap(&mut here, &mut there);
                f = f_neg;
                negated = true;
            }
        }
        here.direction(p, &mut dir);
        let grad_norm = norm(&dir);
        let rel_err = p.relative_error(&Vector::from_raw(x.clone()));
        trace.records.push(IterateRecord { iter, f, grad_norm, negated, rel_err, perturbed });
        if !f.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Diverged { iteration: iter, trace: Box::new(trace) });
        }
        if grad_norm < cfg.grad_tol {
            trace.termination = Some(Termination::GradientTol);
            break;
        }
        if iter == cfg.max_iters {
            trace.termination = Some(Termination::MaxIters);
            break;
        }
        let mut moved = false;
        for (xi, di) in x.iter_mut().zip(&dir) {
            let next = *xi - cfg.step_size * di;
            moved |= next != *xi;
            *xi = next;
        }
        if !moved && !negated && cfg.stop_when_stalled {
            trace.termination = Some(Termination::Stalled);
            break;
        }
    }

    let x_hat = Vector::from_raw(x);
    let (signal, _) = p.net().forward(&x_hat)?;
    Ok(SolveResult { x_hat, trace, signal })
}
