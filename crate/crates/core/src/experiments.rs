//! Synthetic recovery experiments: instance generation, success-rate and
//! noise sweeps, convergence traces and the negation-escape study.
//!
//! Every random object is drawn from a substream of a per-instance seed,
//! itself derived from `(base_seed, k, trial)`. All SNR levels of one
//! `(k, trial)` cell share the network, measurements, ground truth, noise
//! direction and starting point; only the noise magnitude changes.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::generator::GeneratorNetwork;
use crate::landscape::rho;
use crate::numerics::{gaussian_matrix, gaussian_vector, Rng, Vector};
use crate::output::fmt_sci;
use crate::risk::RecoveryProblem;
use crate::solver::{
    default_step_size, solve, Init, IterateTrace, SolverConfig, Termination, DEFAULT_MAX_ITERS,
};

const NET_STREAM: u64 = 1;
const MEASUREMENT_STREAM: u64 = 2;
const TRUTH_STREAM: u64 = 3;
const NOISE_STREAM: u64 = 4;
const INIT_STREAM: u64 = 5;
const PERTURB_STREAM: u64 = 6;

/// Signal-to-noise ratio `10 log10(‖A G(x_*)‖ / ‖e‖)` in dB, or noiseless.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Snr {
    Db(f64),
    Inf,
}

impl Snr {
    /// Noise norm giving this SNR for a clean measurement of norm `signal`.
    pub fn noise_norm(self, signal: f64) -> f64 {
        match self {
            Snr::Db(db) => signal * 10f64.powf(-db / 10.0),
            Snr::Inf => 0.0,
        }
    }

    pub fn is_inf(self) -> bool {
        matches!(self, Snr::Inf)
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Db(db) => write!(f, "{db}"),
            Snr::Inf => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(Snr::Inf);
        }
        t.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Snr::Db)
            .ok_or_else(|| Error::Config(format!("invalid SNR {s:?}; expected dB value or \"inf\"")))
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Snr::Db(db) => s.serialize_f64(*db),
            Snr::Inf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_finite() => Ok(Snr::Db(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!("invalid SNR {v}"))),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Solver knobs shared by every trial; the start point is seeded per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// `None` selects `2^d/d²`.
    #[serde(default)]
    pub step_size: Option<f64>,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub negation_check: bool,
    #[serde(default = "default_true")]
    pub stop_when_stalled: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            step_size: None,
            max_iters: DEFAULT_MAX_ITERS,
            grad_tol: f64::EPSILON,
            negation_check: true,
            stop_when_stalled: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Latent dimensions to sweep.
    pub k_values: Vec<usize>,
    /// `[n_1, …, n_d]`
    pub layer_dims: Vec<usize>,
    pub m: usize,
    pub snr_db: Vec<Snr>,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub solver: SolverSettings,
    pub success_threshold: f64,
    /// Sample count for the WDC/RRIC estimators.
    #[serde(default = "default_condition_samples")]
    pub condition_samples: usize,
}

fn default_condition_samples() -> usize {
    crate::conditions::DEFAULT_SAMPLES
}

impl ExperimentConfig {
    /// Two-layer 250/600 network, 150 measurements, SNR {40, 80, 120, inf},
    /// 30 trials, success below relative error 1e-3.
    pub fn reference() -> Self {
        ExperimentConfig {
            k_values: (1..=75).map(|i| 2 * i).collect(),
            layer_dims: vec![250, 600],
            m: 150,
            snr_db: vec![Snr::Db(40.0), Snr::Db(80.0), Snr::Db(120.0), Snr::Inf],
            trials: 30,
            base_seed: 1,
            solver: SolverSettings { step_size: Some(1.0), ..SolverSettings::default() },
            success_threshold: 1e-3,
            condition_samples: default_condition_samples(),
        }
    }

    pub fn depth(&self) -> usize {
        self.layer_dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::Config("k_values must be a nonempty list of positive integers".into()));
        }
        if self.layer_dims.is_empty() || self.layer_dims.contains(&0) {
            return Err(Error::Config("layer_dims must be a nonempty list of positive integers".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::Config("success_threshold must be positive".into()));
        }
        if self.condition_samples < 1 {
            return Err(Error::Config("condition_samples must be at least 1".into()));
        }
        self.solver_config(0).map(|_| ()).map_err(|e| Error::Config(e.to_string()))
    }

    /// Solver configuration for a run started from `init`.
    pub fn solver_with_init(&self, init: Init) -> Result<SolverConfig> {
        let s = &self.solver;
        let cfg = SolverConfig {
            step_size: match s.step_size {
                Some(v) => v,
                None => default_step_size(self.depth())?,
            },
            max_iters: s.max_iters,
            grad_tol: s.grad_tol,
            negation_check: s.negation_check,
            init,
            stop_when_stalled: s.stop_when_stalled,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn solver_config(&self, instance_seed: u64) -> Result<SolverConfig> {
        self.solver_with_init(Init::SeededGaussian { seed: init_seed(instance_seed) })
    }
}

/// Seed of the instance used by trial `trial` at latent dimension `k`.
pub fn instance_seed(base_seed: u64, k: usize, trial: usize) -> u64 {
    Rng::derive_seed(base_seed, &[k as u64, trial as u64])
}

/// Seed of the default start point for an instance.
pub fn init_seed(instance_seed: u64) -> u64 {
    Rng::derive_seed(instance_seed, &[INIT_STREAM])
}

/// Random instance: `W_i ~ N(0, 1/n_i)`, `A ~ N(0, 1/m)`, `x_* ~ N(0, I_k)`
/// and `y = A G(x_*) + τ ẽ/‖ẽ‖` with `ẽ ~ N(0, I_m)` and `τ` set by the SNR.
pub fn make_problem(
    k: usize,
    layer_dims: &[usize],
    m: usize,
    snr: Snr,
    seed: u64,
) -> Result<RecoveryProblem> {
    if k == 0 || m == 0 || layer_dims.is_empty() || layer_dims.contains(&0) {
        return Err(Error::invalid(format!(
            "invalid dimensions k={k}, layers={layer_dims:?}, m={m}"
        )));
    }
    let dims: Vec<usize> = std::iter::once(k).chain(layer_dims.iter().copied()).collect();
    let net = GeneratorNetwork::random(&dims, Rng::derive_seed(seed, &[NET_STREAM]))?;
    let n = net.output_dim();
    let a = gaussian_matrix(m, n, 1.0 / m as f64, &mut Rng::substream(seed, &[MEASUREMENT_STREAM]))?;
    let x_star = gaussian_vector(k, 1.0, &mut Rng::substream(seed, &[TRUTH_STREAM]))?;
    let clean = a.matvec(&net.forward(&x_star)?.0)?;
    let raw = gaussian_vector(m, 1.0, &mut Rng::substream(seed, &[NOISE_STREAM]))?;
    let tau = snr.noise_norm(clean.norm());
    let noise = if snr.is_inf() { None } else { Some(raw.scaled(tau / raw.norm())) };
    RecoveryProblem::from_ground_truth(net, a, x_star, noise)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub k: usize,
    pub snr: Snr,
    pub trial: usize,
    pub seed: u64,
    pub rel_err: f64,
    pub iterations: usize,
    pub success: bool,
    pub termination: Termination,
}

/// Solves one `(k, snr, trial)` cell.
pub fn run_trial(cfg: &ExperimentConfig, k: usize, snr: Snr, trial: usize) -> Result<TrialResult> {
    let seed = instance_seed(cfg.base_seed, k, trial);
    let p = make_problem(k, &cfg.layer_dims, cfg.m, snr, seed)?;
    let res = solve(&p, &cfg.solver_config(seed)?)?;
    let rel_err = p.relative_error(&res.x_hat).expect("instance has ground truth");
    Ok(TrialResult {
        k,
        snr,
        trial,
        seed,
        rel_err,
        iterations: res.trace.iterations(),
        success: rel_err < cfg.success_threshold,
        termination: res.trace.termination.expect("solve sets a termination reason"),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub snr: Snr,
    pub trials: usize,
    pub successes: usize,
    pub success_prob: f64,
    /// Mean relative error over successful trials; NaN when none succeeded.
    pub mean_rel_err_successful: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub trials: Vec<TrialResult>,
}

impl SweepTable {
    /// Groups trial results by `(k, snr)` in first-seen order.
    pub fn from_trials(trials: Vec<TrialResult>) -> Self {
        let mut keys: Vec<(usize, Snr)> = Vec::new();
        for t in &trials {
            if !keys.iter().any(|&(k, s)| k == t.k && s == t.snr) {
                keys.push((t.k, t.snr));
            }
        }
        let rows = keys
            .into_iter()
            .map(|(k, snr)| {
                let mut errs: Vec<(usize, f64)> = Vec::new();
                let mut count = 0;
                for t in trials.iter().filter(|t| t.k == k && t.snr == snr) {
                    count += 1;
                    if t.success {
                        errs.push((t.trial, t.rel_err));
                    }
                }
                // sum in trial order so the mean does not depend on input order
                errs.sort_by_key(|&(i, _)| i);
                let successes = errs.len();
                let mean = if successes == 0 {
                    f64::NAN
                } else {
                    errs.iter().map(|&(_, e)| e).sum::<f64>() / successes as f64
                };
                SweepRow {
                    k,
                    snr,
                    trials: count,
                    successes,
                    success_prob: successes as f64 / count as f64,
                    mean_rel_err_successful: mean,
                }
            })
            .collect();
        SweepTable { rows, trials }
    }

    pub fn row(&self, k: usize, snr: Snr) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.k == k && r.snr == snr)
    }

    /// CSV `k,snr_db,trials,successes,success_prob,mean_rel_err_successful`
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,snr_db,trials,successes,success_prob,mean_rel_err_successful")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.k,
                r.snr,
                r.trials,
                r.successes,
                fmt_sci(r.success_prob),
                fmt_sci(r.mean_rel_err_successful)
            )?;
        }
        Ok(())
    }
}

fn sweep(cfg: &ExperimentConfig, snrs: &[Snr]) -> Result<SweepTable> {
    cfg.validate()?;
    let cells: Vec<(usize, Snr, usize)> = cfg
        .k_values
        .iter()
        .flat_map(|&k| snrs.iter().flat_map(move |&s| (0..cfg.trials).map(move |t| (k, s, t))))
        .collect();
    let trials = cells
        .into_par_iter()
        .map(|(k, s, t)| run_trial(cfg, k, s, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable::from_trials(trials))
}

/// Noiseless success probability for every `k` in the config.
pub fn success_sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    sweep(cfg, &[Snr::Inf])
}

/// Mean relative error of successful runs for every `(k, snr)` in the config.
pub fn noise_error_sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    if cfg.snr_db.is_empty() {
        return Err(Error::Config("snr_db must be nonempty".into()));
    }
    sweep(cfg, &cfg.snr_db)
}

/// One iterate trace per SNR level on a shared instance (trial 0 of `k`).
pub fn convergence_trace(cfg: &ExperimentConfig, k: usize) -> Result<Vec<(Snr, IterateTrace)>> {
    cfg.validate()?;
    if cfg.snr_db.is_empty() {
        return Err(Error::Config("snr_db must be nonempty".into()));
    }
    let seed = instance_seed(cfg.base_seed, k, 0);
    cfg.snr_db
        .par_iter()
        .map(|&snr| {
            let p = make_problem(k, &cfg.layer_dims, cfg.m, snr, seed)?;
            Ok((snr, solve(&p, &cfg.solver_config(seed)?)?.trace))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegationTrial {
    pub trial: usize,
    pub seed: u64,
    pub rel_err_on: f64,
    pub rel_err_off: f64,
    pub success_on: bool,
    pub success_off: bool,
    /// Iterations at which the check flipped the sign in the on-arm.
    pub flips_on: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegationReport {
    pub k: usize,
    pub perturbation_scale: f64,
    pub trials: Vec<NegationTrial>,
    pub success_rate_on: f64,
    pub success_rate_off: f64,
}

/// Start point `x_0 = −ρ_d x_* + δ` with `‖δ‖ = scale·‖x_*‖`.
pub fn spurious_start(p: &RecoveryProblem, scale: f64, seed: u64) -> Result<Vector> {
    let xs = p.ground_truth().ok_or_else(|| Error::invalid("problem has no ground truth"))?;
    let rho_d = rho(p.net().depth())?;
    let dir = Rng::substream(seed, &[PERTURB_STREAM]).unit_sphere(xs.dim());
    Ok(xs.scaled(-rho_d).add(&dir.scaled(scale * xs.norm())))
}

/// Noiseless runs from a perturbed spurious point with the negation check on
/// and off, on identical instances and starts.
pub fn negation_escape_test(
    cfg: &ExperimentConfig,
    k: usize,
    perturbation_scale: f64,
) -> Result<NegationReport> {
    cfg.validate()?;
    if !(perturbation_scale >= 0.0) {
        return Err(Error::invalid("perturbation scale must be nonnegative"));
    }
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = instance_seed(cfg.base_seed, k, t);
            let p = make_problem(k, &cfg.layer_dims, cfg.m, Snr::Inf, seed)?;
            let x0 = spurious_start(&p, perturbation_scale, seed)?;
            let run = |negation_check: bool| -> Result<(f64, usize)> {
                let mut sc = cfg.solver_with_init(Init::Explicit(x0.as_slice().to_vec()))?;
                sc.negation_check = negation_check;
                let res = solve(&p, &sc)?;
                let flips = res.trace.records.iter().filter(|r| r.negated).count();
                Ok((p.relative_error(&res.x_hat).expect("ground truth"), flips))
            };
            let (rel_err_on, flips_on) = run(true)?;
            let (rel_err_off, _) = run(false)?;
            Ok(NegationTrial {
                trial: t,
                seed,
                rel_err_on,
                rel_err_off,
                success_on: rel_err_on < cfg.success_threshold,
                success_off: rel_err_off < cfg.success_threshold,
                flips_on,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = trials.len() as f64;
    let success_rate_on = trials.iter().filter(|t| t.success_on).count() as f64 / n;
    let success_rate_off = trials.iter().filter(|t| t.success_off).count() as f64 / n;
    Ok(NegationReport { k, perturbation_scale, trials, success_rate_on, success_rate_off })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_parse_and_serde() {
        assert_eq!("inf".parse::<Snr>().unwrap(), Snr::Inf);
        assert_eq!("40".parse::<Snr>().unwrap(), Snr::Db(40.0));
        assert!("loud".parse::<Snr>().is_err());
        let v: Vec<Snr> = serde_json::from_str(r#"[40, 80.5, "inf"]"#).unwrap();
        assert_eq!(v, vec![Snr::Db(40.0), Snr::Db(80.5), Snr::Inf]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[40.0,80.5,"inf"]"#);
    }

    #[test]
    fn noise_norm_follows_norm_ratio_convention() {
        assert_eq!(Snr::Inf.noise_norm(3.0), 0.0);
        assert!((Snr::Db(40.0).noise_norm(2.0) - 2e-4).abs() < 1e-18);
    }

    #[test]
    fn make_problem_noise_levels() {
        let p = make_problem(4, &[30, 60], 20, Snr::Inf, 9).unwrap();
        assert!(p.noise().is_none());
        let xs = p.ground_truth().unwrap();
        let clean = p.measurement().matvec(&p.net().forward(xs).unwrap().0).unwrap();
        assert_eq!(&clean, p.observation());

        let q = make_problem(4, &[30, 60], 20, Snr::Db(40.0), 9).unwrap();
        let e = q.noise().unwrap().norm();
        assert!((e / clean.norm() - 1e-4).abs() < 1e-15);
        assert_eq!(q.ground_truth(), p.ground_truth());
        assert_eq!(q.measurement(), p.measurement());
    }

    #[test]
    fn make_problem_is_deterministic() {
        let a = make_problem(3, &[20], 10, Snr::Db(80.0), 4).unwrap();
        let b = make_problem(3, &[20], 10, Snr::Db(80.0), 4).unwrap();
        assert_eq!(a.observation(), b.observation());
        assert_eq!(a.net().weights(), b.net().weights());
        assert!(make_problem(0, &[20], 10, Snr::Inf, 4).is_err());
        assert!(make_problem(3, &[], 10, Snr::Inf, 4).is_err());
    }

    fn trial(k: usize, snr: Snr, t: usize, rel_err: f64, success: bool) -> TrialResult {
        TrialResult {
            k,
            snr,
            trial: t,
            seed: 0,
            rel_err,
            iterations: 1,
            success,
            termination: Termination::GradientTol,
        }
    }

    #[test]
    fn sweep_table_aggregates_successful_runs_only() {
        let trials = vec![
            trial(2, Snr::Inf, 0, 1e-10, true),
            trial(2, Snr::Inf, 1, 0.5, false),
            trial(2, Snr::Inf, 2, 3e-10, true),
            trial(4, Snr::Inf, 0, 0.9, false),
        ];
        let table = SweepTable::from_trials(trials.clone());
        let r = table.row(2, Snr::Inf).unwrap();
        assert_eq!((r.trials, r.successes), (3, 2));
        assert!((r.success_prob - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.mean_rel_err_successful - 2e-10).abs() < 1e-24);
        assert!(table.row(4, Snr::Inf).unwrap().mean_rel_err_successful.is_nan());

        let mut reversed = trials;
        reversed.reverse();
        let other = SweepTable::from_trials(reversed);
        for r in &table.rows {
            let o = other.row(r.k, r.snr).unwrap();
            assert_eq!(o.successes, r.successes);
            assert_eq!(o.mean_rel_err_successful.to_bits(), r.mean_rel_err_successful.to_bits());
        }
    }

    #[test]
    fn config_json_roundtrip_and_validation() {
        let cfg = ExperimentConfig::reference();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.validate().is_ok());
        let mut bad = cfg.clone();
        bad.trials = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.solver.step_size = Some(-1.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn small_sweep_is_reproducible() {
        let cfg = ExperimentConfig {
            k_values: vec![2],
            layer_dims: vec![40, 100],
            m: 40,
            snr_db: vec![Snr::Inf],
            trials: 1,
            base_seed: 3,
            solver: SolverSettings { max_iters: 2000, ..SolverSettings::default() },
            success_threshold: 1e-3,
            condition_samples: 10,
        };
        let a = success_sweep(&cfg).unwrap();
        let b = success_sweep(&cfg).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,snr_db,trials,successes,success_prob,mean_rel_err_successful\n2,inf,1,"));
    }
}
