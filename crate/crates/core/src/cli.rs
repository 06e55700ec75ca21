//! Command-line front end.
//!
//! Every subcommand resolves the full configuration and computes its results
//! before the first file is written, so a failed run leaves no partial output.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::conditions::{rric_deviation, wdc_deviation, ConditionReport};
use crate::error::{Error, Result};
use crate::experiments::{
    convergence_trace, init_seed, instance_seed, make_problem, noise_error_sweep, success_sweep,
    ExperimentConfig, Snr, SweepTable,
};
use crate::landscape::RhoTable;
use crate::numerics::{Rng, Vector};
use crate::output::write_file;
use crate::plot::LinePlot;
use crate::solver::{solve, Init, IterateTrace, Termination};

pub const OUT_DIR_ENV: &str = "GENPRIOR_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "genprior", version, about = "Compressive sensing with random ReLU generative priors")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// JSON experiment configuration; defaults to the built-in reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Latent dimensions, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    k_values: Option<Vec<usize>>,
    /// Generator layer widths n_1,…,n_d, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Number of measurements.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// SNR levels in dB or `inf`, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    snr: Option<Vec<String>>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    step_size: Option<f64>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Disable the sign-flip check.
    #[arg(long, global = true)]
    no_negation_check: bool,
    /// Also render SVG plots.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a single instance and write its iterate trace.
    Recover {
        /// Latent dimension; defaults to the first configured value.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Noiseless success probability versus k.
    SweepSuccess,
    /// Mean relative error of successful runs versus k at every SNR.
    SweepNoise,
    /// Iterate traces of one instance at every SNR.
    Trace {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Sampled WDC deviation of one generator layer.
    CheckWdc {
        #[arg(long)]
        k: Option<usize>,
        /// Layer index, starting at 1.
        #[arg(long, default_value_t = 1)]
        layer: usize,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Sampled RRIC deviation of the measurement matrix on the generator range.
    CheckRric {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Table of the spurious-point scale ρ_d.
    RhoTable {
        #[arg(long, default_value_t = 50)]
        max_d: usize,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct RecoverSummary {
    k: usize,
    snr_db: Snr,
    trial: usize,
    seed: u64,
    rel_err: f64,
    iterations: usize,
    termination: Termination,
    x_hat: Vec<f64>,
    x_star: Vec<f64>,
}

/// A file to be written once the whole command has succeeded.
enum Artifact {
    Text(String, String),
    Trace(String, IterateTrace),
    Sweep(String, SweepTable),
    Samples(String, ConditionReport),
    Rho(String, RhoTable),
}

impl Artifact {
    fn name(&self) -> &str {
        match self {
            Artifact::Text(n, _)
            | Artifact::Trace(n, _)
            | Artifact::Sweep(n, _)
            | Artifact::Samples(n, _)
            | Artifact::Rho(n, _) => n,
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(self.name());
        match self {
            Artifact::Text(_, s) => write_file(&path, |w| w.write_all(s.as_bytes())),
            Artifact::Trace(_, t) => write_file(&path, |w| t.write_csv(w)),
            Artifact::Sweep(_, t) => write_file(&path, |w| t.write_csv(w)),
            Artifact::Samples(_, r) => write_file(&path, |w| r.write_csv(w)),
            Artifact::Rho(_, t) => write_file(&path, |w| t.write_csv(w)),
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code: 0 on success, 2 for usage or configuration errors, 1 for runtime
/// failures.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn resolve_config(args: &CommonArgs) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(|e| {
                Failure::Usage(format!("invalid config {}: {e}", path.display()))
            })?
        }
        None => ExperimentConfig::reference(),
    };
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(k) = &args.k_values {
        cfg.k_values = k.clone();
    }
    if let Some(d) = &args.dims {
        cfg.layer_dims = d.clone();
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(levels) = &args.snr {
        cfg.snr_db = levels
            .iter()
            .map(|s| s.parse::<Snr>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(v) = args.step_size {
        cfg.solver.step_size = Some(v);
    }
    if let Some(n) = args.max_iters {
        cfg.solver.max_iters = n;
    }
    if args.no_negation_check {
        cfg.solver.negation_check = false;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn pick_k(cfg: &ExperimentConfig, k: Option<usize>) -> std::result::Result<usize, Failure> {
    match k {
        Some(0) => Err(Failure::Usage("k must be positive".into())),
        Some(k) => Ok(k),
        None => Ok(cfg.k_values[0]),
    }
}

fn require_snr(cfg: &ExperimentConfig) -> std::result::Result<(), Failure> {
    if cfg.snr_db.is_empty() {
        return Err(Failure::Usage("at least one SNR level is required".into()));
    }
    Ok(())
}

fn sweep_plot(table: &SweepTable, title: &str, y_label: &str, success: bool) -> String {
    let mut plot = LinePlot::new(title, "k", y_label, !success);
    let mut levels: Vec<Snr> = Vec::new();
    for r in &table.rows {
        if !levels.contains(&r.snr) {
            levels.push(r.snr);
        }
    }
    for snr in levels {
        let pts = table
            .rows
            .iter()
            .filter(|r| r.snr == snr)
            .map(|r| (r.k as f64, if success { r.success_prob } else { r.mean_rel_err_successful }))
            .collect();
        plot.add_series(format!("SNR {snr}"), pts);
    }
    plot.render()
}

fn execute(cli: Cli) -> std::result::Result<(), Failure> {
    let args = &cli.common;
    let cfg = resolve_config(args)?;
    let mut artifacts = Vec::new();
    let mut manifest_k = None;

    let command = match &cli.command {
        Command::Recover { k, trial } => {
            require_snr(&cfg)?;
            let k = pick_k(&cfg, *k)?;
            manifest_k = Some(k);
            let snr = cfg.snr_db[0];
            let seed = instance_seed(cfg.base_seed, k, *trial);
            let p = make_problem(k, &cfg.layer_dims, cfg.m, snr, seed)?;
            let sc = cfg.solver_with_init(Init::SeededGaussian { seed: init_seed(seed) })?;
            let res = solve(&p, &sc)?;
            let x_star = p.ground_truth().expect("generated instance").clone();
            let summary = RecoverSummary {
                k,
                snr_db: snr,
                trial: *trial,
                seed,
                rel_err: p.relative_error(&res.x_hat).expect("generated instance"),
                iterations: res.trace.iterations(),
                termination: res.trace.termination.expect("solve sets termination"),
                x_hat: res.x_hat.into_vec(),
                x_star: Vector::into_vec(x_star),
            };
            if args.plot {
                artifacts.push(Artifact::Text("recover.svg".into(), trace_plot(&[(snr, &res.trace)])));
            }
            artifacts.push(Artifact::Text("recover.json".into(), to_json(&summary)));
            artifacts.push(Artifact::Trace("recover_trace.csv".into(), res.trace));
            "recover"
        }
        Command::SweepSuccess => {
            let table = success_sweep(&cfg)?;
            if args.plot {
                let svg = sweep_plot(&table, "Noiseless recovery", "success probability", true);
                artifacts.push(Artifact::Text("success.svg".into(), svg));
            }
            artifacts.push(Artifact::Sweep("success.csv".into(), table));
            "sweep-success"
        }
        Command::SweepNoise => {
            require_snr(&cfg)?;
            let table = noise_error_sweep(&cfg)?;
            if args.plot {
                let svg = sweep_plot(&table, "Recovery error", "mean relative error", false);
                artifacts.push(Artifact::Text("noise.svg".into(), svg));
            }
            artifacts.push(Artifact::Sweep("noise.csv".into(), table));
            "sweep-noise"
        }
        Command::Trace { k } => {
            require_snr(&cfg)?;
            let k = pick_k(&cfg, *k)?;
            manifest_k = Some(k);
            let traces = convergence_trace(&cfg, k)?;
            if args.plot {
                let refs: Vec<_> = traces.iter().map(|(s, t)| (*s, t)).collect();
                artifacts.push(Artifact::Text("trace.svg".into(), trace_plot(&refs)));
            }
            for (snr, trace) in traces {
                artifacts.push(Artifact::Trace(format!("trace_snr_{snr}.csv"), trace));
            }
            "trace"
        }
        Command::CheckWdc { k, layer, samples } => {
            let k = pick_k(&cfg, *k)?;
            manifest_k = Some(k);
            if *layer < 1 || *layer > cfg.depth() {
                return Err(Failure::Usage(format!(
                    "layer must be between 1 and {}, got {layer}",
                    cfg.depth()
                )));
            }
            let n = samples.unwrap_or(cfg.condition_samples);
            let p = make_problem(k, &cfg.layer_dims, cfg.m, Snr::Inf, instance_seed(cfg.base_seed, k, 0))?;
            let report = wdc_deviation(&p.net().weights()[layer - 1], n, &Rng::new(cfg.base_seed))?;
            artifacts.push(Artifact::Text("wdc_summary.json".into(), report.summary_json() + "\n"));
            artifacts.push(Artifact::Samples("wdc_samples.csv".into(), report));
            "check-wdc"
        }
        Command::CheckRric { k, samples } => {
            let k = pick_k(&cfg, *k)?;
            manifest_k = Some(k);
            let n = samples.unwrap_or(cfg.condition_samples);
            let p = make_problem(k, &cfg.layer_dims, cfg.m, Snr::Inf, instance_seed(cfg.base_seed, k, 0))?;
            let report = rric_deviation(p.measurement(), p.net(), n, &Rng::new(cfg.base_seed))?;
            artifacts.push(Artifact::Text("rric_summary.json".into(), report.summary_json() + "\n"));
            artifacts.push(Artifact::Samples("rric_samples.csv".into(), report));
            "check-rric"
        }
        Command::RhoTable { max_d } => {
            if *max_d < 1 {
                return Err(Failure::Usage("max-d must be at least 1".into()));
            }
            artifacts.push(Artifact::Rho("rho_table.csv".into(), RhoTable::new(*max_d)?));
            "rho-table"
        }
    };

    let manifest = Manifest {
        command,
        config: &cfg,
        k: manifest_k,
        outputs: artifacts.iter().map(|a| a.name().to_string()).collect(),
    };
    artifacts.push(Artifact::Text("run_manifest.json".into(), to_json(&manifest)));

    fs::create_dir_all(&args.out_dir).map_err(|e| {
        Failure::Usage(format!("cannot create output directory {}: {e}", args.out_dir.display()))
    })?;
    for a in &artifacts {
        a.write(&args.out_dir)?;
    }
    Ok(())
}

fn trace_plot(traces: &[(Snr, &IterateTrace)]) -> String {
    let mut plot = LinePlot::new("Convergence", "iteration", "relative error", true);
    for (snr, t) in traces {
        let pts = t
            .records
            .iter()
            .filter_map(|r| r.rel_err.map(|e| (r.iter as f64, e)))
            .collect();
        plot.add_series(format!("SNR {snr}"), pts);
    }
    plot.render()
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}
