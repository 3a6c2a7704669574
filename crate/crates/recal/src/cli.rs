//! Command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use recal_core::bounds::{
    optimal_bins, risk_bound, shift_risk_bound_apriori, shift_risk_bound_realized, BoundParams, ShiftBoundParams,
    DEFAULT_CONSTANT,
};
use recal_core::{
    compose, estimate_weights, fit_recalibrator, GaussianMixtureTask, Recalibrator, ShiftCorrector, ShiftWeights,
};

use crate::error::{RecalError, Result};
use crate::experiments::{self, ceil_cbrt, ExperimentConfig};
use crate::io;
use crate::model::{load_recalibrator, FitMetadata, ModelFile};

#[derive(Debug, Parser)]
#[command(name = "recal", version, about = "Uniform-mass binning recalibration, risk bounds and label-shift correction")]
pub struct Cli {
    /// Seed recorded in outputs; overrides the base seed of simulations.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    RiskGrid,
    OptB,
    LabelShift,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a uniform-mass binning recalibrator on a `z,y` CSV file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Number of bins, or `auto` to minimise the simplified risk bound.
        #[arg(long, default_value = "auto")]
        bins: String,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Smoothness constant used by `--bins auto` and `--smooth`.
        #[arg(long = "K")]
        k: Option<f64>,
        /// Estimate K from this simulation task when `--K` is absent.
        #[arg(long, value_enum)]
        task: Option<Task>,
        /// Class-1 prior of the simulation task.
        #[arg(long, default_value_t = 0.5)]
        pi: f64,
        /// Report the `8 K^2 / B^2` sharpness bound instead of `2 / B`.
        #[arg(long)]
        smooth: bool,
        #[arg(long = "c", default_value_t = DEFAULT_CONSTANT)]
        constant: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recalibrate the `z` column of a CSV file.
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate label-shift weights from source and target labels.
    Shift {
        #[arg(long = "labels-p")]
        labels_p: PathBuf,
        #[arg(long = "labels-q")]
        labels_q: PathBuf,
        /// Piecewise model to compose with the shift correction.
        #[arg(long = "base-model")]
        base_model: Option<PathBuf>,
        /// Known source class-1 prior; with `--prior-q` enables the risk envelope.
        #[arg(long = "prior-p", requires = "prior_q")]
        prior_p: Option<f64>,
        #[arg(long = "prior-q", requires = "prior_p")]
        prior_q: Option<f64>,
        /// Source-domain recalibration risk, for the realized envelope.
        #[arg(long = "risk-p")]
        risk_p: Option<f64>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long = "K", default_value_t = 1.0)]
        k: f64,
        #[arg(long = "c", default_value_t = DEFAULT_CONSTANT)]
        constant: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the finite-sample risk bound.
    Bound {
        #[arg(long)]
        n: usize,
        #[arg(long = "B")]
        bins: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long = "K", default_value_t = 1.0)]
        k: f64,
        #[arg(long)]
        smooth: bool,
        #[arg(long = "c", default_value_t = DEFAULT_CONSTANT)]
        constant: f64,
    },
    /// Bin count minimising the simplified risk bound.
    Optbins {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long = "K", default_value_t = 1.0)]
        k: f64,
    },
    /// Run a simulation experiment and write its CSV files and manifest.
    Simulate {
        #[arg(value_enum)]
        experiment: Experiment,
        /// JSON file overriding fields of the experiment's default config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
        /// Lift the desk-scale caps on the grid.
        #[arg(long = "full-scale")]
        full_scale: bool,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Fit {
            input,
            bins,
            delta,
            k,
            task,
            pi,
            smooth,
            constant,
            out: model_path,
        } => cmd_fit(
            FitArgs {
                input: &input,
                bins: &bins,
                delta,
                k,
                task,
                pi,
                smooth,
                constant,
                out: &model_path,
                seed,
            },
            out,
            err,
        ),
        Command::Apply { model, input, out: path } => {
            let (h, _) = load_recalibrator(&model)?;
            let rows = io::apply_file(&h, &input, &path)?;
            w(out, format!("wrote {rows} rows to {}", path.display()))
        }
        Command::Shift {
            labels_p,
            labels_q,
            base_model,
            prior_p,
            prior_q,
            risk_p,
            bins,
            delta,
            k,
            constant,
            out: path,
        } => cmd_shift(
            ShiftArgs {
                labels_p: &labels_p,
                labels_q: &labels_q,
                base_model: base_model.as_deref(),
                priors: prior_p.zip(prior_q),
                risk_p,
                bins,
                delta,
                k,
                constant,
                out: &path,
                seed,
            },
            out,
        ),
        Command::Bound {
            n,
            bins,
            delta,
            k,
            smooth,
            constant,
        } => {
            let params = BoundParams::new(n, bins, delta)?
                .with_smoothness(k, smooth)?
                .with_constant(constant)?;
            print_bound(out, &params)
        }
        Command::Optbins { n, delta, k } => {
            let best = optimal_bins(n, delta, k)?;
            w(out, format!("B* = {}\nzeta_min = {}", best.bins, best.zeta))
        }
        Command::Simulate {
            experiment,
            config,
            out_dir,
            full_scale,
        } => cmd_simulate(experiment, config.as_deref(), out_dir, full_scale, seed, out, err),
    }
}

fn w(out: &mut dyn Write, text: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", text.as_ref()).map_err(|e| RecalError::io(Path::new("<stdout>"), e))
}

fn print_bound(out: &mut dyn Write, params: &BoundParams) -> Result<()> {
    let report = risk_bound(params)?;
    w(
        out,
        format!(
            "n = {}, B = {}, delta = {}\ncal_bound = {}\nsha_bound = {}\nrisk_bound = {}\nconditions_met = {}\n{}",
            params.n,
            params.bins,
            params.delta,
            report.cal_bound,
            report.sha_bound,
            report.risk_bound,
            report.conditions_met,
            report.condition_detail
        ),
    )
}

struct FitArgs<'a> {
    input: &'a Path,
    bins: &'a str,
    delta: f64,
    k: Option<f64>,
    task: Option<Task>,
    pi: f64,
    smooth: bool,
    constant: f64,
    out: &'a Path,
    seed: Option<u64>,
}

fn smoothness_for(args: &FitArgs, err: &mut dyn Write) -> Result<f64> {
    if let Some(k) = args.k {
        return Ok(k);
    }
    match args.task {
        Some(Task::Gaussian) => {
            let task = GaussianMixtureTask::new(args.pi)?;
            Ok(task.estimate_k_refined(10_000, 1e-3, 8)?.k)
        }
        None => {
            let _ = writeln!(err, "warning: no --K or --task given; using K = 1");
            Ok(1.0)
        }
    }
}

fn cmd_fit(args: FitArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let data = io::read_labeled(args.input)?;
    let n = data.len();
    let needs_k = args.bins == "auto" || args.smooth;
    let k = if needs_k { Some(smoothness_for(&args, err)?) } else { args.k };
    let bins = if args.bins == "auto" {
        let best = optimal_bins(n.max(4), args.delta, k.unwrap_or(1.0))?;
        best.bins.min(n)
    } else {
        args.bins
            .parse::<usize>()
            .map_err(|_| RecalError::Config(format!("--bins must be a positive integer or `auto`, got `{}`", args.bins)))?
    };
    let h = fit_recalibrator(&data, bins)?;
    let metadata = FitMetadata {
        n: Some(n),
        bins: Some(bins),
        delta: Some(args.delta),
        source_digest: Some(io::file_digest(args.input)?),
        seed: args.seed,
    };
    ModelFile::from_recalibrator(&Recalibrator::PiecewiseConstant(h), metadata).save(args.out)?;
    w(out, format!("fitted {bins} bins on {n} rows; model written to {}", args.out.display()))?;
    if let Some(k) = k {
        w(out, format!("K = {k}"))?;
    }
    if n / bins < 2 {
        return w(out, format!("bound unavailable: floor(n / B) = {} < 2", n / bins));
    }
    let params = BoundParams::new(n, bins, args.delta)?
        .with_smoothness(k.unwrap_or(1.0), args.smooth)?
        .with_constant(args.constant)?;
    print_bound(out, &params)
}

struct ShiftArgs<'a> {
    labels_p: &'a Path,
    labels_q: &'a Path,
    base_model: Option<&'a Path>,
    priors: Option<(f64, f64)>,
    risk_p: Option<f64>,
    bins: Option<usize>,
    delta: f64,
    k: f64,
    constant: f64,
    out: &'a Path,
    seed: Option<u64>,
}

fn cmd_shift(args: ShiftArgs, out: &mut dyn Write) -> Result<()> {
    let p = io::read_labels(args.labels_p)?;
    let q = io::read_labels(args.labels_q)?;
    let weights = estimate_weights(&p, &q)?;
    let g = ShiftCorrector::new(weights.clone())?;
    let (h, bins) = match args.base_model {
        None => (Recalibrator::ShiftCorrector(g), args.bins),
        Some(path) => {
            let (base, _) = load_recalibrator(path)?;
            match base {
                Recalibrator::PiecewiseConstant(inner) => {
                    let bins = inner.num_bins();
                    (compose(g, inner), Some(bins))
                }
                other => {
                    return Err(RecalError::Model {
                        path: path.to_path_buf(),
                        message: format!("base model must be piecewise, found {}", other.kind()),
                    })
                }
            }
        }
    };
    let metadata = FitMetadata {
        n: Some(p.len()),
        bins,
        delta: None,
        source_digest: Some(io::file_digest(args.labels_p)?),
        seed: args.seed,
    };
    ModelFile::from_recalibrator(&h, metadata).save(args.out)?;
    let wv = weights.weights();
    w(out, format!("w = ({}, {})", wv[0], wv[1]))?;
    w(out, format!("{} model written to {}", h.kind(), args.out.display()))?;

    let Some((prior_p, prior_q)) = args.priors else {
        return Ok(());
    };
    let exact = ShiftWeights::from_priors(prior_p, prior_q)?;
    let rho = weights.ratios_to(&exact)?;
    let bins = bins.unwrap_or_else(|| ceil_cbrt(p.len()));
    let params = ShiftBoundParams {
        n_p: p.len(),
        n_q: q.len(),
        bins,
        delta: args.delta,
        smoothness: args.k,
        constant: args.constant,
        p_min: prior_p.min(1.0 - prior_p),
        q_min: prior_q.min(1.0 - prior_q),
        w_min: exact.min(),
        w_max: exact.max(),
        rho: Some((rho[0], rho[1])),
    };
    w(out, format!("rho = ({}, {})", rho[0], rho[1]))?;
    if let Some(risk) = args.risk_p {
        w(out, format!("realized_bound = {}", shift_risk_bound_realized(&params, risk)?))?;
    }
    match shift_risk_bound_apriori(&params) {
        Ok(report) => w(
            out,
            format!(
                "apriori_bound = {}\nconditions_met = {}\n{}",
                report.risk_bound, report.conditions_met, report.condition_detail
            ),
        ),
        Err(recal_core::Error::InsufficientSample { per_bin }) => {
            w(out, format!("apriori bound unavailable: floor(n_P / B) = {per_bin} < 2"))
        }
        Err(e) => Err(e.into()),
    }
}

/// The experiment's default config with the fields of `path` laid over it.
pub fn load_config(experiment: Experiment, path: Option<&Path>) -> Result<ExperimentConfig> {
    let base = match experiment {
        Experiment::RiskGrid => ExperimentConfig::risk_grid(),
        Experiment::OptB => ExperimentConfig::optimal_b(),
        Experiment::LabelShift => ExperimentConfig::label_shift(),
    };
    let Some(path) = path else {
        return Ok(base);
    };
    let text = std::fs::read_to_string(path).map_err(|e| RecalError::io(path, e))?;
    let overlay: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| RecalError::Config(format!("{}: {e}", path.display())))?;
    let serde_json::Value::Object(fields) = overlay else {
        return Err(RecalError::Config(format!("{}: expected a JSON object", path.display())));
    };
    let mut merged = serde_json::to_value(base).expect("configs serialize");
    for (key, value) in fields {
        merged[key] = value;
    }
    serde_json::from_value(merged).map_err(|e| RecalError::Config(format!("{}: {e}", path.display())))
}

fn cmd_simulate(
    experiment: Experiment,
    config: Option<&Path>,
    out_dir: Option<PathBuf>,
    full_scale: bool,
    seed: Option<u64>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    let mut cfg = load_config(experiment, config)?;
    if let Some(seed) = seed {
        cfg.base_seed = seed;
    }
    cfg.full_scale |= full_scale;
    if let Some(dir) = out_dir {
        cfg.out_dir = Some(dir);
    }
    let dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| RecalError::Config("no output directory: pass --out-dir or set out_dir".into()))?;
    let result = match experiment {
        Experiment::RiskGrid => experiments::simulate_risk_grid(&cfg, &dir)?,
        Experiment::OptB => experiments::simulate_optimal_b(&cfg, &dir)?,
        Experiment::LabelShift => experiments::simulate_label_shift(&cfg, &dir)?,
    };
    for f in &result.files {
        w(out, format!("wrote {}", f.display()))?;
    }
    for warning in &result.warnings {
        let _ = writeln!(err, "warning: {warning}");
    }
    if !result.warnings.is_empty() {
        let _ = writeln!(err, "{} warning(s)", result.warnings.len());
    }
    Ok(())
}
