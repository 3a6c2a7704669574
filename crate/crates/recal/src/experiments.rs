//! Seeded simulation experiments on the Gaussian-mixture task: the risk grid
//! over `(n, B)`, the optimal bin count, and the label-shift comparison.
//!
//! Every `(cell, seed)` pair draws from its own stream, seeded by hashing
//! the base seed with the cell coordinates, so results do not depend on the
//! grid's shape or on the order in which workers finish.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use recal_core::bounds::{optimal_bins, risk_bound, BoundParams, BoundReport, DEFAULT_CONSTANT};
use recal_core::rng::{derive_seed, SeededStream};
use recal_core::{
    compose, estimate_weights, fit_recalibrator, population_risk, Error as CoreError, GaussianMixtureTask,
    Recalibrator, RiskReport, ShiftCorrector,
};
use serde::{Deserialize, Serialize};

use crate::error::{RecalError, Result};
use crate::io::{write_atomic, write_csv};

/// Largest grid sample size run without `full_scale`.
pub const DESK_MAX_N: usize = 1_000_000;
/// Largest risk-grid bin count run without `full_scale`.
pub const DESK_MAX_BINS: usize = 256;
/// Largest optimal-B bin count run without `full_scale`; the risk minimum
/// at `n = 10^6` lies above [`DESK_MAX_BINS`].
pub const OPT_B_DESK_MAX_BINS: usize = 1024;
const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Composite,
    Source,
    LabelShift,
    Target,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Composite, Method::Source, Method::LabelShift, Method::Target];

    pub fn name(self) -> &'static str {
        match self {
            Method::Composite => "Composite",
            Method::Source => "Source",
            Method::LabelShift => "LabelShift",
            Method::Target => "Target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_grid: Vec<usize>,
    pub b_grid: Vec<usize>,
    pub delta: f64,
    pub seeds: usize,
    pub base_seed: u64,
    pub pi_source: f64,
    pub pi_target: f64,
    pub n_p: usize,
    pub n_q: usize,
    pub methods: Vec<Method>,
    /// Smoothness constant for the theory side; estimated from the task when absent.
    pub smoothness: Option<f64>,
    /// Use `8 K^2 / B^2` rather than `2 / B` for the sharpness bound.
    pub smooth_sharpness_bound: bool,
    pub constant: f64,
    /// Lift the desk-scale caps on `n_grid` and `b_grid`.
    pub full_scale: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::risk_grid()
    }
}

impl ExperimentConfig {
    pub fn risk_grid() -> Self {
        Self {
            n_grid: vec![100, 1_000, 10_000, 100_000, 1_000_000],
            b_grid: vec![6, 12, 24, 48, 96, 192],
            delta: 0.1,
            seeds: 10,
            base_seed: 0,
            pi_source: 0.5,
            pi_target: 0.1,
            n_p: 1_000,
            n_q: 100,
            methods: Method::ALL.to_vec(),
            smoothness: None,
            smooth_sharpness_bound: false,
            constant: DEFAULT_CONSTANT,
            full_scale: false,
            out_dir: None,
        }
    }

    pub fn optimal_b() -> Self {
        Self {
            n_grid: vec![1_000, 10_000, 100_000, 1_000_000],
            b_grid: geometric_grid(2, OPT_B_DESK_MAX_BINS, 4, 2),
            ..Self::risk_grid()
        }
    }

    pub fn label_shift() -> Self {
        Self::risk_grid()
    }

    /// Checks the config against the risk-grid desk caps.
    pub fn validate(&self) -> Result<()> {
        self.validate_with_cap(DESK_MAX_BINS)
    }

    fn validate_with_cap(&self, max_bins: usize) -> Result<()> {
        let fail = |m: String| Err(RecalError::Config(m));
        for (name, grid) in [("n_grid", &self.n_grid), ("b_grid", &self.b_grid)] {
            if grid.is_empty() {
                return fail(format!("{name} is empty"));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return fail(format!("{name} must be strictly ascending"));
            }
            if grid[0] == 0 {
                return fail(format!("{name} entries must be positive"));
            }
        }
        if self.seeds == 0 {
            return fail("seeds must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta = {} is not in (0, 1)", self.delta));
        }
        for (name, p) in [("pi_source", self.pi_source), ("pi_target", self.pi_target)] {
            if !(p > 0.0 && p < 1.0) {
                return fail(format!("{name} = {p} is not in (0, 1)"));
            }
        }
        if self.n_p == 0 || self.n_q == 0 {
            return fail("n_p and n_q must be positive".into());
        }
        if self.methods.is_empty() {
            return fail("methods is empty".into());
        }
        if let Some(k) = self.smoothness {
            if !(k >= 0.0 && k.is_finite()) {
                return fail(format!("smoothness = {k} must be finite and nonnegative"));
            }
        }
        if !(self.constant > 0.0) {
            return fail(format!("constant = {} must be positive", self.constant));
        }
        if !self.full_scale {
            let n = *self.n_grid.last().unwrap();
            let b = *self.b_grid.last().unwrap();
            if n > DESK_MAX_N || b > max_bins {
                return fail(format!(
                    "grid reaches n = {n}, B = {b}; desk runs are capped at n <= {DESK_MAX_N} and \
                     B <= {max_bins} (set full_scale to lift the cap)"
                ));
            }
        }
        Ok(())
    }
}

/// Distinct values `lo * 2^(j / per_octave)`, rounded to a multiple of
/// `step`, up to `hi`.
pub fn geometric_grid(lo: usize, hi: usize, per_octave: u32, step: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut j = 0;
    loop {
        let raw = lo as f64 * 2f64.powf(j as f64 / per_octave as f64);
        let b = ((raw / step as f64).round() as usize * step).max(step);
        if b > hi {
            break;
        }
        if out.last() != Some(&b) {
            out.push(b);
        }
        j += 1;
    }
    out
}

/// Smallest `b` with `b^3 >= n`.
pub fn ceil_cbrt(n: usize) -> usize {
    let mut b = (n as f64).cbrt().round() as usize;
    while b.pow(3) < n {
        b += 1;
    }
    while b > 1 && (b - 1).pow(3) >= n {
        b -= 1;
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub r_cal: f64,
    pub r_sha: f64,
    pub r_total: f64,
    pub mse: f64,
}

impl Summary {
    fn of(reports: &[RiskReport]) -> (Summary, Summary) {
        let pick: [fn(&RiskReport) -> f64; 4] = [|r| r.r_cal, |r| r.r_sha, |r| r.r_total, |r| r.mse];
        let stats: Vec<(f64, f64)> = pick
            .iter()
            .map(|f| mean_std(&reports.iter().map(f).collect::<Vec<_>>()))
            .collect();
        (
            Summary {
                r_cal: stats[0].0,
                r_sha: stats[1].0,
                r_total: stats[2].0,
                mse: stats[3].0,
            },
            Summary {
                r_cal: stats[0].1,
                r_sha: stats[1].1,
                r_total: stats[2].1,
                mse: stats[3].1,
            },
        )
    }
}

/// Mean and standard deviation with the `k - 1` denominator (NaN for `k < 2`).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (mean, if xs.len() < 2 { f64::NAN } else { var.sqrt() })
}

/// Ordinary least squares of `log10 y` on `log10 x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `sqrt(SSR / (k - 2))`; zero for two points.
    pub residual_se: f64,
    pub points: usize,
}

pub fn fit_log_slope(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    if lx.iter().chain(&ly).any(|v| !v.is_finite()) {
        return None;
    }
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let residual_se = if lx.len() > 2 { (ssr / (k - 2.0)).sqrt() } else { 0.0 };
    Some(SlopeFit {
        slope,
        intercept,
        residual_se,
        points: lx.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub index: usize,
    pub seed: u64,
    pub report: RiskReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub n: usize,
    pub bins: usize,
    /// Set when `floor(n / B) < 2`; such cells carry no runs.
    pub skipped: bool,
    pub runs: Vec<SeedRun>,
    pub mean: Option<Summary>,
    pub std: Option<Summary>,
    pub bound: Option<BoundReport>,
    pub gates_ok: bool,
}

pub fn cell_seed(base: u64, n: usize, bins: usize, index: usize) -> u64 {
    derive_seed(&[base, n as u64, bins as u64, index as u64])
}

/// Smoothness constant used by the theory side: the configured value, or a
/// grid estimate on the source task.
pub fn smoothness(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.smoothness {
        Some(k) => Ok(k),
        None => {
            let task = GaussianMixtureTask::new(cfg.pi_source)?;
            Ok(task.estimate_k_refined(10_000, 1e-3, 8)?.k)
        }
    }
}

/// Fits a UMB recalibrator per `(n, B, seed)` on the source task and scores
/// it by quadrature.
pub fn run_risk_grid(cfg: &ExperimentConfig) -> Result<Vec<GridCell>> {
    cfg.validate()?;
    risk_grid_unchecked(cfg)
}

fn risk_grid_unchecked(cfg: &ExperimentConfig) -> Result<Vec<GridCell>> {
    let task = GaussianMixtureTask::new(cfg.pi_source)?;
    let k = if cfg.smooth_sharpness_bound { smoothness(cfg)? } else { cfg.smoothness.unwrap_or(1.0) };

    let shape: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| cfg.b_grid.iter().map(move |&b| (n, b)))
        .collect();
    let jobs: Vec<(usize, usize, usize)> = shape
        .iter()
        .filter(|(n, b)| n / b >= 2)
        .flat_map(|&(n, b)| (0..cfg.seeds).map(move |i| (n, b, i)))
        .collect();
    let runs: Vec<(usize, usize, SeedRun)> = jobs
        .par_iter()
        .map(|&(n, bins, index)| {
            let seed = cell_seed(cfg.base_seed, n, bins, index);
            let data = task.sample(n, seed);
            let h = fit_recalibrator(&data, bins)?;
            let report = population_risk(&task, &Recalibrator::PiecewiseConstant(h))?;
            Ok((n, bins, SeedRun { index, seed, report }))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(shape.len());
    let mut runs = runs.into_iter().peekable();
    for (n, bins) in shape {
        if n / bins < 2 {
            cells.push(GridCell {
                n,
                bins,
                skipped: true,
                runs: Vec::new(),
                mean: None,
                std: None,
                bound: None,
                gates_ok: false,
            });
            continue;
        }
        let mut mine = Vec::with_capacity(cfg.seeds);
        while let Some((_, _, run)) = runs.next_if(|r| r.0 == n && r.1 == bins) {
            mine.push(run);
        }
        let reports: Vec<RiskReport> = mine.iter().map(|r| r.report).collect();
        let (mean, std) = Summary::of(&reports);
        let params = BoundParams::new(n, bins, cfg.delta)?
            .with_constant(cfg.constant)?
            .with_smoothness(k, cfg.smooth_sharpness_bound)?;
        let bound = risk_bound(&params)?;
        cells.push(GridCell {
            n,
            bins,
            skipped: false,
            runs: mine,
            mean: Some(mean),
            std: Some(std),
            gates_ok: bound.conditions_met,
            bound: Some(bound),
        });
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalBRow {
    pub n: usize,
    /// Grid bin count with the smallest mean recalibration risk; `None` when
    /// every cell for this `n` was skipped.
    pub b_star_exp: Option<usize>,
    pub b_star_theory: usize,
    pub zeta_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalBRun {
    pub rows: Vec<OptimalBRow>,
    pub smoothness: f64,
    pub cells: Vec<GridCell>,
}

/// Empirical and theoretical optimal bin counts per sample size.
pub fn run_optimal_b(cfg: &ExperimentConfig) -> Result<OptimalBRun> {
    cfg.validate_with_cap(OPT_B_DESK_MAX_BINS)?;
    let (lo, hi) = (cfg.b_grid[0], *cfg.b_grid.last().unwrap());
    if hi < 10 * lo {
        return Err(RecalError::Config(format!(
            "b_grid spans {lo}..{hi}; it must cover at least a decade"
        )));
    }
    let k = smoothness(cfg)?;
    let cells = risk_grid_unchecked(cfg)?;
    let rows = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let b_star_exp = cells
                .iter()
                .filter(|c| c.n == n && !c.skipped)
                .min_by(|a, b| {
                    let (ra, rb) = (a.mean.unwrap().r_total, b.mean.unwrap().r_total);
                    ra.total_cmp(&rb).then(a.bins.cmp(&b.bins))
                })
                .map(|c| c.bins);
            let theory = optimal_bins(n.max(4), cfg.delta, k)?;
            Ok(OptimalBRow {
                n,
                b_star_exp,
                b_star_theory: theory.bins,
                zeta_min: theory.zeta,
            })
        })
        .collect::<Result<_>>()?;
    Ok(OptimalBRun {
        rows,
        smoothness: k,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftRun {
    pub method: Method,
    pub index: usize,
    pub seed: u64,
    /// Draws discarded because a class was absent from a sample.
    pub resampled: usize,
    pub report: RiskReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: Method,
    pub bins: Option<usize>,
    pub seeds: Vec<u64>,
    pub mean: Summary,
    pub std: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelShiftResult {
    pub rows: Vec<TableRow>,
    pub runs: Vec<ShiftRun>,
    pub resampled: usize,
    pub bins_source: usize,
    pub bins_target: usize,
}

fn shift_seed(cfg: &ExperimentConfig, index: usize) -> u64 {
    derive_seed(&[cfg.base_seed, cfg.n_p as u64, cfg.n_q as u64, index as u64])
}

/// Builds and scores the requested recalibrators for one seed, redrawing on
/// fresh streams while a class is missing from either sample.
fn label_shift_seed(
    cfg: &ExperimentConfig,
    index: usize,
    bins_p: usize,
    bins_q: usize,
) -> Result<Vec<ShiftRun>> {
    let source = GaussianMixtureTask::new(cfg.pi_source)?;
    let target = GaussianMixtureTask::new(cfg.pi_target)?;
    let seed = shift_seed(cfg, index);
    for attempt in 0..MAX_ATTEMPTS {
        let stream = 2 * attempt as u64;
        let data_p = source.sample_from(cfg.n_p, &mut SeededStream::new(seed, stream));
        let data_q = target.sample_from(cfg.n_q, &mut SeededStream::new(seed, stream + 1));
        let weights = match estimate_weights(data_p.labels(), data_q.labels()) {
            Ok(w) => w,
            Err(CoreError::ClassAbsent { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let g = ShiftCorrector::new(weights)?;
        let mut out = Vec::with_capacity(cfg.methods.len());
        for &method in &cfg.methods {
            let h = match method {
                Method::Composite => compose(g.clone(), fit_recalibrator(&data_p, bins_p)?),
                Method::Source => Recalibrator::PiecewiseConstant(fit_recalibrator(&data_p, bins_p)?),
                Method::LabelShift => Recalibrator::ShiftCorrector(g.clone()),
                Method::Target => Recalibrator::PiecewiseConstant(fit_recalibrator(&data_q, bins_q)?),
            };
            out.push(ShiftRun {
                method,
                index,
                seed,
                resampled: attempt,
                report: population_risk(&target, &h)?,
            });
        }
        return Ok(out);
    }
    Err(RecalError::Config(format!(
        "seed {index}: a class was absent in {MAX_ATTEMPTS} consecutive draws; check pi_source, pi_target, n_p and n_q"
    )))
}

/// The four-way comparison of recalibrators under label shift, each scored
/// under the target task.
pub fn run_label_shift(cfg: &ExperimentConfig) -> Result<LabelShiftResult> {
    cfg.validate()?;
    let bins_p = ceil_cbrt(cfg.n_p);
    let bins_q = ceil_cbrt(cfg.n_q);
    let per_seed: Vec<Vec<ShiftRun>> = (0..cfg.seeds)
        .into_par_iter()
        .map(|i| label_shift_seed(cfg, i, bins_p, bins_q))
        .collect::<Result<_>>()?;
    let resampled = per_seed.iter().map(|r| r[0].resampled).sum();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut runs: Vec<ShiftRun> = per_seed.into_iter().flatten().collect();
    runs.sort_by_key(|r| (r.method, r.index));
    let rows = methods
        .iter()
        .map(|&method| {
            let mine: Vec<&ShiftRun> = runs.iter().filter(|r| r.method == method).collect();
            let reports: Vec<RiskReport> = mine.iter().map(|r| r.report).collect();
            let (mean, std) = Summary::of(&reports);
            TableRow {
                method,
                bins: match method {
                    Method::Composite | Method::Source => Some(bins_p),
                    Method::Target => Some(bins_q),
                    Method::LabelShift => None,
                },
                seeds: mine.iter().map(|r| r.seed).collect(),
                mean,
                std,
            }
        })
        .collect();
    Ok(LabelShiftResult {
        rows,
        runs,
        resampled,
        bins_source: bins_p,
        bins_target: bins_q,
    })
}

pub const RISK_GRID_HEADER: [&str; 11] = [
    "n", "B", "seed", "r_cal", "r_sha", "r", "mse", "cal_bound", "sha_bound", "risk_bound", "gates_ok",
];
pub const LABEL_SHIFT_HEADER: [&str; 6] = ["method", "seed", "r_cal", "r_sha", "r", "mse"];
pub const LABEL_SHIFT_SUMMARY_HEADER: [&str; 11] = [
    "method", "seeds", "r_cal", "r_cal_std", "r_sha", "r_sha_std", "r", "r_std", "mse", "mse_std", "B",
];
pub const OPT_B_HEADER: [&str; 4] = ["n", "B_star_exp", "B_star_theory", "zeta_min"];

/// Marker written in place of values for skipped cells.
pub const SKIP: &str = "skip";

pub fn risk_grid_rows(cells: &[GridCell]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for c in cells {
        if c.skipped {
            let mut row = vec![c.n.to_string(), c.bins.to_string()];
            row.extend(std::iter::repeat_n(SKIP.to_string(), 9));
            rows.push(row);
            continue;
        }
        let b = c.bound.as_ref().expect("run cells carry bounds");
        for r in &c.runs {
            rows.push(vec![
                c.n.to_string(),
                c.bins.to_string(),
                r.seed.to_string(),
                r.report.r_cal.to_string(),
                r.report.r_sha.to_string(),
                r.report.r_total.to_string(),
                r.report.mse.to_string(),
                b.cal_bound.to_string(),
                b.sha_bound.to_string(),
                b.risk_bound.to_string(),
                c.gates_ok.to_string(),
            ]);
        }
    }
    rows
}

pub fn label_shift_rows(result: &LabelShiftResult) -> Vec<Vec<String>> {
    result
        .runs
        .iter()
        .map(|r| {
            vec![
                r.method.name().to_string(),
                r.seed.to_string(),
                r.report.r_cal.to_string(),
                r.report.r_sha.to_string(),
                r.report.r_total.to_string(),
                r.report.mse.to_string(),
            ]
        })
        .collect()
}

pub fn label_shift_summary_rows(result: &LabelShiftResult) -> Vec<Vec<String>> {
    result
        .rows
        .iter()
        .map(|row| {
            let (m, s) = (row.mean, row.std);
            vec![
                row.method.name().to_string(),
                row.seeds.len().to_string(),
                m.r_cal.to_string(),
                s.r_cal.to_string(),
                m.r_sha.to_string(),
                s.r_sha.to_string(),
                m.r_total.to_string(),
                s.r_total.to_string(),
                m.mse.to_string(),
                s.mse.to_string(),
                row.bins.map(|b| b.to_string()).unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn optimal_b_rows(run: &OptimalBRun) -> Vec<Vec<String>> {
    run.rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.b_star_exp.map(|b| b.to_string()).unwrap_or_else(|| SKIP.to_string()),
                r.b_star_theory.to_string(),
                r.zeta_min.to_string(),
            ]
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestCell {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub seeds: Vec<u64>,
    pub skipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gates_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_detail: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resampled: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub slopes: Vec<(String, SlopeFit)>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub cells: Vec<ManifestCell>,
}

impl Manifest {
    fn new(experiment: &'static str, cfg: &ExperimentConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            experiment,
            config: cfg.clone(),
            smoothness: None,
            resampled: None,
            slopes: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            cells: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifests serialize");
        write_atomic(path, |w| {
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")
        })
    }
}

fn grid_manifest_cells(cells: &[GridCell]) -> Vec<ManifestCell> {
    cells
        .iter()
        .map(|c| ManifestCell {
            n: Some(c.n),
            bins: Some(c.bins),
            method: None,
            seeds: c.runs.iter().map(|r| r.seed).collect(),
            skipped: c.skipped,
            gates_ok: (!c.skipped).then_some(c.gates_ok),
            condition_detail: c.bound.as_ref().map(|b| b.condition_detail.clone()),
        })
        .collect()
}

fn grid_warnings(cells: &[GridCell]) -> Vec<String> {
    let mut warnings = Vec::new();
    let skipped = cells.iter().filter(|c| c.skipped).count();
    if skipped > 0 {
        warnings.push(format!("{skipped} cell(s) skipped: fewer than 2 points per bin"));
    }
    let gated = cells.iter().filter(|c| !c.skipped && !c.gates_ok).count();
    if gated > 0 {
        warnings.push(format!("{gated} cell(s) below the sample-size gate; their bounds carry no guarantee"));
    }
    warnings
}

/// Slopes of the risk surface in `n` (per bin count) and in `B` (per sample
/// size), over cells that ran.
pub fn grid_slopes(cells: &[GridCell]) -> Vec<(String, SlopeFit)> {
    let mut out = Vec::new();
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
    let mut bs: Vec<usize> = cells.iter().map(|c| c.bins).collect();
    ns.dedup();
    bs.sort();
    bs.dedup();
    for &b in &bs {
        let pts: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| c.bins == b && !c.skipped)
            .map(|c| (c.n as f64, c.mean.unwrap().r_cal))
            .collect();
        if let Some(fit) = fit_log_slope(&pts.iter().map(|p| p.0).collect::<Vec<_>>(), &pts.iter().map(|p| p.1).collect::<Vec<_>>()) {
            out.push((format!("r_cal vs n at B={b}"), fit));
        }
    }
    for &n in &ns {
        let pts: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| c.n == n && !c.skipped)
            .map(|c| (c.bins as f64, c.mean.unwrap().r_sha))
            .collect();
        if let Some(fit) = fit_log_slope(&pts.iter().map(|p| p.0).collect::<Vec<_>>(), &pts.iter().map(|p| p.1).collect::<Vec<_>>()) {
            out.push((format!("r_sha vs B at n={n}"), fit));
        }
    }
    out
}

/// Files written by a simulation command, plus warnings for the caller to
/// surface.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn prepare(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| RecalError::io(out_dir, e))
}

fn finish(mut manifest: Manifest, out_dir: &Path, mut files: Vec<PathBuf>) -> Result<SimulationOutput> {
    let path = out_dir.join("manifest.json");
    manifest.outputs = files
        .iter()
        .chain(std::iter::once(&path))
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    manifest.write(&path)?;
    files.push(path);
    Ok(SimulationOutput {
        files,
        warnings: manifest.warnings,
    })
}

pub fn simulate_risk_grid(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SimulationOutput> {
    let cells = run_risk_grid(cfg)?;
    prepare(out_dir)?;
    let csv = out_dir.join("risk_grid.csv");
    write_csv(&csv, &RISK_GRID_HEADER, &risk_grid_rows(&cells))?;
    let mut manifest = Manifest::new("risk-grid", cfg);
    manifest.slopes = grid_slopes(&cells);
    manifest.warnings = grid_warnings(&cells);
    manifest.cells = grid_manifest_cells(&cells);
    finish(manifest, out_dir, vec![csv])
}

pub fn simulate_optimal_b(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SimulationOutput> {
    let run = run_optimal_b(cfg)?;
    prepare(out_dir)?;
    let csv = out_dir.join("opt_b.csv");
    write_csv(&csv, &OPT_B_HEADER, &optimal_b_rows(&run))?;
    let grid = out_dir.join("opt_b_grid.csv");
    write_csv(&grid, &RISK_GRID_HEADER, &risk_grid_rows(&run.cells))?;
    let mut manifest = Manifest::new("opt-b", cfg);
    manifest.smoothness = Some(run.smoothness);
    let n: Vec<f64> = run.rows.iter().map(|r| r.n as f64).collect();
    let theory: Vec<f64> = run.rows.iter().map(|r| r.b_star_theory as f64).collect();
    if let Some(fit) = fit_log_slope(&n, &theory) {
        manifest.slopes.push(("B_star_theory vs n".into(), fit));
    }
    let exp: Vec<(f64, f64)> = run
        .rows
        .iter()
        .filter_map(|r| r.b_star_exp.map(|b| (r.n as f64, b as f64)))
        .collect();
    if let Some(fit) = fit_log_slope(&exp.iter().map(|p| p.0).collect::<Vec<_>>(), &exp.iter().map(|p| p.1).collect::<Vec<_>>()) {
        manifest.slopes.push(("B_star_exp vs n".into(), fit));
    }
    manifest.warnings = grid_warnings(&run.cells);
    manifest.cells = grid_manifest_cells(&run.cells);
    finish(manifest, out_dir, vec![csv, grid])
}

pub fn simulate_label_shift(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SimulationOutput> {
    let result = run_label_shift(cfg)?;
    prepare(out_dir)?;
    let csv = out_dir.join("label_shift.csv");
    write_csv(&csv, &LABEL_SHIFT_HEADER, &label_shift_rows(&result))?;
    let summary = out_dir.join("label_shift_summary.csv");
    write_csv(&summary, &LABEL_SHIFT_SUMMARY_HEADER, &label_shift_summary_rows(&result))?;
    let mut manifest = Manifest::new("label-shift", cfg);
    manifest.resampled = Some(result.resampled);
    if result.resampled > 0 {
        manifest
            .warnings
            .push(format!("{} draw(s) resampled because a class was absent", result.resampled));
    }
    manifest.cells = result
        .rows
        .iter()
        .map(|r| ManifestCell {
            n: None,
            bins: r.bins,
            method: Some(r.method),
            seeds: r.seeds.clone(),
            skipped: false,
            gates_ok: None,
            condition_detail: None,
        })
        .collect();
    finish(manifest, out_dir, vec![csv, summary])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_cube_roots() {
        assert_eq!(ceil_cbrt(1000), 10);
        assert_eq!(ceil_cbrt(100), 5);
        assert_eq!(ceil_cbrt(1001), 11);
        assert_eq!(ceil_cbrt(1), 1);
        assert_eq!(ceil_cbrt(27), 3);
        assert_eq!(ceil_cbrt(28), 4);
    }

    #[test]
    fn sample_std_uses_k_minus_one() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_std(&[1.0]).1.is_nan());
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let x = [10.0, 100.0, 1000.0, 10000.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.75)).collect();
        let fit = fit_log_slope(&x, &y).unwrap();
        assert!((fit.slope + 0.75).abs() < 1e-12);
        assert!((fit.intercept - 3f64.log10()).abs() < 1e-12);
        assert!(fit.residual_se < 1e-12);
        assert!(fit_log_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn geometric_grid_is_ascending() {
        let g = geometric_grid(2, 256, 4, 1);
        assert_eq!(g[0], 2);
        assert_eq!(*g.last().unwrap(), 256);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let even = geometric_grid(2, 1024, 4, 2);
        assert!(even.iter().all(|b| b % 2 == 0));
        assert_eq!(*even.last().unwrap(), 1024);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::risk_grid().validate().is_ok());
        assert!(ExperimentConfig::optimal_b().validate_with_cap(OPT_B_DESK_MAX_BINS).is_ok());
        let bad = ExperimentConfig {
            n_grid: vec![1000, 100],
            ..ExperimentConfig::risk_grid()
        };
        assert!(matches!(bad.validate(), Err(RecalError::Config(_))));
        let big = ExperimentConfig {
            n_grid: vec![10_000_000],
            b_grid: vec![1000],
            ..ExperimentConfig::risk_grid()
        };
        assert!(big.validate().is_err());
        assert!(ExperimentConfig { full_scale: true, ..big }.validate().is_ok());
        let no_seeds = ExperimentConfig {
            seeds: 0,
            ..ExperimentConfig::risk_grid()
        };
        assert!(no_seeds.validate().is_err());
    }

    #[test]
    fn skipped_cells_are_marked() {
        let cfg = ExperimentConfig {
            n_grid: vec![20, 200],
            b_grid: vec![6, 12],
            seeds: 2,
            ..ExperimentConfig::risk_grid()
        };
        let cells = run_risk_grid(&cfg).unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells[1].skipped && cells[1].runs.is_empty());
        assert!(!cells[0].skipped && cells[0].runs.len() == 2);
        let rows = risk_grid_rows(&cells);
        assert_eq!(rows.len(), 2 + 1 + 2 + 2);
        assert_eq!(rows[2][2], SKIP);
    }
}
