//! Population and plug-in calibration, sharpness and recalibration risks.
//!
//! For a recalibrator `h` and score `Z`:
//!
//! * calibration risk `R_cal = E[(h(Z) - E[Y | h(Z)])^2]`
//! * sharpness risk `R_sha = E[(E[Y | h(Z)] - E[Y | Z])^2]`
//! * recalibration risk `R = E[(h(Z) - E[Y | Z])^2] = R_cal + R_sha`
//! * `MSE = E[(h(Z) - Y)^2] = R + E[h*(Z)(1 - h*(Z))]`
//!
//! Population values are computed against a [`GaussianMixtureTask`]:
//! bin masses and bin means come from normal CDFs, the remaining integrals
//! from adaptive quadrature in `x`-space.

use alloc::vec::Vec;

use crate::binning::LabeledSample;
use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::recalibrator::{PiecewiseRecalibrator, Recalibrator};
use crate::special::{logit, sigmoid};
use crate::task::{GaussianMixtureTask, X_RANGE};

/// Absolute tolerance every population integral is driven to.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskReport {
    pub r_cal: f64,
    pub r_sha: f64,
    pub r_total: f64,
    pub mse: f64,
    pub method: RiskMethod,
    /// Absolute tolerance met by each integral (zero for plug-in reports).
    pub tolerance: f64,
}

/// Population risks of `h` under `task`.
pub fn population_risk(task: &GaussianMixtureTask, h: &Recalibrator) -> Result<RiskReport> {
    match h {
        Recalibrator::PiecewiseConstant(p) => piecewise_risk(task, p),
        Recalibrator::Composite { .. } => {
            let flat = h.flatten().expect("composite recalibrators flatten");
            piecewise_risk(task, &flat)
        }
        Recalibrator::ShiftCorrector(g) => population_risk_increasing(task, |z| g.apply(z)),
        Recalibrator::Identity => population_risk_increasing(task, |z| z),
        Recalibrator::Constant(c) => constant_risk(task, *c),
    }
}

/// Population risks of a strictly increasing map. Conditioning on an
/// injective `h(Z)` is conditioning on `Z`, so the sharpness risk is exactly
/// zero and the calibration risk equals the recalibration risk.
pub fn population_risk_increasing(task: &GaussianMixtureTask, h: impl Fn(f64) -> f64) -> Result<RiskReport> {
    let (lo, hi) = X_RANGE;
    let tol = QUADRATURE_TOLERANCE;
    let r = integrate(
        |x| {
            let gap = h(sigmoid(x)) - task.posterior(x);
            [gap * gap * task.density(x)]
        },
        lo,
        hi,
        tol,
    )?;
    let total = r.value[0];
    Ok(RiskReport {
        r_cal: total,
        r_sha: 0.0,
        r_total: total,
        mse: total + task.bayes_term(tol)?,
        method: RiskMethod::Quadrature,
        tolerance: tol,
    })
}

fn constant_risk(task: &GaussianMixtureTask, c: f64) -> Result<RiskReport> {
    let (lo, hi) = X_RANGE;
    let tol = QUADRATURE_TOLERANCE;
    let mean = task.prior();
    let r = integrate(
        |x| {
            let p = task.posterior(x);
            let d = task.density(x);
            [(mean - p) * (mean - p) * d, (c - p) * (c - p) * d]
        },
        lo,
        hi,
        tol,
    )?;
    let total = r.value[1];
    Ok(RiskReport {
        r_cal: (c - mean) * (c - mean),
        r_sha: r.value[0],
        r_total: total,
        mse: total + task.bayes_term(tol)?,
        method: RiskMethod::Quadrature,
        tolerance: tol,
    })
}

/// Bins sharing exactly the same value are one level set of `h`, so they
/// share one conditional mean. Returns a group id per bin.
fn level_sets(values: &[f64]) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut group = alloc::vec![0usize; values.len()];
    let mut next = 0;
    for (rank, &bin) in order.iter().enumerate() {
        if rank > 0 && values[bin] != values[order[rank - 1]] {
            next += 1;
        }
        group[bin] = next;
    }
    let count = if values.is_empty() { 0 } else { next + 1 };
    (group, count)
}

fn piecewise_risk(task: &GaussianMixtureTask, h: &PiecewiseRecalibrator) -> Result<RiskReport> {
    let tol = QUADRATURE_TOLERANCE;
    let bins = h.num_bins();
    let values = h.values();
    let xs: Vec<f64> = h.scheme().edges().iter().map(|&u| logit(u)).collect();

    let (group, groups) = level_sets(values);
    let mut mass = alloc::vec![0.0; groups];
    let mut positive = alloc::vec![0.0; groups];
    for b in 0..bins {
        mass[group[b]] += task.mass_x(xs[b], xs[b + 1]);
        positive[group[b]] += task.positive_mass_x(xs[b], xs[b + 1]);
    }
    let mut level_value = alloc::vec![0.0; groups];
    for b in 0..bins {
        level_value[group[b]] = values[b];
    }
    let level_mean: Vec<f64> = (0..groups)
        .map(|g| {
            if mass[g] > 0.0 {
                (positive[g] / mass[g]).clamp(0.0, 1.0)
            } else {
                level_value[g]
            }
        })
        .collect();

    let r_cal: f64 = (0..groups)
        .map(|g| mass[g] * (level_value[g] - level_mean[g]) * (level_value[g] - level_mean[g]))
        .sum();

    let (lo, hi) = X_RANGE;
    let per_bin_tol = tol / (bins as f64 + 1.0);
    let mut r_sha = 0.0;
    let mut r_total = 0.0;
    for b in 0..bins {
        let a = xs[b].max(lo);
        let c = xs[b + 1].min(hi);
        if !(c > a) {
            continue;
        }
        let mean = level_mean[group[b]];
        let value = values[b];
        let r = integrate(
            |x| {
                let p = task.posterior(x);
                let d = task.density(x);
                [(mean - p) * (mean - p) * d, (value - p) * (value - p) * d]
            },
            a,
            c,
            per_bin_tol,
        )?;
        r_sha += r.value[0];
        r_total += r.value[1];
    }

    Ok(RiskReport {
        r_cal,
        r_sha,
        r_total,
        mse: r_total + task.bayes_term(per_bin_tol)?,
        method: RiskMethod::Quadrature,
        tolerance: tol,
    })
}

/// Plug-in risks of a step function on a labelled sample.
///
/// Bin masses and bin means are replaced by empirical frequencies and
/// empirical label means over `data`; expectations over `Z` become averages
/// over the sample. `reference` plays the role of `E[Y | Z]` in the
/// sharpness and recalibration terms; the MSE uses the labels directly.
pub fn empirical_risk_plugin(
    data: &LabeledSample,
    h: &PiecewiseRecalibrator,
    reference: impl Fn(f64) -> f64,
) -> Result<RiskReport> {
    let bins = h.num_bins();
    let values = h.values();
    let (group, groups) = level_sets(values);
    let mut bin_of = Vec::with_capacity(data.len());
    let mut counts = alloc::vec![0usize; bins];
    let mut level_count = alloc::vec![0usize; groups];
    let mut level_pos = alloc::vec![0usize; groups];
    for (z, y) in data.iter() {
        let b = h.scheme().index_of(z);
        bin_of.push(b);
        counts[b] += 1;
        level_count[group[b]] += 1;
        level_pos[group[b]] += usize::from(y);
    }
    if let Some(bin) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyBin { bin });
    }
    let level_mean: Vec<f64> = (0..groups)
        .map(|g| level_pos[g] as f64 / level_count[g] as f64)
        .collect();

    let n = data.len() as f64;
    let (mut r_cal, mut r_sha, mut r_total, mut mse) = (0.0, 0.0, 0.0, 0.0);
    for ((z, y), &b) in data.iter().zip(&bin_of) {
        let v = values[b];
        let mean = level_mean[group[b]];
        let p = reference(z);
        r_cal += (v - mean) * (v - mean);
        r_sha += (mean - p) * (mean - p);
        r_total += (v - p) * (v - p);
        let target = if y { 1.0 } else { 0.0 };
        mse += (v - target) * (v - target);
    }
    Ok(RiskReport {
        r_cal: r_cal / n,
        r_sha: r_sha / n,
        r_total: r_total / n,
        mse: mse / n,
        method: RiskMethod::MonteCarlo,
        tolerance: 0.0,
    })
}
