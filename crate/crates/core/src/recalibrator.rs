//! Recalibration maps: the binned estimator, label-shift correction and their
//! composition.

use alloc::vec::Vec;

use crate::binning::{edges_from_sorted, BinningScheme, LabeledSample};
use crate::error::{Domain, Error, Result};

/// Step function taking the value `values[b]` on bin `b` of `scheme`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseRecalibrator {
    scheme: BinningScheme,
    values: Vec<f64>,
    counts: Vec<usize>,
}

impl PiecewiseRecalibrator {
    /// Assembles a recalibrator from stored parts (for instance a model file).
    pub fn from_parts(scheme: BinningScheme, values: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let bins = scheme.num_bins();
        if values.len() != bins {
            return Err(Error::LengthMismatch {
                expected: bins,
                found: values.len(),
            });
        }
        if counts.len() != bins {
            return Err(Error::LengthMismatch {
                expected: bins,
                found: counts.len(),
            });
        }
        if let Some(bin) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyBin { bin });
        }
        if let Some(&value) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter {
                name: "bin value",
                value,
            });
        }
        Ok(Self {
            scheme,
            values,
            counts,
        })
    }

    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_bins(&self) -> usize {
        self.values.len()
    }

    pub fn apply(&self, z: f64) -> f64 {
        self.values[self.scheme.index_of(z)]
    }

    /// Same scheme and counts, every value passed through `f`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            scheme: self.scheme.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            counts: self.counts.clone(),
        }
    }
}

/// Fits the uniform-mass binning recalibrator: each bin's value is the mean
/// label of the points falling in it.
pub fn fit_recalibrator(data: &LabeledSample, bins: usize) -> Result<PiecewiseRecalibrator> {
    let n = data.len();
    if bins == 0 || bins > n {
        return Err(Error::InvalidArity { bins, n });
    }
    let mut pairs: Vec<(f64, bool)> = data.iter().collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let scheme = BinningScheme::from_edges(edges_from_sorted(&sorted, bins)?)?;
    fit_on_scheme_sorted(scheme, &pairs)
}

/// Bin means of `data` over a fixed scheme (for example one induced by a
/// different sample). Every bin must receive at least one point.
pub fn fit_on_scheme(scheme: BinningScheme, data: &LabeledSample) -> Result<PiecewiseRecalibrator> {
    let bins = scheme.num_bins();
    let mut positives = alloc::vec![0usize; bins];
    let mut counts = alloc::vec![0usize; bins];
    for (z, y) in data.iter() {
        let b = scheme.index_of(z);
        counts[b] += 1;
        positives[b] += usize::from(y);
    }
    finish(scheme, positives, counts)
}

fn fit_on_scheme_sorted(scheme: BinningScheme, pairs: &[(f64, bool)]) -> Result<PiecewiseRecalibrator> {
    let bins = scheme.num_bins();
    let edges = scheme.edges();
    let mut positives = alloc::vec![0usize; bins];
    let mut counts = alloc::vec![0usize; bins];
    let mut b = 0;
    for &(z, y) in pairs {
        while b + 1 < bins && z > edges[b + 1] {
            b += 1;
        }
        counts[b] += 1;
        positives[b] += usize::from(y);
    }
    finish(scheme, positives, counts)
}

fn finish(scheme: BinningScheme, positives: Vec<usize>, counts: Vec<usize>) -> Result<PiecewiseRecalibrator> {
    if let Some(bin) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyBin { bin });
    }
    let values = positives
        .iter()
        .zip(&counts)
        .map(|(&p, &c)| p as f64 / c as f64)
        .collect();
    Ok(PiecewiseRecalibrator {
        scheme,
        values,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightProvenance {
    /// Weights computed from known class priors.
    Exact,
    /// Ratios of empirical class frequencies `q_hat[k] / p_hat[k]`.
    PlugIn { p_hat: Vec<f64>, q_hat: Vec<f64> },
}

/// Per-class importance ratios `w_k = Q[Y = k] / P[Y = k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftWeights {
    w: Vec<f64>,
    provenance: WeightProvenance,
}

impl ShiftWeights {
    /// Exact weights; at least two classes, every entry positive and finite.
    pub fn exact(w: Vec<f64>) -> Result<Self> {
        validate_weights(&w)?;
        Ok(Self {
            w,
            provenance: WeightProvenance::Exact,
        })
    }

    /// Exact binary weights from the class-1 priors of the two domains.
    pub fn from_priors(source_prior: f64, target_prior: f64) -> Result<Self> {
        for (name, p) in [("source prior", source_prior), ("target prior", target_prior)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidParameter { name, value: p });
            }
        }
        Self::exact(alloc::vec![
            (1.0 - target_prior) / (1.0 - source_prior),
            target_prior / source_prior,
        ])
    }

    /// Plug-in weights from class frequencies; `q_hat[k] / p_hat[k]` exactly.
    pub fn plug_in(p_hat: Vec<f64>, q_hat: Vec<f64>) -> Result<Self> {
        if p_hat.len() != q_hat.len() {
            return Err(Error::ArityMismatch {
                expected: p_hat.len(),
                found: q_hat.len(),
            });
        }
        for (class, (&p, &q)) in p_hat.iter().zip(&q_hat).enumerate() {
            if p <= 0.0 {
                return Err(Error::ClassAbsent {
                    class,
                    domain: Domain::Source,
                });
            }
            if q <= 0.0 {
                return Err(Error::ClassAbsent {
                    class,
                    domain: Domain::Target,
                });
            }
        }
        let w: Vec<f64> = p_hat.iter().zip(&q_hat).map(|(p, q)| q / p).collect();
        validate_weights(&w)?;
        Ok(Self {
            w,
            provenance: WeightProvenance::PlugIn { p_hat, q_hat },
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn provenance(&self) -> &WeightProvenance {
        &self.provenance
    }

    pub fn num_classes(&self) -> usize {
        self.w.len()
    }

    pub fn min(&self) -> f64 {
        self.w.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `rho_k = self_k / exact_k`, the realized-to-true weight ratios.
    pub fn ratios_to(&self, exact: &ShiftWeights) -> Result<Vec<f64>> {
        if self.w.len() != exact.w.len() {
            return Err(Error::ArityMismatch {
                expected: exact.w.len(),
                found: self.w.len(),
            });
        }
        Ok(self.w.iter().zip(&exact.w).map(|(a, b)| a / b).collect())
    }
}

fn validate_weights(w: &[f64]) -> Result<()> {
    if w.len() < 2 {
        return Err(Error::ArityMismatch {
            expected: 2,
            found: w.len(),
        });
    }
    match w.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        Some(index) => Err(Error::NonpositiveWeight {
            index,
            value: w[index],
        }),
        None => Ok(()),
    }
}

/// Plug-in binary shift weights from source and target labels.
///
/// Frequencies are raw empirical proportions (no smoothing). Either class
/// missing from either sample is an error.
pub fn estimate_weights(labels_p: &[bool], labels_q: &[bool]) -> Result<ShiftWeights> {
    if labels_p.is_empty() || labels_q.is_empty() {
        return Err(Error::EmptySample);
    }
    let freq = |labels: &[bool]| {
        let ones = labels.iter().filter(|&&y| y).count();
        let n = labels.len() as f64;
        alloc::vec![(labels.len() - ones) as f64 / n, ones as f64 / n]
    };
    ShiftWeights::plug_in(freq(labels_p), freq(labels_q))
}

/// Multiclass label-shift correction `g_k(a) = w_k a_k / sum_j w_j a_j`.
pub fn shift_correct_multiclass(w: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    if w.len() != alpha.len() {
        return Err(Error::ArityMismatch {
            expected: w.len(),
            found: alpha.len(),
        });
    }
    if let Some(index) = w.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::NonpositiveWeight {
            index,
            value: w[index],
        });
    }
    let sum: f64 = alpha.iter().sum();
    if alpha.iter().any(|&a| !(a >= 0.0)) || !((sum - 1.0).abs() <= 1e-12) {
        return Err(Error::InvalidSimplex { sum });
    }
    let weighted: Vec<f64> = w.iter().zip(alpha).map(|(w, a)| w * a).collect();
    let total: f64 = weighted.iter().sum();
    Ok(weighted.into_iter().map(|v| v / total).collect())
}

/// The binary label-shift correction `g_w(z) = w_1 z / (w_1 z + w_0 (1 - z))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftCorrector {
    weights: ShiftWeights,
}

impl ShiftCorrector {
    pub fn new(weights: ShiftWeights) -> Result<Self> {
        if weights.num_classes() != 2 {
            return Err(Error::ArityMismatch {
                expected: 2,
                found: weights.num_classes(),
            });
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &ShiftWeights {
        &self.weights
    }

    pub fn apply(&self, z: f64) -> f64 {
        // Endpoints are fixed points; pin them so rounding cannot move them.
        if z <= 0.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return 1.0;
        }
        let w = self.weights.weights();
        let num = w[1] * z;
        num / (num + w[0] * (1.0 - z))
    }

    /// Lipschitz constant `max(w_1 / w_0, w_0 / w_1)`.
    pub fn lipschitz(&self) -> f64 {
        let w = self.weights.weights();
        (w[1] / w[0]).max(w[0] / w[1])
    }
}

/// A post-hoc map from scores to probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum Recalibrator {
    PiecewiseConstant(PiecewiseRecalibrator),
    ShiftCorrector(ShiftCorrector),
    Composite {
        outer: ShiftCorrector,
        inner: PiecewiseRecalibrator,
    },
    Constant(f64),
    Identity,
}

impl Recalibrator {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Recalibrator::PiecewiseConstant(h) => h.apply(z),
            Recalibrator::ShiftCorrector(g) => g.apply(z),
            Recalibrator::Composite { outer, inner } => outer.apply(inner.apply(z)),
            Recalibrator::Constant(c) => *c,
            Recalibrator::Identity => z,
        }
    }

    /// The step-function form of piecewise and composite recalibrators. A
    /// composite flattens to the inner scheme with values `g(v_b)`.
    pub fn flatten(&self) -> Option<PiecewiseRecalibrator> {
        match self {
            Recalibrator::PiecewiseConstant(h) => Some(h.clone()),
            Recalibrator::Composite { outer, inner } => Some(inner.map_values(|v| outer.apply(v))),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Recalibrator::PiecewiseConstant(_) => "piecewise",
            Recalibrator::ShiftCorrector(_) => "shift",
            Recalibrator::Composite { .. } => "composite",
            Recalibrator::Constant(_) => "constant",
            Recalibrator::Identity => "identity",
        }
    }
}

/// `g ∘ h`: shift correction applied after the binned recalibrator.
pub fn compose(g: ShiftCorrector, h: PiecewiseRecalibrator) -> Recalibrator {
    Recalibrator::Composite { outer: g, inner: h }
}
