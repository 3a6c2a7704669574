//! Finite-sample risk bounds for uniform-mass binning and for the
//! shift-corrected composite, plus the diagnostic predicates behind them.
//!
//! All logarithms are natural.

use alloc::format;
use alloc::string::String;

use libm::{ceil, log, sqrt};

use crate::binning::BinningScheme;
use crate::error::{Error, Result};
use crate::recalibrator::{PiecewiseRecalibrator, ShiftWeights};

/// Default universal constant in the sample-size gate.
pub const DEFAULT_CONSTANT: f64 = 2420.0;

/// Parameters of the single-domain bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n: usize,
    pub bins: usize,
    pub delta: f64,
    /// Smoothness constant `K` of the optimal recalibration function.
    pub smoothness: f64,
    pub constant: f64,
    /// Use the `8 K^2 / B^2` sharpness bound instead of `2 / B`.
    pub use_smooth: bool,
}

impl BoundParams {
    /// `K = 1`, `c = 2420`, unsmoothed sharpness bound.
    pub fn new(n: usize, bins: usize, delta: f64) -> Result<Self> {
        Self {
            n,
            bins,
            delta,
            smoothness: 1.0,
            constant: DEFAULT_CONSTANT,
            use_smooth: false,
        }
        .validated()
    }

    pub fn with_smoothness(mut self, k: f64, use_smooth: bool) -> Result<Self> {
        self.smoothness = k;
        self.use_smooth = use_smooth;
        self.validated()
    }

    pub fn with_constant(mut self, c: f64) -> Result<Self> {
        self.constant = c;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        if self.n == 0 {
            return Err(Error::InvalidParameter { name: "n", value: 0.0 });
        }
        if self.bins == 0 {
            return Err(Error::InvalidParameter { name: "B", value: 0.0 });
        }
        check_delta(self.delta)?;
        if !(self.smoothness >= 0.0 && self.smoothness.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "K",
                value: self.smoothness,
            });
        }
        if !(self.constant > 0.0 && self.constant.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "c",
                value: self.constant,
            });
        }
        Ok(self)
    }

    fn per_bin(&self) -> usize {
        self.n / self.bins
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
        })
    }
}

fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value })
    }
}

/// A bound value with the sample-size conditions under which it holds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub cal_bound: f64,
    pub sha_bound: f64,
    pub risk_bound: f64,
    pub conditions_met: bool,
    pub condition_detail: String,
}

/// Outcome of a sample-size requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub ok: bool,
    pub threshold: f64,
    pub detail: String,
}

/// `(sqrt(log(scale B / delta) / (2 (m - 1))) + 1 / m)^2` with `m = floor(n / B)`.
fn binned_deviation_sq(n: usize, bins: usize, delta: f64, scale: f64) -> Result<f64> {
    let m = n / bins;
    if m < 2 {
        return Err(Error::InsufficientSample { per_bin: m });
    }
    let m = m as f64;
    let dev = sqrt(log(scale * bins as f64 / delta) / (2.0 * (m - 1.0))) + 1.0 / m;
    Ok(dev * dev)
}

/// High-probability bound on the calibration risk of the UMB recalibrator.
pub fn cal_risk_bound(p: &BoundParams) -> Result<f64> {
    binned_deviation_sq(p.n, p.bins, p.delta, 4.0)
}

/// Sharpness risk bound: `8 K^2 / B^2` when `use_smooth`, else `2 / B`.
pub fn sha_risk_bound(p: &BoundParams) -> f64 {
    let b = p.bins as f64;
    if p.use_smooth {
        8.0 * p.smoothness * p.smoothness / (b * b)
    } else {
        2.0 / b
    }
}

/// Uniform deviation `eps_delta` of the bin means: with probability at least
/// `1 - delta` every empirical bin mean is within this of its population
/// value.
pub fn epsilon_delta(n: usize, bins: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if bins == 0 {
        return Err(Error::InvalidParameter { name: "B", value: 0.0 });
    }
    binned_deviation_sq(n, bins, delta, 2.0).map(sqrt)
}

/// Sample-size requirement `n >= c B log(2B / delta)`.
pub fn sample_size_ok_thm1(p: &BoundParams) -> Gate {
    let b = p.bins as f64;
    let threshold = p.constant * b * log(2.0 * b / p.delta);
    let ok = p.n as f64 >= threshold;
    Gate {
        ok,
        threshold,
        detail: format!(
            "n = {} {} c*B*log(2B/delta) = {:.1} (c = {}, B = {}, delta = {})",
            p.n,
            if ok { ">=" } else { "<" },
            threshold,
            p.constant,
            p.bins,
            p.delta
        ),
    }
}

/// Both bounds together. `conditions_met` also requires at least two points
/// per bin.
pub fn risk_bound(p: &BoundParams) -> Result<BoundReport> {
    let cal = cal_risk_bound(p)?;
    let sha = sha_risk_bound(p);
    let gate = sample_size_ok_thm1(p);
    Ok(BoundReport {
        cal_bound: cal,
        sha_bound: sha,
        risk_bound: cal + sha,
        conditions_met: gate.ok && p.per_bin() >= 2,
        condition_detail: gate.detail,
    })
}

/// Simplified total-risk envelope `(4B/n) log(4B/delta) + 8 K^2 / B^2`.
pub fn zeta(bins: usize, n: usize, delta: f64, k: f64) -> f64 {
    let b = bins as f64;
    4.0 * b / n as f64 * log(4.0 * b / delta) + 8.0 * k * k / (b * b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalBins {
    pub bins: usize,
    pub zeta: f64,
}

/// Minimises [`zeta`] over the integers `2..=floor(n / 2)`; ties go to the
/// smallest bin count.
pub fn optimal_bins(n: usize, delta: f64, k: f64) -> Result<OptimalBins> {
    if n < 4 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
        });
    }
    check_delta(delta)?;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter { name: "K", value: k });
    }
    let mut best = OptimalBins {
        bins: 2,
        zeta: zeta(2, n, delta, k),
    };
    for bins in 3..=n / 2 {
        let z = zeta(bins, n, delta, k);
        if z < best.zeta {
            best = OptimalBins { bins, zeta: z };
        }
    }
    Ok(best)
}

/// Parameters of the label-shift bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftBoundParams {
    pub n_p: usize,
    pub n_q: usize,
    pub bins: usize,
    pub delta: f64,
    pub smoothness: f64,
    pub constant: f64,
    /// Smaller class prior under the source.
    pub p_min: f64,
    /// Smaller class prior under the target.
    pub q_min: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Realized `(rho_0, rho_1)`, plug-in over exact weights.
    pub rho: Option<(f64, f64)>,
}

impl ShiftBoundParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_p == 0 || self.n_q == 0 || self.bins == 0 {
            return Err(Error::InvalidParameter {
                name: "n_P, n_Q and B",
                value: 0.0,
            });
        }
        check_delta(self.delta)?;
        for (name, v) in [("p_min", self.p_min), ("q_min", self.q_min)] {
            if !(v > 0.0 && v <= 0.5) {
                return Err(Error::InvalidParameter { name, value: v });
            }
        }
        if !(self.w_min > 0.0 && self.w_min <= self.w_max && self.w_max.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "w_min",
                value: self.w_min,
            });
        }
        if !(self.smoothness >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "K",
                value: self.smoothness,
            });
        }
        if !(self.constant > 0.0) {
            return Err(Error::InvalidParameter {
                name: "c",
                value: self.constant,
            });
        }
        if let Some((r0, r1)) = self.rho {
            if !(r0 > 0.0 && r1 > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "rho",
                    value: r0.min(r1),
                });
            }
        }
        Ok(())
    }

    fn amplification(&self) -> f64 {
        self.w_max * self.w_max * self.w_max / (self.w_min * self.w_min)
    }
}

/// Target-domain risk bound given the realized weight ratios and the source
/// risk: `2 {((rho_0 - rho_1) / (rho_0 + rho_1))^2 + w_max^3 / w_min^2 R_P}`.
pub fn shift_risk_bound_realized(p: &ShiftBoundParams, risk_p: f64) -> Result<f64> {
    p.validate()?;
    let (r0, r1) = p.rho.ok_or(Error::MissingRho)?;
    if !(risk_p >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "risk_P",
            value: risk_p,
        });
    }
    let skew = (r0 - r1) / (r0 + r1);
    Ok(2.0 * (skew * skew + p.amplification() * risk_p))
}

/// A-priori high-probability bound on the target risk of the composite
/// recalibrator, with both sample-size gates.
pub fn shift_risk_bound_apriori(p: &ShiftBoundParams) -> Result<BoundReport> {
    p.validate()?;
    let b = p.bins as f64;
    let cal_like = binned_deviation_sq(p.n_p, p.bins, p.delta, 8.0)?;
    let sha = 8.0 * p.smoothness * p.smoothness / (b * b);
    let log16 = log(16.0 / p.delta);
    let prior_term = 54.0 * (1.0 / (p.p_min * p.n_p as f64)).max(1.0 / (p.q_min * p.n_q as f64)) * log16;
    let amp = 2.0 * p.amplification();
    let total = amp * (cal_like + sha) + prior_term;

    let source_threshold = p.constant.max(27.0 / p.p_min) * b * log(4.0 * b / p.delta);
    let target_threshold = 27.0 / p.q_min * log16;
    let source_ok = p.n_p as f64 >= source_threshold;
    let target_ok = p.n_q as f64 >= target_threshold;
    Ok(BoundReport {
        cal_bound: amp * cal_like + prior_term,
        sha_bound: amp * sha,
        risk_bound: total,
        conditions_met: source_ok && target_ok,
        condition_detail: format!(
            "n_P = {} {} {:.1}; n_Q = {} {} {:.1}",
            p.n_p,
            if source_ok { ">=" } else { "<" },
            source_threshold,
            p.n_q,
            if target_ok { ">=" } else { "<" },
            target_threshold
        ),
    })
}

/// Sample size making every class frequency accurate to a factor `beta` with
/// probability `1 - delta`: `ceil(27 / ((beta - 1)^2 min_prior) log(8 / delta))`.
pub fn chernoff_sample_requirement(min_prior: f64, beta: f64, delta: f64) -> Result<u64> {
    check_open_unit("min_prior", min_prior)?;
    check_delta(delta)?;
    if !(beta > 1.0 && beta <= 2.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
        });
    }
    let gap = beta - 1.0;
    Ok(ceil(27.0 / (gap * gap * min_prior) * log(8.0 / delta)) as u64)
}

/// Every bin mass within `[1 / (alpha B), alpha / B]`.
pub fn phi_balance(scheme: &BinningScheme, bin_probs: &[f64], alpha: f64) -> Result<bool> {
    let bins = scheme.num_bins();
    if bin_probs.len() != bins {
        return Err(Error::LengthMismatch {
            expected: bins,
            found: bin_probs.len(),
        });
    }
    if !(alpha >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
        });
    }
    let sum: f64 = bin_probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSimplex { sum });
    }
    let b = bins as f64;
    let (lo, hi) = (1.0 / (alpha * b), alpha / b);
    Ok(bin_probs.iter().all(|&p| p >= lo && p <= hi))
}

/// Every fitted bin value within `epsilon` of the true bin mean.
pub fn phi_approx(fitted: &PiecewiseRecalibrator, true_bin_means: &[f64], epsilon: f64) -> Result<bool> {
    if true_bin_means.len() != fitted.num_bins() {
        return Err(Error::LengthMismatch {
            expected: fitted.num_bins(),
            found: true_bin_means.len(),
        });
    }
    Ok(fitted
        .values()
        .iter()
        .zip(true_bin_means)
        .all(|(v, m)| (v - m).abs() <= epsilon))
}

/// Both realized ratios `rho_k` within `[1 / beta, beta]`.
pub fn phi_ratio(plug_in: &ShiftWeights, exact: &ShiftWeights, beta: f64) -> Result<bool> {
    for w in [plug_in, exact] {
        if w.num_classes() != 2 {
            return Err(Error::ArityMismatch {
                expected: 2,
                found: w.num_classes(),
            });
        }
    }
    if !(beta > 1.0 && beta <= 2.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
        });
    }
    let rho = plug_in.ratios_to(exact)?;
    Ok(rho.iter().all(|&r| r >= 1.0 / beta && r <= beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn params(n: usize, bins: usize, delta: f64) -> BoundParams {
        BoundParams::new(n, bins, delta).unwrap()
    }

    #[test]
    fn cal_bound_example() {
        // (sqrt(log 400 / 198) + 0.01)^2
        let want = {
            let s = (400f64.ln() / 198.0).sqrt() + 0.01;
            s * s
        };
        let got = cal_risk_bound(&params(1000, 10, 0.1)).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.033_838_7).abs() < 1e-6);
    }

    #[test]
    fn cal_bound_precondition() {
        for bins in [1, 3, 17] {
            let v = cal_risk_bound(&params(2 * bins, bins, 0.5)).unwrap();
            let s = ((4.0 * bins as f64 / 0.5).ln() / 2.0).sqrt() + 0.5;
            assert!((v - s * s).abs() < 1e-14);
        }
        assert_eq!(
            cal_risk_bound(&params(10, 10, 0.1)),
            Err(Error::InsufficientSample { per_bin: 1 })
        );
    }

    #[test]
    fn sha_bound_examples() {
        assert!((sha_risk_bound(&params(100, 10, 0.1)) - 0.2).abs() < 1e-15);
        let smooth = params(100, 10, 0.1).with_smoothness(1.0, true).unwrap();
        assert!((sha_risk_bound(&smooth) - 0.08).abs() < 1e-15);
        assert_eq!(sha_risk_bound(&params(100, 1, 0.1)), 2.0);
    }

    #[test]
    fn gate_examples() {
        let big = sample_size_ok_thm1(&params(1_000_000, 10, 0.1));
        assert!(big.ok);
        assert!((big.threshold - 2420.0 * 10.0 * 200f64.ln()).abs() < 1e-9);
        assert!((big.threshold - 128_219.0).abs() < 1.0);
        assert!(!sample_size_ok_thm1(&params(100, 10, 0.1)).ok);
        let loose = params(5, 5, 0.999_999).with_constant(1.0).unwrap();
        let gate = sample_size_ok_thm1(&loose);
        assert!((gate.threshold - 5.0 * (10.0f64 / 0.999_999).ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_params() {
        assert!(BoundParams::new(10, 0, 0.1).is_err());
        assert!(BoundParams::new(10, 2, 1.0).is_err());
        assert!(BoundParams::new(10, 2, 0.0).is_err());
        assert!(params(10, 2, 0.1).with_constant(0.0).is_err());
        assert!(params(10, 2, 0.1).with_smoothness(-1.0, true).is_err());
    }

    #[test]
    fn zero_smoothness_prefers_two_bins() {
        assert_eq!(optimal_bins(4, 0.5, 0.0).unwrap().bins, 2);
        assert_eq!(optimal_bins(1000, 0.1, 0.0).unwrap().bins, 2);
        assert!(optimal_bins(3, 0.5, 1.0).is_err());
    }

    #[test]
    fn realized_shift_bound() {
        let base = ShiftBoundParams {
            n_p: 1000,
            n_q: 100,
            bins: 10,
            delta: 0.1,
            smoothness: 1.0,
            constant: DEFAULT_CONSTANT,
            p_min: 0.5,
            q_min: 0.1,
            w_min: 0.2,
            w_max: 1.8,
            rho: Some((1.0, 1.0)),
        };
        let v = shift_risk_bound_realized(&base, 0.01).unwrap();
        assert!((v - 2.0 * 1.8f64.powi(3) / 0.04 * 0.01).abs() < 1e-12);

        let same = ShiftBoundParams {
            w_min: 1.0,
            w_max: 1.0,
            ..base
        };
        assert!((shift_risk_bound_realized(&same, 0.03).unwrap() - 0.06).abs() < 1e-15);

        let skewed = ShiftBoundParams {
            rho: Some((1.1, 0.9)),
            ..same
        };
        assert!((shift_risk_bound_realized(&skewed, 0.0).unwrap() - 0.02).abs() < 1e-15);

        let missing = ShiftBoundParams { rho: None, ..base };
        assert_eq!(shift_risk_bound_realized(&missing, 0.0), Err(Error::MissingRho));
    }

    #[test]
    fn chernoff_examples() {
        assert_eq!(chernoff_sample_requirement(0.1, 2.0, 0.1).unwrap(), 1184);
        assert_eq!(chernoff_sample_requirement(0.5, 2.0, 0.1).unwrap(), 237);
        let tight = chernoff_sample_requirement(0.1, 1.01, 0.1).unwrap() as f64;
        let loose = 270.0 * 80f64.ln();
        assert!((tight / loose - 1e4).abs() / 1e4 < 1e-6);
        assert!(chernoff_sample_requirement(0.1, 1.0, 0.1).is_err());
        assert!(chernoff_sample_requirement(0.1, 2.5, 0.1).is_err());
    }

    #[test]
    fn balance_examples() {
        let two = BinningScheme::from_edges(vec![0.0, 0.5, 1.0]).unwrap();
        assert!(phi_balance(&two, &[0.5, 0.5], 1.0).unwrap());
        assert!(!phi_balance(&two, &[0.9, 0.1], 2.0).unwrap());
        assert!(phi_balance(&two, &[0.75, 0.25], 2.0).unwrap());
        assert!(matches!(
            phi_balance(&two, &[1.0], 2.0),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn approx_examples() {
        let h = PiecewiseRecalibrator::from_parts(
            BinningScheme::from_edges(vec![0.0, 0.5, 1.0]).unwrap(),
            vec![0.2, 0.7],
            vec![3, 3],
        )
        .unwrap();
        assert!(phi_approx(&h, &[0.2, 0.7], 0.0).unwrap());
        assert!(!phi_approx(&h, &[0.25, 0.7], 0.04).unwrap());
        assert!(phi_approx(&h, &[0.25, 0.7], 0.05 + 1e-12).unwrap());
        assert!(phi_approx(&h, &[0.2], 0.1).is_err());
    }

    #[test]
    fn ratio_examples() {
        let exact = ShiftWeights::exact(vec![1.8, 0.2]).unwrap();
        assert!(phi_ratio(&exact, &exact, 1.5).unwrap());
        let off = ShiftWeights::exact(vec![1.8 * 2.5, 0.2]).unwrap();
        assert!(!phi_ratio(&off, &exact, 2.0).unwrap());
        let three = ShiftWeights::exact(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            phi_ratio(&three, &exact, 2.0),
            Err(Error::ArityMismatch { .. })
        ));
    }
}
