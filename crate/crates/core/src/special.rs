//! Logistic link and standard normal distribution functions.

use libm::{erfc, exp, fma, log, log1p, sqrt};

/// Beyond this magnitude the logistic function is saturated.
pub const SATURATION: f64 = 36.0;

// 1/sqrt(2) as an unevaluated double-double.
const FRAC_1_SQRT_2_HI: f64 = core::f64::consts::FRAC_1_SQRT_2;
const FRAC_1_SQRT_2_LO: f64 = -4.833_646_656_726_456_5e-17;
const FRAC_2_SQRT_PI: f64 = core::f64::consts::FRAC_2_SQRT_PI;

/// `1 / (1 + e^{-x})`.
///
/// Returns exactly `1.0` for `x > 36`; below `-36` the value is `e^x`, which
/// equals the logistic function to within one rounding.
pub fn sigmoid(x: f64) -> f64 {
    if x > SATURATION {
        1.0
    } else if x < -SATURATION {
        exp(x)
    } else if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `log(p / (1 - p))`, with `logit(0) = -inf` and `logit(1) = +inf`.
pub fn logit(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        log(p) - log1p(-p)
    }
}

/// `erfc(x / sqrt(2))` with the scaling rounding error corrected to first
/// order, so tail probabilities keep full relative precision.
fn erfc_scaled(x: f64) -> f64 {
    let hi = x * FRAC_1_SQRT_2_HI;
    let lo = fma(x, FRAC_1_SQRT_2_HI, -hi) + x * FRAC_1_SQRT_2_LO;
    let base = erfc(hi);
    base - lo * FRAC_2_SQRT_PI * exp(-hi * hi)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * exp(-0.5 * x * x)
}

/// Standard normal CDF `Phi(x)`.
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc_scaled(-x)
}

/// Standard normal survival function `1 - Phi(x)`.
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// `Phi(b) - Phi(a)` for `a <= b`, evaluated on whichever tail keeps the
/// difference free of cancellation.
pub fn norm_interval(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a > 0.0 {
        norm_sf(a) - norm_sf(b)
    } else {
        norm_cdf(b) - norm_cdf(a)
    }
}

// AS 241 rational approximations, coefficients from the highest degree down.
const CENTRAL_NUM: [f64; 8] = [
    2509.080_928_730_122_7,
    33430.575_583_588_128,
    67265.770_927_008_7,
    45921.953_931_549_87,
    13731.693_765_509_461,
    1971.590_950_306_551_4,
    133.141_667_891_784_38,
    3.387_132_872_796_366_5,
];
const CENTRAL_DEN: [f64; 8] = [
    5226.495_278_852_546,
    28729.085_735_721_943,
    39307.895_800_092_71,
    21213.794_301_586_596,
    5394.196_021_424_751,
    687.187_007_492_057_9,
    42.313_330_701_600_91,
    1.0,
];
const NEAR_NUM: [f64; 8] = [
    7.745_450_142_783_414e-4,
    0.022_723_844_989_269_184,
    0.241_780_725_177_450_6,
    1.270_458_252_452_368_4,
    3.647_848_324_763_204_5,
    5.769_497_221_460_691,
    4.630_337_846_156_545,
    1.423_437_110_749_683_5,
];
const NEAR_DEN: [f64; 8] = [
    1.050_750_071_644_416_8e-9,
    5.475_938_084_995_345e-4,
    0.015_198_666_563_616_457,
    0.148_103_976_427_480_08,
    0.689_767_334_985_1,
    1.676_384_830_183_803_8,
    2.053_191_626_637_759,
    1.0,
];
const FAR_NUM: [f64; 8] = [
    2.010_334_399_292_288_1e-7,
    2.711_555_568_743_487_6e-5,
    0.001_242_660_947_388_078_4,
    0.026_532_189_526_576_124,
    0.296_560_571_828_504_9,
    1.784_826_539_917_291_3,
    5.463_784_911_164_114,
    6.657_904_643_501_103,
];
const FAR_DEN: [f64; 8] = [
    2.044_263_103_389_939_7e-15,
    1.421_511_758_316_446e-7,
    1.846_318_317_510_054_8e-5,
    7.868_691_311_456_133e-4,
    0.014_875_361_290_850_615,
    0.136_929_880_922_735_8,
    0.599_832_206_555_888,
    1.0,
];

fn horner(r: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * r + c)
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16).
///
/// Relative accuracy is about 1e-16 over the open unit interval. `p = 0` and
/// `p = 1` map to the infinities.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(r, &CENTRAL_NUM) / horner(r, &CENTRAL_DEN);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = sqrt(-log(tail));
    let val = if r <= 5.0 {
        let r = r - 1.6;
        horner(r, &NEAR_NUM) / horner(r, &NEAR_DEN)
    } else {
        let r = r - 5.0;
        horner(r, &FAR_NUM) / horner(r, &FAR_DEN)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}
