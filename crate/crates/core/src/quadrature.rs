//! Globally adaptive Gauss–Kronrod (7/15) quadrature for vector integrands.

use alloc::vec::Vec;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Maximum number of subintervals before giving up.
pub const MAX_INTERVALS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<const N: usize> {
    pub value: [f64; N],
    /// Sum of the per-interval error estimates, maximised over components.
    pub error: f64,
}

struct Piece<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
}

fn gk15<const N: usize>(f: &mut impl FnMut(f64) -> [f64; N], a: f64, b: f64) -> Piece<N> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    for k in 0..N {
        kronrod[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        for k in 0..N {
            let s = f1[k] + f2[k];
            kronrod[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut error: f64 = 0.0;
    let mut value = [0.0; N];
    for k in 0..N {
        value[k] = kronrod[k] * half;
        let e = ((kronrod[k] - gauss[k]) * half).abs();
        // f64::max would silently drop a NaN estimate.
        error = if e.is_nan() || !value[k].is_finite() { f64::INFINITY } else { error.max(e) };
    }
    Piece { a, b, value, error }
}

/// Integrates `f` over `[a, b]` until the summed error estimate is at most
/// `tol`, bisecting the worst subinterval each round.
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64) -> [f64; N],
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Integral<N>> {
    if !(b > a) {
        return Ok(Integral {
            value: [0.0; N],
            error: 0.0,
        });
    }
    let mut pieces: Vec<Piece<N>> = alloc::vec![gk15(&mut f, a, b)];
    loop {
        let error: f64 = pieces.iter().map(|p| p.error).sum();
        if error <= tol {
            let mut value = [0.0; N];
            for p in &pieces {
                for k in 0..N {
                    value[k] += p.value[k];
                }
            }
            return Ok(Integral { value, error });
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureFailure {
                achieved: error,
                target: tol,
            });
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let piece = pieces.swap_remove(worst);
        let mid = 0.5 * (piece.a + piece.b);
        if !(mid > piece.a && mid < piece.b) {
            return Err(Error::QuadratureFailure {
                achieved: error,
                target: tol,
            });
        }
        pieces.push(gk15(&mut f, piece.a, mid));
        pieces.push(gk15(&mut f, mid, piece.b));
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    integrate(|x| [f(x)], a, b, tol).map(|r| (r.value[0], r.error))
}
