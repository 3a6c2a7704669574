//! The two-component Gaussian simulation family.
//!
//! `Y ~ Bernoulli(pi)`, `X | Y = 0 ~ N(-2, 1)`, `X | Y = 1 ~ N(2, 1)`, and the
//! classifier being recalibrated is `z = sigmoid(x)`. Everything here is
//! computed in `x`-space, where the densities are plain normals.

use alloc::vec::Vec;

use crate::binning::LabeledSample;
use crate::error::{Error, Result};
use crate::quadrature::integrate_scalar;
use crate::rng::SeededStream;
use crate::special::{logit, norm_cdf, norm_interval, norm_pdf, norm_sf, sigmoid};

/// Class-conditional means are `-MEAN` and `+MEAN`.
pub const MEAN: f64 = 2.0;

/// Integration range in `x`; the mixture puts less than 1e-22 mass outside.
pub const X_RANGE: (f64, f64) = (-12.0, 12.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMixtureTask {
    pi: f64,
    log_odds: f64,
}

impl GaussianMixtureTask {
    pub fn new(pi: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::InvalidParameter {
                name: "pi",
                value: pi,
            });
        }
        Ok(Self {
            pi,
            log_odds: logit(pi),
        })
    }

    /// Class-1 prior.
    pub fn prior(&self) -> f64 {
        self.pi
    }

    /// Density of `X`.
    pub fn density(&self, x: f64) -> f64 {
        self.pi * norm_pdf(x - MEAN) + (1.0 - self.pi) * norm_pdf(x + MEAN)
    }

    /// `P[Y = 1 | X = x] = sigmoid(4x + logit(pi))`.
    pub fn posterior(&self, x: f64) -> f64 {
        sigmoid(2.0 * MEAN * x + self.log_odds)
    }

    /// Optimal recalibration function `h*(z) = E[Y | sigmoid(X) = z]`.
    pub fn hstar(&self, z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else if z >= 1.0 {
            1.0
        } else {
            self.posterior(logit(z))
        }
    }

    /// `F_X(x)`.
    pub fn cdf_x(&self, x: f64) -> f64 {
        self.pi * norm_cdf(x - MEAN) + (1.0 - self.pi) * norm_cdf(x + MEAN)
    }

    /// `1 - F_X(x)`.
    pub fn sf_x(&self, x: f64) -> f64 {
        self.pi * norm_sf(x - MEAN) + (1.0 - self.pi) * norm_sf(x + MEAN)
    }

    /// `F_Z(z)`, the CDF of the score.
    pub fn score_cdf(&self, z: f64) -> f64 {
        self.cdf_x(logit(z))
    }

    /// Mass of `X` in `[a, b]`.
    pub fn mass_x(&self, a: f64, b: f64) -> f64 {
        self.pi * norm_interval(a - MEAN, b - MEAN) + (1.0 - self.pi) * norm_interval(a + MEAN, b + MEAN)
    }

    /// `E[Y 1{a <= X <= b}]`.
    pub fn positive_mass_x(&self, a: f64, b: f64) -> f64 {
        self.pi * norm_interval(a - MEAN, b - MEAN)
    }

    /// `P[z_lo <= Z <= z_hi]`; the endpoints of the unit interval map to
    /// infinite `x`.
    pub fn interval_mass(&self, z_lo: f64, z_hi: f64) -> f64 {
        self.mass_x(logit(z_lo), logit(z_hi))
    }

    /// `E[Y | z_lo <= Z <= z_hi]`.
    pub fn interval_mean(&self, z_lo: f64, z_hi: f64) -> Result<f64> {
        let (a, b) = (logit(z_lo), logit(z_hi));
        let mass = self.mass_x(a, b);
        if !(mass > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok((self.positive_mass_x(a, b) / mass).clamp(0.0, 1.0))
    }

    /// `E[Z]` by quadrature.
    pub fn mean_score(&self) -> Result<f64> {
        let (lo, hi) = X_RANGE;
        integrate_scalar(|x| sigmoid(x) * self.density(x), lo, hi, 1e-13).map(|r| r.0)
    }

    /// Bayes term `E[h*(Z)(1 - h*(Z))]`, the irreducible part of the MSE.
    pub fn bayes_term(&self, tol: f64) -> Result<f64> {
        let (lo, hi) = X_RANGE;
        integrate_scalar(
            |x| {
                let p = self.posterior(x);
                p * (1.0 - p) * self.density(x)
            },
            lo,
            hi,
            tol,
        )
        .map(|r| r.0)
    }

    /// Draws `(y, x)` pairs.
    pub fn draw(&self, stream: &mut SeededStream) -> (bool, f64) {
        let y = stream.bernoulli(self.pi);
        let centre = if y { MEAN } else { -MEAN };
        (y, centre + stream.standard_normal())
    }

    /// `n` i.i.d. records `(sigmoid(x), y)`, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> LabeledSample {
        let mut stream = SeededStream::new(seed, 0);
        self.sample_from(n, &mut stream)
    }

    pub fn sample_from(&self, n: usize, stream: &mut SeededStream) -> LabeledSample {
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let (y, x) = self.draw(stream);
            scores.push(sigmoid(x));
            labels.push(y);
        }
        LabeledSample::new(scores, labels).expect("sigmoid scores lie in [0, 1]")
    }

    /// The `x` with `F_X(x) = lower` (equivalently `1 - F_X(x) = upper`,
    /// where `lower + upper = 1`). The smaller of the two tails drives the
    /// iteration so extreme levels keep their relative precision.
    pub fn quantile_x(&self, lower: f64, upper: f64) -> f64 {
        if lower <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if upper <= 0.0 {
            return f64::INFINITY;
        }
        let use_lower = lower <= upper;
        let residual = |x: f64| {
            if use_lower {
                self.cdf_x(x) - lower
            } else {
                upper - self.sf_x(x)
            }
        };
        let (mut lo, mut hi) = (-60.0_f64, 60.0_f64);
        let mut x = 0.0;
        for _ in 0..200 {
            let r = residual(x);
            if r == 0.0 {
                return x;
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.density(x);
            let mut next = x - r / d;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
                return next;
            }
            x = next;
        }
        x
    }

    /// Largest ratio `(h*(z_{j+1}) - h*(z_j)) / (F_Z(z_{j+1}) - F_Z(z_j))`
    /// over adjacent points of an increasing grid of scores.
    pub fn smoothness_on_grid(&self, grid: &[f64]) -> f64 {
        let xs: Vec<f64> = grid.iter().map(|&z| logit(z)).collect();
        xs.windows(2)
            .filter_map(|w| {
                let mass = self.mass_x(w[0], w[1]);
                (mass > 0.0).then(|| (self.posterior_ext(w[1]) - self.posterior_ext(w[0])) / mass)
            })
            .fold(0.0, f64::max)
    }

    fn posterior_ext(&self, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            0.0
        } else if x == f64::INFINITY {
            1.0
        } else {
            self.posterior(x)
        }
    }

    /// Numerical smoothness constant `K` on a grid of `grid_size` intervals
    /// that are equally spaced in `F_Z`.
    ///
    /// Grid points at `j / N` are shared by every refinement `2N`, `4N`, ...,
    /// and a ratio over a merged interval is a mediant of the ratios over its
    /// halves, so the estimate never decreases under doubling.
    pub fn estimate_k(&self, grid_size: usize) -> Result<KEstimate> {
        if grid_size < 1000 {
            return Err(Error::InvalidParameter {
                name: "grid_size",
                value: grid_size as f64,
            });
        }
        Ok(KEstimate {
            k: self.smoothness_on_grid(&self.quantile_grid(grid_size)),
            grid_size,
        })
    }

    /// Doubles the grid from `start` until the estimate changes by less than
    /// `rel_tol`, or `max_doublings` is reached.
    pub fn estimate_k_refined(&self, start: usize, rel_tol: f64, max_doublings: usize) -> Result<KEstimate> {
        let mut current = self.estimate_k(start)?;
        for _ in 0..max_doublings {
            let next = self.estimate_k(current.grid_size * 2)?;
            let change = (next.k - current.k).abs() / current.k.max(f64::MIN_POSITIVE);
            current = next;
            if change < rel_tol {
                break;
            }
        }
        Ok(current)
    }

    /// Scores `z_j` with `F_Z(z_j) = j / N`, `j = 0..=N`.
    pub fn quantile_grid(&self, intervals: usize) -> Vec<f64> {
        (0..=intervals)
            .map(|j| {
                let lower = j as f64 / intervals as f64;
                let upper = (intervals - j) as f64 / intervals as f64;
                sigmoid_ext(self.quantile_x(lower, upper))
            })
            .collect()
    }
}

fn sigmoid_ext(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        sigmoid(x)
    }
}

/// A smoothness constant together with the grid that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KEstimate {
    pub k: f64,
    pub grid_size: usize,
}
