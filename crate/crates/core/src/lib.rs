//! Post-hoc probability recalibration with uniform-mass binning.
//!
//! The crate is `no_std` (it needs `alloc`) and covers four areas:
//!
//! * [`binning`] and [`recalibrator`]: uniform-mass binning, the
//!   piecewise-constant recalibrator fitted on it, plug-in label-shift
//!   weights and the composite shift-corrected recalibrator.
//! * [`bounds`]: closed-form finite-sample risk bounds, sample-size gates,
//!   the optimal bin count scan and the diagnostic predicates used by the
//!   proofs of those bounds.
//! * [`task`] and [`risk`]: a two-component Gaussian simulation family with
//!   an analytic posterior, and quadrature evaluation of population
//!   calibration, sharpness and recalibration risks.
//! * [`rng`] and [`special`]: portable seeded sampling and the normal
//!   distribution functions everything else is built on.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod binning;
pub mod bounds;
mod error;
pub mod quadrature;
pub mod recalibrator;
pub mod risk;
pub mod rng;
pub mod special;
pub mod task;

pub use binning::{bin_index, umb_fit, BinningScheme, LabeledSample};
pub use error::{Domain, Error, Result};
pub use recalibrator::{
    compose, estimate_weights, fit_on_scheme, fit_recalibrator, shift_correct_multiclass, PiecewiseRecalibrator,
    Recalibrator, ShiftCorrector, ShiftWeights, WeightProvenance,
};
pub use risk::{empirical_risk_plugin, population_risk, population_risk_increasing, RiskMethod, RiskReport};
pub use task::GaussianMixtureTask;
