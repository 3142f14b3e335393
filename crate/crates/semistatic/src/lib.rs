//! Pricing and semi-static hedging of Bermudan swaptions under Gaussian
//! affine short-rate models.
//!
//! The replication portfolio for each monitor date is a shallow ReLU
//! network fitted by regress-later Monte Carlo; its hidden nodes are
//! discount-bond options with closed-form prices, which yields a direct
//! price estimator, simulation-free lower/upper bounds and a semi-static
//! hedge.
//!
//! Formula-level code is generic over the scalar (see [`real::Real`]);
//! the simulation and experiment layers run in `f64`. The aliases below
//! fix the concrete types used throughout the drivers.

pub mod real;
pub mod stats;
pub mod termstructure;
pub mod instruments;
pub mod simulation;
pub mod regression;
pub mod portfolio;

pub use instruments::{BermudanSpec, EuropeanSwaptionSpec, SwapSide};
pub use regression::{HedgeNetwork, NetworkDesign, TrainOptions};
pub use simulation::{Measure, PathSet};
pub use termstructure::GaussianModel;

/// Concrete model scalar used by the simulation and experiment layers.
pub type Scalar = f64;
/// Gaussian model at the working precision.
pub type Model = GaussianModel<Scalar>;
/// Swaption contract at the working precision.
pub type Contract = BermudanSpec<Scalar>;
/// Hedge network at the working precision.
pub type Network = HedgeNetwork<Scalar>;
