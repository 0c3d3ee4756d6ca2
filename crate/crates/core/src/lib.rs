//! Long-horizon electricity demand forecasting for many smart meters.
//!
//! Demand is modelled as a function of calendar features only (time of day,
//! day of year, day type). Two estimators share the same kernels and data
//! layout:
//!
//! * [`krr`]: independent kernel ridge regression, one problem per meter.
//! * [`okl`]: low-rank output kernel learning, where every meter is a mix of
//!   `p` shared latent load profiles and the task similarity matrix
//!   `L = B Bᵀ` is learned jointly with the predictors.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below are what the command-line driver uses.

pub mod data;
pub mod error;
pub mod kernels;
pub mod krr;
pub mod metrics;
pub mod numlin;
pub mod observations;
pub mod okl;
pub mod scalar;

pub use error::{Error, Result};
pub use kernels::{CalendarPoint, GramMatrix, KernelAtom, KernelExpr, Preset};
pub use krr::{KrrModel, KrrTask};
pub use observations::ObservationMatrix;
pub use okl::{OklModel, OklOptions};
pub use scalar::Scalar;

pub type GramMatrix64 = GramMatrix<f64>;
pub type GramMatrix32 = GramMatrix<f32>;
pub type KrrModel64 = KrrModel<f64>;
pub type KrrModel32 = KrrModel<f32>;
pub type OklModel64 = OklModel<f64>;
pub type OklModel32 = OklModel<f32>;
pub type ObservationMatrix64 = ObservationMatrix<f64>;
pub type ObservationMatrix32 = ObservationMatrix<f32>;
pub type SymEig64 = numlin::SymEig<f64>;
