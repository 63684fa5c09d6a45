#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::too_many_arguments,
    clippy::type_complexity,
    clippy::needless_range_loop
)]
//! Simulation and Monte Carlo verification toolkit for SDEs driven by
//! time-changed fractional Brownian motion with Hurst index `H < 1/2`.
//!
//! The crate is organised bottom-up:
//!
//! * [`specfun`]: Gamma, Beta, incomplete Beta and Gauss `2F1`, plus the
//!   constants `Θ_H` and `B(3/2-H, 1/2-H)/Γ(1/2-H)`.
//! * [`frac_kernel`]: the Volterra kernel of fBM, the kernel operator, its
//!   inverse and the left Riemann–Liouville integral.
//! * [`fbm`]: exact (Cholesky) and Volterra-representation samplers.
//! * [`timechange`]: subordinators, inverse subordinators and the
//!   `ε`-regularised clock `ℓ_ε` with its inverse.
//! * [`sde`]: drifts with regularity certificates, the pathwise solver and
//!   Monte Carlo estimators of `P_T f` and its gradient.
//! * [`coupling`]: the coupling by change of drift and its Girsanov weight.
//! * [`harnack`]: the Harnack-type bounds and their Monte Carlo verification.

pub mod coupling;
pub mod error;
pub mod fbm;
pub mod frac_kernel;
pub mod grid;
pub mod harnack;
pub mod linalg;
pub mod rng;
pub mod sde;
pub mod specfun;
pub mod stats;
pub mod timechange;

pub use error::{Error, Result};
pub use grid::{SampledFunction, TimeGrid};
pub use specfun::HurstExponent;
