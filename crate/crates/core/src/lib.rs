//! Spectral representations, local-time asymptotics and penalization for recurrent
//! diffusions on `[0, inf)` reflected at 0.

pub mod bessel;
pub mod diffusion;
pub mod error;
pub mod expr;
pub mod montecarlo;
pub mod penalization;
pub mod quad;
pub mod special;
pub mod spectral;
pub mod subexp;

pub use diffusion::{bessel_spec, brownian, cumulative_speed, resolvent_at_zero, ClosedFormOracles, DiffusionSpec};
pub use error::{Error, Result};
pub use quad::{Estimate, Quadrature};
