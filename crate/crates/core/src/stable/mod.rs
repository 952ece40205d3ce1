//! Stable laws: sampling, characteristic function, density, distribution
//! function and the scale of stable integrals.

mod density;
mod law;
mod rng;

pub(crate) use density::oscillatory;
pub use density::{cdf, density, density_derivative, integral_scale, tau_gamma, Domain, DEFAULT_TOL};
pub use law::{char_fn, empirical_char_fn, sample, StableLaw, UNIT_INDEX_EPS};
pub use rng::{RngStream, StreamRng};
