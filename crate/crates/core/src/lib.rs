//! Simulation and asymptotic theory for variational functionals of
//! Lévy-driven moving averages `X_t = ∫ {g(t-s) - g0(-s)} dL_s`.

pub mod appell;
pub mod error;
pub mod functionals;
pub mod harness;
pub mod kernel;
pub mod limitlaws;
pub mod pathsim;
pub mod quad;
pub mod stable;

pub use error::{Error, Result};
