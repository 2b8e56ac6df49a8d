//! Diagram expansion of correlations for the damped/driven cubic NLS
//! equation in the interaction representation: block diagrams, Wick
//! pairings, alternating Hamilton cycles, phase matrices, densities, time
//! kernels, oscillatory-integral evaluators and a stochastic oracle.

pub mod cycle;
pub mod density;
pub mod diagram;
pub mod error;
pub mod evaluate;
pub mod export;
pub mod gauss_time;
pub mod mc;
pub mod model;
pub mod oracle;
pub mod phase;
pub mod quad;
pub mod reference;
pub mod spectral;
pub mod sweep;
pub mod wick;

pub use error::{Error, Result};
