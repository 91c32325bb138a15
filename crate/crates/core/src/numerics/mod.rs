//! Small numerical kernels: adaptive quadrature, monotone bisection,
//! Nelder-Mead polishing and central differences.

mod diff;
mod quadrature;
mod roots;
mod simplex;

pub use diff::{central_difference, relative_step};
pub use quadrature::{adaptive_simpson, integrate_panels};
pub use roots::{lower_crossing, upper_crossing};
pub use simplex::{Minimum, NelderMead};
