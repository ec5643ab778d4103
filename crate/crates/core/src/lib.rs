//! Construction of global attractors for scalar parabolic equations
//!
//!     u_t = a(x,u,u_x) u_xx + f(x,u,u_x),   x in [0,pi],  Neumann boundary,
//!
//! with a > 0. The pipeline finds all equilibria by shooting from the
//! Neumann line, checks hyperbolicity and computes Morse indices from the
//! clockwise winding of the tangent space of the shooting manifold, builds
//! the Sturm permutation, the matrix of zero numbers of equilibria
//! differences, and the directed graph of heteroclinic connections. A
//! method-of-lines simulator verifies the predicted structure directly on
//! the PDE.

pub mod cli;
pub mod expr;
pub mod ivp;
pub mod shoot;
pub mod sturm;
pub mod verify;

#[cfg(test)]
pub(crate) mod test_problems;

/// Right endpoint of the spatial interval.
pub const X_END: f64 = std::f64::consts::PI;
