//! Stabilized primal-dual finite element method for the unique continuation
//! problem of the Poisson equation when the Neumann trace of the solution is
//! known to lie in a finite-dimensional space `V_N + β`.
//!
//! Given a source `f` on `Ω` and a measurement `q` of the solution on a
//! subdomain `ω ⊂ Ω`, the method seeks `(u_h, z_h) ∈ V_h × V_h` solving a
//! symmetric saddle-point system whose stabilizers (gradient jumps, an
//! elementwise residual, a Neumann penalty and a dual `H¹` term) make it
//! uniquely solvable on any mesh. A three-field variant adds a multiplier for
//! the full normal flux so that the boundary flux converges in `H^{-1/2}`.
//!
//! The crate is `no_std` (with `alloc`). Everything that touches files, the
//! command line or threads lives in the companion `ucfem-cli` crate.
//!
//! Module map:
//!
//! - [`mesh`]: uniform triangulations of rectangles, face topology, `ω` marking.
//! - [`quadrature`], [`fe_space`]: P1/P2 Lagrange spaces and quadrature rules.
//! - [`linalg`]: sparse assembly, the pivoted direct solver, dense oracles.
//! - [`trace_space`]: the Neumann space `V_N` and the projections `P`, `Q`.
//! - [`problem`]: source/measurement data and manufactured solutions.
//! - [`forms`]: every bilinear form and load of the discrete system.
//! - [`solver`]: the two- and three-field saddle systems and the triple norm.
//! - [`analysis`]: error norms, the a posteriori estimator, convergence studies.
//! - [`necessity`]: the discrete "ghost" witnessing non-uniqueness of naive fitting.
#![no_std]
// Quadrature tables keep their published digits, `!(x > t)` rejects NaN on
// purpose, and local assembly loops index by position.
#![allow(
    clippy::excessive_precision,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop
)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod fe_space;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod necessity;
pub mod problem;
pub mod quadrature;
pub mod solver;
pub mod trace_space;

use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Broken mesh or element geometry (degenerate Jacobian, non-conforming input).
    #[error("structural error: {0}")]
    Structural(String),
    #[error("subdomain marking is empty: {0}")]
    EmptyMarking(String),
    /// A pivot vanished (to tolerance) during factorization.
    #[error("matrix is singular to working precision (pivot {pivot})")]
    Singular { pivot: usize },
    /// The post-solve residual check failed.
    #[error("solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    /// A claimed property of a constructed object did not hold.
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("factorization backend failed: {0}")]
    Backend(String),
    /// A convergence study failed at one of its levels.
    #[error("level {level} (n = {n}): {inner}")]
    Level {
        level: usize,
        n: usize,
        inner: Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

/// A point in the plane.
pub type Point = [f64; 2];

/// `x^n` by repeated multiplication; `f64::powi` needs std.
pub(crate) fn powi(x: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, _| acc * x)
}
