//! Numerical laboratory for the fractional heat equation
//!
//! ```text
//! w_t + (-Δ)^s w = h    in Ω × (0, T)
//! w = 0                 in (ℝ^N \ Ω) × (0, T)
//! w(·, 0) = w₀          in Ω
//! ```
//!
//! on boxes in one and two dimensions. The crate assembles a dense
//! quadrature discretization of the fractional Laplacian with the exterior
//! Dirichlet condition built in, realizes the heat semigroup through a full
//! symmetric eigendecomposition, and uses it to measure pointwise kernel
//! envelopes, smoothing and regularity exponents, hyper-singular integral
//! scalings, and Picard iterations for the fractional KPZ problem
//!
//! ```text
//! u_t + (-Δ)^s u = |(-Δ)^{s/2} u|^q + f.
//! ```
//!
//! Order convention: every operator constructor takes the *kernel order* ρ,
//! meaning the operator `(-Δ)^{ρ/2}` with kernel `|x - y|^{-(N+ρ)}`. The
//! fractional Laplacian `(-Δ)^s` is therefore order `2s`, and the half
//! Laplacian `(-Δ)^{s/2}` is order `s`.

pub mod bounds;
pub mod error;
pub mod fit;
pub mod fracop;
pub mod grid;
pub mod hypersing;
pub mod kernel;
pub mod kpz;
pub mod norms;
pub mod quad;
pub mod regfit;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
pub use fracop::{FractionalOperator, OperatorMatrix, QuadratureScheme};
pub use grid::{ExponentSet, Grid, GridField, Region, SpatialDomain};
pub use kernel::SpectralDecomposition;
pub use solver::{Ladder, SourceSpec, Trajectory};
