//! Construction of bijective tensor-product B-spline parametrizations from
//! boundary data.
//!
//! The pipeline deforms a simplified initial domain onto the target domain
//! with nonlinear (neo-Hookean) elasticity:
//!
//! 1. each boundary side is simplified by a constrained L2 projection onto a
//!    coarse basis ([`simplify`]),
//! 2. the simplified boundary is filled by a Coons patch ([`geometry`]),
//! 3. the initial domain is deformed so that its boundary matches the target
//!    boundary, using incremental Newton or diagonal incremental loading
//!    ([`deform`], [`elasticity`]).
//!
//! Multi-patch assemblies with C0 interfaces are handled by [`multipatch`];
//! file formats, exports and the end-to-end driver live in [`io`] and
//! [`pipeline`].

pub mod bspline;
pub mod deform;
pub mod elasticity;
pub mod geometry;
pub mod io;
pub mod multipatch;
pub mod pipeline;
pub mod sample_domains;
pub mod simplify;

pub use bspline::{KnotVector, QuadratureRule, TensorBasis};
pub use deform::{DeformConfig, DeformResult, SolverReport, Strategy};
pub use elasticity::MaterialParams;
pub use geometry::{BoundaryShell, JacobianSample, Patch, SideId};
pub use multipatch::{GlobalDofMap, PatchTopology};
pub use simplify::CoarseSpec;
