//! Finite-time torsion and linking numbers for isotopies of surface diffeomorphisms.
//!
//! The library follows one tangent vector (torsion) or one difference vector
//! (linking) through an isotopy, maintains a continuous determination of its
//! angle against a reference direction, and averages the total winding by the
//! time horizon. On top of the two kernels sit segment scans that locate
//! points whose torsion matches a prescribed linking number, twist-family
//! bound sweeps, an alternative per-step angle accounting with interval
//! normalizations, and empirical measures with averaged torsion.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod linking;
pub mod measures;
pub mod systems;
pub mod theorems;
pub mod torsion;

pub use error::{Error, Result};
pub use geometry::{Mat2, RefinementPolicy, Vec2};
pub use linking::{linking_asymptotic, linking_finite, LinkingResult};
pub use systems::{register_builtins, IsotopySystem, Surface, SystemSpec};
pub use torsion::{torsion_asymptotic, torsion_finite, w_grid, TorsionResult, WGrid};
