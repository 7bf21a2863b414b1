//! Error type shared across the library.

use thiserror::Error;

/// Everything that can go wrong in a torsion/linking computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A vector with norm below the floor was handed to an angle routine.
    #[error("vector norm below floor, no defined direction")]
    ZeroVector,

    /// Interval halving hit the depth limit without resolving the angle step.
    #[error("angle lift refinement exhausted at t = {time} (depth {depth})")]
    RefinementExhausted { time: f64, depth: u32 },

    /// Two consecutive discrete samples subtend an angle of pi or more.
    #[error("consecutive samples at index {index} subtend an angle >= pi; densify the input")]
    JumpTooLarge { index: usize },

    /// An orbit left the numerically trustworthy region.
    #[error("orbit coordinate exceeded 1e150 at t = {time}")]
    NumericOverflow { time: f64 },

    /// The differential collapsed a tangent vector below the norm floor.
    #[error("differential image degenerate at t = {time}")]
    DegenerateDifferential { time: f64 },

    /// Linking of a point with itself is undefined.
    #[error("linking requires two distinct points")]
    DiagonalInput,

    /// A point pair got too close to resolve a direction between them.
    #[error("separation {separation:e} below 1e-12 at t = {time}")]
    SeparationCollapse { time: f64, separation: f64 },

    /// Bisection stopped shrinking the bracket before reaching tolerance.
    #[error("bisection stalled with residual {residual:e}")]
    BisectionStall { residual: f64 },

    /// Two isotopies supposed to share a time-1 map do not.
    #[error("time-1 maps disagree by {deviation:e}")]
    VariantMismatch { deviation: f64 },

    /// A lift-periodicity requirement failed.
    #[error("lift periodicity violated by {deviation:e}")]
    PeriodicityViolation { deviation: f64 },

    /// The operation needs a positive twist family and the system is not one.
    #[error("not a positive twist family (min twist coefficient {min_coefficient:e})")]
    NotATwistFamily { min_coefficient: f64 },

    /// No builtin with the requested name.
    #[error("unknown system '{name}'")]
    UnknownSystem { name: String },

    /// A parameter failed validation.
    #[error("invalid parameter: {message}")]
    InvalidParameter { message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
