//! Numerical tolerances shared across the crate.
//!
//! All arithmetic is double precision. Every validation and comparison pins
//! its tolerance to one of the constants below; no module invents its own
//! magic numbers.

/// Normalization and type-invariant checks: component sums, statevector
/// norms, Kraus completeness, measurement constraint identities.
pub const NORM_EPS: f64 = 1e-12;

/// Components at or below this count as exactly zero when deciding
/// degenerate-target structure. A W_N target built from `1/N` entries leaves
/// a ~1e-16 residue in the derived zeroth component, which must still route
/// through the zero-x0 branch.
pub const ZERO_CUT: f64 = 1e-12;

/// Tie tolerance for ratio comparisons. Ties count as satisfying the closed
/// bound conditions (the feasibility region is closed).
pub const RATIO_TIE: f64 = 1e-12;

/// Componentwise tolerance when classifying a leaf state as matching the
/// conversion target.
pub const LEAF_MATCH: f64 = 1e-9;

/// Aggregate validity tolerance for externally supplied measurements.
pub const MEAS_VALID: f64 = 1e-9;

/// Branches with squared norm at or below this are dropped from path sums.
pub const PROB_FLOOR: f64 = 1e-15;
