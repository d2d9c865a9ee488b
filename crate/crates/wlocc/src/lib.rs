//! LOCC conversion analysis for N-qubit W-class states.
//!
//! W-class states are fully described (up to local unitaries) by their
//! component vector `(x_1, ..., x_N)` with derived `x_0 = 1 - Σ x_k`. This
//! crate implements the single-party measurement calculus on that
//! representation, the constructive protocol converting one state into
//! another, closed-form upper and lower bounds on the conversion
//! probability, and the symmetric-state filter analysis — all paired with an
//! exact 2^n statevector oracle that independently verifies every analytic
//! claim at desk scale.
//!
//! - [`state`]: component vectors, ratio profiles, statevector conversion.
//! - [`measurement`]: (p, s, t) outcome triples, T1/T2 constructions with
//!   Kraus realizations, deterministic lowering, disentangling, and the
//!   zero-x0 filter.
//! - [`oracle`]: dense statevector engine and exhaustive protocol
//!   enumeration.
//! - [`protocol`]: plan synthesis, outcome trees, Monte Carlo sampling, and
//!   optimality audits.
//! - [`bounds`]: minimum-ratio upper bound, feasibility test, constructive
//!   lower bound, and the distillation bound.
//! - [`symmetric`]: closed forms and independent sweeps for one-shot
//!   symmetric conversions.

pub mod bounds;
pub mod error;
pub mod measurement;
pub mod oracle;
pub mod protocol;
pub mod state;
pub mod symmetric;
pub mod tol;

pub use error::{Error, Result};
pub use state::{ratio_profile, PairRecord, RatioProfile, StateRecord, Statevector, WClassComponents};
