//! Canonical W-class state model.
//!
//! An `n`-qubit W-class state is stored as the component vector
//! `(x_1, ..., x_n)`; the zeroth component `x_0 = 1 - Σ x_k` is always
//! derived, never stored, so normalization cannot drift. For three or more
//! parties the component vector identifies the state up to local unitaries.
//! `n = 2` is accepted with the caveat that uniqueness fails there (the
//! maximally entangled pair is the lone exception), so two-party results are
//! formula-level only.
//!
//! Phases are canonicalized away: statevectors built here carry nonnegative
//! real amplitudes, and component extraction discards phases.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol::{NORM_EPS, ZERO_CUT};

/// Component vector of a W-class state. `x[k-1]` is party `k`'s weight;
/// parties are indexed 1-based throughout the public API.
#[derive(Debug, Clone, PartialEq)]
pub struct WClassComponents {
    x: Vec<f64>,
}

impl WClassComponents {
    /// Validates and wraps a component vector. Each entry must be a finite
    /// value in `[0, 1]` and the sum must not exceed `1 + 1e-12`.
    pub fn new(values: impl Into<Vec<f64>>) -> Result<Self> {
        let x = values.into();
        if x.is_empty() {
            return Err(Error::EmptyVector);
        }
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeComponent { index: i + 1, value: v });
            }
        }
        let sum: f64 = x.iter().sum();
        if sum > 1.0 + NORM_EPS {
            return Err(Error::SumExceedsOne { sum });
        }
        Ok(WClassComponents { x })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.x
    }

    /// Component of party `k` (1-based).
    pub fn get(&self, party: usize) -> f64 {
        self.x[party - 1]
    }

    /// Derived zeroth component `1 - Σ x_k`, clamped at zero against the
    /// permitted `[-1e-12, 0)` rounding residue.
    pub fn x0(&self) -> f64 {
        (1.0 - self.x.iter().sum::<f64>()).max(0.0)
    }

    /// Number of parties carrying weight above the zero cut.
    pub fn entangled_parties(&self) -> usize {
        self.x.iter().filter(|&&v| v > ZERO_CUT).count()
    }

    /// Componentwise agreement within `tol`, including the derived x0.
    pub fn approx_eq(&self, other: &WClassComponents, tol: f64) -> bool {
        self.n() == other.n()
            && self
                .x
                .iter()
                .zip(&other.x)
                .all(|(a, b)| (a - b).abs() <= tol)
            && (self.x0() - other.x0()).abs() <= tol
    }

    /// Expands to the full 2^n statevector: amplitude `sqrt(x0)` on the
    /// all-zeros string and `sqrt(x_k)` on the weight-one string of party k.
    pub fn to_statevector(&self) -> Statevector {
        let n = self.n();
        let mut amp = vec![Complex64::new(0.0, 0.0); 1 << n];
        amp[0] = Complex64::new(self.x0().sqrt(), 0.0);
        for k in 1..=n {
            amp[1 << (n - k)] = Complex64::new(self.get(k).sqrt(), 0.0);
        }
        Statevector { n, amp }
    }

    /// Recovers components from a statevector in W-class form. Every
    /// amplitude on a basis string of Hamming weight >= 2 must be below 1e-9
    /// in magnitude; phases are discarded and the result is renormalized.
    pub fn from_statevector(v: &Statevector) -> Result<Self> {
        let n = v.n;
        for (i, a) in v.amp.iter().enumerate() {
            if i.count_ones() >= 2 && a.norm() >= 1e-9 {
                return Err(Error::NotWClassForm { index: i, magnitude: a.norm() });
            }
        }
        let mut x = vec![0.0; n];
        let mut total = v.amp[0].norm_sqr();
        for k in 1..=n {
            let w = v.amp[1 << (n - k)].norm_sqr();
            x[k - 1] = w;
            total += w;
        }
        for w in &mut x {
            *w /= total;
        }
        WClassComponents::new(x)
    }
}

pub(crate) fn check_party(x: &WClassComponents, party: usize) -> Result<()> {
    if party == 0 || party > x.n() {
        Err(Error::PartyOutOfRange { party, n: x.n() })
    } else {
        Ok(())
    }
}

/// Ratio profile of a source/target pair: `r_k = x_k / y_k` with the sorting
/// permutation that relabels parties into ascending ratio order.
#[derive(Debug, Clone)]
pub struct RatioProfile {
    /// Ratios in party order; `+inf` marks parties with `y_k = 0`.
    pub r: Vec<f64>,
    /// `x0 / y0`. By convention `+inf` when `y0 = 0 < x0` and `0` when both
    /// vanish (the post-filter manifold imposes no zeroth-ratio constraint).
    pub r0: f64,
    /// Parties (1-based) sorted by ratio ascending, infinite entries last,
    /// ties broken by ascending party index.
    pub perm: Vec<usize>,
    /// Parties with `y_k = 0`.
    pub zero_targets: BTreeSet<usize>,
}

impl RatioProfile {
    /// Sorted (party, ratio) pairs over finite entries only.
    pub fn sorted_finite(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.perm
            .iter()
            .map(|&k| (k, self.r[k - 1]))
            .filter(|(_, r)| r.is_finite())
    }

    /// Smallest finite ratio with its party, if any target party is entangled.
    pub fn min_finite(&self) -> Option<(usize, f64)> {
        self.sorted_finite().next()
    }

    /// Second-smallest finite ratio.
    pub fn second_finite(&self) -> Option<f64> {
        self.sorted_finite().nth(1).map(|(_, r)| r)
    }
}

/// Componentwise ratios of `x` against `y`, with `y_k = 0` entries marked
/// infinite and recorded; any other ordering is recovered by relabeling
/// through `perm`.
pub fn ratio_profile(x: &WClassComponents, y: &WClassComponents) -> Result<RatioProfile> {
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch { left: x.n(), right: y.n() });
    }
    let n = x.n();
    let mut r = Vec::with_capacity(n);
    let mut zero_targets = BTreeSet::new();
    for k in 1..=n {
        if y.get(k) <= ZERO_CUT {
            zero_targets.insert(k);
            r.push(f64::INFINITY);
        } else {
            r.push(x.get(k) / y.get(k));
        }
    }
    let r0 = if y.x0() > ZERO_CUT {
        x.x0() / y.x0()
    } else if x.x0() > ZERO_CUT {
        f64::INFINITY
    } else {
        0.0
    };
    let mut perm: Vec<usize> = (1..=n).collect();
    perm.sort_by(|&a, &b| {
        let (ra, rb) = (r[a - 1], r[b - 1]);
        ra.partial_cmp(&rb).unwrap().then(a.cmp(&b))
    });
    Ok(RatioProfile { r, r0, perm, zero_targets })
}

/// Dense statevector on `n` qubits. Basis strings are indexed as binary
/// numbers with party 1 the most significant bit, so the weight-one string
/// of party `k` sits at index `2^(n-k)`.
#[derive(Debug, Clone)]
pub struct Statevector {
    n: usize,
    amp: Vec<Complex64>,
}

impl Statevector {
    /// Wraps raw amplitudes, requiring unit norm within 1e-12.
    pub fn new(n: usize, amp: Vec<Complex64>) -> Result<Self> {
        if amp.len() != 1 << n {
            return Err(Error::DimensionMismatch { left: amp.len(), right: 1 << n });
        }
        let norm: f64 = amp.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_EPS {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Statevector { n, amp })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amp
    }

    pub(crate) fn from_raw_unchecked(n: usize, amp: Vec<Complex64>) -> Self {
        Statevector { n, amp }
    }
}

/// JSON record for a single state: `{"x": [x1, ..., xN]}` with x0 implicit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    pub x: Vec<f64>,
}

impl StateRecord {
    pub fn to_components(&self) -> Result<WClassComponents> {
        WClassComponents::new(self.x.clone())
    }
}

impl From<&WClassComponents> for StateRecord {
    fn from(c: &WClassComponents) -> Self {
        StateRecord { x: c.components().to_vec() }
    }
}

/// JSON record for a source/target pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}
