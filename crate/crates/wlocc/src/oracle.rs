//! Exact statevector engine.
//!
//! Dense 2^n amplitude arrays with local 2x2 operators applied on one
//! tensor factor. This is the brute-force ground truth for the component
//! calculus: outcome probabilities come from squared norms, post-states from
//! explicit amplitude arithmetic, and protocol success probabilities from an
//! exhaustive expansion of every outcome path. Subnormalized operators are
//! accepted and branch vectors stay unnormalized, so path probabilities
//! compose multiplicatively.
//!
//! Party count is capped at 20 by default; desk-scale verification needs at
//! most 8.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measurement::{
    mat2_real, mat2_zero, zero_x0_lambda, Mat2,
};
use crate::protocol::{ProtocolPlan, ProtocolStep, StepKind};
use crate::state::{Statevector, WClassComponents};
use crate::tol::{LEAF_MATCH, PROB_FLOOR, ZERO_CUT};

pub const DEFAULT_MAX_PARTIES: usize = 20;

/// A 2x2 operator acting on one party's qubit. No normalization is required;
/// subnormalized Kraus elements and filters are the common case.
#[derive(Debug, Clone)]
pub struct LocalAction {
    pub party: usize,
    pub op: Mat2,
}

/// Unnormalized result of a local operator application.
#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub amp: Vec<Complex64>,
    /// Squared norm of the transformed amplitudes.
    pub prob: f64,
}

impl LocalOutcome {
    /// Normalized post-state, available when the outcome probability is not
    /// numerically zero.
    pub fn normalized(&self) -> Option<Statevector> {
        if self.prob <= PROB_FLOOR {
            return None;
        }
        let scale = 1.0 / self.prob.sqrt();
        let amp = self.amp.iter().map(|a| a * scale).collect();
        Some(Statevector::from_raw_unchecked(n_of(self.amp.len()), amp))
    }
}

fn n_of(len: usize) -> usize {
    len.trailing_zeros() as usize
}

pub(crate) fn norm_sqr(amp: &[Complex64]) -> f64 {
    amp.iter().map(|a| a.norm_sqr()).sum()
}

/// Applies `op` on `party`'s tensor factor of a raw amplitude array.
pub(crate) fn apply_op_raw(amp: &[Complex64], n: usize, party: usize, op: &Mat2) -> Vec<Complex64> {
    let stride = 1usize << (n - party);
    let mut out = vec![Complex64::new(0.0, 0.0); amp.len()];
    let mut base = 0;
    while base < amp.len() {
        for off in 0..stride {
            let i0 = base + off;
            let i1 = i0 + stride;
            let (a0, a1) = (amp[i0], amp[i1]);
            out[i0] = op[0][0] * a0 + op[0][1] * a1;
            out[i1] = op[1][0] * a0 + op[1][1] * a1;
        }
        base += 2 * stride;
    }
    out
}

fn check_cap(n: usize) -> Result<()> {
    if n > DEFAULT_MAX_PARTIES {
        return Err(Error::PreconditionViolated(format!(
            "oracle is capped at {DEFAULT_MAX_PARTIES} parties, got {n}"
        )));
    }
    Ok(())
}

/// Transforms `v` by a local operator and reports the outcome probability.
pub fn apply_local(v: &Statevector, action: &LocalAction) -> Result<LocalOutcome> {
    check_cap(v.n())?;
    if action.party == 0 || action.party > v.n() {
        return Err(Error::PartyOutOfRange { party: action.party, n: v.n() });
    }
    let amp = apply_op_raw(v.amplitudes(), v.n(), action.party, &action.op);
    let prob = norm_sqr(&amp);
    Ok(LocalOutcome { amp, prob })
}

/// Extracts renormalized components from an unnormalized branch vector.
fn branch_components(n: usize, amp: &[Complex64]) -> Result<WClassComponents> {
    let prob = norm_sqr(amp);
    let scale = 1.0 / prob.sqrt();
    let normalized: Vec<Complex64> = amp.iter().map(|a| a * scale).collect();
    WClassComponents::from_statevector(&Statevector::from_raw_unchecked(n, normalized))
}

fn leaf_matches(n: usize, amp: &[Complex64], target: &WClassComponents) -> bool {
    match branch_components(n, amp) {
        Ok(c) => c.approx_eq(target, LEAF_MATCH),
        Err(_) => false,
    }
}

/// Unit phase of the branch's zeroth amplitude relative to the measured
/// party's weight-one amplitude.
///
/// Branch vectors are only canonical (nonnegative real) at the root; each
/// disentangle outcome rotates the zeroth amplitude by a local-unitary
/// frame. Operators that interfere the two amplitudes (the zero-x0 filter
/// and disentangles) must carry that frame in their off-diagonal entry;
/// their Gram matrices, and hence all probabilities, are unchanged by it.
/// Diagonal operators (T1, T2) are frame-insensitive.
fn relative_frame(amp: &[Complex64], n: usize, party: usize) -> Complex64 {
    let a0 = amp[0];
    let ak = amp[1 << (n - party)];
    if a0.norm() <= PROB_FLOOR || ak.norm() <= PROB_FLOOR {
        return Complex64::new(1.0, 0.0);
    }
    (a0 / a0.norm()) * (ak / ak.norm()).conj()
}

/// Kraus pair for one protocol step, derived from the oracle's own view of
/// the current branch. The second element of each pair says whether that
/// outcome continues the plan.
fn step_kraus(
    n: usize,
    amp: &[Complex64],
    step: &ProtocolStep,
    round: usize,
) -> Result<Vec<(Mat2, bool)>> {
    match step.kind {
        StepKind::T1 { sigma } => {
            let a = sigma.sqrt();
            Ok(vec![
                (mat2_real(a, 0.0, 0.0, 1.0), true),
                (mat2_real((1.0 - sigma).sqrt(), 0.0, 0.0, 0.0), false),
            ])
        }
        StepKind::T2 { p } => {
            let comps = branch_components(n, amp)?;
            let xk = comps.get(step.party);
            let c2 = 1.0 - (1.0 - p) / xk;
            if c2 < -1e-9 {
                return Err(Error::StepPreconditionViolated {
                    round,
                    reason: format!("t2 probability {p} below 1 - x_k = {}", 1.0 - xk),
                });
            }
            let c = c2.max(0.0).sqrt();
            Ok(vec![
                (mat2_real(1.0, 0.0, 0.0, c), true),
                (mat2_real(0.0, 0.0, 0.0, (1.0 - c * c).sqrt()), false),
            ])
        }
        StepKind::Disentangle => {
            let inv = std::f64::consts::FRAC_1_SQRT_2;
            let w = Complex64::new(0.0, inv) * relative_frame(amp, n, step.party);
            let mut plus = mat2_zero();
            plus[0][0] = Complex64::new(inv, 0.0);
            plus[0][1] = w;
            let mut minus = mat2_zero();
            minus[0][0] = Complex64::new(inv, 0.0);
            minus[0][1] = -w;
            Ok(vec![(plus, true), (minus, true)])
        }
        StepKind::X0Filter { .. } => {
            let comps = branch_components(n, amp)?;
            let x0 = comps.x0();
            let xi = comps.get(step.party);
            if x0 <= ZERO_CUT {
                return Ok(vec![(crate::measurement::mat2_identity(), true)]);
            }
            if xi <= ZERO_CUT {
                return Err(Error::StepPreconditionViolated {
                    round,
                    reason: "filter party carries no weight".into(),
                });
            }
            let lambda = zero_x0_lambda(x0, xi);
            let z = (x0 / xi).sqrt() * relative_frame(amp, n, step.party);
            let sl = lambda.sqrt();
            let rest = (1.0 - lambda).sqrt();
            let mut m = mat2_real(sl, 0.0, 0.0, sl);
            m[0][1] = -sl * z;
            let mut fail = mat2_real(rest, 0.0, 0.0, 0.0);
            fail[0][1] = lambda * z / rest;
            Ok(vec![(m, true), (fail, false)])
        }
        StepKind::DetLower { .. } => Err(Error::UnrealizableStep { round }),
    }
}

fn enumerate(
    n: usize,
    amp: Vec<Complex64>,
    steps: &[ProtocolStep],
    target: &WClassComponents,
    round: usize,
) -> Result<f64> {
    let prob = norm_sqr(&amp);
    if prob <= PROB_FLOOR {
        return Ok(0.0);
    }
    let Some(step) = steps.first() else {
        return Ok(if leaf_matches(n, &amp, target) { prob } else { 0.0 });
    };
    let mut total = 0.0;
    for (op, continues) in step_kraus(n, &amp, step, round)? {
        let child = apply_op_raw(&amp, n, step.party, &op);
        if continues {
            total += enumerate(n, child, &steps[1..], target, round + 1)?;
        } else if norm_sqr(&child) > PROB_FLOOR && leaf_matches(n, &child, target) {
            total += norm_sqr(&child);
        }
    }
    Ok(total)
}

/// Exhaustively expands every outcome path of `plan` starting from `v` and
/// returns the exact probability of landing on the plan's target, with
/// leaves classified by component match within 1e-9.
///
/// Deterministic-lowering steps have no operator realization and are
/// rejected; callers verify such plans on the probabilistic prefix.
pub fn enumerate_protocol(v: &Statevector, plan: &ProtocolPlan) -> Result<f64> {
    check_cap(v.n())?;
    if v.n() != plan.target.n() {
        return Err(Error::DimensionMismatch { left: v.n(), right: plan.target.n() });
    }
    enumerate(v.n(), v.amplitudes().to_vec(), &plan.steps, &plan.target, 1)
}
