//! Symmetric three-qubit conversions to the uniform W state.
//!
//! The permutation-invariant W-class states form the one-parameter family
//! `|s> = sqrt(1-s)|000> + sqrt(s/3)(|100> + |010> + |001>)` with components
//! `(s/3, s/3, s/3)`. Two one-shot strategies convert `|s>` into the uniform
//! W state: a single party filters, or all three parties apply the same
//! filter. Closed forms for both optima are implemented alongside
//! independent constrained sweeps that reproduce them numerically, so each
//! route checks the other.
//!
//! The analysis is tripartite; operations reject other party counts via the
//! fixed `N = 3` in the state family.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{gram_max_eigenvalue, mat2_real, Mat2};
use crate::state::WClassComponents;

/// Excitation weight `s` of the symmetric family, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricState {
    s: f64,
}

impl SymmetricState {
    pub fn new(s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s) || !s.is_finite() {
            return Err(Error::DomainError(s));
        }
        Ok(SymmetricState { s })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Component vector `(s/3, s/3, s/3)`.
    pub fn components(&self) -> WClassComponents {
        WClassComponents::new(vec![self.s / 3.0; 3]).expect("s in [0,1] is valid")
    }
}

/// Upper-triangular filter `[[a, b], [0, c]]` with `a, c >= 0` and the
/// boundary constraint `b^2 = (1 - a^2)(1 - c^2)`, i.e. `det(I - A†A) = 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FilterParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl FilterParams {
    pub fn matrix(&self) -> Mat2 {
        mat2_real(self.a, self.b, 0.0, self.c)
    }

    /// Residual of the boundary constraint.
    pub fn boundary_defect(&self) -> f64 {
        (self.b * self.b - (1.0 - self.a * self.a) * (1.0 - self.c * self.c)).abs()
    }

    /// Largest eigenvalue of A†A; one at a maximal filter.
    pub fn gram_top(&self) -> f64 {
        gram_max_eigenvalue(&self.matrix())
    }
}

fn check_domain(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) || !s.is_finite() {
        return Err(Error::DomainError(s));
    }
    Ok(())
}

fn check_positive_domain(s: f64) -> Result<()> {
    check_domain(s)?;
    if s == 0.0 {
        return Err(Error::DomainError(s));
    }
    Ok(())
}

/// `beta(s) = sqrt(3 (1 - s)(3 + 5 s))`.
pub fn beta(s: f64) -> Result<f64> {
    check_domain(s)?;
    Ok((3.0 * (1.0 - s) * (3.0 + 5.0 * s)).sqrt())
}

/// Best single-party success probability:
/// `p_max(s) = (3 - s - sqrt(3 (1 - s)(3 + s))) / 2`.
pub fn p_max_closed(s: f64) -> Result<f64> {
    check_domain(s)?;
    Ok(0.5 * (3.0 - s - (3.0 * (1.0 - s) * (3.0 + s)).sqrt()))
}

/// Best identical-filter success probability:
/// `q_max(s) = (3 + 9s - beta)^2 (-3 + 3s + beta) / (48 (1 + 2s)(1 - s + beta))`.
///
/// The expression is 0/0 at `s = 1`; the singularity is removable with
/// limit one, evaluated directly for `s > 1 - 1e-9`.
pub fn q_max_closed(s: f64) -> Result<f64> {
    check_domain(s)?;
    if s > 1.0 - 1e-9 {
        return Ok(1.0);
    }
    let b = beta(s)?;
    let num = (3.0 + 9.0 * s - b).powi(2) * (-3.0 + 3.0 * s + b);
    let den = 48.0 * (1.0 + 2.0 * s) * (1.0 - s + b);
    Ok(num / den)
}

/// Single-party optimum by numeric feasibility search, independent of the
/// closed form.
///
/// Proportionality to the W state pins the filter direction: with `c = a`
/// and `a sqrt(1-s) + b sqrt(s/3) = 0`, the matrix is `a·[[1, -g], [0, 1]]`
/// for `g = sqrt(3(1-s)/s)`, and the success probability `p = a^2 s` grows
/// monotonically in `a`. The largest admissible `a` keeps the top eigenvalue
/// of A†A at one; it is bracketed and bisected to 1e-12.
pub fn optimize_single_party(s: f64) -> Result<(f64, FilterParams)> {
    check_positive_domain(s)?;
    let g = (3.0 * (1.0 - s) / s).sqrt();
    let gram_top = |a: f64| gram_max_eigenvalue(&mat2_real(a, -a * g, 0.0, a));
    let feasible = |a: f64| gram_top(a) <= 1.0 + 1e-15;
    let a = if feasible(1.0) {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if a <= 0.0 {
        return Err(Error::InfeasiblePoint(s));
    }
    Ok((a * a * s, FilterParams { a, b: -a * g, c: a }))
}

/// Identical-filter optimum by a coarse scan and golden-section refinement,
/// independent of the closed form.
///
/// The first constraint eliminates `b = -a sqrt((1-s)/(3s))` and the
/// boundary fixes `c^2 = 1 - b^2/(1 - a^2)`; the objective is
/// `q = a^4 c^2 s` over the interval where `c^2 >= 0`.
pub fn optimize_symmetric_filter(s: f64) -> Result<(f64, FilterParams)> {
    check_positive_domain(s)?;
    let g2 = (1.0 - s) / (3.0 * s);
    let c2_of = |a: f64| {
        if g2 == 0.0 {
            1.0
        } else {
            1.0 - a * a * g2 / (1.0 - a * a)
        }
    };
    let q_of = |a: f64| {
        let c2 = c2_of(a);
        if c2 < 0.0 {
            f64::NEG_INFINITY
        } else {
            a.powi(4) * c2 * s
        }
    };
    // Feasible interval: c^2 >= 0 up to a_sup = 1/sqrt(1 + g2).
    let a_sup = 1.0 / (1.0 + g2).sqrt();
    let coarse = 10_000usize;
    let mut best_i = 0usize;
    let mut best_q = f64::NEG_INFINITY;
    for i in 1..=coarse {
        let a = a_sup * i as f64 / coarse as f64;
        let q = q_of(a);
        if q > best_q {
            best_q = q;
            best_i = i;
        }
    }
    if best_q <= 0.0 && s < 1.0 {
        return Err(Error::InfeasiblePoint(s));
    }
    let mut lo = a_sup * (best_i.saturating_sub(1)) as f64 / coarse as f64;
    let mut hi = a_sup * (best_i + 1).min(coarse) as f64 / coarse as f64;
    // Golden-section refinement on the bracketed maximum.
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = q_of(x1);
    let mut f2 = q_of(x2);
    while hi - lo > 1e-12 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = q_of(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = q_of(x1);
        }
    }
    let a = 0.5 * (lo + hi);
    let b = -a * g2.sqrt();
    let c = c2_of(a).max(0.0).sqrt();
    Ok((q_of(a), FilterParams { a, b, c }))
}

/// Unique interior crossing of the two closed forms, found by bisection on
/// their difference.
pub fn crossing_point() -> f64 {
    let d = |s: f64| p_max_closed(s).unwrap() - q_max_closed(s).unwrap();
    let mut lo = 1e-3;
    let mut hi = 1.0 - 1e-3;
    // Walk the grid to a sign-change bracket before bisecting.
    let steps = 1000;
    let mut prev = lo;
    let mut prev_d = d(lo);
    for i in 1..=steps {
        let x = 1e-3 + (hi - 1e-3) * i as f64 / steps as f64;
        let dx = d(x);
        if prev_d > 0.0 && dx <= 0.0 {
            lo = prev;
            hi = x;
            break;
        }
        prev = x;
        prev_d = dx;
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if d(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One grid row of the strategy comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfileRow {
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub diff: f64,
}

/// Closed-form comparison over `s` in `[0, 1]` at the given step. Both
/// endpoints are always included.
pub fn difference_profile(grid_step: f64) -> Result<Vec<ProfileRow>> {
    if !(grid_step > 0.0 && grid_step <= 1.0) || !grid_step.is_finite() {
        return Err(Error::DomainError(grid_step));
    }
    let mut rows = Vec::new();
    let mut k = 0u64;
    loop {
        let raw = k as f64 * grid_step;
        if raw > 1.0 + 1e-9 {
            break;
        }
        let s = raw.min(1.0);
        let p = p_max_closed(s)?;
        let q = q_max_closed(s)?;
        rows.push(ProfileRow { s, p, q, diff: p - q });
        if s >= 1.0 {
            break;
        }
        k += 1;
    }
    if rows.last().map(|r| r.s < 1.0).unwrap_or(true) {
        let p = p_max_closed(1.0)?;
        let q = q_max_closed(1.0)?;
        rows.push(ProfileRow { s: 1.0, p, q, diff: p - q });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn beta_examples() {
        close(beta(0.0).unwrap(), 3.0, 1e-15);
        close(beta(1.0).unwrap(), 0.0, 1e-15);
        close(beta(0.75).unwrap(), 2.25, 1e-12);
        assert!(matches!(beta(1.5), Err(Error::DomainError(_))));
    }

    #[test]
    fn p_max_examples() {
        close(p_max_closed(1.0).unwrap(), 1.0, 1e-15);
        close(p_max_closed(0.0).unwrap(), 0.0, 1e-15);
        close(p_max_closed(0.75).unwrap(), 0.286474, 1e-6);
        close(p_max_closed(0.9).unwrap(), 0.509167, 1e-6);
    }

    #[test]
    fn q_max_examples() {
        close(q_max_closed(1.0).unwrap(), 1.0, 0.0);
        close(q_max_closed(0.0).unwrap(), 0.0, 1e-15);
        close(q_max_closed(0.75).unwrap(), 0.28125, 1e-9);
        close(q_max_closed(0.9).unwrap(), 0.514286, 1e-6);
        // exact rational at s = 0.9: 110.592 / 215.04
        close(q_max_closed(0.9).unwrap(), 110.592 / 215.04, 1e-12);
    }

    #[test]
    fn single_party_sweep_matches_closed_form() {
        for s in [0.05, 0.25, 0.5, 0.75, 0.9, 1.0] {
            let (p, params) = optimize_single_party(s).unwrap();
            close(p, p_max_closed(s).unwrap(), 1e-6);
            assert!(params.boundary_defect() <= 1e-10, "defect {}", params.boundary_defect());
            close(params.gram_top(), 1.0, 1e-8);
        }
        let (p1, params1) = optimize_single_party(1.0).unwrap();
        close(p1, 1.0, 1e-9);
        close(params1.a, 1.0, 1e-9);
        close(params1.b, 0.0, 1e-9);
    }

    #[test]
    fn symmetric_sweep_matches_closed_form() {
        for s in [0.05, 0.25, 0.5, 0.75, 0.9] {
            let (q, params) = optimize_symmetric_filter(s).unwrap();
            close(q, q_max_closed(s).unwrap(), 1e-6);
            assert!(params.boundary_defect() <= 1e-10);
            close(params.gram_top(), 1.0, 1e-8);
        }
        let (q1, _) = optimize_symmetric_filter(1.0).unwrap();
        close(q1, 1.0, 1e-6);
    }

    #[test]
    fn optimizers_reject_zero() {
        assert!(matches!(optimize_single_party(0.0), Err(Error::DomainError(_))));
        assert!(matches!(optimize_symmetric_filter(0.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn crossing_point_value() {
        let cross = crossing_point();
        close(cross, 0.8290036, 1e-6);
        let symbolic = 3.0 / 61.0 * (3.0 + 8.0 * 3f64.sqrt());
        close(cross, symbolic, 1e-10);
        // sign checks on either side
        let at = |s: f64| p_max_closed(s).unwrap() - q_max_closed(s).unwrap();
        close(at(0.75), 0.005225, 1e-5);
        close(at(0.9), -0.005118, 1e-5);
    }

    #[test]
    fn difference_profile_grids() {
        let coarse = difference_profile(0.25).unwrap();
        let ss: Vec<f64> = coarse.iter().map(|r| r.s).collect();
        assert_eq!(ss, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        close(coarse[0].diff, 0.0, 1e-12);
        close(coarse[4].diff, 0.0, 1e-12);

        let row = &coarse[3];
        close(row.p, 0.286474, 1e-6);
        close(row.q, 0.281250, 1e-6);
        close(row.diff, 0.005225, 1e-6);

        let three = difference_profile(0.5).unwrap();
        assert_eq!(three.len(), 3);

        let fine = difference_profile(0.001).unwrap();
        assert_eq!(fine.len(), 1001);
        let max_gap = fine.iter().fold(0.0f64, |m, r| m.max(r.diff.abs()));
        assert!(max_gap <= 0.014, "max |p - q| = {max_gap}");
    }

    #[test]
    fn one_sign_change_on_fine_grid() {
        let fine = difference_profile(0.001).unwrap();
        let mut changes = 0;
        let mut last = 0.0f64;
        for r in &fine[1..fine.len() - 1] {
            if r.diff != 0.0 {
                if last != 0.0 && r.diff.signum() != last.signum() {
                    changes += 1;
                }
                last = r.diff;
            }
        }
        assert_eq!(changes, 1);
    }

    #[test]
    fn curves_monotone_nondecreasing() {
        let fine = difference_profile(0.001).unwrap();
        for w in fine.windows(2) {
            assert!(w[1].p >= w[0].p - 1e-12);
            assert!(w[1].q >= w[0].q - 1e-12);
        }
    }

    #[test]
    fn symmetric_state_components() {
        let st = SymmetricState::new(0.75).unwrap();
        let c = st.components();
        close(c.get(1), 0.25, 1e-15);
        close(c.x0(), 0.25, 1e-12);
        assert!(SymmetricState::new(-0.1).is_err());
    }
}
