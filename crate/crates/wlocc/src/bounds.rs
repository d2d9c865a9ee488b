//! Closed-form conversion bounds and feasibility decisions.
//!
//! For a source/target pair with sorted ratios `r_1 <= ... <= r_N` and
//! zeroth ratio `r_0 = x_0/y_0`:
//!
//! - the success probability never exceeds `min_i r_i` (capped at one);
//! - the minimum-ratio rate `r_1` is attainable if and only if `r_2 >= r_0`;
//! - the constructive protocol attains `r_1` when `r_1 >= r_0`, and
//!   otherwise `r_h · (r_{h-1}/r_0) ··· (r_1/r_0)` where `h` is the largest
//!   index with `r_0 > r_h`.
//!
//! Parties with zero target weight impose no ratio constraint: they are
//! disentangled deterministically first, so they are excluded from the
//! minimum.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{zero_x0_filter, zero_x0_lambda};
use crate::state::{ratio_profile, RatioProfile, WClassComponents};
use crate::tol::{RATIO_TIE, ZERO_CUT};

/// Bounds and feasibility summary for one conversion pair.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub upper: f64,
    pub lower: f64,
    /// Whether the minimum-ratio rate is attainable (`r_2 >= r_0`).
    pub r1_optimal: bool,
    /// Number of sorted ratios strictly below `r_0`, when any.
    pub h: Option<usize>,
    pub profile: RatioProfile,
}

impl Serialize for BoundReport {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            upper: f64,
            lower: f64,
            r1_optimal: bool,
            h: Option<usize>,
            perm: &'a [usize],
        }
        Repr {
            upper: self.upper,
            lower: self.lower,
            r1_optimal: self.r1_optimal,
            h: self.h,
            perm: &self.profile.perm,
        }
        .serialize(ser)
    }
}

/// `min(1, min_i r_i)` over parties with nonzero target weight.
pub fn upper_bound(x: &WClassComponents, y: &WClassComponents) -> Result<f64> {
    let profile = ratio_profile(x, y)?;
    let min = profile
        .sorted_finite()
        .map(|(_, r)| r)
        .next()
        .ok_or_else(|| Error::PreconditionViolated("target has no entangled party".into()))?;
    Ok(min.min(1.0))
}

fn require_positive_target(y: &WClassComponents) -> Result<()> {
    for k in 1..=y.n() {
        if y.get(k) <= ZERO_CUT {
            return Err(Error::PreconditionViolated(format!(
                "target component of party {k} must be positive"
            )));
        }
    }
    if y.x0() <= ZERO_CUT {
        return Err(Error::PreconditionViolated("target x0 must be positive".into()));
    }
    Ok(())
}

/// Whether the minimum-ratio rate is attainable: the second-smallest party
/// ratio is at least `r_0`, within the closed-bound tie tolerance.
pub fn r1_feasible(x: &WClassComponents, y: &WClassComponents) -> Result<bool> {
    require_positive_target(y)?;
    let profile = ratio_profile(x, y)?;
    let second = profile
        .second_finite()
        .ok_or_else(|| Error::PreconditionViolated("need at least two parties".into()))?;
    Ok(second >= profile.r0 - RATIO_TIE)
}

/// Constructive lower bound with its round-count witness.
pub fn lower_bound(x: &WClassComponents, y: &WClassComponents) -> Result<BoundReport> {
    require_positive_target(y)?;
    let profile = ratio_profile(x, y)?;
    let sorted: Vec<f64> = profile.sorted_finite().map(|(_, r)| r).collect();
    if sorted.len() < 2 {
        return Err(Error::PreconditionViolated("need at least two parties".into()));
    }
    let r0 = profile.r0;
    let upper = sorted[0].min(1.0);
    let r1_optimal = sorted[1] >= r0 - RATIO_TIE;
    let (lower, h) = if sorted[0] >= r0 - RATIO_TIE {
        (sorted[0].min(1.0), None)
    } else {
        let h = sorted.iter().filter(|&&r| r < r0 - RATIO_TIE).count();
        let mut value = sorted[h - 1];
        for r in &sorted[..h - 1] {
            value *= r / r0;
        }
        (value, Some(h))
    };
    Ok(BoundReport { upper, lower, r1_optimal, h, profile })
}

/// Lower bound on distilling an arbitrary state to the uniform W state:
/// `2 x_max x_min N / (x_0 + 2 x_max + sqrt(x_0^2 + 4 x_max x_0))`, which is
/// the zero-x0 filter success probability composed with the post-filter
/// minimum ratio.
pub fn distill_bound(x: &WClassComponents) -> Result<f64> {
    let n = x.n();
    for k in 1..=n {
        if x.get(k) <= ZERO_CUT {
            return Err(Error::ZeroComponent { party: k });
        }
    }
    let x0 = x.x0();
    let mut x_min = x.get(1);
    let mut x_max = x.get(1);
    for k in 2..=n {
        x_min = x_min.min(x.get(k));
        x_max = x_max.max(x.get(k));
    }
    if x0 <= ZERO_CUT {
        return Ok(n as f64 * x_min);
    }
    Ok(zero_x0_lambda(x0, x_max) * n as f64 * x_min)
}

/// Consistency companion to [`distill_bound`]: filter success probability
/// times the post-filter minimum ratio against the uniform target.
pub fn distill_via_filter(x: &WClassComponents) -> Result<f64> {
    let n = x.n();
    let f = zero_x0_filter(x)?;
    let w: WClassComponents = WClassComponents::new(vec![1.0 / n as f64; n])?;
    let post_upper = upper_bound(&f.post, &w)?;
    Ok(f.success_p * post_upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn state(v: &[f64]) -> WClassComponents {
        WClassComponents::new(v.to_vec()).unwrap()
    }

    #[test]
    fn upper_bound_examples() {
        let x = state(&[0.2, 0.3, 0.4]);
        let y = state(&[0.25, 0.3, 0.35]);
        close(upper_bound(&x, &y).unwrap(), 0.8, 1e-12);
        close(upper_bound(&x, &x).unwrap(), 1.0, 1e-12);

        let a = state(&[0.3, 0.3, 0.3]);
        let b = state(&[0.32, 0.33, 0.30]);
        close(upper_bound(&a, &b).unwrap(), 0.909091, 1e-6);
    }

    #[test]
    fn upper_bound_skips_zero_targets() {
        let x = state(&[0.2, 0.3, 0.4]);
        let y = state(&[0.4, 0.0, 0.4]);
        close(upper_bound(&x, &y).unwrap(), 0.5, 1e-12);
    }

    #[test]
    fn r1_feasible_examples() {
        let x = state(&[0.2, 0.3, 0.4]);
        let y = state(&[0.25, 0.3, 0.35]);
        assert!(r1_feasible(&x, &y).unwrap());
        assert!(r1_feasible(&x, &x).unwrap());

        let a = state(&[0.3, 0.3, 0.3]);
        let b = state(&[0.32, 0.33, 0.30]);
        assert!(!r1_feasible(&a, &b).unwrap());
    }

    #[test]
    fn r1_feasible_requires_positive_target() {
        let x = state(&[0.2, 0.3, 0.4]);
        let y = state(&[0.3, 0.0, 0.4]);
        assert!(matches!(r1_feasible(&x, &y), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn lower_bound_examples() {
        let x = state(&[0.2, 0.3, 0.4]);
        let y = state(&[0.25, 0.3, 0.35]);
        let rep = lower_bound(&x, &y).unwrap();
        close(rep.lower, 0.8, 1e-12);
        assert_eq!(rep.h, Some(1));
        assert!(rep.r1_optimal);

        let rep2 = lower_bound(&x, &x).unwrap();
        close(rep2.lower, 1.0, 1e-12);
        assert_eq!(rep2.h, None);

        let a = state(&[0.3, 0.3, 0.3]);
        let b = state(&[0.32, 0.33, 0.30]);
        let rep3 = lower_bound(&a, &b).unwrap();
        assert_eq!(rep3.h, Some(3));
        close(rep3.lower, 0.2130682, 1e-6);
        assert!(!rep3.r1_optimal);
        assert!(rep3.lower <= rep3.upper + 1e-12);
    }

    #[test]
    fn lower_equals_upper_iff_feasible() {
        let pairs = [
            (state(&[0.2, 0.3, 0.4]), state(&[0.25, 0.3, 0.35]), true),
            (state(&[0.3, 0.3, 0.3]), state(&[0.32, 0.33, 0.30]), false),
        ];
        for (x, y, feasible) in pairs {
            let rep = lower_bound(&x, &y).unwrap();
            assert_eq!(rep.r1_optimal, feasible);
            assert_eq!((rep.lower - rep.upper).abs() <= 1e-12, feasible);
        }
    }

    #[test]
    fn distill_examples() {
        let x = state(&[0.2, 0.2, 0.5]);
        close(distill_bound(&x).unwrap(), 0.385046, 1e-6);

        let w3 = state(&[1.0 / 3.0; 3]);
        close(distill_bound(&w3).unwrap(), 1.0, 1e-9);

        let w4 = state(&[0.25, 0.25, 0.25, 0.25]);
        close(distill_bound(&w4).unwrap(), 1.0, 1e-12);

        let dead = state(&[0.0, 0.5, 0.4]);
        assert!(matches!(distill_bound(&dead), Err(Error::ZeroComponent { party: 1 })));
    }

    #[test]
    fn bound_report_serializes_with_permutation() {
        let x = state(&[0.3, 0.3, 0.3]);
        let y = state(&[0.32, 0.33, 0.30]);
        let rep = lower_bound(&x, &y).unwrap();
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["h"], 3);
        assert_eq!(v["r1_optimal"], false);
        assert_eq!(v["perm"], serde_json::json!([2, 1, 3]));
        assert!(v["upper"].is_f64() && v["lower"].is_f64());
    }

    #[test]
    fn distill_matches_filter_composition() {
        let states = [
            state(&[0.2, 0.2, 0.5]),
            state(&[0.1, 0.3, 0.2, 0.15]),
            state(&[0.4, 0.3, 0.2]),
        ];
        for x in states {
            close(distill_bound(&x).unwrap(), distill_via_filter(&x).unwrap(), 1e-12);
        }
    }
}
