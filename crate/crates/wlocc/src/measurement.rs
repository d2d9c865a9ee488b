//! Single-party measurement calculus.
//!
//! Every two-outcome measurement used by the conversion protocol is recorded
//! as a set of (p, s, t) triples: outcome probability `p`, a uniform scale
//! `s` on the components of all non-measuring parties, and a divisor `t` on
//! the measuring party's component (or a kill marker sending it to zero).
//! Over a full measurement the triples satisfy
//!
//! ```text
//! Σ p = 1,    Σ p·s = 1,    Σ p/t <= 1   (killed outcomes contribute 0)
//! ```
//!
//! The constructors below produce both the triples and explicit 2x2 Kraus
//! realizations acting on the measuring qubit; `crate::oracle` replays the
//! operators on full statevectors to confirm the calculus.
//!
//! Two measurement families drive the protocol. A T1 measurement has a
//! success outcome with `t = p` and scales x0 exactly by `s`; it is
//! parameterized by the product `sigma = s·p` alone, since only products of
//! the form `s·p` ever enter conversion probabilities, and the Kraus
//! realization fixes the split as `p = sigma·(1 - x_k) + x_k`. A T2
//! measurement has a success outcome with `s = 1/p`; its success update is
//! `x_k -> 1 - (1 - x_k)/p`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::{check_party, WClassComponents};
use crate::tol::{MEAS_VALID, NORM_EPS, ZERO_CUT};

/// 2x2 complex matrix in row-major form.
pub type Mat2 = [[Complex64; 2]; 2];

pub(crate) fn mat2_zero() -> Mat2 {
    [[Complex64::new(0.0, 0.0); 2]; 2]
}

pub(crate) fn mat2_identity() -> Mat2 {
    let mut m = mat2_zero();
    m[0][0] = Complex64::new(1.0, 0.0);
    m[1][1] = Complex64::new(1.0, 0.0);
    m
}

pub(crate) fn mat2_real(a: f64, b: f64, c: f64, d: f64) -> Mat2 {
    [
        [Complex64::new(a, 0.0), Complex64::new(b, 0.0)],
        [Complex64::new(c, 0.0), Complex64::new(d, 0.0)],
    ]
}

pub(crate) fn mat2_dagger(m: &Mat2) -> Mat2 {
    [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]]
}

pub(crate) fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = mat2_zero();
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Largest eigenvalue of the positive matrix M†M.
pub(crate) fn gram_max_eigenvalue(m: &Mat2) -> f64 {
    let g = mat2_mul(&mat2_dagger(m), m);
    let a = g[0][0].re;
    let d = g[1][1].re;
    let off = g[0][1].norm_sqr();
    0.5 * (a + d) + (0.25 * (a - d) * (a - d) + off).sqrt()
}

/// Scale divisor on the measuring party: finite `t` for `x_k -> x_k / t`,
/// or the kill marker for `x_k -> 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TParam {
    Div(f64),
    Kill,
}

impl TParam {
    pub fn as_div(&self) -> Option<f64> {
        match self {
            TParam::Div(t) => Some(*t),
            TParam::Kill => None,
        }
    }

    /// `s·t` with killed outcomes treated as the `t -> inf` limit.
    pub fn st_product(&self, s: f64) -> f64 {
        match self {
            TParam::Div(t) => s * t,
            TParam::Kill => f64::INFINITY,
        }
    }
}

/// Whether an outcome scales x0 exactly by `s` or merely bounds it below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum X0Mode {
    EqualS,
    GeqS,
}

/// One measurement outcome's scale factors.
///
/// `s` may be zero: the failure outcome of a T2 collapses every
/// non-measuring party, which is the `s = 0` point of the update law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeTriple {
    pub p: f64,
    pub s: f64,
    pub t: TParam,
    pub x0_mode: X0Mode,
}

impl OutcomeTriple {
    pub fn validate(&self) -> Result<()> {
        if self.p.is_nan() || self.p <= 0.0 || self.p > 1.0 + NORM_EPS {
            return Err(Error::InvalidOutcome(format!("p = {} outside (0, 1]", self.p)));
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(Error::InvalidOutcome(format!("s = {} negative or non-finite", self.s)));
        }
        if self.p * self.s > 1.0 + MEAS_VALID {
            return Err(Error::InvalidOutcome(format!("p*s = {} exceeds one", self.p * self.s)));
        }
        if let TParam::Div(t) = self.t {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::InvalidOutcome(format!("t = {t} not positive")));
            }
            if self.p / t > 1.0 + MEAS_VALID {
                return Err(Error::InvalidOutcome(format!("p/t = {} exceeds one", self.p / t)));
            }
        }
        Ok(())
    }
}

/// Validates the aggregate constraints of a full measurement.
pub fn validate_measurement(outcomes: &[OutcomeTriple]) -> Result<()> {
    if outcomes.is_empty() {
        return Err(Error::InvalidMeasurement("no outcomes".into()));
    }
    let mut sum_p = 0.0;
    let mut sum_ps = 0.0;
    let mut sum_pt = 0.0;
    for o in outcomes {
        o.validate().map_err(|e| Error::InvalidMeasurement(e.to_string()))?;
        sum_p += o.p;
        sum_ps += o.p * o.s;
        if let TParam::Div(t) = o.t {
            sum_pt += o.p / t;
        }
    }
    if (sum_p - 1.0).abs() > MEAS_VALID {
        return Err(Error::InvalidMeasurement(format!("Σp = {sum_p}")));
    }
    if (sum_ps - 1.0).abs() > MEAS_VALID {
        return Err(Error::InvalidMeasurement(format!("Σp·s = {sum_ps}")));
    }
    if sum_pt > 1.0 + MEAS_VALID {
        return Err(Error::InvalidMeasurement(format!("Σp/t = {sum_pt} exceeds one")));
    }
    Ok(())
}

/// Kraus operators of a measurement on one party.
#[derive(Debug, Clone)]
pub struct KrausSet {
    pub party: usize,
    pub ops: Vec<Mat2>,
}

impl KrausSet {
    /// Largest entrywise deviation of Σ M†M from the identity.
    pub fn completeness_defect(&self) -> f64 {
        let mut sum = mat2_zero();
        for m in &self.ops {
            let g = mat2_mul(&mat2_dagger(m), m);
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += g[i][j];
                }
            }
        }
        let id = mat2_identity();
        let mut defect: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                defect = defect.max((sum[i][j] - id[i][j]).norm());
            }
        }
        defect
    }
}

/// Applies one outcome's component update: `x_j -> s·x_j` for `j != k`,
/// `x_k -> x_k / t` (or zero on kill), x0 recomputed by normalization. The
/// result must satisfy `x0' >= s·x0`, with equality under `X0Mode::EqualS`.
pub fn apply_update(x: &WClassComponents, party: usize, o: &OutcomeTriple) -> Result<WClassComponents> {
    check_party(x, party)?;
    o.validate()?;
    let xk = x.get(party);
    let new_k = match o.t {
        TParam::Kill => 0.0,
        TParam::Div(t) => {
            if xk <= 0.0 {
                return Err(Error::InvalidOutcome(format!(
                    "finite t on party {party} with zero component"
                )));
            }
            xk / t
        }
    };
    let mut out = Vec::with_capacity(x.n());
    for k in 1..=x.n() {
        let v = if k == party { new_k } else { o.s * x.get(k) };
        if v > 1.0 + NORM_EPS {
            return Err(Error::ComponentOverflow { index: k, value: v });
        }
        out.push(v);
    }
    let sum: f64 = out.iter().sum();
    if sum > 1.0 + NORM_EPS {
        return Err(Error::ComponentOverflow { index: party, value: sum });
    }
    let result = WClassComponents::new(out)?;
    let floor = o.s * x.x0();
    let x0 = result.x0();
    if x0 < floor - NORM_EPS {
        return Err(Error::InvalidOutcome(format!("x0' = {x0} below s·x0 = {floor}")));
    }
    if o.x0_mode == X0Mode::EqualS && (x0 - floor).abs() > NORM_EPS {
        return Err(Error::InvalidOutcome(format!("x0' = {x0} differs from s·x0 = {floor}")));
    }
    Ok(result)
}

/// Builds a T1 measurement by `party` with success product `s·p = sigma`.
///
/// Kraus operators are `diag(a, 1)` and `diag(sqrt(1 - a^2), 0)` with
/// `a = sqrt(sigma)`; the success outcome has `p = sigma·(1 - x_k) + x_k`,
/// `s = sigma / p`, `t = p`, and the failure outcome kills party `k`. For
/// `sigma = 1` the failure outcome carries zero probability and only the
/// success triple is returned.
pub fn make_t1(
    x: &WClassComponents,
    party: usize,
    sigma: f64,
) -> Result<(KrausSet, Vec<OutcomeTriple>)> {
    check_party(x, party)?;
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::SigmaOutOfRange(sigma));
    }
    let xk = x.get(party);
    if xk <= 0.0 || xk >= 1.0 {
        return Err(Error::DegenerateComponent { party, value: xk });
    }
    let a = sigma.sqrt();
    let ops = vec![mat2_real(a, 0.0, 0.0, 1.0), mat2_real((1.0 - sigma).sqrt(), 0.0, 0.0, 0.0)];
    let p1 = sigma * (1.0 - xk) + xk;
    let success = OutcomeTriple { p: p1, s: sigma / p1, t: TParam::Div(p1), x0_mode: X0Mode::EqualS };
    let mut triples = vec![success];
    if sigma < 1.0 {
        let p2 = (1.0 - sigma) * (1.0 - xk);
        triples.push(OutcomeTriple {
            p: p2,
            s: (1.0 - sigma) / p2,
            t: TParam::Kill,
            x0_mode: X0Mode::EqualS,
        });
    }
    Ok((KrausSet { party, ops }, triples))
}

/// Success-outcome divisor of a T2 with probability `p`: the value `t` with
/// `x_k / t = 1 - (1 - x_k)/p`.
pub(crate) fn t2_success_t(xk: f64, p: f64) -> f64 {
    p * xk / (xk - (1.0 - p))
}

/// Builds a T2 measurement by `party` with success probability `p`.
///
/// Kraus operators are `diag(1, c)` and `diag(0, sqrt(1 - c^2))` with
/// `c^2 = 1 - (1 - p)/x_k`. The form of the success operator is forced: a
/// two-outcome completion of `[[1, b], [0, c]]` needs `I - M†M` positive
/// with a vanishing (0,0) entry, and a positive matrix with a zero diagonal
/// entry has a zero row, so `b = 0`. The success outcome has `s = 1/p` and
/// updates `x_k -> 1 - (1 - x_k)/p`; the failure outcome leaves the product
/// state with party `k` excited.
pub fn make_t2(
    x: &WClassComponents,
    party: usize,
    p: f64,
) -> Result<(KrausSet, Vec<OutcomeTriple>)> {
    check_party(x, party)?;
    let xk = x.get(party);
    if xk <= 0.0 {
        return Err(Error::DegenerateComponent { party, value: xk });
    }
    if !(p <= 1.0 && p.is_finite()) {
        return Err(Error::PreconditionViolated(format!(
            "t2 probability {p} must lie in (1 - x_k, 1]"
        )));
    }
    if p <= 1.0 - xk {
        return Err(Error::ProbabilityTooSmall { p, min: 1.0 - xk });
    }
    let c2 = (1.0 - (1.0 - p) / xk).max(0.0);
    let c = c2.sqrt();
    let ops = vec![mat2_real(1.0, 0.0, 0.0, c), mat2_real(0.0, 0.0, 0.0, (1.0 - c2).sqrt())];
    let success = OutcomeTriple {
        p,
        s: 1.0 / p,
        t: TParam::Div(t2_success_t(xk, p)),
        x0_mode: X0Mode::EqualS,
    };
    let mut triples = vec![success];
    if p < 1.0 {
        triples.push(OutcomeTriple {
            p: 1.0 - p,
            s: 0.0,
            t: TParam::Div(xk),
            x0_mode: X0Mode::EqualS,
        });
    }
    Ok((KrausSet { party, ops }, triples))
}

/// Deterministically lowers party `k`'s component to `target` with
/// probability one; all other components are unchanged and x0 absorbs the
/// difference.
///
/// This is a component-level contract with no Kraus realization here, so
/// the statevector oracle validates protocols only up to (not through)
/// lowering steps.
pub fn deterministic_lower(
    x: &WClassComponents,
    party: usize,
    target: f64,
) -> Result<WClassComponents> {
    check_party(x, party)?;
    let xk = x.get(party);
    if target.is_nan() || target < 0.0 || target > xk {
        return Err(Error::TargetNotBelow { party, target, current: xk });
    }
    let mut out = x.components().to_vec();
    out[party - 1] = target;
    WClassComponents::new(out)
}

/// Removes party `k` with probability one: the remaining components are
/// unchanged and `x0' = x0 + x_k`. Requires at least three parties so the
/// remainder is still a multiparty state.
pub fn disentangle(x: &WClassComponents, party: usize) -> Result<WClassComponents> {
    check_party(x, party)?;
    if x.n() < 3 {
        return Err(Error::TooFewParties(x.n()));
    }
    let mut out = x.components().to_vec();
    out.remove(party - 1);
    WClassComponents::new(out)
}

/// Disentangle variant used inside protocol plans: keeps the party count and
/// zeroes the component, so step indices stay stable across a plan.
pub(crate) fn disentangle_in_place(x: &WClassComponents, party: usize) -> WClassComponents {
    let mut out = x.components().to_vec();
    out[party - 1] = 0.0;
    WClassComponents::new(out).expect("zeroing a component preserves validity")
}

/// Kraus pair realizing a disentangle: `(1/sqrt(2))·[[1, ±i], [0, 0]]`.
///
/// The off-diagonal entries have equal magnitude and opposite sign times the
/// imaginary unit, so both outcomes carry the same component vector:
/// `|sqrt(x0) ± i·sqrt(x_k)|^2 = x0 + x_k` independent of the sign. Equality
/// of components, not amplitudes, is the success criterion.
pub fn disentangle_kraus(party: usize) -> KrausSet {
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let plus = [
        [Complex64::new(inv, 0.0), Complex64::new(0.0, inv)],
        [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)],
    ];
    let minus = [
        [Complex64::new(inv, 0.0), Complex64::new(0.0, -inv)],
        [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)],
    ];
    KrausSet { party, ops: vec![plus, minus] }
}

/// Result of the zero-x0 filter.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    /// Acting party: the largest component, ties broken by lowest index.
    pub acting_party: usize,
    /// Filter normalization, the largest value keeping M†M below identity.
    pub lambda: f64,
    /// Success probability `lambda·(1 - x0)`.
    pub success_p: f64,
    /// Post-filter state: `x0' = 0`, `x_j' = x_j / (1 - x0)`.
    pub post: WClassComponents,
}

pub(crate) fn zero_x0_lambda(x0: f64, xi: f64) -> f64 {
    2.0 * xi / (x0 + 2.0 * xi + (x0 * x0 + 4.0 * xi * x0).sqrt())
}

pub(crate) fn argmax_party(x: &WClassComponents) -> usize {
    let mut best = 1;
    for k in 2..=x.n() {
        if x.get(k) > x.get(best) {
            best = k;
        }
    }
    best
}

/// Filter computation for a prescribed acting party. See [`zero_x0_filter`].
pub(crate) fn zero_x0_filter_for(x: &WClassComponents, party: usize) -> Result<FilterOutcome> {
    check_party(x, party)?;
    let x0 = x.x0();
    if x0 <= ZERO_CUT {
        return Ok(FilterOutcome {
            acting_party: party,
            lambda: 1.0,
            success_p: 1.0,
            post: x.clone(),
        });
    }
    let xi = x.get(party);
    if xi <= ZERO_CUT {
        return Err(Error::PreconditionViolated(
            "zero-x0 filter needs an entangled acting party".into(),
        ));
    }
    let lambda = zero_x0_lambda(x0, xi);
    let scale = 1.0 - x0;
    let post: Vec<f64> = x.components().iter().map(|v| v / scale).collect();
    Ok(FilterOutcome {
        acting_party: party,
        lambda,
        success_p: lambda * scale,
        post: WClassComponents::new(post)?,
    })
}

/// One-shot filter `M = sqrt(lambda)·[[1, -sqrt(x0/x_i)], [0, 1]]` by the
/// party `i` of largest component, removing the zeroth component: on success
/// `x0' = 0` and `x_j' = x_j / (1 - x0)`. The normalization
/// `lambda = 2 x_i / (x0 + 2 x_i + sqrt(x0^2 + 4 x_i x0))` is the largest
/// value with `M†M <= I`. States that already have `x0 = 0` pass through
/// with `lambda = 1` and unit success probability.
pub fn zero_x0_filter(x: &WClassComponents) -> Result<FilterOutcome> {
    let party = argmax_party(x);
    if x.get(party) <= ZERO_CUT {
        return Err(Error::PreconditionViolated(
            "zero-x0 filter needs at least one entangled party".into(),
        ));
    }
    zero_x0_filter_for(x, party)
}

/// Kraus pair `{M, N}` realizing the zero-x0 filter as a full measurement.
///
/// At the maximal `lambda` the complement is the rank-one upper-triangular
/// `N = [[sqrt(1 - lambda), lambda·g / sqrt(1 - lambda)], [0, 0]]` with
/// `g = sqrt(x0 / x_i)`, because `(1 - lambda)^2 = lambda·g^2` there. Both
/// operators preserve W-class form.
pub fn zero_x0_filter_kraus(x: &WClassComponents) -> Result<(KrausSet, FilterOutcome)> {
    let f = zero_x0_filter(x)?;
    let x0 = x.x0();
    if x0 <= ZERO_CUT {
        let ops = vec![mat2_identity(), mat2_zero()];
        return Ok((KrausSet { party: f.acting_party, ops }, f));
    }
    let g = (x0 / x.get(f.acting_party)).sqrt();
    let sl = f.lambda.sqrt();
    let m = mat2_real(sl, -sl * g, 0.0, sl);
    let rest = (1.0 - f.lambda).sqrt();
    let n = mat2_real(rest, f.lambda * g / rest, 0.0, 0.0);
    Ok((KrausSet { party: f.acting_party, ops: vec![m, n] }, f))
}

/// Per-component slack of the averaged update against the initial state.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    /// `slack[k-1] = x_k - Σ_λ p_λ x_{k,λ}` for party `k`.
    pub slack: Vec<f64>,
}

impl MonotonicityReport {
    /// Largest negative excursion, as a positive number (0 when clean).
    pub fn max_violation(&self) -> f64 {
        self.slack.iter().fold(0.0f64, |acc, &s| acc.max(-s))
    }

    pub fn ok(&self) -> bool {
        self.max_violation() <= NORM_EPS
    }
}

/// Verifies that no component grows on average over a measurement by
/// `party`: for every component `j`, `x_j >= Σ_λ p_λ x_{j,λ}` within 1e-12.
/// Non-measuring parties must balance exactly since `Σ p·s = 1`.
pub fn check_monotonicity(
    x: &WClassComponents,
    party: usize,
    outcomes: &[OutcomeTriple],
) -> Result<MonotonicityReport> {
    check_party(x, party)?;
    validate_measurement(outcomes)?;
    let mut slack = Vec::with_capacity(x.n());
    for k in 1..=x.n() {
        let xk = x.get(k);
        let mut avg = 0.0;
        for o in outcomes {
            if k == party {
                if let TParam::Div(t) = o.t {
                    avg += o.p * (xk / t);
                }
            } else {
                avg += o.p * o.s * xk;
            }
        }
        slack.push(xk - avg);
    }
    Ok(MonotonicityReport { slack })
}
