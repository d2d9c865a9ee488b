//! Conversion protocols: plan synthesis, outcome trees, exact and sampled
//! evaluation, and optimality audits.
//!
//! A plan is an ordered list of single-party steps. Synthesis follows the
//! constructive conversion procedure:
//!
//! 1. parties with zero target weight disentangle deterministically;
//! 2. a one-shot filter removes the zeroth component when the target has
//!    none;
//! 3. T1 rounds walk down the sorted sub-threshold ratios, equalizing each
//!    against the zeroth ratio (largest first, down to the smallest);
//! 4. T2 rounds fold the remaining low parties into the equalized pack one
//!    at a time, and a final T2 lifts the pack to the target;
//! 5. deterministic lowering trims any leftover excess, emitted last so the
//!    operator-checkable prefix of the plan is maximal.
//!
//! Failure outcomes are terminal: the procedure assigns no recovery, so a
//! plan's tree has a single success branch except where a disentangle step
//! legitimately continues on both outcomes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{
    apply_update, deterministic_lower, disentangle_in_place, make_t1, make_t2, zero_x0_filter,
    zero_x0_filter_for, OutcomeTriple, TParam,
};
use crate::state::{ratio_profile, StateRecord, WClassComponents};
use crate::tol::{LEAF_MATCH, NORM_EPS, RATIO_TIE, ZERO_CUT};

/// Success-outcome scale factors recorded on a plan step or tree edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedTriple {
    pub p: f64,
    pub s: f64,
    #[serde(with = "t_param_serde")]
    pub t: TParam,
}

impl PredictedTriple {
    pub fn from_triple(o: &OutcomeTriple) -> Self {
        PredictedTriple { p: o.p, s: o.s, t: o.t }
    }
}

mod t_param_serde {
    use super::TParam;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(t: &TParam, ser: S) -> Result<S::Ok, S::Error> {
        t.as_div().serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<TParam, D::Error> {
        Ok(match Option::<f64>::deserialize(de)? {
            Some(v) => TParam::Div(v),
            None => TParam::Kill,
        })
    }
}

/// Step families. Parameters are the plan-time choices; state-dependent
/// quantities are rederived against the current state when a step runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepKind {
    /// T1 with success product `s·p = sigma`.
    T1 { sigma: f64 },
    /// T2 with success probability `p`.
    T2 { p: f64 },
    /// Deterministic lowering of the party's component to `target`.
    DetLower { target: f64 },
    /// Probability-one removal of the party (component goes to zero).
    Disentangle,
    /// Zeroth-component filter with normalization `lambda`.
    X0Filter { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepRepr", into = "StepRepr")]
pub struct ProtocolStep {
    pub party: usize,
    pub kind: StepKind,
    pub predicted: PredictedTriple,
}

#[derive(Serialize, Deserialize)]
struct StepRepr {
    party: usize,
    kind: String,
    #[serde(default)]
    params: ParamsRepr,
    predicted: PredictedTriple,
}

#[derive(Serialize, Deserialize, Default)]
struct ParamsRepr {
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
}

impl From<ProtocolStep> for StepRepr {
    fn from(s: ProtocolStep) -> Self {
        let mut params = ParamsRepr::default();
        let kind = match s.kind {
            StepKind::T1 { sigma } => {
                params.sigma = Some(sigma);
                "T1"
            }
            StepKind::T2 { p } => {
                params.p = Some(p);
                "T2"
            }
            StepKind::DetLower { target } => {
                params.target = Some(target);
                "DET_LOWER"
            }
            StepKind::Disentangle => "DISENTANGLE",
            StepKind::X0Filter { lambda } => {
                params.lambda = Some(lambda);
                "X0_FILTER"
            }
        };
        StepRepr { party: s.party, kind: kind.into(), params, predicted: s.predicted }
    }
}

impl TryFrom<StepRepr> for ProtocolStep {
    type Error = String;

    fn try_from(r: StepRepr) -> std::result::Result<Self, String> {
        let kind = match r.kind.as_str() {
            "T1" => StepKind::T1 { sigma: r.params.sigma.ok_or("T1 step needs params.sigma")? },
            "T2" => StepKind::T2 { p: r.params.p.ok_or("T2 step needs params.p")? },
            "DET_LOWER" => StepKind::DetLower {
                target: r.params.target.ok_or("DET_LOWER step needs params.target")?,
            },
            "DISENTANGLE" => StepKind::Disentangle,
            "X0_FILTER" => StepKind::X0Filter {
                lambda: r.params.lambda.ok_or("X0_FILTER step needs params.lambda")?,
            },
            other => return Err(format!("unknown step kind {other:?}")),
        };
        Ok(ProtocolStep { party: r.party, kind, predicted: r.predicted })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr", into = "PlanRepr")]
pub struct ProtocolPlan {
    pub steps: Vec<ProtocolStep>,
    /// Product of the success-outcome probabilities of all steps.
    pub predicted_success: f64,
    pub target: WClassComponents,
}

#[derive(Serialize, Deserialize)]
struct PlanRepr {
    steps: Vec<ProtocolStep>,
    predicted_success: f64,
    target: StateRecord,
}

impl From<ProtocolPlan> for PlanRepr {
    fn from(p: ProtocolPlan) -> Self {
        PlanRepr {
            steps: p.steps,
            predicted_success: p.predicted_success,
            target: StateRecord::from(&p.target),
        }
    }
}

impl TryFrom<PlanRepr> for ProtocolPlan {
    type Error = String;

    fn try_from(r: PlanRepr) -> std::result::Result<Self, String> {
        let target = r.target.to_components().map_err(|e| e.to_string())?;
        Ok(ProtocolPlan { steps: r.steps, predicted_success: r.predicted_success, target })
    }
}

/// One expanded outcome of a step against a concrete state.
#[derive(Debug, Clone)]
pub(crate) struct StepOutcome {
    pub p: f64,
    pub s: f64,
    pub t: TParam,
    pub next: WClassComponents,
    /// Whether the plan continues along this outcome.
    pub continues: bool,
}

fn step_error(round: usize, e: Error) -> Error {
    Error::StepPreconditionViolated { round, reason: e.to_string() }
}

/// Expands every outcome of `step` on `state`. The first outcome is the one
/// the plan follows; disentangle steps continue on both.
pub(crate) fn step_outcomes(
    state: &WClassComponents,
    step: &ProtocolStep,
    round: usize,
) -> Result<Vec<StepOutcome>> {
    let k = step.party;
    match step.kind {
        StepKind::T1 { sigma } => {
            let (_, triples) = make_t1(state, k, sigma).map_err(|e| step_error(round, e))?;
            triples
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    Ok(StepOutcome {
                        p: o.p,
                        s: o.s,
                        t: o.t,
                        next: apply_update(state, k, o).map_err(|e| step_error(round, e))?,
                        continues: i == 0,
                    })
                })
                .collect()
        }
        StepKind::T2 { p } => {
            let (_, triples) = make_t2(state, k, p).map_err(|e| step_error(round, e))?;
            triples
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    Ok(StepOutcome {
                        p: o.p,
                        s: o.s,
                        t: o.t,
                        next: apply_update(state, k, o).map_err(|e| step_error(round, e))?,
                        continues: i == 0,
                    })
                })
                .collect()
        }
        StepKind::DetLower { target } => {
            let next = deterministic_lower(state, k, target).map_err(|e| step_error(round, e))?;
            let t = if target > 0.0 { TParam::Div(state.get(k) / target) } else { TParam::Kill };
            Ok(vec![StepOutcome { p: 1.0, s: 1.0, t, next, continues: true }])
        }
        StepKind::Disentangle => {
            let next = disentangle_in_place(state, k);
            let half = StepOutcome {
                p: 0.5,
                s: 1.0,
                t: TParam::Kill,
                next: next.clone(),
                continues: true,
            };
            Ok(vec![half.clone(), StepOutcome { next, ..half }])
        }
        StepKind::X0Filter { .. } => {
            let f = zero_x0_filter_for(state, k).map_err(|e| step_error(round, e))?;
            let x0 = state.x0();
            if x0 <= ZERO_CUT {
                return Ok(vec![StepOutcome {
                    p: 1.0,
                    s: 1.0,
                    t: TParam::Div(1.0),
                    next: f.post,
                    continues: true,
                }]);
            }
            let scale = 1.0 - x0;
            let success = StepOutcome {
                p: f.success_p,
                s: 1.0 / scale,
                t: TParam::Div(scale),
                next: f.post,
                continues: true,
            };
            // Failure completion is the rank-one operator killing party k;
            // its amplitudes follow in closed form.
            let lambda = f.lambda;
            let g = (x0 / state.get(k)).sqrt();
            let rest = 1.0 - lambda;
            let b0 = (rest * x0).sqrt() + lambda * g * (state.get(k) / rest).sqrt();
            let mut weights: Vec<f64> = (1..=state.n())
                .map(|j| if j == k { 0.0 } else { rest * state.get(j) })
                .collect();
            let total = b0 * b0 + weights.iter().sum::<f64>();
            for w in &mut weights {
                *w /= total;
            }
            let p_fail = 1.0 - f.success_p;
            let fail = StepOutcome {
                p: p_fail,
                s: rest / p_fail,
                t: TParam::Kill,
                next: WClassComponents::new(weights)?,
                continues: false,
            };
            Ok(vec![success, fail])
        }
    }
}

/// State reached by following every step's success outcome.
pub fn success_path_state(x: &WClassComponents, steps: &[ProtocolStep]) -> Result<WClassComponents> {
    let mut cur = x.clone();
    for (i, step) in steps.iter().enumerate() {
        let outs = step_outcomes(&cur, step, i + 1)?;
        cur = outs.into_iter().next().expect("steps expand to at least one outcome").next;
    }
    Ok(cur)
}

/// Truncates a plan to its operator-realizable prefix (everything before the
/// first deterministic-lowering step), retargeted at the prefix's own
/// success state. The deterministic tail contributes a unit factor, so the
/// prefix keeps the full plan's predicted success probability.
pub fn probabilistic_prefix(x: &WClassComponents, plan: &ProtocolPlan) -> Result<ProtocolPlan> {
    let cut = plan
        .steps
        .iter()
        .position(|s| matches!(s.kind, StepKind::DetLower { .. }))
        .unwrap_or(plan.steps.len());
    let steps: Vec<ProtocolStep> = plan.steps[..cut].to_vec();
    let target = success_path_state(x, &steps)?;
    Ok(ProtocolPlan { steps, predicted_success: plan.predicted_success, target })
}

/// Synthesizes a plan converting `x` into `y` and its success probability.
///
/// Handles degenerate targets by disentangling zero-weight parties first and
/// filtering away the zeroth component when the target carries none. The
/// returned probability equals the closed-form lower bound exactly: the
/// interleaved pack-equalization probabilities cancel telescopically, so
/// only the sorted sub-threshold ratio products survive.
pub fn plan_transform(x: &WClassComponents, y: &WClassComponents) -> Result<ProtocolPlan> {
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch { left: x.n(), right: y.n() });
    }
    if x == y {
        return Ok(ProtocolPlan { steps: vec![], predicted_success: 1.0, target: y.clone() });
    }
    if x.entangled_parties() <= 1 {
        return Err(Error::ProductState);
    }
    let n = x.n();
    for k in 1..=n {
        if y.get(k) > ZERO_CUT && x.get(k) <= ZERO_CUT {
            return Err(Error::TargetUnreachable { party: k });
        }
    }

    let mut cur = x.clone();
    let mut steps: Vec<ProtocolStep> = Vec::new();
    let mut prob = 1.0;

    // Zero-weight target parties disentangle with probability one.
    for k in 1..=n {
        if y.get(k) <= ZERO_CUT && cur.get(k) > ZERO_CUT {
            steps.push(ProtocolStep {
                party: k,
                kind: StepKind::Disentangle,
                predicted: PredictedTriple { p: 1.0, s: 1.0, t: TParam::Kill },
            });
            cur = disentangle_in_place(&cur, k);
        }
    }

    // Remove the zeroth component when the target has none.
    let y0 = y.x0();
    if y0 <= ZERO_CUT && cur.x0() > ZERO_CUT {
        let f = zero_x0_filter(&cur)?;
        let scale = 1.0 - cur.x0();
        steps.push(ProtocolStep {
            party: f.acting_party,
            kind: StepKind::X0Filter { lambda: f.lambda },
            predicted: PredictedTriple {
                p: f.success_p,
                s: 1.0 / scale,
                t: TParam::Div(scale),
            },
        });
        prob *= f.success_p;
        cur = f.post;
    }

    // Surviving parties sorted by current ratio ascending.
    let survivors: Vec<usize> = (1..=n).filter(|&k| y.get(k) > ZERO_CUT).collect();
    if !survivors.is_empty() {
        let mut order = survivors.clone();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (cur.get(a) / y.get(a), cur.get(b) / y.get(b));
            ra.partial_cmp(&rb).unwrap().then(a.cmp(&b))
        });
        let r0_of = |c: &WClassComponents| if y0 > ZERO_CUT { c.x0() / y0 } else { 0.0 };

        // T1 rounds: equalize every ratio below the zeroth ratio against it,
        // walking the sorted positions from the threshold downward. The
        // first-round split of sigma into (s, p) is immaterial for the total.
        let r0 = r0_of(&cur);
        let below = order
            .iter()
            .filter(|&&k| cur.get(k) / y.get(k) < r0 - RATIO_TIE)
            .count();
        let mut pack = 1;
        if below > 0 {
            pack = below;
            for pos in (0..below).rev() {
                let k = order[pos];
                let sigma = (cur.get(k) / y.get(k)) / r0_of(&cur);
                if sigma >= 1.0 - RATIO_TIE {
                    continue;
                }
                let (_, triples) = make_t1(&cur, k, sigma)?;
                let succ = triples[0];
                steps.push(ProtocolStep {
                    party: k,
                    kind: StepKind::T1 { sigma },
                    predicted: PredictedTriple::from_triple(&succ),
                });
                prob *= succ.p;
                cur = apply_update(&cur, k, &succ)?;
            }
        }

        // T2 rounds: fold low parties into the pack until the pack can be
        // lifted to the target in one final measurement. Party `l` can host
        // the final T2 exactly when the lift keeps its own component at or
        // above target: rho·(1 - y_l) >= 1 - x_l.
        loop {
            let anchor = order[0];
            let rho = cur.get(anchor) / y.get(anchor);
            if rho >= 1.0 - RATIO_TIE || pack >= order.len() {
                break;
            }
            let k = order[pack];
            let (xk, yk) = (cur.get(k), y.get(k));
            if rho * (1.0 - yk) >= (1.0 - xk) - NORM_EPS {
                let (_, triples) = make_t2(&cur, k, rho)?;
                let succ = triples[0];
                steps.push(ProtocolStep {
                    party: k,
                    kind: StepKind::T2 { p: rho },
                    predicted: PredictedTriple::from_triple(&succ),
                });
                prob *= rho;
                cur = apply_update(&cur, k, &succ)?;
                break;
            }
            let p = 1.0 - yk * (xk / yk - rho);
            if p < 1.0 - RATIO_TIE {
                let (_, triples) = make_t2(&cur, k, p)?;
                let succ = triples[0];
                steps.push(ProtocolStep {
                    party: k,
                    kind: StepKind::T2 { p },
                    predicted: PredictedTriple::from_triple(&succ),
                });
                prob *= p;
                cur = apply_update(&cur, k, &succ)?;
            }
            pack += 1;
        }

        // Trims: deterministic lowering of any leftover excess, emitted last
        // so the operator-checkable prefix is maximal.
        for &k in &survivors {
            let (xk, yk) = (cur.get(k), y.get(k));
            if xk > yk + RATIO_TIE {
                steps.push(ProtocolStep {
                    party: k,
                    kind: StepKind::DetLower { target: yk },
                    predicted: PredictedTriple { p: 1.0, s: 1.0, t: TParam::Div(xk / yk) },
                });
                cur = deterministic_lower(&cur, k, yk)?;
            }
        }
    }

    debug_assert!(
        cur.approx_eq(y, LEAF_MATCH),
        "synthesized plan does not land on the target: {:?} vs {:?}",
        cur,
        y
    );
    Ok(ProtocolPlan { steps, predicted_success: prob.min(1.0), target: y.clone() })
}

/// Edge classes of a protocol tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeClass {
    /// At least one descendant leaf matches the target.
    Intermediate,
    Failure,
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeEdge {
    pub p: f64,
    pub s: f64,
    #[serde(with = "t_param_serde")]
    pub t: TParam,
    pub class: EdgeClass,
    pub child: usize,
}

impl TreeEdge {
    /// `s·t` with killed outcomes treated as the infinite limit.
    pub fn st_product(&self) -> f64 {
        self.t.st_product(self.s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeNode {
    #[serde(serialize_with = "serialize_components")]
    pub state: WClassComponents,
    pub edges: Vec<TreeEdge>,
}

fn serialize_components<S: serde::Serializer>(
    c: &WClassComponents,
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    c.components().serialize(ser)
}

/// Rooted outcome tree of a plan. Node 0 is the root; children always carry
/// larger indices than their parent.
#[derive(Debug, Clone, Serialize)]
pub struct ProtocolTree {
    pub nodes: Vec<TreeNode>,
    #[serde(serialize_with = "serialize_components")]
    pub target: WClassComponents,
}

impl ProtocolTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    fn is_leaf(&self, id: usize) -> bool {
        self.nodes[id].edges.is_empty()
    }

    fn leaf_matches(&self, id: usize) -> bool {
        self.nodes[id].state.approx_eq(&self.target, LEAF_MATCH)
    }

    /// Per-node flag: some descendant leaf (or the node itself) matches the
    /// target. Valid because children follow parents in index order.
    fn success_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            flags[id] = if self.is_leaf(id) {
                self.leaf_matches(id)
            } else {
                self.nodes[id].edges.iter().any(|e| flags[e.child])
            };
        }
        flags
    }
}

fn expand_tree(
    nodes: &mut Vec<TreeNode>,
    state: WClassComponents,
    steps: &[ProtocolStep],
    round: usize,
) -> Result<usize> {
    let id = nodes.len();
    nodes.push(TreeNode { state: state.clone(), edges: vec![] });
    if let Some(step) = steps.first() {
        let mut edges = Vec::new();
        for out in step_outcomes(&state, step, round)? {
            let child = if out.continues {
                expand_tree(nodes, out.next, &steps[1..], round + 1)?
            } else {
                let cid = nodes.len();
                nodes.push(TreeNode { state: out.next, edges: vec![] });
                cid
            };
            edges.push(TreeEdge { p: out.p, s: out.s, t: out.t, class: EdgeClass::Failure, child });
        }
        nodes[id].edges = edges;
    }
    Ok(id)
}

/// Expands a plan into its full outcome tree rooted at `x`, with both
/// outcomes of every step realized and edges classified by whether a
/// matching leaf sits below them.
pub fn build_tree(x: &WClassComponents, plan: &ProtocolPlan) -> Result<ProtocolTree> {
    if x.n() != plan.target.n() {
        return Err(Error::DimensionMismatch { left: x.n(), right: plan.target.n() });
    }
    let mut nodes = Vec::new();
    expand_tree(&mut nodes, x.clone(), &plan.steps, 1)?;
    let mut tree = ProtocolTree { nodes, target: plan.target.clone() };
    let flags = tree.success_flags();
    for node in &mut tree.nodes {
        for edge in &mut node.edges {
            edge.class = if flags[edge.child] { EdgeClass::Intermediate } else { EdgeClass::Failure };
        }
    }
    Ok(tree)
}

/// Total probability of reaching the target: the sum over all paths of
/// intermediate edges of the product of edge probabilities.
pub fn tree_probability(tree: &ProtocolTree) -> f64 {
    let mut value = vec![0.0f64; tree.nodes.len()];
    for id in (0..tree.nodes.len()).rev() {
        value[id] = if tree.is_leaf(id) {
            if tree.leaf_matches(id) {
                1.0
            } else {
                0.0
            }
        } else {
            tree.nodes[id]
                .edges
                .iter()
                .filter(|e| e.class == EdgeClass::Intermediate)
                .map(|e| e.p * value[e.child])
                .sum()
        };
    }
    value[0]
}

/// Monte Carlo estimate of a plan's success probability.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples each step's outcome with its recorded success probability.
///
/// Every trial draws from a generator keyed by `(seed, trial index)`, so the
/// estimate is bitwise reproducible and independent of evaluation order.
pub fn monte_carlo(
    x: &WClassComponents,
    plan: &ProtocolPlan,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    use rand::Rng;
    use rand::SeedableRng;

    if trials == 0 {
        return Err(Error::PreconditionViolated("trials must be at least 1".into()));
    }
    // Dry-run the success path to surface plan/state mismatches up front.
    success_path_state(x, &plan.steps)?;
    let mut successes = 0u64;
    for trial in 0..trials {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(trial_seed(seed, trial));
        let ok = plan
            .steps
            .iter()
            .all(|step| step.predicted.p >= 1.0 || rng.gen::<f64>() < step.predicted.p);
        if ok {
            successes += 1;
        }
    }
    let estimate = successes as f64 / trials as f64;
    let stderr = (estimate * (1.0 - estimate) / trials as f64).sqrt();
    Ok(McEstimate { estimate, stderr })
}

/// A failure edge hanging off the success structure while still carrying
/// weight in the critical (minimum-ratio) component.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LeakyEdge {
    pub node: usize,
    pub edge: usize,
    pub weight: f64,
}

/// Bookkeeping residual of the critical component at one internal node.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NodeResidual {
    pub node: usize,
    pub residual: f64,
}

/// Audit of the two necessary conditions for a tree to convert at the
/// minimum-ratio rate: failure edges on the success structure must carry no
/// critical-component weight, and the critical component must balance
/// exactly across the intermediate edges of every internal node.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub critical_party: usize,
    pub leaky_failure_edges: Vec<LeakyEdge>,
    pub balance_residuals: Vec<NodeResidual>,
}

impl AuditReport {
    pub fn max_residual(&self) -> f64 {
        self.balance_residuals.iter().fold(0.0f64, |acc, r| acc.max(r.residual))
    }

    /// Empty report: a necessary condition for converting at the
    /// minimum-ratio rate.
    pub fn is_clean(&self) -> bool {
        self.leaky_failure_edges.is_empty() && self.max_residual() <= NORM_EPS
    }
}

/// Audits a classified tree against the target `y`. The critical party is
/// the minimum finite ratio of (root state, y).
pub fn audit_optimality(tree: &ProtocolTree, y: &WClassComponents) -> Result<AuditReport> {
    let profile = ratio_profile(&tree.root().state, y)?;
    let (critical, _) = profile.min_finite().ok_or_else(|| {
        Error::PreconditionViolated("target has no entangled party to audit".into())
    })?;
    let flags = tree.success_flags();
    let mut leaky = Vec::new();
    let mut residuals = Vec::new();
    for (id, node) in tree.nodes.iter().enumerate() {
        if node.edges.is_empty() {
            continue;
        }
        let x1 = node.state.get(critical);
        let mut avg = 0.0;
        for (ei, edge) in node.edges.iter().enumerate() {
            let child_x1 = tree.nodes[edge.child].state.get(critical);
            if edge.class == EdgeClass::Intermediate {
                avg += edge.p * child_x1;
            } else if flags[id] && child_x1 > NORM_EPS {
                leaky.push(LeakyEdge { node: id, edge: ei, weight: child_x1 });
            }
        }
        residuals.push(NodeResidual { node: id, residual: (x1 - avg).abs() });
    }
    Ok(AuditReport { critical_party: critical, leaky_failure_edges: leaky, balance_residuals: residuals })
}

/// True when some success branch has `s·t >= 1` on every edge (killed
/// outcomes count as the infinite limit). A tree without edges passes
/// vacuously.
pub fn star_branch_check(tree: &ProtocolTree) -> bool {
    if tree.nodes.len() == 1 {
        return true;
    }
    let mut ok = vec![false; tree.nodes.len()];
    for id in (0..tree.nodes.len()).rev() {
        ok[id] = if tree.is_leaf(id) {
            tree.leaf_matches(id)
        } else {
            tree.nodes[id]
                .edges
                .iter()
                .any(|e| e.st_product() >= 1.0 - RATIO_TIE && ok[e.child])
        };
    }
    ok[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::lower_bound;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn state(v: &[f64]) -> WClassComponents {
        WClassComponents::new(v.to_vec()).unwrap()
    }

    fn worked_pair() -> (WClassComponents, WClassComponents) {
        (state(&[0.3, 0.3, 0.3]), state(&[0.32, 0.33, 0.30]))
    }

    fn simple_pair() -> (WClassComponents, WClassComponents) {
        (state(&[0.2, 0.3, 0.4]), state(&[0.25, 0.3, 0.35]))
    }

    #[test]
    fn plan_simple_pair_saturates_upper_bound() {
        let (x, y) = simple_pair();
        let plan = plan_transform(&x, &y).unwrap();
        close(plan.predicted_success, 0.8, 1e-12);
        let end = success_path_state(&x, &plan.steps).unwrap();
        assert!(end.approx_eq(&y, 1e-9));
    }

    #[test]
    fn plan_identity_is_empty() {
        let x = state(&[0.2, 0.3, 0.4]);
        let plan = plan_transform(&x, &x).unwrap();
        assert!(plan.steps.is_empty());
        close(plan.predicted_success, 1.0, 0.0);
    }

    #[test]
    fn plan_worked_pair_matches_product_formula() {
        let (x, y) = worked_pair();
        let plan = plan_transform(&x, &y).unwrap();
        let expected = 1.0 * (0.9375 / 2.0) * ((0.30 / 0.33) / 2.0);
        close(plan.predicted_success, expected, 1e-12);
        close(plan.predicted_success, 0.2130682, 1e-6);
        let end = success_path_state(&x, &plan.steps).unwrap();
        assert!(end.approx_eq(&y, 1e-9));
    }

    #[test]
    fn plan_agrees_with_lower_bound() {
        for (x, y) in [simple_pair(), worked_pair()] {
            let plan = plan_transform(&x, &y).unwrap();
            let report = lower_bound(&x, &y).unwrap();
            close(plan.predicted_success, report.lower, 1e-12);
        }
    }

    #[test]
    fn plan_rejects_bad_pairs() {
        let x = state(&[0.2, 0.3, 0.4]);
        let short = state(&[0.5, 0.5]);
        assert!(matches!(plan_transform(&x, &short), Err(Error::DimensionMismatch { .. })));

        let product = state(&[0.5, 0.0, 0.0]);
        assert!(matches!(plan_transform(&product, &x), Err(Error::ProductState)));

        let dead = state(&[0.5, 0.0, 0.3]);
        let alive = state(&[0.3, 0.3, 0.3]);
        assert!(matches!(
            plan_transform(&dead, &alive),
            Err(Error::TargetUnreachable { party: 2 })
        ));
    }

    #[test]
    fn plan_handles_zero_target_party() {
        let x = state(&[0.2, 0.3, 0.4]);
        let y = state(&[0.3, 0.0, 0.4]);
        let plan = plan_transform(&x, &y).unwrap();
        assert!(matches!(plan.steps[0].kind, StepKind::Disentangle));
        assert_eq!(plan.steps[0].party, 2);
        let end = success_path_state(&x, &plan.steps).unwrap();
        assert!(end.approx_eq(&y, 1e-9));
    }

    #[test]
    fn plan_handles_zero_target_x0() {
        // Distillation to W3: filter first, then lift the smallest ratio.
        let x = state(&[0.2, 0.2, 0.5]);
        let w3 = state(&[1.0 / 3.0; 3]);
        let plan = plan_transform(&x, &w3).unwrap();
        assert!(matches!(plan.steps[0].kind, StepKind::X0Filter { .. }));
        assert_eq!(plan.steps[0].party, 3);
        close(plan.predicted_success, 0.385046, 1e-6);
        let end = success_path_state(&x, &plan.steps).unwrap();
        assert!(end.approx_eq(&w3, 1e-9));
    }

    #[test]
    fn tree_of_empty_plan_is_single_node() {
        let x = state(&[0.2, 0.3, 0.4]);
        let plan = plan_transform(&x, &x).unwrap();
        let tree = build_tree(&x, &plan).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        close(tree_probability(&tree), 1.0, 0.0);
        assert!(star_branch_check(&tree));
    }

    #[test]
    fn tree_of_single_t1_step() {
        use crate::measurement::make_t1;

        let x = state(&[0.3, 0.3, 0.3]);
        let (_, triples) = make_t1(&x, 3, 0.5).unwrap();
        let target = apply_update(&x, 3, &triples[0]).unwrap();
        let plan = ProtocolPlan {
            steps: vec![ProtocolStep {
                party: 3,
                kind: StepKind::T1 { sigma: 0.5 },
                predicted: PredictedTriple::from_triple(&triples[0]),
            }],
            predicted_success: 0.65,
            target,
        };
        let tree = build_tree(&x, &plan).unwrap();
        assert_eq!(tree.root().edges.len(), 2);
        close(tree.root().edges[0].p, 0.65, 1e-12);
        close(tree.root().edges[1].p, 0.35, 1e-12);
        assert_eq!(tree.root().edges[0].class, EdgeClass::Intermediate);
        assert_eq!(tree.root().edges[1].class, EdgeClass::Failure);
        close(tree_probability(&tree), 0.65, 1e-12);
        // the lone success edge has s·t = sigma < 1
        assert!(!star_branch_check(&tree));
    }

    #[test]
    fn tree_probability_of_two_step_chain() {
        use crate::measurement::{make_t1, make_t2};

        let x = state(&[0.3, 0.3, 0.3]);
        let (_, t1s) = make_t1(&x, 3, 0.5).unwrap();
        let mid = apply_update(&x, 3, &t1s[0]).unwrap();
        let (_, t2s) = make_t2(&mid, 1, 0.9).unwrap();
        let target = apply_update(&mid, 1, &t2s[0]).unwrap();
        let plan = ProtocolPlan {
            steps: vec![
                ProtocolStep {
                    party: 3,
                    kind: StepKind::T1 { sigma: 0.5 },
                    predicted: PredictedTriple::from_triple(&t1s[0]),
                },
                ProtocolStep {
                    party: 1,
                    kind: StepKind::T2 { p: 0.9 },
                    predicted: PredictedTriple::from_triple(&t2s[0]),
                },
            ],
            predicted_success: 0.585,
            target,
        };
        let tree = build_tree(&x, &plan).unwrap();
        close(tree_probability(&tree), 0.585, 1e-12);
    }

    #[test]
    fn tree_of_worked_pair_matches_prediction() {
        let (x, y) = worked_pair();
        let plan = plan_transform(&x, &y).unwrap();
        let tree = build_tree(&x, &plan).unwrap();
        close(tree_probability(&tree), plan.predicted_success, 1e-12);
        for node in &tree.nodes {
            if !node.edges.is_empty() {
                let total: f64 = node.edges.iter().map(|e| e.p).sum();
                close(total, 1.0, 1e-12);
            }
        }
    }

    #[test]
    fn monte_carlo_certain_plan() {
        let x = state(&[0.2, 0.3, 0.4]);
        let plan = plan_transform(&x, &x).unwrap();
        let mc = monte_carlo(&x, &plan, 1000, 7).unwrap();
        close(mc.estimate, 1.0, 0.0);
        close(mc.stderr, 0.0, 0.0);
    }

    #[test]
    fn monte_carlo_within_three_sigma() {
        let (x, y) = simple_pair();
        let plan = plan_transform(&x, &y).unwrap();
        let mc = monte_carlo(&x, &plan, 100_000, 42).unwrap();
        assert!((mc.estimate - 0.8).abs() <= 3.0 * mc.stderr.max(1e-9));

        let (x2, y2) = worked_pair();
        let plan2 = plan_transform(&x2, &y2).unwrap();
        let mc2 = monte_carlo(&x2, &plan2, 100_000, 42).unwrap();
        assert!((mc2.estimate - plan2.predicted_success).abs() <= 3.0 * mc2.stderr);
    }

    #[test]
    fn monte_carlo_reproducible() {
        let (x, y) = worked_pair();
        let plan = plan_transform(&x, &y).unwrap();
        let a = monte_carlo(&x, &plan, 20_000, 9).unwrap();
        let b = monte_carlo(&x, &plan, 20_000, 9).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    }

    #[test]
    fn audit_clean_on_optimal_tree() {
        let (x, y) = simple_pair();
        let plan = plan_transform(&x, &y).unwrap();
        let tree = build_tree(&x, &plan).unwrap();
        let report = audit_optimality(&tree, &y).unwrap();
        assert_eq!(report.critical_party, 1);
        assert!(report.is_clean(), "residual {}", report.max_residual());
    }

    #[test]
    fn audit_empty_tree() {
        let x = state(&[0.2, 0.3, 0.4]);
        let plan = plan_transform(&x, &x).unwrap();
        let tree = build_tree(&x, &plan).unwrap();
        let report = audit_optimality(&tree, &x).unwrap();
        assert!(report.balance_residuals.is_empty());
        assert!(report.is_clean());
    }

    #[test]
    fn audit_flags_suboptimal_final_step() {
        let (x, y) = simple_pair();
        let mut plan = plan_transform(&x, &y).unwrap();
        let last = plan.steps.len() - 1;
        if let StepKind::T2 { p } = plan.steps[last].kind {
            plan.steps[last].kind = StepKind::T2 { p: p - 0.05 };
        } else {
            panic!("expected a final T2 step");
        }
        let tree = build_tree(&x, &plan).unwrap();
        let report = audit_optimality(&tree, &y).unwrap();
        assert!(!report.is_clean());
    }

    #[test]
    fn star_branch_true_without_t1_rounds() {
        // r1 >= r0, so the plan is a T2 cascade plus trims.
        let x = state(&[0.3, 0.3, 0.3]);
        let y = state(&[0.32, 0.32, 0.2]);
        let plan = plan_transform(&x, &y).unwrap();
        assert!(plan.steps.iter().all(|s| !matches!(s.kind, StepKind::T1 { .. })));
        let tree = build_tree(&x, &plan).unwrap();
        assert!(star_branch_check(&tree));
        close(tree_probability(&tree), 0.9375, 1e-12);
    }

    #[test]
    fn star_branch_false_when_t1_equalization_needed() {
        // r1 < r0 <= r2: the opening T1 has s·t = r1/r0 < 1 on the only
        // success branch, so no branch passes even though the conversion
        // saturates the minimum-ratio bound.
        let (x, y) = simple_pair();
        let plan = plan_transform(&x, &y).unwrap();
        let tree = build_tree(&x, &plan).unwrap();
        close(tree_probability(&tree), 0.8, 1e-12);
        assert!(!star_branch_check(&tree));
    }

    #[test]
    fn plan_serde_round_trip() {
        let (x, y) = worked_pair();
        let plan = plan_transform(&x, &y).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        let back: ProtocolPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(plan, back);
    }

    #[test]
    fn plan_combines_disentangle_filter_and_cascade() {
        use crate::oracle::enumerate_protocol;

        // Target drops party 3 and carries no zeroth component, so the plan
        // leads with a disentangle and a filter before the T2 lift.
        let x = state(&[0.2, 0.3, 0.4]);
        let y = state(&[0.5, 0.5, 0.0]);
        let plan = plan_transform(&x, &y).unwrap();
        assert!(matches!(plan.steps[0].kind, StepKind::Disentangle));
        assert!(matches!(plan.steps[1].kind, StepKind::X0Filter { .. }));
        let end = success_path_state(&x, &plan.steps).unwrap();
        assert!(end.approx_eq(&y, 1e-9));
        // 0.5 is absorbed into x0 by the disentangle, the filter acts on
        // party 2 with lambda = 0.6/(1.1 + sqrt(0.85)), and the final T2
        // lifts at the pack ratio 0.8.
        let lambda = 0.6 / (1.1 + 0.85f64.sqrt());
        close(plan.predicted_success, lambda * 0.5 * 0.8, 1e-12);
        let oracle = enumerate_protocol(&x.to_statevector(), &plan).unwrap();
        close(oracle, plan.predicted_success, 1e-10);
    }

    #[test]
    fn tree_serializes_as_adjacency() {
        let (x, y) = simple_pair();
        let plan = plan_transform(&x, &y).unwrap();
        let tree = build_tree(&x, &plan).unwrap();
        let v: serde_json::Value = serde_json::to_value(&tree).unwrap();
        let nodes = v["nodes"].as_array().unwrap();
        assert_eq!(nodes.len(), tree.nodes.len());
        let edge = &nodes[0]["edges"][0];
        assert!(edge["p"].is_f64());
        assert!(edge["s"].is_f64());
        assert!(edge["class"].is_string());
        assert!(edge["child"].is_u64());
    }

    #[test]
    fn prefix_strips_trailing_trims() {
        let x = state(&[0.3, 0.3, 0.3]);
        let y = state(&[0.32, 0.32, 0.2]);
        let plan = plan_transform(&x, &y).unwrap();
        assert!(plan.steps.iter().any(|s| matches!(s.kind, StepKind::DetLower { .. })));
        let prefix = probabilistic_prefix(&x, &plan).unwrap();
        assert!(prefix.steps.iter().all(|s| !matches!(s.kind, StepKind::DetLower { .. })));
        close(prefix.predicted_success, plan.predicted_success, 0.0);
    }
}
