//! Interim correlated rationalizability by iterated elimination.
//!
//! A behavior map assigns every tracked characteristic-belief pair a
//! nonempty set of permitted actions. One elimination round keeps, at each
//! pair, exactly the actions that are a best reply to *some* conjecture in
//! which every world's population plays inside the current map; iterating
//! from full availability yields a decreasing sequence whose fixed point is
//! the rationalizable correspondence. The fixed point is also the largest
//! map that reproduces itself under a round.
//!
//! For linear payoff oracles the existential question is decided exactly.
//! A conjecture contributes to expected payoffs only through the
//! belief-weighted mean aggregate it induces per state of nature, so the
//! search space collapses to one scaled action simplex per (state,
//! characteristic, belief) triple appearing in the belief's support. With a
//! single rival action the optimum over that product is separable and solved
//! in closed form; with several rivals the test becomes a small linear
//! feasibility program.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::game::{AggregateProfile, GameInstance, LinearPayoff, PayoffOracle};
use crate::numerics::{
    solve_feasibility, Feasibility, LinearConstraint, LinearFeasibilityProblem,
};
use crate::DECISION_TOL;

/// The computational form of a behavior correspondence: permitted actions per
/// tracked characteristic-belief pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorMap {
    pub sets: BTreeMap<(usize, usize), BTreeSet<usize>>,
}

impl BehaviorMap {
    /// Full availability at every registered pair of the game.
    pub fn full(g: &GameInstance) -> Self {
        let sets = g
            .registered_pairs()
            .into_iter()
            .map(|(c, b)| ((c, b), g.availability(c).iter().copied().collect()))
            .collect();
        Self { sets }
    }

    pub fn get(&self, c: usize, belief: usize) -> Option<&BTreeSet<usize>> {
        self.sets.get(&(c, belief))
    }

    /// Pointwise set containment on the shared domain.
    pub fn is_subset_of(&self, other: &BehaviorMap) -> bool {
        self.sets.iter().all(|(k, set)| {
            other.sets.get(k).map(|o| set.is_subset(o)).unwrap_or(false)
        })
    }

    pub fn validate(&self, g: &GameInstance) -> Result<(), IcrError> {
        for (&(c, belief), set) in &self.sets {
            if c >= g.n_characteristics() || belief >= g.n_beliefs() {
                return Err(IcrError::InvalidBehaviorMap(format!(
                    "pair ({c}, {belief}) out of range"
                )));
            }
            if set.is_empty() {
                return Err(IcrError::InvalidBehaviorMap(format!(
                    "empty action set at ({c}, {belief})"
                )));
            }
            if !set.iter().all(|&a| g.is_available(c, a)) {
                return Err(IcrError::InvalidBehaviorMap(format!(
                    "unavailable action permitted at ({c}, {belief})"
                )));
            }
        }
        Ok(())
    }
}

/// A conjecture backing a surviving action: the believed worlds with their
/// weights and, per world, an aggregate the population could produce while
/// playing inside the behavior map.
#[derive(Debug, Clone)]
pub struct ConjectureWitness {
    pub world_weights: Vec<(usize, f64)>,
    pub aggregates: Vec<(usize, AggregateProfile)>,
}

#[derive(Debug, Clone)]
pub struct BestReply {
    pub survives: bool,
    /// Set when the oracle is blackbox and the verdict came from sampling.
    pub approximate: bool,
    pub witness: Option<ConjectureWitness>,
}

#[derive(Debug, Clone)]
pub struct IcrSolution {
    /// The fixed point: the rationalizable action sets.
    pub survivors: BehaviorMap,
    /// Number of rounds that strictly changed the map.
    pub rounds: usize,
    /// `trace[0]` is the starting map; each later entry one round further.
    pub trace: Vec<BehaviorMap>,
    pub approximate: bool,
}

#[derive(Debug, Clone)]
pub struct SelfRationalizationCheck {
    pub is_fixed_point: bool,
    /// Actions a round would add: `(characteristic, belief, action)`.
    pub added: Vec<(usize, usize, usize)>,
    /// Actions a round would remove.
    pub removed: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Error)]
pub enum IcrError {
    #[error("action {action} unavailable to characteristic {characteristic}")]
    UnavailableAction { characteristic: usize, action: usize },
    #[error("invalid behavior map: {0}")]
    InvalidBehaviorMap(String),
    #[error("behavior map lacks an entry for pair ({0}, {1}) required by a conjecture")]
    MissingPair(usize, usize),
    #[error("empty survivor set at pair ({characteristic}, {belief}): solver bug or tolerance failure")]
    EmptySurvivors { characteristic: usize, belief: usize },
    #[error("elimination exceeded the theoretical round bound; map is not shrinking")]
    RoundLimitExceeded,
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

// ---------------------------------------------------------------------------
// Reduced conjecture space
// ---------------------------------------------------------------------------

/// One (state, characteristic, belief) group of a belief's support with its
/// total belief-weighted population mass.
#[derive(Debug, Clone)]
struct Group {
    state: usize,
    characteristic: usize,
    belief: usize,
    weight: f64,
}

/// Per-belief view of the conjecture space, independent of candidate action
/// and behavior map; computed once per solve.
#[derive(Debug, Clone)]
struct BeliefProfile {
    /// Total belief mass per state of nature.
    state_mass: Vec<(usize, f64)>,
    groups: Vec<Group>,
}

impl BeliefProfile {
    fn build(g: &GameInstance, belief: usize) -> Self {
        let mut state_mass: BTreeMap<usize, f64> = BTreeMap::new();
        let mut groups: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for (t, p) in g.beliefs[belief].support() {
            let s = g.type_space.sigma[t];
            *state_mass.entry(s).or_insert(0.0) += p;
            for atom in &g.type_space.tau[t] {
                if atom.weight > 0.0 {
                    *groups.entry((s, atom.characteristic, atom.belief)).or_insert(0.0) +=
                        p * atom.weight;
                }
            }
        }
        Self {
            state_mass: state_mass.into_iter().collect(),
            groups: groups
                .into_iter()
                .map(|((state, characteristic, belief), weight)| Group {
                    state,
                    characteristic,
                    belief,
                    weight,
                })
                .collect(),
        }
    }
}

struct SolveContext<'g> {
    g: &'g GameInstance,
    pairs: Vec<(usize, usize)>,
    profiles: BTreeMap<usize, BeliefProfile>,
}

impl<'g> SolveContext<'g> {
    fn new(g: &'g GameInstance) -> Self {
        let pairs = g.registered_pairs();
        let beliefs: BTreeSet<usize> = pairs.iter().map(|&(_, b)| b).collect();
        let profiles =
            beliefs.into_iter().map(|b| (b, BeliefProfile::build(g, b))).collect();
        Self { g, pairs, profiles }
    }

    fn profile(&self, belief: usize) -> &BeliefProfile {
        &self.profiles[&belief]
    }
}

/// Expected base-payoff difference of `a` over `a2` under the belief.
fn base_difference(lin: &LinearPayoff, profile: &BeliefProfile, c: usize, a: usize, a2: usize) -> f64 {
    profile
        .state_mass
        .iter()
        .map(|&(s, m)| m * (lin.base(c, a, s) - lin.base(c, a2, s)))
        .sum()
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// The per-world feasible-aggregate polytope as a feasibility-program
/// template: one variable per (population atom, permitted action), one
/// equality per atom pinning its total mass.
#[derive(Debug, Clone)]
pub struct PolytopeTemplate {
    /// `(characteristic, belief, action)` per variable.
    pub variables: Vec<(usize, usize, usize)>,
    pub problem: LinearFeasibilityProblem,
}

impl PolytopeTemplate {
    /// Map a feasible point of the template to the aggregate it induces.
    pub fn aggregate_of(&self, g: &GameInstance, point: &[f64]) -> AggregateProfile {
        let mut mu = AggregateProfile::zeros(g.n_characteristics(), g.n_actions());
        for (&(c, _, a), &m) in self.variables.iter().zip(point) {
            mu.add(c, a, m);
        }
        mu
    }
}

/// Build the feasible-aggregates polytope of world `t` under behavior map `b`.
pub fn feasible_aggregates_polytope(
    g: &GameInstance,
    t: usize,
    b: &BehaviorMap,
) -> Result<PolytopeTemplate, IcrError> {
    b.validate(g)?;
    let mut variables = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut equalities = Vec::new();
    let atoms = &g.type_space.tau[t];
    let mut rows: Vec<(usize, usize, f64)> = Vec::new(); // var range per atom
    for atom in atoms {
        let set = b
            .get(atom.characteristic, atom.belief)
            .ok_or(IcrError::MissingPair(atom.characteristic, atom.belief))?;
        let start = variables.len();
        for &a in set {
            variables.push((atom.characteristic, atom.belief, a));
            lower.push(0.0);
            upper.push(atom.weight);
        }
        rows.push((start, variables.len(), atom.weight));
    }
    for &(start, end, weight) in &rows {
        let mut row = vec![0.0; variables.len()];
        for cell in row.iter_mut().take(end).skip(start) {
            *cell = 1.0;
        }
        equalities.push(LinearConstraint::new(row, weight));
    }
    Ok(PolytopeTemplate {
        variables,
        problem: LinearFeasibilityProblem { lower, upper, equalities, inequalities: vec![] },
    })
}

/// Is `action` a best reply, for `(c, belief)`, to some conjecture consistent
/// with everyone playing inside `b`?
pub fn best_reply_feasible(
    g: &GameInstance,
    c: usize,
    belief: usize,
    action: usize,
    b: &BehaviorMap,
) -> Result<BestReply, IcrError> {
    b.validate(g)?;
    let profile = BeliefProfile::build(g, belief);
    let view = BeliefView { g, belief, profile: &profile };
    best_reply_inner(&view, c, action, b, true)
}

/// One elimination round: at every registered pair keep exactly the available
/// actions that are best replies to some `b`-consistent conjecture.
pub fn eliminate_round(g: &GameInstance, b: &BehaviorMap) -> Result<BehaviorMap, IcrError> {
    b.validate(g)?;
    let ctx = SolveContext::new(g);
    eliminate_round_inner(&ctx, b, &BTreeSet::new(), None)
}

/// Iterate elimination from full availability to the fixed point.
pub fn icr_solve(g: &GameInstance) -> Result<IcrSolution, IcrError> {
    solve_seeded(g, BehaviorMap::full(g), &BTreeSet::new())
}

/// Iterate elimination from an arbitrary seed. Pairs in `clamped` are frozen
/// at their seeded action sets and never re-evaluated; this realizes
/// hypotheses of the form "these players are assumed to play so-and-so".
pub fn solve_seeded(
    g: &GameInstance,
    seed: BehaviorMap,
    clamped: &BTreeSet<(usize, usize)>,
) -> Result<IcrSolution, IcrError> {
    seed.validate(g)?;
    let ctx = SolveContext::new(g);
    let approximate = !g.payoff.is_linear();
    let round_bound: usize = ctx
        .pairs
        .iter()
        .map(|&(c, _)| g.availability(c).len().saturating_sub(1))
        .sum::<usize>()
        + 2;
    let mut trace = vec![seed];
    let mut rounds = 0usize;
    loop {
        let current = trace.last().expect("nonempty");
        let next = eliminate_round_inner(&ctx, current, clamped, Some(current))?;
        if &next == current {
            break;
        }
        rounds += 1;
        if rounds > round_bound {
            return Err(IcrError::RoundLimitExceeded);
        }
        trace.push(next);
    }
    Ok(IcrSolution {
        survivors: trace.last().expect("nonempty").clone(),
        rounds,
        trace,
        approximate,
    })
}

/// Does one round reproduce `b` exactly? Lists what a round would add or
/// remove otherwise.
pub fn check_self_rationalizing(
    g: &GameInstance,
    b: &BehaviorMap,
) -> Result<SelfRationalizationCheck, IcrError> {
    let next = eliminate_round(g, b)?;
    let mut added = Vec::new();
    let mut removed = Vec::new();
    for (&(c, belief), set) in &next.sets {
        let old = b.get(c, belief).cloned().unwrap_or_default();
        for &a in set.difference(&old) {
            added.push((c, belief, a));
        }
        for &a in old.difference(set) {
            removed.push((c, belief, a));
        }
    }
    Ok(SelfRationalizationCheck { is_fixed_point: added.is_empty() && removed.is_empty(), added, removed })
}

// ---------------------------------------------------------------------------
// Internals shared by the public operations
// ---------------------------------------------------------------------------

fn eliminate_round_inner(
    ctx: &SolveContext<'_>,
    b: &BehaviorMap,
    clamped: &BTreeSet<(usize, usize)>,
    clamp_source: Option<&BehaviorMap>,
) -> Result<BehaviorMap, IcrError> {
    type PairSets = Vec<((usize, usize), BTreeSet<usize>)>;
    let results: Result<PairSets, IcrError> = ctx
        .pairs
        .par_iter()
        .map(|&(c, belief)| {
            if clamped.contains(&(c, belief)) {
                let kept = clamp_source
                    .and_then(|m| m.get(c, belief).cloned())
                    .ok_or(IcrError::MissingPair(c, belief))?;
                return Ok(((c, belief), kept));
            }
            let view = BeliefView { g: ctx.g, belief, profile: ctx.profile(belief) };
            let mut kept = BTreeSet::new();
            for &a in ctx.g.availability(c) {
                // Witness construction is skipped in bulk rounds; callers who
                // need a certificate ask for one pair at a time.
                if best_reply_inner(&view, c, a, b, false)?.survives {
                    kept.insert(a);
                }
            }
            if kept.is_empty() {
                return Err(IcrError::EmptySurvivors { characteristic: c, belief });
            }
            Ok(((c, belief), kept))
        })
        .collect();
    Ok(BehaviorMap { sets: results?.into_iter().collect() })
}

/// Belief-scoped view used by the per-pair feasibility tests.
#[derive(Clone, Copy)]
struct BeliefView<'g> {
    g: &'g GameInstance,
    belief: usize,
    profile: &'g BeliefProfile,
}

fn best_reply_inner(
    view: &BeliefView<'_>,
    c: usize,
    action: usize,
    b: &BehaviorMap,
    want_witness: bool,
) -> Result<BestReply, IcrError> {
    let g = view.g;
    if !g.is_available(c, action) {
        return Err(IcrError::UnavailableAction { characteristic: c, action });
    }
    match &g.payoff {
        PayoffOracle::Linear(lin) => {
            best_reply_linear_scoped(view, lin, c, action, b, want_witness)
        }
        PayoffOracle::Blackbox(_) => best_reply_sampled(view, c, action, b),
    }
}

fn best_reply_linear_scoped(
    view: &BeliefView<'_>,
    lin: &LinearPayoff,
    c: usize,
    action: usize,
    b: &BehaviorMap,
    want_witness: bool,
) -> Result<BestReply, IcrError> {
    let g = view.g;
    let profile = view.profile;
    let rivals: Vec<usize> =
        g.availability(c).iter().copied().filter(|&a2| a2 != action).collect();

    let mut allowed: Vec<&BTreeSet<usize>> = Vec::with_capacity(profile.groups.len());
    for group in &profile.groups {
        let set = b
            .get(group.characteristic, group.belief)
            .ok_or(IcrError::MissingPair(group.characteristic, group.belief))?;
        allowed.push(set);
    }

    let coef = |group: &Group, rival: usize, a2: usize| -> f64 {
        lin.weight(c, action, group.state, group.characteristic, a2)
            - lin.weight(c, rival, group.state, group.characteristic, a2)
    };

    if rivals.is_empty() {
        let witness = want_witness.then(|| {
            let splits: Vec<BTreeMap<usize, f64>> = allowed
                .iter()
                .map(|set| BTreeMap::from([(*set.iter().next().expect("nonempty"), 1.0)]))
                .collect();
            witness_for_belief(view, &splits)
        });
        return Ok(BestReply { survives: true, approximate: false, witness });
    }

    if rivals.len() == 1 {
        let rival = rivals[0];
        let konst = base_difference(lin, profile, c, action, rival);
        let mut value = konst;
        let mut splits = want_witness.then(|| Vec::with_capacity(profile.groups.len()));
        for (gi, group) in profile.groups.iter().enumerate() {
            let best = allowed[gi]
                .iter()
                .copied()
                .map(|a2| (a2, coef(group, rival, a2)))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap().then(y.0.cmp(&x.0)))
                .expect("nonempty");
            if let Some(splits) = splits.as_mut() {
                splits.push(BTreeMap::from([(best.0, 1.0)]));
            }
            value += group.weight * best.1;
        }
        if value >= -DECISION_TOL {
            let witness = splits.map(|splits| witness_for_belief(view, &splits));
            return Ok(BestReply { survives: true, approximate: false, witness });
        }
        return Ok(BestReply { survives: false, approximate: false, witness: None });
    }

    let mut var_of: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (gi, group) in profile.groups.iter().enumerate() {
        let mut vars = Vec::new();
        for &a2 in allowed[gi] {
            vars.push((lower.len(), a2));
            lower.push(0.0);
            upper.push(group.weight);
        }
        var_of.push(vars);
    }
    let n_vars = lower.len();
    let mut equalities = Vec::with_capacity(profile.groups.len());
    for (gi, group) in profile.groups.iter().enumerate() {
        let mut row = vec![0.0; n_vars];
        for &(v, _) in &var_of[gi] {
            row[v] = 1.0;
        }
        equalities.push(LinearConstraint::new(row, group.weight));
    }
    let mut inequalities = Vec::with_capacity(rivals.len());
    for &rival in &rivals {
        let mut row = vec![0.0; n_vars];
        for (gi, group) in profile.groups.iter().enumerate() {
            for &(v, a2) in &var_of[gi] {
                row[v] = coef(group, rival, a2);
            }
        }
        inequalities.push(LinearConstraint::new(
            row,
            -base_difference(lin, profile, c, action, rival),
        ));
    }
    let problem = LinearFeasibilityProblem { lower, upper, equalities, inequalities };
    match solve_feasibility(&problem, DECISION_TOL)? {
        Feasibility::Feasible { point } => {
            let witness = want_witness.then(|| {
                let splits: Vec<BTreeMap<usize, f64>> = profile
                    .groups
                    .iter()
                    .enumerate()
                    .map(|(gi, group)| {
                        var_of[gi]
                            .iter()
                            .map(|&(v, a2)| (a2, (point[v] / group.weight).clamp(0.0, 1.0)))
                            .collect()
                    })
                    .collect();
                witness_for_belief(view, &splits)
            });
            Ok(BestReply { survives: true, approximate: false, witness })
        }
        Feasibility::Infeasible { .. } => {
            Ok(BestReply { survives: false, approximate: false, witness: None })
        }
    }
}

/// Per-world aggregates from per-group split fractions: every world with the
/// same state reuses its groups' fractions.
fn witness_for_belief(
    view: &BeliefView<'_>,
    splits: &[BTreeMap<usize, f64>],
) -> ConjectureWitness {
    let g = view.g;
    let group_index: BTreeMap<(usize, usize, usize), usize> = view
        .profile
        .groups
        .iter()
        .enumerate()
        .map(|(gi, gr)| ((gr.state, gr.characteristic, gr.belief), gi))
        .collect();
    let mut world_weights = Vec::new();
    let mut aggregates = Vec::new();
    for (t, p) in g.beliefs[view.belief].support() {
        world_weights.push((t, p));
        let s = g.type_space.sigma[t];
        let mut mu = AggregateProfile::zeros(g.n_characteristics(), g.n_actions());
        for atom in &g.type_space.tau[t] {
            if atom.weight <= 0.0 {
                continue;
            }
            let gi = group_index[&(s, atom.characteristic, atom.belief)];
            for (&a2, &frac) in &splits[gi] {
                mu.add(atom.characteristic, a2, atom.weight * frac);
            }
        }
        aggregates.push((t, mu));
    }
    ConjectureWitness { world_weights, aggregates }
}

/// Blackbox fallback: sample deterministic vertex and interior points of each
/// world polytope jointly and accept on the best sample. May over-eliminate.
fn best_reply_sampled(
    view: &BeliefView<'_>,
    c: usize,
    action: usize,
    b: &BehaviorMap,
) -> Result<BestReply, IcrError> {
    use rand::{Rng, SeedableRng};
    let g = view.g;
    let profile = view.profile;
    let mut allowed: Vec<Vec<usize>> = Vec::with_capacity(profile.groups.len());
    for group in &profile.groups {
        let set = b
            .get(group.characteristic, group.belief)
            .ok_or(IcrError::MissingPair(group.characteristic, group.belief))?;
        allowed.push(set.iter().copied().collect());
    }
    let rivals: Vec<usize> =
        g.availability(c).iter().copied().filter(|&a2| a2 != action).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
        (c as u64) << 40 | (view.belief as u64) << 20 | action as u64,
    );
    let n_samples = 96usize;
    for sample in 0..n_samples {
        let splits: Vec<BTreeMap<usize, f64>> = allowed
            .iter()
            .map(|set| {
                if sample == 0 {
                    BTreeMap::from([(*set.last().expect("nonempty"), 1.0)])
                } else if sample == 1 {
                    BTreeMap::from([(set[0], 1.0)])
                } else if sample % 2 == 0 {
                    // random vertex
                    let k = rng.gen_range(0..set.len());
                    BTreeMap::from([(set[k], 1.0)])
                } else {
                    // random interior point
                    let raw: Vec<f64> = set.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    set.iter().zip(raw).map(|(&a2, r)| (a2, r / total)).collect()
                }
            })
            .collect();
        let witness = witness_for_belief(view, &splits);
        let mut ok = true;
        for &rival in &rivals {
            let mut diff = 0.0;
            for ((t, p), (_, mu)) in witness.world_weights.iter().zip(&witness.aggregates) {
                let s = g.type_space.sigma[*t];
                diff += p
                    * (g.eval_payoff_unchecked(c, action, s, mu)
                        - g.eval_payoff_unchecked(c, rival, s, mu));
            }
            if diff < -DECISION_TOL {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(BestReply { survives: true, approximate: true, witness: Some(witness) });
        }
    }
    Ok(BestReply { survives: false, approximate: true, witness: None })
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

/// JSON form of a trace: one object per round mapping pairs to actions.
pub fn trace_json(g: &GameInstance, trace: &[BehaviorMap]) -> serde_json::Value {
    let rounds: Vec<serde_json::Value> = trace
        .iter()
        .enumerate()
        .map(|(round, map)| {
            let sets: Vec<serde_json::Value> = map
                .sets
                .iter()
                .map(|(&(c, belief), set)| {
                    serde_json::json!({
                        "characteristic": g.characteristics.labels[c],
                        "belief": belief,
                        "actions": set.iter().map(|&a| g.actions.labels[a].clone()).collect::<Vec<_>>(),
                    })
                })
                .collect();
            serde_json::json!({ "round": round, "sets": sets })
        })
        .collect();
    serde_json::Value::Array(rounds)
}

/// CSV summary: per pair and action, survival and the round of elimination.
pub fn summary_csv(g: &GameInstance, solution: &IcrSolution) -> String {
    let mut out = String::from("characteristic,belief,action,survives,eliminated_round\n");
    for &(c, belief) in solution.survivors.sets.keys() {
        for &a in g.availability(c) {
            let survives = solution.survivors.sets[&(c, belief)].contains(&a);
            let eliminated = solution
                .trace
                .iter()
                .position(|m| !m.sets[&(c, belief)].contains(&a))
                .map(|r| r.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                g.characteristics.labels[c], belief, g.actions.labels[a], survives, eliminated
            ));
        }
    }
    out
}
