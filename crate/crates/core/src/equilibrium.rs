//! Symmetric strategy profiles, Bayes–Nash verification, the complementarity
//! validators, and the monotone top/bottom iteration computing extremal
//! equilibria.
//!
//! Under the standing complementarity assumptions (availability sets are
//! sublattices, payoffs supermodular in actions with increasing differences
//! against the aggregate) the best-response iteration started from the
//! all-top profile decreases pointwise and its fixed point is the largest
//! equilibrium; dually from the bottom. Those fixed points coincide with the
//! pointwise join and meet of the rationalizable correspondence, which makes
//! the sandwich check below meaningful.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::game::{AggregateProfile, GameInstance, PayoffOracle};
use crate::icr::{self, BehaviorMap, IcrError, IcrSolution};
use crate::{DECISION_TOL, STRUCT_TOL};

/// A symmetric pure strategy: one action per tracked pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyProfile {
    pub zeta: BTreeMap<(usize, usize), usize>,
}

impl StrategyProfile {
    /// Everyone plays the largest available action.
    pub fn all_top(g: &GameInstance) -> Self {
        Self {
            zeta: g
                .registered_pairs()
                .into_iter()
                .map(|(c, b)| ((c, b), g.top_available(c)))
                .collect(),
        }
    }

    /// Everyone plays the smallest available action.
    pub fn all_bottom(g: &GameInstance) -> Self {
        Self {
            zeta: g
                .registered_pairs()
                .into_iter()
                .map(|(c, b)| ((c, b), g.bottom_available(c)))
                .collect(),
        }
    }

    /// Everyone plays `action` (must be available to every characteristic).
    pub fn constant(g: &GameInstance, action: usize) -> Result<Self, EquilibriumError> {
        let mut zeta = BTreeMap::new();
        for (c, b) in g.registered_pairs() {
            if !g.is_available(c, action) {
                return Err(EquilibriumError::UnavailableAction { characteristic: c, action });
            }
            zeta.insert((c, b), action);
        }
        Ok(Self { zeta })
    }

    pub fn get(&self, c: usize, belief: usize) -> Option<usize> {
        self.zeta.get(&(c, belief)).copied()
    }

    /// View as a singleton-valued behavior map.
    pub fn as_behavior_map(&self) -> BehaviorMap {
        BehaviorMap {
            sets: self.zeta.iter().map(|(&k, &a)| (k, BTreeSet::from([a]))).collect(),
        }
    }

    pub fn validate(&self, g: &GameInstance) -> Result<(), EquilibriumError> {
        for (&(c, _), &a) in &self.zeta {
            if !g.is_available(c, a) {
                return Err(EquilibriumError::UnavailableAction { characteristic: c, action: a });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum ComplementarityViolation {
    /// Availability set not closed under join or meet.
    NotASublattice { characteristic: usize, a: usize, b: usize },
    /// Supermodularity inequality fails on the base table.
    BaseNotSupermodular { characteristic: usize, state: usize, a: usize, b: usize },
    /// Supermodularity inequality fails on one weight column.
    WeightNotSupermodular {
        characteristic: usize,
        state: usize,
        a: usize,
        b: usize,
        other_characteristic: usize,
        other_action: usize,
    },
    /// The payoff-difference column is not monotone in the rival action.
    NotIncreasingDifferences {
        characteristic: usize,
        state: usize,
        hi: usize,
        lo: usize,
        other_characteristic: usize,
        other_lo: usize,
        other_hi: usize,
    },
    /// The supermodularity inequality fails at a sampled aggregate.
    SampledSupermodularity { characteristic: usize, state: usize, a: usize, b: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct SupermodularityReport {
    pub supermodular_ok: bool,
    pub sublattice_ok: bool,
    pub increasing_differences_ok: bool,
    /// True when the verdict came from aggregate samples (blackbox oracle).
    pub sampled: bool,
    pub violations: Vec<ComplementarityViolation>,
}

impl SupermodularityReport {
    pub fn all_ok(&self) -> bool {
        self.supermodular_ok && self.sublattice_ok && self.increasing_differences_ok
    }
}

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error("action {action} unavailable to characteristic {characteristic}")]
    UnavailableAction { characteristic: usize, action: usize },
    #[error("strategy profile lacks an entry for pair ({0}, {1})")]
    MissingPair(usize, usize),
    #[error("complementarity assumptions fail; rerun with the force variant to iterate anyway")]
    AssumptionsViolated(Box<SupermodularityReport>),
    #[error("argmax at pair ({characteristic}, {belief}) is not closed under join/meet; extremal selection undefined")]
    BrokenLatticeArgmax { characteristic: usize, belief: usize },
    #[error("best-response iteration exceeded the theoretical round bound")]
    RoundLimitExceeded,
    #[error("extremal iteration fixed point failed equilibrium verification")]
    VerificationFailed,
    #[error("increasing-differences validation requires a linear payoff oracle")]
    BlackboxUnsupported,
    #[error(transparent)]
    Icr(#[from] IcrError),
}

/// Check that availability sets are sublattices and that payoffs are
/// supermodular in actions. Linear oracles are checked symbolically on the
/// base table and each weight column, which covers every aggregate at once;
/// blackbox oracles are checked on the supplied aggregate samples and the
/// report is marked `sampled`.
pub fn check_supermodular(g: &GameInstance, mu_samples: &[AggregateProfile]) -> SupermodularityReport {
    let mut violations = Vec::new();
    let mut sublattice_ok = true;
    for c in 0..g.n_characteristics() {
        let set = g.availability(c);
        for &a in set {
            for &b in set {
                let j = g.actions.join_of(a, b);
                let m = g.actions.meet_of(a, b);
                if !set.contains(&j) || !set.contains(&m) {
                    sublattice_ok = false;
                    violations.push(ComplementarityViolation::NotASublattice {
                        characteristic: c,
                        a,
                        b,
                    });
                }
            }
        }
    }

    let mut supermodular_ok = true;
    let mut sampled = false;
    let incomparable: Vec<(usize, usize)> = {
        let na = g.n_actions();
        (0..na)
            .flat_map(|a| (a + 1..na).map(move |b| (a, b)))
            .filter(|&(a, b)| !g.actions.leq(a, b) && !g.actions.leq(b, a))
            .collect()
    };
    match &g.payoff {
        PayoffOracle::Linear(lin) => {
            for c in 0..g.n_characteristics() {
                for &(a, b) in &incomparable {
                    let j = g.actions.join_of(a, b);
                    let m = g.actions.meet_of(a, b);
                    for s in 0..g.n_states() {
                        let lhs = lin.base(c, j, s) + lin.base(c, m, s);
                        let rhs = lin.base(c, a, s) + lin.base(c, b, s);
                        if lhs < rhs - STRUCT_TOL {
                            supermodular_ok = false;
                            violations.push(ComplementarityViolation::BaseNotSupermodular {
                                characteristic: c,
                                state: s,
                                a,
                                b,
                            });
                        }
                        for c2 in 0..g.n_characteristics() {
                            for a2 in 0..g.n_actions() {
                                let lhs = lin.weight(c, j, s, c2, a2) + lin.weight(c, m, s, c2, a2);
                                let rhs = lin.weight(c, a, s, c2, a2) + lin.weight(c, b, s, c2, a2);
                                if lhs < rhs - STRUCT_TOL {
                                    supermodular_ok = false;
                                    violations.push(
                                        ComplementarityViolation::WeightNotSupermodular {
                                            characteristic: c,
                                            state: s,
                                            a,
                                            b,
                                            other_characteristic: c2,
                                            other_action: a2,
                                        },
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        PayoffOracle::Blackbox(_) => {
            sampled = true;
            for c in 0..g.n_characteristics() {
                for &(a, b) in &incomparable {
                    let j = g.actions.join_of(a, b);
                    let m = g.actions.meet_of(a, b);
                    for s in 0..g.n_states() {
                        for mu in mu_samples {
                            let lhs = g.eval_payoff_unchecked(c, j, s, mu)
                                + g.eval_payoff_unchecked(c, m, s, mu);
                            let rhs = g.eval_payoff_unchecked(c, a, s, mu)
                                + g.eval_payoff_unchecked(c, b, s, mu);
                            if lhs < rhs - STRUCT_TOL {
                                supermodular_ok = false;
                                violations.push(
                                    ComplementarityViolation::SampledSupermodularity {
                                        characteristic: c,
                                        state: s,
                                        a,
                                        b,
                                    },
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    SupermodularityReport {
        supermodular_ok,
        sublattice_ok,
        increasing_differences_ok: true,
        sampled,
        violations,
    }
}

/// Check increasing differences of the payoff in (own action, aggregate):
/// for every ordered own-action pair the weight-difference column must be
/// monotone in the rival action within each rival characteristic. Because
/// the stochastic order on aggregates is generated by characteristic-matched
/// monotone test functions, this is both sufficient and necessary.
pub fn check_increasing_differences(
    g: &GameInstance,
) -> Result<SupermodularityReport, EquilibriumError> {
    let PayoffOracle::Linear(lin) = &g.payoff else {
        return Err(EquilibriumError::BlackboxUnsupported);
    };
    let na = g.n_actions();
    let mut violations = Vec::new();
    let mut ok = true;
    for c in 0..g.n_characteristics() {
        for hi in 0..na {
            for lo in 0..na {
                if hi == lo || !g.actions.leq(lo, hi) {
                    continue;
                }
                for s in 0..g.n_states() {
                    for c2 in 0..g.n_characteristics() {
                        for a2lo in 0..na {
                            for a2hi in 0..na {
                                if a2lo == a2hi || !g.actions.leq(a2lo, a2hi) {
                                    continue;
                                }
                                let d_lo = lin.weight(c, hi, s, c2, a2lo)
                                    - lin.weight(c, lo, s, c2, a2lo);
                                let d_hi = lin.weight(c, hi, s, c2, a2hi)
                                    - lin.weight(c, lo, s, c2, a2hi);
                                if d_lo > d_hi + STRUCT_TOL {
                                    ok = false;
                                    violations.push(
                                        ComplementarityViolation::NotIncreasingDifferences {
                                            characteristic: c,
                                            state: s,
                                            hi,
                                            lo,
                                            other_characteristic: c2,
                                            other_lo: a2lo,
                                            other_hi: a2hi,
                                        },
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(SupermodularityReport {
        supermodular_ok: true,
        sublattice_ok: true,
        increasing_differences_ok: ok,
        sampled: false,
        violations,
    })
}

/// The aggregate a strategy profile produces at world `t`: each population
/// atom plays its assigned action.
pub fn induced_aggregate(
    g: &GameInstance,
    zeta: &StrategyProfile,
    t: usize,
) -> Result<AggregateProfile, EquilibriumError> {
    let mut mu = AggregateProfile::zeros(g.n_characteristics(), g.n_actions());
    for atom in &g.type_space.tau[t] {
        let a = zeta
            .get(atom.characteristic, atom.belief)
            .ok_or(EquilibriumError::MissingPair(atom.characteristic, atom.belief))?;
        mu.add(atom.characteristic, a, atom.weight);
    }
    Ok(mu)
}

fn all_aggregates(
    g: &GameInstance,
    zeta: &StrategyProfile,
) -> Result<Vec<AggregateProfile>, EquilibriumError> {
    (0..g.n_worlds()).map(|t| induced_aggregate(g, zeta, t)).collect()
}

fn best_response_with(
    g: &GameInstance,
    c: usize,
    belief: usize,
    aggregates: &[AggregateProfile],
) -> BTreeSet<usize> {
    let mut payoffs: Vec<(usize, f64)> = Vec::new();
    for &a in g.availability(c) {
        let mut v = 0.0;
        for (t, p) in g.beliefs[belief].support() {
            v += p * g.eval_payoff_unchecked(c, a, g.type_space.sigma[t], &aggregates[t]);
        }
        payoffs.push((a, v));
    }
    let best = payoffs.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    payoffs
        .into_iter()
        .filter(|&(_, v)| v >= best - DECISION_TOL)
        .map(|(a, _)| a)
        .collect()
}

/// Actions maximizing expected payoff for `(c, belief)` against the profile,
/// ties within tolerance included.
pub fn best_response_set(
    g: &GameInstance,
    c: usize,
    belief: usize,
    zeta: &StrategyProfile,
) -> Result<BTreeSet<usize>, EquilibriumError> {
    zeta.validate(g)?;
    let aggregates = all_aggregates(g, zeta)?;
    Ok(best_response_with(g, c, belief, &aggregates))
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumCheck {
    pub is_bne: bool,
    /// Pairs whose assigned action is not a best response: `(c, belief,
    /// played, best_responses)`.
    pub violations: Vec<(usize, usize, usize, Vec<usize>)>,
}

/// Is the profile a (weak) best response to itself at every tracked pair?
pub fn verify_equilibrium(
    g: &GameInstance,
    zeta: &StrategyProfile,
) -> Result<EquilibriumCheck, EquilibriumError> {
    zeta.validate(g)?;
    let aggregates = all_aggregates(g, zeta)?;
    let mut violations = Vec::new();
    for (&(c, belief), &played) in &zeta.zeta {
        let best = best_response_with(g, c, belief, &aggregates);
        if !best.contains(&played) {
            violations.push((c, belief, played, best.into_iter().collect()));
        }
    }
    Ok(EquilibriumCheck { is_bne: violations.is_empty(), violations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Top,
    Bottom,
}

#[derive(Debug, Clone)]
pub struct ExtremalOutcome {
    pub zeta: StrategyProfile,
    /// Iterations that strictly changed the profile.
    pub rounds: usize,
    pub trace: Vec<StrategyProfile>,
    pub verification: EquilibriumCheck,
}

/// Monotone iteration from the all-top (or all-bottom) profile, taking the
/// lattice-extremal selection of the argmax each round. Refuses to run when
/// the complementarity validators fail.
pub fn extremal_equilibrium(
    g: &GameInstance,
    direction: Direction,
) -> Result<ExtremalOutcome, EquilibriumError> {
    let sm = check_supermodular(g, &[]);
    let id = check_increasing_differences(g)?;
    if !(sm.supermodular_ok && sm.sublattice_ok && id.increasing_differences_ok) {
        let mut merged = sm;
        merged.increasing_differences_ok = id.increasing_differences_ok;
        merged.violations.extend(id.violations);
        return Err(EquilibriumError::AssumptionsViolated(Box::new(merged)));
    }
    extremal_equilibrium_forced(g, direction)
}

/// The same iteration without the validator gate. Convergence is only
/// guaranteed under the complementarity assumptions.
pub fn extremal_equilibrium_forced(
    g: &GameInstance,
    direction: Direction,
) -> Result<ExtremalOutcome, EquilibriumError> {
    let pairs = g.registered_pairs();
    let round_bound: usize =
        pairs.iter().map(|&(c, _)| g.availability(c).len().saturating_sub(1)).sum::<usize>() + 2;
    let start = match direction {
        Direction::Top => StrategyProfile::all_top(g),
        Direction::Bottom => StrategyProfile::all_bottom(g),
    };
    let mut trace = vec![start];
    let mut rounds = 0usize;
    loop {
        let current = trace.last().expect("nonempty");
        let aggregates = all_aggregates(g, current)?;
        let mut next = BTreeMap::new();
        for &(c, belief) in &pairs {
            let br = best_response_with(g, c, belief, &aggregates);
            let pick = match direction {
                Direction::Top => g.actions.join_all(br.iter().copied()),
                Direction::Bottom => g.actions.meet_all(br.iter().copied()),
            }
            .expect("argmax nonempty");
            if !br.contains(&pick) {
                return Err(EquilibriumError::BrokenLatticeArgmax { characteristic: c, belief });
            }
            next.insert((c, belief), pick);
        }
        let next = StrategyProfile { zeta: next };
        if &next == current {
            break;
        }
        rounds += 1;
        if rounds > round_bound {
            return Err(EquilibriumError::RoundLimitExceeded);
        }
        trace.push(next);
    }
    let zeta = trace.last().expect("nonempty").clone();
    let verification = verify_equilibrium(g, &zeta)?;
    if !verification.is_bne {
        return Err(EquilibriumError::VerificationFailed);
    }
    Ok(ExtremalOutcome { zeta, rounds, trace, verification })
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub ok: bool,
    pub violations: Vec<String>,
}

/// Every rationalizable action must lie between the extremal equilibria in
/// the lattice order, and both extremal values must themselves be
/// rationalizable.
pub fn sandwich_check(g: &GameInstance) -> Result<SandwichReport, EquilibriumError> {
    let icr = icr::icr_solve(g)?;
    let top = extremal_equilibrium(g, Direction::Top)?;
    let bottom = extremal_equilibrium(g, Direction::Bottom)?;
    Ok(sandwich_check_with(g, &icr, &top, &bottom))
}

pub fn sandwich_check_with(
    g: &GameInstance,
    icr: &IcrSolution,
    top: &ExtremalOutcome,
    bottom: &ExtremalOutcome,
) -> SandwichReport {
    let mut violations = Vec::new();
    for (&(c, belief), survivors) in &icr.survivors.sets {
        let hi = top.zeta.get(c, belief);
        let lo = bottom.zeta.get(c, belief);
        let (Some(hi), Some(lo)) = (hi, lo) else {
            violations.push(format!("pair ({c}, {belief}) missing from an extremal profile"));
            continue;
        };
        if !survivors.contains(&hi) {
            violations.push(format!("top action {hi} not rationalizable at ({c}, {belief})"));
        }
        if !survivors.contains(&lo) {
            violations.push(format!("bottom action {lo} not rationalizable at ({c}, {belief})"));
        }
        for &a in survivors {
            if !(g.actions.leq(lo, a) && g.actions.leq(a, hi)) {
                violations.push(format!(
                    "action {a} at ({c}, {belief}) escapes the extremal sandwich [{lo}, {hi}]"
                ));
            }
        }
    }
    SandwichReport { ok: violations.is_empty(), violations }
}


#[cfg(test)]
mod blackbox_validator_tests {
    use super::*;
    use crate::game::{AggregateProfile, BlackboxPayoff, PayoffOracle};
    use std::sync::Arc;

    #[test]
    fn blackbox_supermodularity_check_is_sampled() {
        // Wrap the submodular diamond payoff in an opaque evaluator: the
        // violation shows up on the sampled aggregates and is flagged as such.
        let g = {
            let mut g = crate::global_game::complete_info_instance(&[0.5]).unwrap();
            g.actions = tests::diamond_lattice();
            g.availability.sets = vec![vec![0, 1, 2, 3]];
            let valley = 1.0;
            g.payoff = PayoffOracle::Blackbox(BlackboxPayoff {
                eval: Arc::new(move |_, a, _, _| if a == 1 || a == 2 { valley } else { 0.0 }),
            });
            g
        };
        let mut mu = AggregateProfile::zeros(1, 4);
        mu.add(0, 0, 1.0);
        let report = check_supermodular(&g, &[mu]);
        assert!(report.sampled);
        assert!(!report.supermodular_ok);
        assert!(matches!(
            report.violations[0],
            ComplementarityViolation::SampledSupermodularity { a: 1, b: 2, .. }
        ));
        // With no samples nothing can be falsified.
        assert!(check_supermodular(&g, &[]).supermodular_ok);
    }
}
