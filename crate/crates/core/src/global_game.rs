//! Binary-action regime-change machinery: expected states, rank beliefs,
//! belief and certainty operators, threshold statistics, and uniqueness
//! certificates.
//!
//! Characteristics play no role here; the module insists on a single
//! characteristic. Payoffs are `a * (s + theta - 1)` where `theta` is the
//! invest mass, so a belief's behavior is summarized by its expected state
//! `x` and by how much population mass it expects inside a set of beliefs.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::game::{
    ActionLattice, AvailabilityMap, BeliefVector, CharacteristicSpace, GameInstance,
    LinearPayoff, PayoffOracle, StateSpace, TauAtom, TypeSpace,
};
use crate::DECISION_TOL;

#[derive(Debug, Error)]
pub enum GlobalGameError {
    #[error("this machinery suppresses characteristics; the game has {0}")]
    CharacteristicsNotSuppressed(usize),
    #[error("states carry no numeric values")]
    MissingStateValues,
    #[error("expected a binary action set, found {0} actions")]
    NotBinaryActions(usize),
    #[error("belief id {0} out of range")]
    UnknownBelief(usize),
    #[error("complete-information builder needs at least one state value")]
    EmptyInstance,
}

/// Per-belief statistics: expected state, expected population mass on sets of
/// beliefs, and rank (expected fraction of weakly less optimistic players).
#[derive(Debug, Clone)]
pub struct BeliefStatistics {
    /// `x[beta]`: expected state of nature.
    pub x: Vec<f64>,
    /// `belief_mass[beta][beta']`: expected population mass holding `beta'`.
    pub belief_mass: Vec<Vec<f64>>,
    /// `rank[beta]`: mass on `{beta' : x(beta') <= x(beta)}`, ties weak.
    pub rank: Vec<f64>,
}

impl BeliefStatistics {
    /// Expected fraction of players with beliefs in `set`.
    pub fn f_beta(&self, beta: usize, set: &BTreeSet<usize>) -> f64 {
        set.iter().map(|&b| self.belief_mass[beta][b]).sum()
    }
}

/// Comparison slack for rank ties.
const TIE_TOL: f64 = 1e-12;

/// Exact finite sums over the registry.
pub fn compute_statistics(g: &GameInstance) -> Result<BeliefStatistics, GlobalGameError> {
    if g.n_characteristics() != 1 {
        return Err(GlobalGameError::CharacteristicsNotSuppressed(g.n_characteristics()));
    }
    let values = g.states.values.as_ref().ok_or(GlobalGameError::MissingStateValues)?;
    let nb = g.n_beliefs();
    let mut x = vec![0.0_f64; nb];
    let mut belief_mass = vec![vec![0.0_f64; nb]; nb];
    for beta in 0..nb {
        for (t, p) in g.beliefs[beta].support() {
            x[beta] += p * values[g.type_space.sigma[t]];
            for atom in &g.type_space.tau[t] {
                belief_mass[beta][atom.belief] += p * atom.weight;
            }
        }
    }
    let rank = (0..nb)
        .map(|beta| {
            (0..nb)
                .filter(|&b2| x[b2] <= x[beta] + TIE_TOL)
                .map(|b2| belief_mass[beta][b2])
                .sum()
        })
        .collect();
    Ok(BeliefStatistics { x, belief_mass, rank })
}

/// A game together with its belief statistics.
#[derive(Debug, Clone)]
pub struct GlobalGameView<'g> {
    pub game: &'g GameInstance,
    pub stats: BeliefStatistics,
}

impl<'g> GlobalGameView<'g> {
    pub fn new(game: &'g GameInstance) -> Result<Self, GlobalGameError> {
        let stats = compute_statistics(game)?;
        Ok(Self { game, stats })
    }

    pub fn all_beliefs(&self) -> BTreeSet<usize> {
        (0..self.game.n_beliefs()).collect()
    }
}

/// Threshold function for belief operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdFn {
    Const(f64),
    /// `f(beta) = x(beta)`.
    ExpectedState,
    /// `f(beta) = 1 - x(beta)`.
    OneMinusExpectedState,
}

impl ThresholdFn {
    fn eval(&self, stats: &BeliefStatistics, beta: usize) -> f64 {
        match self {
            ThresholdFn::Const(p) => *p,
            ThresholdFn::ExpectedState => stats.x[beta],
            ThresholdFn::OneMinusExpectedState => 1.0 - stats.x[beta],
        }
    }
}

/// Beliefs whose rank is within `eps` of the median rank 1/2.
pub fn urb_set(view: &GlobalGameView<'_>, eps: f64) -> BTreeSet<usize> {
    (0..self_len(view))
        .filter(|&b| {
            view.stats.rank[b] >= 0.5 - eps - TIE_TOL && view.stats.rank[b] <= 0.5 + eps + TIE_TOL
        })
        .collect()
}

/// Beliefs under which investing is `eps`-strictly risk dominant. Boundary
/// points are excluded.
pub fn srd_set(view: &GlobalGameView<'_>, eps: f64) -> BTreeSet<usize> {
    (0..self_len(view)).filter(|&b| view.stats.x[b] > 0.5 + eps + TIE_TOL).collect()
}

/// Dual set: not investing is `eps`-strictly risk dominant.
pub fn nsrd_set(view: &GlobalGameView<'_>, eps: f64) -> BTreeSet<usize> {
    (0..self_len(view)).filter(|&b| view.stats.x[b] < 0.5 - eps - TIE_TOL).collect()
}

fn self_len(view: &GlobalGameView<'_>) -> usize {
    view.game.n_beliefs()
}

/// `B_f(E)`: members of `E` expecting at least `f(beta)` population mass
/// inside `E`. The comparison uses the decision tolerance so that
/// membership matches the elimination solver's weak best-reply test.
pub fn belief_operator(
    view: &GlobalGameView<'_>,
    f: ThresholdFn,
    set: &BTreeSet<usize>,
) -> BTreeSet<usize> {
    set.iter()
        .copied()
        .filter(|&b| view.stats.f_beta(b, set) >= f.eval(&view.stats, b) - DECISION_TOL)
        .collect()
}

/// `C_f(E)`: iterate `B_f` to its fixed set.
pub fn certainty_operator(
    view: &GlobalGameView<'_>,
    f: ThresholdFn,
    set: &BTreeSet<usize>,
) -> (BTreeSet<usize>, usize) {
    let mut current = set.clone();
    let mut iterations = 0usize;
    loop {
        let next = belief_operator(view, f, &current);
        iterations += 1;
        if next == current {
            return (current, iterations);
        }
        current = next;
    }
}

/// Sup/inf state thresholds over a filtered set, with `None` flagging an
/// empty filter (conventionally minus/plus infinity).
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdPair {
    /// `sup { x(beta) : beta in E, x(beta) <= rank(beta) + eps }`.
    pub x_upper: Option<f64>,
    /// `inf { x(beta) : beta in E, x(beta) >= rank(beta) - eps }`.
    pub x_lower: Option<f64>,
}

pub fn x_thresholds(view: &GlobalGameView<'_>, eps: f64, set: &BTreeSet<usize>) -> ThresholdPair {
    let x_upper = set
        .iter()
        .copied()
        .filter(|&b| view.stats.x[b] <= view.stats.rank[b] + eps + TIE_TOL)
        .map(|b| view.stats.x[b])
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let x_lower = set
        .iter()
        .copied()
        .filter(|&b| view.stats.x[b] >= view.stats.rank[b] - eps - TIE_TOL)
        .map(|b| view.stats.x[b])
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    ThresholdPair { x_upper, x_lower }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateAssumptions {
    /// The certainty core satisfies `E = B_{1-eps}(E)`.
    pub core_is_fixed_point: bool,
    /// Closedness hypotheses are vacuous for a finite registry.
    pub closedness_vacuous: bool,
    /// The operator constant `p = 1 - eps` used for the core.
    pub p: f64,
    /// `x_upper(core) <= x_upper(urb) <= 1/2 + 2 eps`.
    pub threshold_chain_ok: bool,
    pub x_upper_core: Option<f64>,
    pub x_upper_urb: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessCertificate {
    pub eps: f64,
    pub urb: BTreeSet<usize>,
    /// `C_{1-eps}(URB_eps)`.
    pub core: BTreeSet<usize>,
    /// Beliefs certified to have investing uniquely rationalizable.
    pub invest_region: BTreeSet<usize>,
    /// Beliefs certified to have not investing uniquely rationalizable.
    pub noninvest_region: BTreeSet<usize>,
    pub assumptions: CertificateAssumptions,
}

/// Certify regions of unique rationalizability: approximately-median-rank
/// beliefs with common certainty of that fact, intersected with the
/// strict-risk-dominance sets at doubled slack.
pub fn uniqueness_certificate(
    view: &GlobalGameView<'_>,
    eps: f64,
) -> Result<UniquenessCertificate, GlobalGameError> {
    let na = view.game.n_actions();
    if na != 2 {
        return Err(GlobalGameError::NotBinaryActions(na));
    }
    let urb = urb_set(view, eps);
    let p = 1.0 - eps;
    let (core, _) = certainty_operator(view, ThresholdFn::Const(p), &urb);
    let core_is_fixed_point = belief_operator(view, ThresholdFn::Const(p), &core) == core;
    let invest_region: BTreeSet<usize> =
        srd_set(view, 2.0 * eps).intersection(&core).copied().collect();
    let noninvest_region: BTreeSet<usize> =
        nsrd_set(view, 2.0 * eps).intersection(&core).copied().collect();
    let x_upper_core = x_thresholds(view, eps, &core).x_upper;
    let x_upper_urb = x_thresholds(view, eps, &urb).x_upper;
    let chain = |lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some(a), Some(b)) => a <= b + TIE_TOL,
    };
    let threshold_chain_ok = chain(x_upper_core, x_upper_urb)
        && x_upper_urb.is_none_or(|v| v <= 0.5 + 2.0 * eps + TIE_TOL);
    Ok(UniquenessCertificate {
        eps,
        urb,
        core,
        invest_region,
        noninvest_region,
        assumptions: CertificateAssumptions {
            core_is_fixed_point,
            closedness_vacuous: true,
            p,
            threshold_chain_ok,
            x_upper_core,
            x_upper_urb,
        },
    })
}

// ---------------------------------------------------------------------------
// Instance builders
// ---------------------------------------------------------------------------

/// Payoff `v(a, s, theta) = a * (value(s) + theta - 1)` over one
/// characteristic and actions `{noninvest, invest}`.
pub fn regime_change_payoff(state_values: &[f64]) -> LinearPayoff {
    let ns = state_values.len();
    let mut lin = LinearPayoff::zeros(1, 2, ns);
    for (s, &v) in state_values.iter().enumerate() {
        lin.set_base(0, 1, s, v - 1.0);
        lin.set_weight(0, 1, s, 0, 1, 1.0);
    }
    lin
}

fn binary_actions() -> ActionLattice {
    ActionLattice::chain(vec!["noninvest".into(), "invest".into()])
}

/// One world per value; every world's population holds the point-mass belief
/// on that same world, so each world is a complete-information island.
pub fn complete_info_instance(values: &[f64]) -> Result<GameInstance, GlobalGameError> {
    if values.is_empty() {
        return Err(GlobalGameError::EmptyInstance);
    }
    let n = values.len();
    let worlds: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
    let state_labels: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let beliefs: Vec<BeliefVector> =
        (0..n).map(|i| BeliefVector::point_mass(n, i)).collect();
    let tau: Vec<Vec<TauAtom>> = (0..n)
        .map(|i| vec![TauAtom { characteristic: 0, belief: i, weight: 1.0 }])
        .collect();
    Ok(GameInstance {
        characteristics: CharacteristicSpace { labels: vec!["c0".into()], nu: vec![1.0] },
        actions: binary_actions(),
        availability: AvailabilityMap { sets: vec![vec![0, 1]] },
        states: StateSpace { labels: state_labels, values: Some(values.to_vec()) },
        type_space: TypeSpace { worlds, sigma: (0..n).collect(), tau },
        beliefs,
        payoff: PayoffOracle::Linear(regime_change_payoff(values)),
        query_pairs: (0..n).map(|b| (0, b)).collect(),
    })
}

/// Parameters for the ladder instance: `n` worlds with evenly spread state
/// values and a sliding window of half-width `window` for both beliefs and
/// populations, the discrete analogue of uniform signal noise. Interior
/// ranks sit just above the median (the self tie counts as weakly less
/// optimistic); ranks distort only near the ends of the value range.
#[derive(Debug, Clone, Copy)]
pub struct LadderParams {
    pub n: usize,
    pub window: usize,
}

impl Default for LadderParams {
    fn default() -> Self {
        Self { n: 25, window: 2 }
    }
}

/// Certificate slack under which the default ladder's certainty core is the
/// whole near-median-rank set: `1 - eps` must not exceed the population mass
/// an end-of-range belief keeps inside the core.
pub const LADDER_EPS: f64 = 0.4375;

/// The bundled near-uniform-rank instance. World `i` carries value
/// `-1 + 3 i / (n-1)`; belief `i` is uniform over the worlds in the clamped
/// window around `i`; the population at world `i` is uniform over the
/// beliefs in the same window.
pub fn ladder_instance(params: LadderParams) -> Result<GameInstance, GlobalGameError> {
    let n = params.n;
    let k = params.window;
    if n < 2 || 2 * k + 1 > n {
        return Err(GlobalGameError::EmptyInstance);
    }
    let values: Vec<f64> = (0..n).map(|i| -1.0 + 3.0 * i as f64 / (n - 1) as f64).collect();
    let mut g = complete_info_instance(&values)?;
    for i in 0..n {
        let lo = i.saturating_sub(k);
        let hi = (i + k).min(n - 1);
        let span = (hi - lo + 1) as f64;
        let mut probs = vec![0.0; n];
        for t in lo..=hi {
            probs[t] = 1.0 / span;
        }
        g.beliefs[i] = BeliefVector { probs };
        g.type_space.tau[i] = (lo..=hi)
            .map(|j| TauAtom { characteristic: 0, belief: j, weight: 1.0 / span })
            .collect();
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistics_basics() {
        let g = complete_info_instance(&[0.7, -0.2]).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        // Point mass on a world with value 0.7.
        assert!((view.stats.x[0] - 0.7).abs() < 1e-12);
        // F over the whole registry is total mass one.
        let all = view.all_beliefs();
        for b in 0..2 {
            assert!((view.stats.f_beta(b, &all) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_belief_rank_is_one() {
        let g = complete_info_instance(&[0.4]).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        assert!((view.stats.rank[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn urb_with_large_eps_is_everything() {
        let g = ladder_instance(LadderParams::default()).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        assert_eq!(urb_set(&view, 0.5), view.all_beliefs());
    }

    #[test]
    fn srd_strict_boundary() {
        let g = complete_info_instance(&[0.9, 0.6]).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        // x = 0.9 > 0.5 + 0.1 is in; the boundary x = 0.6 = 0.5 + 0.1 is not.
        let set = srd_set(&view, 0.1);
        assert!(set.contains(&0));
        assert!(!set.contains(&1));
    }

    #[test]
    fn operator_basics() {
        let g = complete_info_instance(&[0.25, -0.5, 1.25]).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        let all = view.all_beliefs();
        // B_{1-x}(everything) keeps exactly the nonnegative expected states.
        let b = belief_operator(&view, ThresholdFn::OneMinusExpectedState, &all);
        assert_eq!(b, BTreeSet::from([0, 2]));
        // B on the empty set is empty; B_0 keeps everything.
        assert!(belief_operator(&view, ThresholdFn::Const(0.9), &BTreeSet::new()).is_empty());
        assert_eq!(belief_operator(&view, ThresholdFn::Const(0.0), &all), all);
        // C_f(E) is contained in E and fixes fixed sets in one pass.
        let (c, iters) = certainty_operator(&view, ThresholdFn::Const(0.0), &all);
        assert_eq!(c, all);
        assert_eq!(iters, 1);
    }

    #[test]
    fn threshold_examples() {
        // One belief with x = 0.3, rank 1 (single-world instances rank 1).
        let g = complete_info_instance(&[0.3]).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        let set = BTreeSet::from([0]);
        let t = x_thresholds(&view, 0.0, &set);
        assert_eq!(t.x_upper, Some(0.3)); // 0.3 <= rank 1
        assert_eq!(t.x_lower, None); // 0.3 >= 1 fails

        let g = complete_info_instance(&[0.9]).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        // With eps = 1 every belief passes both filters.
        let t = x_thresholds(&view, 1.0, &BTreeSet::from([0]));
        assert_eq!(t.x_upper, Some(0.9));
        assert_eq!(t.x_lower, Some(0.9));
    }

    #[test]
    fn certificate_empty_when_urb_empty() {
        // Common-certainty instance: everyone highly optimistic, rank 1
        // everywhere, so no approximately-median ranks exist.
        let g = complete_info_instance(&[0.95, 0.95, 0.95]).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        let cert = uniqueness_certificate(&view, 0.1).unwrap();
        assert!(cert.urb.is_empty());
        assert!(cert.invest_region.is_empty());
        assert!(cert.noninvest_region.is_empty());
    }

    #[test]
    fn ladder_ranks_sit_just_above_the_median() {
        let g = ladder_instance(LadderParams::default()).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        // Interior windows of five beliefs: three are weakly less optimistic.
        for b in 5..g.n_beliefs() - 5 {
            assert!((view.stats.rank[b] - 3.0 / 5.0).abs() < 1e-9, "belief {b}");
        }
        // The extremes distort: the top belief outranks everyone.
        assert!((view.stats.rank[g.n_beliefs() - 1] - 1.0).abs() < 1e-9);
        assert!(view.stats.rank[0] < 0.5);
    }

    #[test]
    fn certainty_core_matches_rationalizable_actions() {
        // Complete-information islands spread over the state range: invest is
        // rationalizable exactly on the nonnegative expected states, safe
        // exactly up to one.
        let values: Vec<f64> = (0..13).map(|i| (i as f64 - 4.0) / 4.0).collect();
        let g = complete_info_instance(&values).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        let all = view.all_beliefs();
        let (invest_core, _) =
            certainty_operator(&view, ThresholdFn::OneMinusExpectedState, &all);
        let (safe_core, _) = certainty_operator(&view, ThresholdFn::ExpectedState, &all);
        let icr = crate::icr::icr_solve(&g).unwrap();
        let invest_ok: BTreeSet<usize> =
            (0..g.n_beliefs()).filter(|&b| icr.survivors.sets[&(0, b)].contains(&1)).collect();
        let safe_ok: BTreeSet<usize> =
            (0..g.n_beliefs()).filter(|&b| icr.survivors.sets[&(0, b)].contains(&0)).collect();
        assert_eq!(invest_core, invest_ok);
        assert_eq!(safe_core, safe_ok);
        // Spot check the boundaries: x = 0 and x = 1 keep both actions.
        assert!(invest_core.contains(&4) && safe_core.contains(&4));
        assert!(invest_core.contains(&12) && !safe_core.contains(&12));
    }

    #[test]
    fn ladder_certificate_is_nonempty_and_sound() {
        let g = ladder_instance(LadderParams::default()).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        let cert = uniqueness_certificate(&view, LADDER_EPS).unwrap();
        // Everyone except the top-ranked extreme is near-median at this
        // slack, and the certainty core keeps all of them.
        assert_eq!(cert.urb.len(), g.n_beliefs() - 1);
        assert_eq!(cert.core, cert.urb);
        assert!(cert.assumptions.core_is_fixed_point);
        assert!(cert.assumptions.threshold_chain_ok);
        assert!(!cert.invest_region.is_empty());
        assert!(!cert.noninvest_region.is_empty());
        let icr = crate::icr::icr_solve(&g).unwrap();
        for &b in &cert.invest_region {
            assert_eq!(icr.survivors.sets[&(0, b)], BTreeSet::from([1]), "belief {b}");
        }
        for &b in &cert.noninvest_region {
            assert_eq!(icr.survivors.sets[&(0, b)], BTreeSet::from([0]), "belief {b}");
        }
    }

    #[test]
    fn operators_are_monotone_and_idempotent() {
        let g = ladder_instance(LadderParams { n: 9, window: 2 }).unwrap();
        let view = GlobalGameView::new(&g).unwrap();
        let small: BTreeSet<usize> = (0..5).collect();
        let big: BTreeSet<usize> = (0..9).collect();
        for f in [ThresholdFn::Const(0.5), ThresholdFn::ExpectedState] {
            let b_small = belief_operator(&view, f, &small);
            let b_big = belief_operator(&view, f, &big);
            // Monotone in the set argument.
            assert!(b_small.is_subset(&b_big));
            let (c1, _) = certainty_operator(&view, f, &big);
            let (c2, _) = certainty_operator(&view, f, &c1);
            assert_eq!(c1, c2, "certainty operator is idempotent");
            assert!(c1.is_subset(&big));
        }
    }

    #[test]
    fn characteristics_must_be_suppressed() {
        let mut g = complete_info_instance(&[0.5]).unwrap();
        g.characteristics.labels.push("c1".into());
        g.characteristics.nu = vec![0.5, 0.5];
        assert!(matches!(
            compute_statistics(&g),
            Err(GlobalGameError::CharacteristicsNotSuppressed(2))
        ));
    }

    #[test]
    fn missing_values_rejected() {
        let mut g = complete_info_instance(&[0.5]).unwrap();
        g.states.values = None;
        assert!(matches!(compute_statistics(&g), Err(GlobalGameError::MissingStateValues)));
    }
}

#[cfg(test)]
mod builder_tests {
    use super::*;
    use crate::game::validate::validate_game;

    #[test]
    fn bundled_instances_validate() {
        let g = ladder_instance(LadderParams::default()).unwrap();
        assert!(validate_game(&g).is_empty());
        let g = complete_info_instance(&[-1.0, 0.0, 2.0]).unwrap();
        assert!(validate_game(&g).is_empty());
    }
}
