//! The finite game model: fundamentals, type space, belief registry and the
//! payoff oracle. Every other module consumes these types.
//!
//! All entities are referenced by dense indices internally; the JSON file
//! format in [`schema`] speaks labels and converts on load. A
//! [`GameInstance`] is plain data and may be structurally inconsistent until
//! [`validate::validate_game`] reports an empty list; solvers assume a
//! validated instance and are free to index without checks. Instances are
//! immutable after validation and every operation in the crate is a pure
//! function of its inputs, so concurrent read-only use is safe.

pub mod schema;
pub mod validate;

use std::sync::Arc;

use thiserror::Error;

use crate::STRUCT_TOL;

/// The population side of the model: characteristic labels and their
/// distribution.
#[derive(Debug, Clone)]
pub struct CharacteristicSpace {
    pub labels: Vec<String>,
    pub nu: Vec<f64>,
}

/// Actions with an explicit lattice order and its operation tables.
#[derive(Debug, Clone)]
pub struct ActionLattice {
    pub labels: Vec<String>,
    /// Row-major `leq[a * n + b]` meaning `a <= b`.
    pub leq: Vec<bool>,
    /// `join[a * n + b]`, `meet[a * n + b]`.
    pub join: Vec<usize>,
    pub meet: Vec<usize>,
}

impl ActionLattice {
    /// A chain lattice, smallest action first.
    pub fn chain(labels: Vec<String>) -> Self {
        let n = labels.len();
        let mut leq = vec![false; n * n];
        let mut join = vec![0usize; n * n];
        let mut meet = vec![0usize; n * n];
        for a in 0..n {
            for b in 0..n {
                leq[a * n + b] = a <= b;
                join[a * n + b] = a.max(b);
                meet[a * n + b] = a.min(b);
            }
        }
        Self { labels, leq, join, meet }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.leq[a * self.len() + b]
    }

    pub fn join_of(&self, a: usize, b: usize) -> usize {
        self.join[a * self.len() + b]
    }

    pub fn meet_of(&self, a: usize, b: usize) -> usize {
        self.meet[a * self.len() + b]
    }

    /// Join of a nonempty set of actions.
    pub fn join_all<I: IntoIterator<Item = usize>>(&self, actions: I) -> Option<usize> {
        actions.into_iter().reduce(|a, b| self.join_of(a, b))
    }

    /// Meet of a nonempty set of actions.
    pub fn meet_all<I: IntoIterator<Item = usize>>(&self, actions: I) -> Option<usize> {
        actions.into_iter().reduce(|a, b| self.meet_of(a, b))
    }
}

/// Per-characteristic nonempty sets of available actions.
#[derive(Debug, Clone)]
pub struct AvailabilityMap {
    /// `sets[c]` is sorted and deduplicated.
    pub sets: Vec<Vec<usize>>,
}

/// States of nature: labels plus an optional numeric value channel (used by
/// games whose payoffs read the state as a real number).
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub labels: Vec<String>,
    pub values: Option<Vec<f64>>,
}

/// One atom of a population distribution: mass `weight` of players with this
/// characteristic holding this belief.
#[derive(Debug, Clone, PartialEq)]
pub struct TauAtom {
    pub characteristic: usize,
    pub belief: usize,
    pub weight: f64,
}

/// States of the world with their induced state of nature and population
/// distribution of characteristic-belief pairs.
#[derive(Debug, Clone)]
pub struct TypeSpace {
    pub worlds: Vec<String>,
    /// `sigma[t]` is a state index.
    pub sigma: Vec<usize>,
    /// `tau[t]` lists the atoms of the population distribution at world `t`.
    pub tau: Vec<Vec<TauAtom>>,
}

/// A probability vector over states of the world.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    pub probs: Vec<f64>,
}

impl BeliefVector {
    pub fn point_mass(n_worlds: usize, world: usize) -> Self {
        let mut probs = vec![0.0; n_worlds];
        probs[world] = 1.0;
        Self { probs }
    }

    /// Worlds carrying positive probability.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().copied().enumerate().filter(|(_, p)| *p > 0.0)
    }
}

/// Mass on characteristic-action pairs with the characteristic marginal fixed
/// at the population distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateProfile {
    /// `mass[c * n_actions + a]`.
    pub mass: Vec<f64>,
    pub n_characteristics: usize,
    pub n_actions: usize,
}

impl AggregateProfile {
    pub fn zeros(n_characteristics: usize, n_actions: usize) -> Self {
        Self { mass: vec![0.0; n_characteristics * n_actions], n_characteristics, n_actions }
    }

    pub fn get(&self, c: usize, a: usize) -> f64 {
        self.mass[c * self.n_actions + a]
    }

    pub fn add(&mut self, c: usize, a: usize, m: f64) {
        self.mass[c * self.n_actions + a] += m;
    }

    /// Total mass playing action `a` across characteristics.
    pub fn action_marginal(&self, a: usize) -> f64 {
        (0..self.n_characteristics).map(|c| self.get(c, a)).sum()
    }

    pub fn char_marginal(&self, c: usize) -> f64 {
        (0..self.n_actions).map(|a| self.get(c, a)).sum()
    }

    /// Check the profile against a game: characteristic marginals must equal
    /// the population distribution and positive mass must sit on available
    /// actions.
    pub fn validate(&self, g: &GameInstance) -> Result<(), GameError> {
        if self.n_characteristics != g.n_characteristics() || self.n_actions != g.n_actions() {
            return Err(GameError::IndexOutOfRange("aggregate dimensions".into()));
        }
        for c in 0..self.n_characteristics {
            if (self.char_marginal(c) - g.characteristics.nu[c]).abs() > STRUCT_TOL {
                return Err(GameError::AggregateMarginalMismatch { characteristic: c });
            }
            for a in 0..self.n_actions {
                if self.get(c, a) > 0.0 && !g.is_available(c, a) {
                    return Err(GameError::UnavailableAction { characteristic: c, action: a });
                }
            }
        }
        Ok(())
    }
}

/// Linear payoff data: `v(c,a,s,mu) = base(c,a,s) + sum weights(c,a,s,c',a') mu(c',a')`.
#[derive(Clone)]
pub struct LinearPayoff {
    pub n_characteristics: usize,
    pub n_actions: usize,
    pub n_states: usize,
    /// `base[(c * na + a) * ns + s]`.
    pub base: Vec<f64>,
    /// `weights[(((c * na + a) * ns + s) * nc + c') * na + a']`.
    pub weights: Vec<f64>,
}

impl LinearPayoff {
    pub fn zeros(n_characteristics: usize, n_actions: usize, n_states: usize) -> Self {
        let cas = n_characteristics * n_actions * n_states;
        Self {
            n_characteristics,
            n_actions,
            n_states,
            base: vec![0.0; cas],
            weights: vec![0.0; cas * n_characteristics * n_actions],
        }
    }

    #[inline]
    fn base_idx(&self, c: usize, a: usize, s: usize) -> usize {
        (c * self.n_actions + a) * self.n_states + s
    }

    #[inline]
    fn w_idx(&self, c: usize, a: usize, s: usize, c2: usize, a2: usize) -> usize {
        (self.base_idx(c, a, s) * self.n_characteristics + c2) * self.n_actions + a2
    }

    pub fn base(&self, c: usize, a: usize, s: usize) -> f64 {
        self.base[self.base_idx(c, a, s)]
    }

    pub fn set_base(&mut self, c: usize, a: usize, s: usize, v: f64) {
        let i = self.base_idx(c, a, s);
        self.base[i] = v;
    }

    pub fn weight(&self, c: usize, a: usize, s: usize, c2: usize, a2: usize) -> f64 {
        self.weights[self.w_idx(c, a, s, c2, a2)]
    }

    pub fn set_weight(&mut self, c: usize, a: usize, s: usize, c2: usize, a2: usize, v: f64) {
        let i = self.w_idx(c, a, s, c2, a2);
        self.weights[i] = v;
    }

    pub fn eval(&self, c: usize, a: usize, s: usize, mu: &AggregateProfile) -> f64 {
        let mut v = self.base(c, a, s);
        let row = self.w_idx(c, a, s, 0, 0);
        let n = self.n_characteristics * self.n_actions;
        for k in 0..n {
            v += self.weights[row + k] * mu.mass[k];
        }
        v
    }
}

/// Signature of an opaque payoff evaluator: `(c, a, s, mu) -> utils`.
pub type PayoffEvalFn = Arc<dyn Fn(usize, usize, usize, &AggregateProfile) -> f64 + Send + Sync>;

/// Opaque payoff evaluator; downstream solvers treat it as approximate.
#[derive(Clone)]
pub struct BlackboxPayoff {
    pub eval: PayoffEvalFn,
}

#[derive(Clone)]
pub enum PayoffOracle {
    Linear(LinearPayoff),
    Blackbox(BlackboxPayoff),
}

impl std::fmt::Debug for PayoffOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PayoffOracle::Linear(_) => f.write_str("PayoffOracle::Linear(..)"),
            PayoffOracle::Blackbox(_) => f.write_str("PayoffOracle::Blackbox(..)"),
        }
    }
}

impl PayoffOracle {
    pub fn is_linear(&self) -> bool {
        matches!(self, PayoffOracle::Linear(_))
    }

    pub fn as_linear(&self) -> Option<&LinearPayoff> {
        match self {
            PayoffOracle::Linear(l) => Some(l),
            PayoffOracle::Blackbox(_) => None,
        }
    }
}

/// The full finite game.
#[derive(Debug, Clone)]
pub struct GameInstance {
    pub characteristics: CharacteristicSpace,
    pub actions: ActionLattice,
    pub availability: AvailabilityMap,
    pub states: StateSpace,
    pub type_space: TypeSpace,
    pub beliefs: Vec<BeliefVector>,
    pub payoff: PayoffOracle,
    /// Extra characteristic-belief pairs registered for querying beyond the
    /// pairs appearing in population distributions.
    pub query_pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("action {action} is not available to characteristic {characteristic}")]
    UnavailableAction { characteristic: usize, action: usize },
    #[error("conjecture weights do not form a probability vector")]
    BadConjectureWeights,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("aggregate characteristic marginal differs from the population distribution at {characteristic}")]
    AggregateMarginalMismatch { characteristic: usize },
}

impl GameInstance {
    pub fn n_characteristics(&self) -> usize {
        self.characteristics.labels.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.labels.len()
    }

    pub fn n_states(&self) -> usize {
        self.states.labels.len()
    }

    pub fn n_worlds(&self) -> usize {
        self.type_space.worlds.len()
    }

    pub fn n_beliefs(&self) -> usize {
        self.beliefs.len()
    }

    pub fn availability(&self, c: usize) -> &[usize] {
        &self.availability.sets[c]
    }

    pub fn is_available(&self, c: usize, a: usize) -> bool {
        self.availability.sets[c].contains(&a)
    }

    /// Largest available action of `c` in the lattice order (the join of the
    /// availability set; coincides with a member when the set is a
    /// sublattice).
    pub fn top_available(&self, c: usize) -> usize {
        self.actions.join_all(self.availability.sets[c].iter().copied()).expect("nonempty")
    }

    pub fn bottom_available(&self, c: usize) -> usize {
        self.actions.meet_all(self.availability.sets[c].iter().copied()).expect("nonempty")
    }

    /// The characteristic-belief pairs on which behavior is tracked: every
    /// pair appearing in some population distribution plus the registered
    /// query pairs, sorted and deduplicated.
    pub fn registered_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .type_space
            .tau
            .iter()
            .flatten()
            .map(|atom| (atom.characteristic, atom.belief))
            .chain(self.query_pairs.iter().copied())
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Evaluate the payoff of `(c, a)` at state `s` against the aggregate.
    pub fn eval_payoff(
        &self,
        c: usize,
        a: usize,
        s: usize,
        mu: &AggregateProfile,
    ) -> Result<f64, GameError> {
        if !self.is_available(c, a) {
            return Err(GameError::UnavailableAction { characteristic: c, action: a });
        }
        Ok(self.eval_payoff_unchecked(c, a, s, mu))
    }

    pub(crate) fn eval_payoff_unchecked(
        &self,
        c: usize,
        a: usize,
        s: usize,
        mu: &AggregateProfile,
    ) -> f64 {
        match &self.payoff {
            PayoffOracle::Linear(l) => l.eval(c, a, s, mu),
            PayoffOracle::Blackbox(b) => (b.eval)(c, a, s, mu),
        }
    }

    /// Expected payoff of `(c, a)` under a conjecture: a finite distribution
    /// over state-aggregate atoms.
    pub fn conjecture_payoff(
        &self,
        c: usize,
        a: usize,
        conjecture: &[(f64, usize, &AggregateProfile)],
    ) -> Result<f64, GameError> {
        let total: f64 = conjecture.iter().map(|(w, _, _)| *w).sum();
        if (total - 1.0).abs() > STRUCT_TOL || conjecture.iter().any(|(w, _, _)| *w < -STRUCT_TOL)
        {
            return Err(GameError::BadConjectureWeights);
        }
        let mut v = 0.0;
        for &(w, s, mu) in conjecture {
            if s >= self.n_states() {
                return Err(GameError::IndexOutOfRange(format!("state {s}")));
            }
            v += w * self.eval_payoff(c, a, s, mu)?;
        }
        Ok(v)
    }
}


#[cfg(test)]
mod affine_props {
    use super::*;
    use proptest::prelude::*;

    /// For linear oracles, evaluating a mixture of conjectures equals the
    /// mixture of evaluations up to float accumulation.
    #[test]
    fn conjecture_payoff_is_affine() {
        let g = crate::global_game::complete_info_instance(&[0.25]).unwrap();
        proptest!(ProptestConfig::with_cases(200), |(t in 0.0_f64..=1.0, w in 0.0_f64..=1.0)| {
            let mut mu1 = AggregateProfile::zeros(1, 2);
            mu1.add(0, 0, 1.0 - t);
            mu1.add(0, 1, t);
            let mut mu2 = AggregateProfile::zeros(1, 2);
            mu2.add(0, 1, 1.0);
            let mixed = g
                .conjecture_payoff(0, 1, &[(w, 0, &mu1), (1.0 - w, 0, &mu2)])
                .unwrap();
            let split = w * g.eval_payoff(0, 1, 0, &mu1).unwrap()
                + (1.0 - w) * g.eval_payoff(0, 1, 0, &mu2).unwrap();
            prop_assert!((mixed - split).abs() <= 1e-12);
        });
    }
}
