//! The coordinated-attack circle game, discretized.
//!
//! A continuum of players sits on a circle of unit circumference. Players at
//! position 0 observe the state; when the state is 1 a signal starts there
//! and travels around the circle at unit speed until it dies at an
//! exponential time with intensity `alpha`. A player's information is the
//! number of times the signal has passed them. Payoffs form a coordination
//! game in which attacking (action 1) pays off only when enough others
//! attack, with `L > M > 0` making miscoordination worse than the safe
//! action.
//!
//! The discretization uses `n_positions` evenly spaced positions, cuts death
//! times on the grid where some position's signal count changes (every
//! `1/n_positions`), and refines each grid cell into `buckets_per_unit`
//! equal-probability sub-buckets of the exponential. Death times past
//! `max_signals` are collapsed into a common-certainty world where the
//! signal never dies.
//!
//! A player at position `i` who received `n > 0` signals knows the death
//! time lies in an interval of unit length. Two readings of that interval
//! are implemented: the geometrically consistent `(n-1+i, n+i)` (default)
//! and the position-multiple variant `(n i, n i + 1)`, which does not
//! correspond to any coherent signal process and is kept only for
//! comparison. The population map always follows the consistent process.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::game::{
    ActionLattice, AvailabilityMap, BeliefVector, CharacteristicSpace, GameInstance,
    LinearPayoff, PayoffOracle, StateSpace, TauAtom, TypeSpace,
};
use crate::icr::{self, BehaviorMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DeathIntervalReading {
    /// Death in `(n-1+i, n+i)`: the reading consistent with the circle
    /// process.
    Consistent,
    /// Death in `(n i, n i + 1)`, anchored at the n-th multiple of the
    /// position; not realizable by the circle process, kept for comparison.
    PositionMultiple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailPolicy {
    /// Condition the top layer of signal beliefs on the death time staying
    /// below the truncation horizon. Keeps the contagion cascade intact.
    Renormalize,
    /// Assign the truncated tail mass to the common-certainty world. Top
    /// layer players then lean on the surviving coordination island, which
    /// stalls the cascade near the horizon.
    ToCommonCertainty,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EmailGameParams {
    pub m: f64,
    pub l: f64,
    /// Prior probability of the active state.
    pub pi: f64,
    /// Signal-death intensity.
    pub alpha: f64,
    pub n_positions: usize,
    pub max_signals: usize,
    pub buckets_per_unit: usize,
    pub reading: DeathIntervalReading,
    pub tail_policy: TailPolicy,
}

#[derive(Debug, Error)]
pub enum EmailGameError {
    #[error("payoff parameters must satisfy L > M > 0, got M = {m}, L = {l}")]
    BadPayoffs { m: f64, l: f64 },
    #[error("prior must lie in [0, 1], got {0}")]
    BadPrior(f64),
    #[error("intensity must be positive, got {0}")]
    BadIntensity(f64),
    #[error("discretization parameters must satisfy n_positions >= 2, max_signals >= 1, buckets_per_unit >= 1")]
    BadDiscretization,
    #[error(transparent)]
    Icr(#[from] icr::IcrError),
}

impl EmailGameParams {
    pub fn new(
        m: f64,
        l: f64,
        pi: f64,
        alpha: f64,
        n_positions: usize,
        max_signals: usize,
        buckets_per_unit: usize,
    ) -> Result<Self, EmailGameError> {
        if !(l > m && m > 0.0) {
            return Err(EmailGameError::BadPayoffs { m, l });
        }
        Self::new_relaxed(m, l, pi, alpha, n_positions, max_signals, buckets_per_unit)
    }

    /// Permits `L <= M`, outside the standing assumption, for experiments
    /// with risk-dominant attacking.
    pub fn new_relaxed(
        m: f64,
        l: f64,
        pi: f64,
        alpha: f64,
        n_positions: usize,
        max_signals: usize,
        buckets_per_unit: usize,
    ) -> Result<Self, EmailGameError> {
        if !(m > 0.0 && l > 0.0) {
            return Err(EmailGameError::BadPayoffs { m, l });
        }
        if !(0.0..=1.0).contains(&pi) {
            return Err(EmailGameError::BadPrior(pi));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(EmailGameError::BadIntensity(alpha));
        }
        if n_positions < 2 || max_signals < 1 || buckets_per_unit < 1 {
            return Err(EmailGameError::BadDiscretization);
        }
        Ok(Self {
            m,
            l,
            pi,
            alpha,
            n_positions,
            max_signals,
            buckets_per_unit,
            reading: DeathIntervalReading::Consistent,
            tail_policy: TailPolicy::Renormalize,
        })
    }
}

/// Expected fraction of players strictly ahead of an informed player on the
/// signal path: `1/alpha - 1/(e^alpha - 1)`. Strictly decreasing with limit
/// 1/2 at zero; evaluated by series below `alpha < 1e-4` where the direct
/// form cancels catastrophically.
pub fn contagion_function(alpha: f64) -> f64 {
    assert!(alpha > 0.0, "intensity must be positive");
    if alpha < 1e-4 {
        0.5 - alpha / 12.0 + alpha.powi(3) / 720.0 - alpha.powi(5) / 30240.0
    } else {
        1.0 / alpha - 1.0 / alpha.exp_m1()
    }
}

/// Attack is optimal only when the attacking fraction reaches `L / (M + L)`,
/// which exceeds 1/2 under the standing assumption `L > M > 0`.
pub fn risk_dominance_threshold(m: f64, l: f64) -> Result<f64, EmailGameError> {
    if !(l > m && m > 0.0) {
        return Err(EmailGameError::BadPayoffs { m, l });
    }
    Ok(l / (m + l))
}

/// Posterior probability that the state is active given no signal at
/// position `i`.
pub fn pi_i(params: &EmailGameParams, i: f64) -> f64 {
    // pi * (1 - e^{-alpha i}): the prior mass of "active but the signal died
    // before reaching i".
    let caught = params.pi * -(-params.alpha * i).exp_m1();
    if caught == 0.0 {
        return 0.0;
    }
    caught / (1.0 - params.pi + caught)
}

/// Index bookkeeping for the generated instance.
#[derive(Debug, Clone)]
pub struct EmailLayout {
    pub n_positions: usize,
    pub max_signals: usize,
    pub buckets_per_unit: usize,
}

impl EmailLayout {
    pub fn n_intervals(&self) -> usize {
        self.max_signals * self.n_positions
    }

    pub fn n_worlds(&self) -> usize {
        2 + self.n_intervals() * self.buckets_per_unit
    }

    /// World index of sub-bucket `q` of grid interval `m`.
    pub fn bucket_world(&self, m: usize, q: usize) -> usize {
        1 + m * self.buckets_per_unit + q
    }

    pub fn quiet_world(&self) -> usize {
        0
    }

    pub fn endless_world(&self) -> usize {
        1 + self.n_intervals() * self.buckets_per_unit
    }

    /// Belief id of position `j` having observed `n` signals (`n` capped at
    /// `max_signals`).
    pub fn belief_id(&self, position: usize, signals: usize) -> usize {
        position * (self.max_signals + 1) + signals
    }

    pub fn cc_belief_id(&self) -> usize {
        self.n_positions * (self.max_signals + 1)
    }

    pub fn n_beliefs(&self) -> usize {
        self.cc_belief_id() + 1
    }

    /// Signal count of `position` when the death time lies in grid interval
    /// `m`, i.e. in `(m/P, (m+1)/P)`.
    pub fn signals_at(&self, position: usize, m: usize) -> usize {
        if m >= position {
            (m - position) / self.n_positions + 1
        } else {
            0
        }
    }
}

/// The generated instance plus its layout.
#[derive(Debug, Clone)]
pub struct EmailGame {
    pub params: EmailGameParams,
    pub layout: EmailLayout,
    pub game: GameInstance,
}

impl EmailGame {
    /// The belief vector of `position` after `signals` observations (0 for
    /// the no-signal posterior).
    pub fn conditional_death_probabilities(&self, position: usize, signals: usize) -> &[f64] {
        &self.game.beliefs[self.layout.belief_id(position, signals)].probs
    }
}

fn exp_mass(alpha: f64, lo: f64, hi: f64) -> f64 {
    (-alpha * lo).exp() - (-alpha * hi).exp()
}

/// Build the discretized coordinated-attack game.
pub fn build_email_game(params: &EmailGameParams) -> Result<EmailGame, EmailGameError> {
    let p = params.n_positions;
    let n_max = params.max_signals;
    let b = params.buckets_per_unit;
    let alpha = params.alpha;
    let layout = EmailLayout { n_positions: p, max_signals: n_max, buckets_per_unit: b };
    let horizon = n_max as f64;
    let nw = layout.n_worlds();

    // Worlds and sigma.
    let mut worlds = Vec::with_capacity(nw);
    worlds.push("quiet".to_string());
    for m in 0..layout.n_intervals() {
        for q in 0..b {
            worlds.push(format!("death_{m}_{q}"));
        }
    }
    worlds.push("endless".to_string());
    let sigma: Vec<usize> = (0..nw).map(|t| usize::from(t != 0)).collect();

    // Beliefs.
    let mut beliefs: Vec<BeliefVector> = vec![BeliefVector { probs: vec![0.0; nw] }; layout.n_beliefs()];
    for j in 0..p {
        let pos = j as f64 / p as f64;
        // No signal: state-0 world plus an early-death mixture.
        {
            let probs = &mut beliefs[layout.belief_id(j, 0)].probs;
            let posterior = pi_i(params, pos);
            probs[layout.quiet_world()] = 1.0 - posterior;
            if posterior > 0.0 {
                let total = exp_mass(alpha, 0.0, pos);
                for m in 0..j {
                    let share = posterior
                        * exp_mass(alpha, m as f64 / p as f64, (m + 1) as f64 / p as f64)
                        / total;
                    for q in 0..b {
                        probs[layout.bucket_world(m, q)] = share / b as f64;
                    }
                }
            }
        }
        // n >= 1 signals: truncated-exponential mass over the unit death
        // interval of the chosen reading.
        for n in 1..=n_max {
            let (lo_units, hi_units) = match params.reading {
                DeathIntervalReading::Consistent => ((n - 1) * p + j, n * p + j),
                DeathIntervalReading::PositionMultiple => (n * j, n * j + p),
            };
            let lo = lo_units as f64 / p as f64;
            let hi = hi_units as f64 / p as f64;
            let finite_hi_units = hi_units.min(layout.n_intervals());
            let finite_hi = finite_hi_units as f64 / p as f64;
            let tail = if hi > horizon { exp_mass(alpha, horizon, hi) } else { 0.0 };
            let denom = match params.tail_policy {
                TailPolicy::Renormalize => exp_mass(alpha, lo, finite_hi),
                TailPolicy::ToCommonCertainty => exp_mass(alpha, lo, hi),
            };
            let probs = &mut beliefs[layout.belief_id(j, n)].probs;
            for m in lo_units..finite_hi_units {
                let share = exp_mass(alpha, m as f64 / p as f64, (m + 1) as f64 / p as f64) / denom;
                for q in 0..b {
                    probs[layout.bucket_world(m, q)] = share / b as f64;
                }
            }
            if let TailPolicy::ToCommonCertainty = params.tail_policy {
                if tail > 0.0 {
                    probs[layout.endless_world()] = tail / denom;
                }
            }
        }
    }
    beliefs[layout.cc_belief_id()].probs[layout.endless_world()] = 1.0;

    // Population distributions.
    let share = 1.0 / p as f64;
    let mut tau: Vec<Vec<TauAtom>> = Vec::with_capacity(nw);
    tau.push(
        (0..p)
            .map(|j| TauAtom { characteristic: j, belief: layout.belief_id(j, 0), weight: share })
            .collect(),
    );
    for m in 0..layout.n_intervals() {
        let atoms: Vec<TauAtom> = (0..p)
            .map(|j| TauAtom {
                characteristic: j,
                belief: layout.belief_id(j, layout.signals_at(j, m)),
                weight: share,
            })
            .collect();
        for _ in 0..b {
            tau.push(atoms.clone());
        }
    }
    tau.push(
        (0..p)
            .map(|j| TauAtom { characteristic: j, belief: layout.cc_belief_id(), weight: share })
            .collect(),
    );

    // Payoffs read only the action marginal of the aggregate.
    let mut lin = LinearPayoff::zeros(p, 2, 2);
    for c in 0..p {
        for c2 in 0..p {
            lin.set_weight(c, 0, 0, c2, 0, params.m);
            lin.set_weight(c, 1, 0, c2, 0, -params.l);
            lin.set_weight(c, 1, 1, c2, 1, params.m);
            lin.set_weight(c, 1, 1, c2, 0, -params.l);
        }
    }

    let game = GameInstance {
        characteristics: CharacteristicSpace {
            labels: (0..p).map(|j| format!("pos{j}")).collect(),
            nu: vec![share; p],
        },
        actions: ActionLattice::chain(vec!["safe".into(), "attack".into()]),
        availability: AvailabilityMap { sets: vec![vec![0, 1]; p] },
        states: StateSpace {
            labels: vec!["s0".into(), "s1".into()],
            values: Some(vec![0.0, 1.0]),
        },
        type_space: TypeSpace { worlds, sigma, tau },
        beliefs,
        payoff: PayoffOracle::Linear(lin),
        query_pairs: Vec::new(),
    };
    Ok(EmailGame { params: *params, layout, game })
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontRow {
    pub round: usize,
    pub newly_eliminated: usize,
    /// Largest spiral coordinate `n - 1 + i` over pairs where attacking has
    /// been eliminated so far.
    pub furthest_time: Option<f64>,
    pub furthest_position: Option<usize>,
    pub furthest_signals: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ContagionOutcome {
    /// True when attacking is eliminated at every finite-signal pair, i.e.
    /// everyone outside the common-certainty world must play the safe
    /// action once no-signal players do.
    pub all_zero_unique: bool,
    pub rounds: usize,
    pub front: Vec<FrontRow>,
    pub survivors: BehaviorMap,
}

/// Run the elimination seeded with the hypothesis that every player without
/// a signal plays the safe action (their pairs are clamped), everything else
/// unrestricted.
pub fn contagion_check(params: &EmailGameParams) -> Result<ContagionOutcome, EmailGameError> {
    let email = build_email_game(params)?;
    contagion_check_on(&email)
}

pub fn contagion_check_on(email: &EmailGame) -> Result<ContagionOutcome, EmailGameError> {
    let g = &email.game;
    let layout = &email.layout;
    let mut seed = BehaviorMap::full(g);
    let mut clamped = BTreeSet::new();
    for j in 0..layout.n_positions {
        let pair = (j, layout.belief_id(j, 0));
        seed.sets.insert(pair, BTreeSet::from([0]));
        clamped.insert(pair);
    }
    let solution = icr::solve_seeded(g, seed, &clamped)?;

    let spiral = |j: usize, n: usize| (n - 1) as f64 + j as f64 / layout.n_positions as f64;
    let mut front = Vec::new();
    for round in 1..solution.trace.len() {
        let mut newly = 0usize;
        for j in 0..layout.n_positions {
            for n in 1..=layout.max_signals {
                let pair = (j, layout.belief_id(j, n));
                let before = solution.trace[round - 1].sets[&pair].contains(&1);
                let after = solution.trace[round].sets[&pair].contains(&1);
                if before && !after {
                    newly += 1;
                }
            }
        }
        let mut furthest: Option<(f64, usize, usize)> = None;
        for j in 0..layout.n_positions {
            for n in 1..=layout.max_signals {
                let pair = (j, layout.belief_id(j, n));
                if !solution.trace[round].sets[&pair].contains(&1) {
                    let t = spiral(j, n);
                    if furthest.is_none_or(|(best, _, _)| t > best) {
                        furthest = Some((t, j, n));
                    }
                }
            }
        }
        front.push(FrontRow {
            round,
            newly_eliminated: newly,
            furthest_time: furthest.map(|f| f.0),
            furthest_position: furthest.map(|f| f.1),
            furthest_signals: furthest.map(|f| f.2),
        });
    }

    let all_zero_unique = (0..layout.n_positions).all(|j| {
        (1..=layout.max_signals).all(|n| {
            !solution.survivors.sets[&(j, layout.belief_id(j, n))].contains(&1)
        })
    });
    Ok(ContagionOutcome {
        all_zero_unique,
        rounds: solution.rounds,
        front,
        survivors: solution.survivors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::validate::validate_game;

    fn small_params() -> EmailGameParams {
        EmailGameParams::new(1.0, 2.0, 0.5, 1.0, 5, 3, 2).unwrap()
    }

    #[test]
    fn contagion_function_values() {
        // Frozen against 50-digit evaluation of the closed form.
        assert!((contagion_function(1.0) - 0.418_023_293_130_673_6).abs() < 1e-15);
        assert!((contagion_function(0.25) - 0.479_188_335_812_201_55).abs() < 1e-15);
        // Limit 1/2 from below as alpha vanishes.
        assert!((contagion_function(1e-6) - 0.5).abs() < 1e-6);
        // Strictly decreasing on a grid.
        let grid = [0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0];
        for w in grid.windows(2) {
            assert!(contagion_function(w[0]) > contagion_function(w[1]));
        }
    }

    #[test]
    fn risk_dominance_values() {
        assert_eq!(risk_dominance_threshold(1.0, 2.0).unwrap(), 2.0 / 3.0);
        assert_eq!(risk_dominance_threshold(1.0, 3.0).unwrap(), 0.75);
        // Always above one half under L > M.
        assert!(risk_dominance_threshold(0.99, 1.0).unwrap() > 0.5);
        assert!(risk_dominance_threshold(1.0, 1.0).is_err());
    }

    #[test]
    fn posterior_formula() {
        let params = small_params();
        // Position zero is perfectly informed.
        assert_eq!(pi_i(&params, 0.0), 0.0);
        // Frozen against direct high-precision evaluation at i = 0.5.
        assert!((pi_i(&params, 0.5) - 0.282_366_700_803_208_1).abs() < 1e-15);
        // Strictly increasing along the circle.
        let grid: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
        for w in grid.windows(2) {
            assert!(pi_i(&params, w[0]) < pi_i(&params, w[1]));
        }
    }

    #[test]
    fn generated_game_validates() {
        let email = build_email_game(&small_params()).unwrap();
        let report = validate_game(&email.game);
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn no_signal_at_position_zero_is_certain_of_quiet() {
        let email = build_email_game(&small_params()).unwrap();
        let probs = email.conditional_death_probabilities(0, 0);
        assert_eq!(probs[email.layout.quiet_world()], 1.0);
        assert!(probs.iter().sum::<f64>() == 1.0);
    }

    #[test]
    fn signal_beliefs_are_certain_of_the_active_state() {
        let email = build_email_game(&small_params()).unwrap();
        for j in 0..email.layout.n_positions {
            for n in 1..=email.layout.max_signals {
                let probs = email.conditional_death_probabilities(j, n);
                assert!(probs[email.layout.quiet_world()] == 0.0);
                let total: f64 = probs.iter().sum();
                assert!((total - 1.0).abs() < 1e-12, "({j},{n}) sums to {total}");
            }
        }
    }

    #[test]
    fn endless_world_population_has_maximal_signals() {
        let email = build_email_game(&small_params()).unwrap();
        let atoms = &email.game.type_space.tau[email.layout.endless_world()];
        for atom in atoms {
            assert_eq!(atom.belief, email.layout.cc_belief_id());
        }
        // And in the last finite interval every position has seen the cap.
        let m = email.layout.n_intervals() - 1;
        for j in 0..email.layout.n_positions {
            assert!(email.layout.signals_at(j, m) >= email.layout.max_signals - 1);
        }
    }

    #[test]
    fn contagion_eliminates_attack_everywhere() {
        let out = contagion_check(&small_params()).unwrap();
        assert!(out.all_zero_unique, "front: {:?}", out.front.last());
        // The front coordinate is nondecreasing over rounds.
        let times: Vec<f64> = out.front.iter().filter_map(|r| r.furthest_time).collect();
        for w in times.windows(2) {
            assert!(w[1] >= w[0]);
        }
        // The common-certainty pair keeps both actions.
        let cc = email_cc_pair(&small_params());
        assert_eq!(out.survivors.sets[&cc].len(), 2);
    }

    fn email_cc_pair(params: &EmailGameParams) -> (usize, usize) {
        let email = build_email_game(params).unwrap();
        (0, email.layout.cc_belief_id())
    }

    #[test]
    fn risk_dominant_attack_stalls_the_cascade() {
        // L < M puts the coordination threshold below one half while the
        // contagion quantity approaches one half for small alpha, so the
        // front cannot move.
        let params = EmailGameParams::new_relaxed(1.0, 0.8, 0.5, 0.1, 5, 3, 2).unwrap();
        let out = contagion_check(&params).unwrap();
        assert!(!out.all_zero_unique);
    }

    #[test]
    fn tail_to_common_certainty_stalls_near_the_horizon() {
        let mut params = small_params();
        params.tail_policy = TailPolicy::ToCommonCertainty;
        let out = contagion_check(&params).unwrap();
        // The top layer leans on the surviving coordination island.
        assert!(!out.all_zero_unique);
        // But the renormalized policy clears it (previous test).
    }
}

#[cfg(test)]
mod edge_tests {
    use super::*;
    use crate::game::validate::validate_game;

    #[test]
    fn posterior_approaches_the_full_circle_limit() {
        let params = EmailGameParams::new(1.0, 2.0, 0.5, 1.0, 5, 3, 2).unwrap();
        let limit = {
            let caught = params.pi * (1.0 - (-params.alpha).exp());
            caught / (1.0 - params.pi + caught)
        };
        assert!((pi_i(&params, 1.0 - 1e-9) - limit).abs() < 1e-8);
    }

    #[test]
    fn position_multiple_reading_still_builds_a_valid_game() {
        let mut params = EmailGameParams::new(1.0, 2.0, 0.5, 1.0, 5, 3, 2).unwrap();
        params.reading = DeathIntervalReading::PositionMultiple;
        let email = build_email_game(&params).unwrap();
        let report = validate_game(&email.game);
        assert!(report.is_empty(), "{report}");
        // The readings coincide at one signal and differ from two on.
        let consistent =
            build_email_game(&EmailGameParams::new(1.0, 2.0, 0.5, 1.0, 5, 3, 2).unwrap()).unwrap();
        assert_eq!(
            email.conditional_death_probabilities(2, 1),
            consistent.conditional_death_probabilities(2, 1)
        );
        assert_ne!(
            email.conditional_death_probabilities(2, 2),
            consistent.conditional_death_probabilities(2, 2)
        );
    }

    #[test]
    fn tail_policy_to_common_certainty_puts_mass_on_the_endless_world() {
        let mut params = EmailGameParams::new(1.0, 2.0, 0.5, 1.0, 5, 3, 2).unwrap();
        params.tail_policy = TailPolicy::ToCommonCertainty;
        let email = build_email_game(&params).unwrap();
        assert!(validate_game(&email.game).is_empty());
        // Top-layer beliefs away from position zero carry tail mass.
        let probs = email.conditional_death_probabilities(3, 3);
        assert!(probs[email.layout.endless_world()] > 0.0);
        // Renormalized builds do not.
        let renorm = build_email_game(&EmailGameParams::new(1.0, 2.0, 0.5, 1.0, 5, 3, 2).unwrap()).unwrap();
        assert_eq!(renorm.conditional_death_probabilities(3, 3)[renorm.layout.endless_world()], 0.0);
    }
}
