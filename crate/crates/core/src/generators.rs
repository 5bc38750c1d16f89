//! Seeded random instance families.
//!
//! All probabilities and payoff entries are dyadic rationals (small integers
//! over a power of two), so belief-weighted sums evaluate exactly in floating
//! point regardless of accumulation order. That keeps set-valued outputs of
//! different solution routes literally equal instead of equal up to noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{
    ActionLattice, AvailabilityMap, BeliefVector, CharacteristicSpace, GameInstance,
    LinearPayoff, PayoffOracle, StateSpace, TauAtom, TypeSpace,
};
use crate::global_game::regime_change_payoff;

fn dyadic(rng: &mut ChaCha8Rng, lo_units: i64, hi_units: i64, denom: f64) -> f64 {
    rng.gen_range(lo_units..=hi_units) as f64 / denom
}

/// Split `units` into `cells` nonnegative integer parts; `min_unit` forces
/// every part to carry at least that much.
fn composition(rng: &mut ChaCha8Rng, units: u64, cells: usize, min_unit: u64) -> Vec<u64> {
    assert!(units >= min_unit * cells as u64);
    let free = units - min_unit * cells as u64;
    let mut cuts: Vec<u64> = (0..cells - 1).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut parts = Vec::with_capacity(cells);
    let mut prev = 0;
    for &c in &cuts {
        parts.push(c - prev + min_unit);
        prev = c;
    }
    parts.push(free - prev + min_unit);
    parts
}

fn prob_vector(rng: &mut ChaCha8Rng, cells: usize, units: u64) -> Vec<f64> {
    composition(rng, units, cells, 0).into_iter().map(|u| u as f64 / units as f64).collect()
}

/// A random linear game with chain actions, availability sublattices, and
/// payoff weights built from a nonnegative product form, which makes
/// increasing differences hold by construction (and supermodularity
/// vacuously, chains having no incomparable pairs).
pub fn random_supermodular(seed: u64) -> GameInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nc = rng.gen_range(1..=3);
    let na = rng.gen_range(1..=3);
    let ns = rng.gen_range(1..=3);
    let nw = rng.gen_range(1..=4);
    let nb = rng.gen_range(1..=5);

    let nu = prob_vector(&mut rng, nc, 16);
    // Keep every characteristic populated so tau atoms exist for each.
    let nu = if nu.contains(&0.0) {
        vec![1.0 / nc as f64; nc] // fall back to uniform when a cell empties
    } else {
        nu
    };

    let beliefs: Vec<BeliefVector> =
        (0..nb).map(|_| BeliefVector { probs: prob_vector(&mut rng, nw, 64) }).collect();

    let sigma: Vec<usize> = (0..nw).map(|_| rng.gen_range(0..ns)).collect();
    let mut tau = Vec::with_capacity(nw);
    for _ in 0..nw {
        let mut atoms = Vec::new();
        for (c, &mass) in nu.iter().enumerate() {
            let n_atoms = rng.gen_range(1..=2.min(nb));
            let mut ids: Vec<usize> = Vec::new();
            while ids.len() < n_atoms {
                let b = rng.gen_range(0..nb);
                if !ids.contains(&b) {
                    ids.push(b);
                }
            }
            ids.sort_unstable();
            // Mass splits in units of 1/64: nu is in 16ths, the split in 4ths.
            let split = composition(&mut rng, 4, ids.len(), 1);
            for (b, &part) in ids.iter().zip(&split) {
                atoms.push(TauAtom {
                    characteristic: c,
                    belief: *b,
                    weight: mass * part as f64 / 4.0,
                });
            }
        }
        tau.push(atoms);
    }

    let availability: Vec<Vec<usize>> = (0..nc)
        .map(|_| {
            let mut set: Vec<usize> = (0..na).filter(|_| rng.gen_bool(0.7)).collect();
            if set.is_empty() {
                set.push(rng.gen_range(0..na));
            }
            set
        })
        .collect();

    let mut lin = LinearPayoff::zeros(nc, na, ns);
    let mut ra: Vec<f64> = (0..na).map(|_| dyadic(&mut rng, 0, 8, 8.0)).collect();
    ra.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rb: Vec<f64> = (0..na).map(|_| dyadic(&mut rng, 0, 8, 8.0)).collect();
    rb.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for c in 0..nc {
        for s in 0..ns {
            for a in 0..na {
                lin.set_base(c, a, s, dyadic(&mut rng, -16, 16, 8.0));
            }
            for c2 in 0..nc {
                let gain = dyadic(&mut rng, 0, 8, 8.0);
                for a2 in 0..na {
                    let offset = dyadic(&mut rng, -8, 8, 8.0);
                    for a in 0..na {
                        lin.set_weight(c, a, s, c2, a2, gain * ra[a] * rb[a2] + offset);
                    }
                }
            }
        }
    }

    GameInstance {
        characteristics: CharacteristicSpace {
            labels: (0..nc).map(|c| format!("c{c}")).collect(),
            nu,
        },
        actions: ActionLattice::chain((0..na).map(|a| format!("a{a}")).collect()),
        availability: AvailabilityMap { sets: availability },
        states: StateSpace {
            labels: (0..ns).map(|s| format!("s{s}")).collect(),
            values: Some((0..ns).map(|s| s as f64 / 4.0).collect()),
        },
        type_space: TypeSpace { worlds: (0..nw).map(|t| format!("w{t}")).collect(), sigma, tau },
        beliefs,
        payoff: PayoffOracle::Linear(lin),
        query_pairs: Vec::new(),
    }
}

/// A random single-characteristic binary-action regime-change game. Mixes a
/// randomized ladder (point-mass beliefs, sliding population windows) with
/// fully random belief vectors; every belief is registered for querying.
pub fn random_global_game(seed: u64) -> GameInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ladder_style = rng.gen_bool(0.6);
    if ladder_style {
        let n: usize = rng.gen_range(6..=40);
        // Sorted dyadic state values in [-1, 2].
        let mut units: Vec<i64> = (0..n).map(|_| rng.gen_range(-16..=32)).collect();
        units.sort_unstable();
        let values: Vec<f64> = units.iter().map(|&u| u as f64 / 16.0).collect();
        let mut g = crate::global_game::complete_info_instance(&values).unwrap();
        let k = rng.gen_range(1..=4usize);
        for i in 0..n {
            let lo = i.saturating_sub(k);
            let hi = (i + k).min(n - 1);
            let ids: Vec<usize> = (lo..=hi).collect();
            let split = composition(&mut rng, 64, ids.len(), 1);
            g.type_space.tau[i] = ids
                .iter()
                .zip(&split)
                .map(|(&b, &part)| TauAtom {
                    characteristic: 0,
                    belief: b,
                    weight: part as f64 / 64.0,
                })
                .collect();
        }
        g
    } else {
        let nw = rng.gen_range(2..=12);
        let nb = rng.gen_range(2..=12);
        let values: Vec<f64> = (0..nw).map(|_| rng.gen_range(-16..=32) as f64 / 16.0).collect();
        let beliefs: Vec<BeliefVector> =
            (0..nb).map(|_| BeliefVector { probs: prob_vector(&mut rng, nw, 64) }).collect();
        let mut tau = Vec::with_capacity(nw);
        for _ in 0..nw {
            let n_atoms = rng.gen_range(1..=3.min(nb));
            let mut ids: Vec<usize> = Vec::new();
            while ids.len() < n_atoms {
                let b = rng.gen_range(0..nb);
                if !ids.contains(&b) {
                    ids.push(b);
                }
            }
            ids.sort_unstable();
            let split = composition(&mut rng, 64, ids.len(), 1);
            tau.push(
                ids.iter()
                    .zip(&split)
                    .map(|(&b, &part)| TauAtom {
                        characteristic: 0,
                        belief: b,
                        weight: part as f64 / 64.0,
                    })
                    .collect(),
            );
        }
        GameInstance {
            characteristics: CharacteristicSpace { labels: vec!["c0".into()], nu: vec![1.0] },
            actions: ActionLattice::chain(vec!["noninvest".into(), "invest".into()]),
            availability: AvailabilityMap { sets: vec![vec![0, 1]] },
            states: StateSpace {
                labels: (0..nw).map(|s| format!("s{s}")).collect(),
                values: Some(values.clone()),
            },
            type_space: TypeSpace {
                worlds: (0..nw).map(|t| format!("w{t}")).collect(),
                sigma: (0..nw).collect(),
                tau,
            },
            beliefs,
            payoff: PayoffOracle::Linear(regime_change_payoff(&values)),
            query_pairs: (0..nb).map(|b| (0, b)).collect(),
        }
    }
}

/// Tiny instances whose joint conjecture polytopes have at most two free
/// dimensions, so an exhaustive fine grid over them is an affordable oracle
/// for best-reply feasibility. Belief 0 is the queried one; population atoms
/// reference beliefs 1 and 2.
pub fn random_micro(seed: u64) -> GameInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let variant = rng.gen_range(0..4);
    let (nw, na, atoms_per_world): (usize, usize, Vec<usize>) = match variant {
        0 => (1, 3, vec![1]),
        1 => (1, 2, vec![2]),
        2 => (2, 2, vec![1, 1]),
        _ => (2, 2, vec![1, 1]),
    };
    let distinct_states = variant != 3;
    let ns = if distinct_states { nw } else { 1 };
    let nb = 3;
    let beliefs: Vec<BeliefVector> =
        (0..nb).map(|_| BeliefVector { probs: prob_vector(&mut rng, nw, 8) }).collect();
    let mut tau = Vec::with_capacity(nw);
    let mut next_belief = 1usize;
    for t in 0..nw {
        let n_atoms = atoms_per_world[t];
        let split = composition(&mut rng, 8, n_atoms, 1);
        let atoms: Vec<TauAtom> = (0..n_atoms)
            .map(|k| {
                let belief = 1 + (next_belief + k - 1) % 2;
                TauAtom { characteristic: 0, belief, weight: split[k] as f64 / 8.0 }
            })
            .collect();
        next_belief += n_atoms;
        tau.push(atoms);
    }
    let mut lin = LinearPayoff::zeros(1, na, ns);
    for a in 0..na {
        for s in 0..ns {
            lin.set_base(0, a, s, dyadic(&mut rng, -16, 16, 8.0));
            for a2 in 0..na {
                lin.set_weight(0, a, s, 0, a2, dyadic(&mut rng, -8, 8, 8.0));
            }
        }
    }
    GameInstance {
        characteristics: CharacteristicSpace { labels: vec!["c0".into()], nu: vec![1.0] },
        actions: ActionLattice::chain((0..na).map(|a| format!("a{a}")).collect()),
        availability: AvailabilityMap { sets: vec![(0..na).collect()] },
        states: StateSpace {
            labels: (0..ns).map(|s| format!("s{s}")).collect(),
            values: Some((0..ns).map(|s| s as f64).collect()),
        },
        type_space: TypeSpace {
            worlds: (0..nw).map(|t| format!("w{t}")).collect(),
            sigma: if distinct_states { (0..nw).collect() } else { vec![0; nw] },
            tau,
        },
        beliefs,
        payoff: PayoffOracle::Linear(lin),
        query_pairs: vec![(0, 0)],
    }
}

/// Append a copy of world `t` and split every belief's mass on `t` evenly
/// between the twins. The new instance is behaviorally identical; halving is
/// exact in floating point.
pub fn duplicate_world(g: &GameInstance, t: usize) -> GameInstance {
    let mut out = g.clone();
    out.type_space.worlds.push(format!("{}_twin", g.type_space.worlds[t]));
    out.type_space.sigma.push(g.type_space.sigma[t]);
    out.type_space.tau.push(g.type_space.tau[t].clone());
    for belief in &mut out.beliefs {
        let half = belief.probs[t] / 2.0;
        belief.probs[t] = half;
        belief.probs.push(half);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::validate::validate_game;

    #[test]
    fn generated_instances_validate() {
        for seed in 0..25 {
            let g = random_supermodular(seed);
            assert!(validate_game(&g).is_empty(), "supermodular seed {seed}");
            let g = random_global_game(seed);
            assert!(validate_game(&g).is_empty(), "global seed {seed}");
            let g = random_micro(seed);
            assert!(validate_game(&g).is_empty(), "micro seed {seed}");
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = random_supermodular(7);
        let b = random_supermodular(7);
        assert_eq!(a.beliefs, b.beliefs);
        assert_eq!(a.type_space.sigma, b.type_space.sigma);
    }

    #[test]
    fn supermodular_generator_passes_validators() {
        for seed in 0..25 {
            let g = random_supermodular(seed);
            let sm = crate::equilibrium::check_supermodular(&g, &[]);
            assert!(sm.all_ok(), "seed {seed}: {:?}", sm.violations);
            let id = crate::equilibrium::check_increasing_differences(&g).unwrap();
            assert!(id.increasing_differences_ok, "seed {seed}");
        }
    }

    #[test]
    fn duplication_preserves_validity() {
        for seed in 0..10 {
            let g = random_supermodular(seed);
            let dup = duplicate_world(&g, 0);
            assert!(validate_game(&dup).is_empty(), "seed {seed}");
        }
    }
}
