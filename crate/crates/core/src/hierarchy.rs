//! Finite-depth belief hierarchies extracted from a type space.
//!
//! The first-order object of a belief is its pushforward onto states of
//! nature. The order-(k+1) object is a joint distribution over the state of
//! nature and the population distribution of characteristic paired with
//! order-k hierarchies. Extraction replaces every world by its state and its
//! population distribution mapped through order-(k-1) extraction, merging
//! worlds that become indistinguishable; coherence (each level marginalizes
//! to the previous one) then holds by construction and is rechecked
//! explicitly by [`check_coherence`].
//!
//! Canonical form: atom lists sorted with probabilities rounded to 12
//! decimal digits, shared subobjects deduplicated through a content table.
//! Two beliefs are hierarchy-equivalent at a depth when their canonical
//! forms coincide.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::game::GameInstance;

/// Hard default guard: level sizes grow super-exponentially in depth.
pub const DEFAULT_DEPTH_CAP: usize = 3;

#[derive(Debug, Clone)]
pub struct TruncatedHierarchy {
    pub depth: usize,
    /// `levels[k-1]` is the order-k object.
    pub levels: Vec<Level>,
}

#[derive(Debug, Clone)]
pub struct Level {
    pub atoms: Vec<LevelAtom>,
}

#[derive(Debug, Clone)]
pub struct LevelAtom {
    pub state: usize,
    /// Absent at order 1.
    pub population: Option<Population>,
    pub prob: f64,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub atoms: Vec<PopAtom>,
}

#[derive(Debug, Clone)]
pub struct PopAtom {
    pub characteristic: usize,
    /// Order-(k-1) hierarchy of the referenced belief.
    pub hierarchy: Arc<TruncatedHierarchy>,
    pub mass: f64,
}

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("depth {requested} exceeds the combinatorial guard {cap}")]
    DepthCapExceeded { requested: usize, cap: usize },
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("belief id {0} out of range")]
    UnknownBelief(usize),
}

fn round12(p: f64) -> String {
    format!("{p:.12}")
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

struct Builder<'g> {
    g: &'g GameInstance,
    /// (belief, depth) -> (content id, tree)
    memo: HashMap<(usize, usize), (u32, Arc<TruncatedHierarchy>)>,
    content_ids: HashMap<String, u32>,
    trees: HashMap<u32, Arc<TruncatedHierarchy>>,
}

impl<'g> Builder<'g> {
    fn new(g: &'g GameInstance) -> Self {
        Self { g, memo: HashMap::new(), content_ids: HashMap::new(), trees: HashMap::new() }
    }

    fn build(&mut self, belief: usize, depth: usize) -> (u32, Arc<TruncatedHierarchy>) {
        if let Some(hit) = self.memo.get(&(belief, depth)) {
            return hit.clone();
        }
        let (shallow, tree) = if depth == 1 {
            let mut by_state: BTreeMap<usize, f64> = BTreeMap::new();
            for (t, p) in self.g.beliefs[belief].support() {
                *by_state.entry(self.g.type_space.sigma[t]).or_insert(0.0) += p;
            }
            let atoms: Vec<LevelAtom> = by_state
                .iter()
                .map(|(&state, &prob)| LevelAtom { state, population: None, prob })
                .collect();
            let shallow = format!(
                "1|{}",
                by_state
                    .iter()
                    .map(|(s, p)| format!("{s}:{}", round12(*p)))
                    .collect::<Vec<_>>()
                    .join(",")
            );
            let tree = TruncatedHierarchy { depth: 1, levels: vec![Level { atoms }] };
            (shallow, tree)
        } else {
            let (parent_id, parent_tree) = self.build(belief, depth - 1);
            // Group worlds by (state, population mapped through depth-1
            // extraction), using content ids as grouping keys.
            let mut groups: BTreeMap<(usize, String), (f64, Population)> = BTreeMap::new();
            // Collect supports up front: `self` is reborrowed in the loop.
            let support: Vec<(usize, f64)> = self.g.beliefs[belief].support().collect();
            for (t, p) in support {
                let state = self.g.type_space.sigma[t];
                let mut pop: BTreeMap<(usize, u32), (f64, Arc<TruncatedHierarchy>)> =
                    BTreeMap::new();
                let atoms = self.g.type_space.tau[t].clone();
                for atom in &atoms {
                    if atom.weight <= 0.0 {
                        continue;
                    }
                    let (cid, child) = self.build(atom.belief, depth - 1);
                    let entry = pop
                        .entry((atom.characteristic, cid))
                        .or_insert((0.0, child));
                    entry.0 += atom.weight;
                }
                let pop_key = pop
                    .iter()
                    .map(|(&(c, cid), (mass, _))| format!("({c},#{cid}):{}", round12(*mass)))
                    .collect::<Vec<_>>()
                    .join(",");
                let population = Population {
                    atoms: pop
                        .into_iter()
                        .map(|((characteristic, _), (mass, hierarchy))| PopAtom {
                            characteristic,
                            hierarchy,
                            mass,
                        })
                        .collect(),
                };
                let entry = groups.entry((state, pop_key)).or_insert((0.0, population));
                entry.0 += p;
            }
            let mut atoms = Vec::with_capacity(groups.len());
            let mut shallow_parts = Vec::with_capacity(groups.len());
            for ((state, pop_key), (prob, population)) in groups {
                shallow_parts.push(format!("({state},{{{pop_key}}}):{}", round12(prob)));
                atoms.push(LevelAtom { state, population: Some(population), prob });
            }
            let shallow = format!("{depth}|#{parent_id}|{}", shallow_parts.join(";"));
            let mut levels = parent_tree.levels.clone();
            levels.push(Level { atoms });
            (shallow, TruncatedHierarchy { depth, levels })
        };

        let next_id = self.content_ids.len() as u32;
        let id = *self.content_ids.entry(shallow).or_insert(next_id);
        let arc = self.trees.entry(id).or_insert_with(|| Arc::new(tree)).clone();
        self.memo.insert((belief, depth), (id, arc.clone()));
        (id, arc)
    }
}

/// Extract the depth-`depth` hierarchy of a belief.
pub fn extract_hierarchy(
    g: &GameInstance,
    belief: usize,
    depth: usize,
) -> Result<TruncatedHierarchy, HierarchyError> {
    extract_hierarchy_with_cap(g, belief, depth, DEFAULT_DEPTH_CAP)
}

/// Extraction with an explicit combinatorial guard.
pub fn extract_hierarchy_with_cap(
    g: &GameInstance,
    belief: usize,
    depth: usize,
    cap: usize,
) -> Result<TruncatedHierarchy, HierarchyError> {
    if depth == 0 {
        return Err(HierarchyError::ZeroDepth);
    }
    if depth > cap {
        return Err(HierarchyError::DepthCapExceeded { requested: depth, cap });
    }
    if belief >= g.n_beliefs() {
        return Err(HierarchyError::UnknownBelief(belief));
    }
    let mut builder = Builder::new(g);
    let (_, tree) = builder.build(belief, depth);
    Ok(tree.as_ref().clone())
}

/// Equality of canonical forms at the given depth.
pub fn hierarchy_equivalent(
    g: &GameInstance,
    belief_a: usize,
    belief_b: usize,
    depth: usize,
) -> Result<bool, HierarchyError> {
    if depth == 0 {
        return Err(HierarchyError::ZeroDepth);
    }
    if depth > DEFAULT_DEPTH_CAP {
        return Err(HierarchyError::DepthCapExceeded { requested: depth, cap: DEFAULT_DEPTH_CAP });
    }
    for b in [belief_a, belief_b] {
        if b >= g.n_beliefs() {
            return Err(HierarchyError::UnknownBelief(b));
        }
    }
    let mut builder = Builder::new(g);
    let (id_a, _) = builder.build(belief_a, depth);
    let (id_b, _) = builder.build(belief_b, depth);
    Ok(id_a == id_b)
}

// ---------------------------------------------------------------------------
// Canonical serialization and coherence
// ---------------------------------------------------------------------------

/// Content-based canonical string: atoms sorted, probabilities rounded to 12
/// digits, nested hierarchies expanded recursively. Structurally identical
/// hierarchies serialize byte-identically regardless of how they were built.
pub fn canonical_serialization(h: &TruncatedHierarchy) -> String {
    let mut memo: HashMap<*const TruncatedHierarchy, String> = HashMap::new();
    canon_rec(h, &mut memo)
}

fn canon_rec(
    h: &TruncatedHierarchy,
    memo: &mut HashMap<*const TruncatedHierarchy, String>,
) -> String {
    let key = h as *const TruncatedHierarchy;
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    let mut level_strs = Vec::with_capacity(h.levels.len());
    for level in &h.levels {
        let mut atom_strs: Vec<String> = level
            .atoms
            .iter()
            .map(|atom| {
                let pop = atom.population.as_ref().map(|population| {
                    let mut entries: Vec<String> = population
                        .atoms
                        .iter()
                        .map(|pa| {
                            format!(
                                "({},{}):{}",
                                pa.characteristic,
                                canon_rec(&pa.hierarchy, memo),
                                round12(pa.mass)
                            )
                        })
                        .collect();
                    entries.sort();
                    entries.join(",")
                });
                match pop {
                    Some(pop) => format!("({},{{{pop}}}):{}", atom.state, round12(atom.prob)),
                    None => format!("{}:{}", atom.state, round12(atom.prob)),
                }
            })
            .collect();
        atom_strs.sort();
        level_strs.push(atom_strs.join(";"));
    }
    let out = format!("H[{}]", level_strs.join("|"));
    memo.insert(key, out.clone());
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoherenceCheck {
    pub coherent: bool,
    /// The lowest level whose object is not the marginal of the next one.
    pub first_violation_level: Option<usize>,
}

/// Verify the marginal chain: each level must be the appropriate marginal of
/// the one above it, exactly in the finite encoding.
pub fn check_coherence(h: &TruncatedHierarchy) -> CoherenceCheck {
    for k in 1..h.depth {
        // levels[k] is the order-(k+1) object; marginalize it down and
        // compare against levels[k-1].
        let marginal = marginalize(&h.levels[k], k);
        if !levels_equal(&marginal, &h.levels[k - 1]) {
            return CoherenceCheck { coherent: false, first_violation_level: Some(k) };
        }
    }
    CoherenceCheck { coherent: true, first_violation_level: None }
}

/// Drop the population side (order 2 -> 1) or truncate each referenced
/// hierarchy by one level (order k+1 -> k), merging atoms that collide.
fn marginalize(level: &Level, k: usize) -> Level {
    let mut memo: HashMap<*const TruncatedHierarchy, String> = HashMap::new();
    let mut groups: BTreeMap<(usize, Option<String>), (f64, Option<Population>)> = BTreeMap::new();
    for atom in &level.atoms {
        let (key_pop, value_pop) = if k == 1 {
            (None, None)
        } else {
            let population = atom.population.as_ref().expect("order >= 2 carries populations");
            let mut merged: BTreeMap<(usize, String), (f64, Arc<TruncatedHierarchy>)> =
                BTreeMap::new();
            for pa in &population.atoms {
                let truncated = Arc::new(TruncatedHierarchy {
                    depth: k - 1,
                    levels: pa.hierarchy.levels[..k - 1].to_vec(),
                });
                let canon = canon_rec(&truncated, &mut memo);
                // Memo keys are raw pointers; the truncated tree must outlive
                // the memo entry, so key by content instead.
                memo.remove(&(truncated.as_ref() as *const TruncatedHierarchy));
                let entry = merged
                    .entry((pa.characteristic, canon))
                    .or_insert((0.0, truncated));
                entry.0 += pa.mass;
            }
            let key = merged
                .iter()
                .map(|(&(c, ref canon), (mass, _))| format!("({c},{canon}):{}", round12(*mass)))
                .collect::<Vec<_>>()
                .join(",");
            let population = Population {
                atoms: merged
                    .into_iter()
                    .map(|((characteristic, _), (mass, hierarchy))| PopAtom {
                        characteristic,
                        hierarchy,
                        mass,
                    })
                    .collect(),
            };
            (Some(key), Some(population))
        };
        let entry = groups.entry((atom.state, key_pop)).or_insert((0.0, value_pop));
        entry.0 += atom.prob;
    }
    Level {
        atoms: groups
            .into_iter()
            .map(|((state, _), (prob, population))| LevelAtom { state, population, prob })
            .collect(),
    }
}

fn levels_equal(a: &Level, b: &Level) -> bool {
    let canon_of = |level: &Level| -> BTreeMap<(usize, Option<String>), f64> {
        let mut memo: HashMap<*const TruncatedHierarchy, String> = HashMap::new();
        let mut out: BTreeMap<(usize, Option<String>), f64> = BTreeMap::new();
        for atom in &level.atoms {
            let pop_key = atom.population.as_ref().map(|population| {
                let mut entries: Vec<String> = population
                    .atoms
                    .iter()
                    .map(|pa| {
                        format!(
                            "({},{}):{}",
                            pa.characteristic,
                            canon_rec(&pa.hierarchy, &mut memo),
                            round12(pa.mass)
                        )
                    })
                    .collect();
                entries.sort();
                entries.join(",")
            });
            *out.entry((atom.state, pop_key)).or_insert(0.0) += atom.prob;
        }
        out
    };
    let ca = canon_of(a);
    let cb = canon_of(b);
    if ca.len() != cb.len() {
        return false;
    }
    ca.iter().all(|(k, pa)| cb.get(k).map(|pb| (pa - pb).abs() <= 1e-9).unwrap_or(false))
}

/// Nested JSON rendering with labels.
pub fn hierarchy_json(g: &GameInstance, h: &TruncatedHierarchy) -> serde_json::Value {
    fn hier(g: &GameInstance, h: &TruncatedHierarchy) -> serde_json::Value {
        serde_json::json!({
            "depth": h.depth,
            "levels": h.levels.iter().map(|level| {
                level.atoms.iter().map(|atom| {
                    let mut obj = serde_json::json!({
                        "state": g.states.labels[atom.state],
                        "prob": atom.prob,
                    });
                    if let Some(pop) = &atom.population {
                        obj["population"] = pop.atoms.iter().map(|pa| {
                            serde_json::json!({
                                "characteristic": g.characteristics.labels[pa.characteristic],
                                "mass": pa.mass,
                                "hierarchy": hier(g, &pa.hierarchy),
                            })
                        }).collect();
                    }
                    obj
                }).collect::<Vec<_>>()
            }).collect::<Vec<_>>(),
        })
    }
    hier(g, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::global_game::{complete_info_instance, ladder_instance, LadderParams};

    #[test]
    fn depth_one_point_mass() {
        let g = complete_info_instance(&[0.5, 0.75]).unwrap();
        let h = extract_hierarchy(&g, 0, 1).unwrap();
        assert_eq!(h.levels[0].atoms.len(), 1);
        assert_eq!(h.levels[0].atoms[0].state, 0);
        assert!((h.levels[0].atoms[0].prob - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_worlds_give_identical_hierarchies() {
        // Two worlds with the same state and the same population must be
        // indistinguishable at every depth.
        let mut g = complete_info_instance(&[0.5]).unwrap();
        g.type_space.worlds.push("w0_twin".into());
        g.type_space.sigma.push(0);
        g.type_space.tau.push(g.type_space.tau[0].clone());
        g.beliefs[0].probs.push(0.0);
        g.beliefs.push(crate::game::BeliefVector::point_mass(2, 1));
        g.query_pairs.push((0, 1));
        // Beliefs 0 and 1 are point masses on the two twin worlds.
        for depth in 1..=3 {
            assert!(hierarchy_equivalent(&g, 0, 1, depth).unwrap(), "depth {depth}");
        }
    }

    #[test]
    fn marginal_chain_holds_for_extraction() {
        let g = ladder_instance(LadderParams { n: 7, window: 2 }).unwrap();
        for belief in 0..g.n_beliefs() {
            for depth in 1..=3 {
                let h = extract_hierarchy(&g, belief, depth).unwrap();
                let check = check_coherence(&h);
                assert!(check.coherent, "belief {belief} depth {depth}");
            }
        }
    }

    #[test]
    fn depth_two_marginal_equals_depth_one() {
        let g = ladder_instance(LadderParams { n: 5, window: 1 }).unwrap();
        let h1 = extract_hierarchy(&g, 2, 1).unwrap();
        let h2 = extract_hierarchy(&g, 2, 2).unwrap();
        let marg = marginalize(&h2.levels[1], 1);
        assert!(levels_equal(&marg, &h1.levels[0]));
    }

    #[test]
    fn corrupted_level_breaks_coherence() {
        let mut g = complete_info_instance(&[0.25, 0.75]).unwrap();
        g.beliefs.push(crate::game::BeliefVector { probs: vec![0.5, 0.5] });
        g.query_pairs.push((0, 2));
        let mut h = extract_hierarchy(&g, 2, 2).unwrap();
        // Shift probability between the order-2 atoms without touching the
        // order-1 object.
        assert!(h.levels[1].atoms.len() >= 2);
        h.levels[1].atoms[0].prob += 0.125;
        h.levels[1].atoms[1].prob -= 0.125;
        let check = check_coherence(&h);
        assert!(!check.coherent);
        assert_eq!(check.first_violation_level, Some(1));
    }

    #[test]
    fn mixture_of_coherent_hierarchies_is_coherent() {
        // Marginalization is linear, so an atom-level mixture of two
        // extracted hierarchies stays coherent.
        let g = ladder_instance(LadderParams { n: 5, window: 1 }).unwrap();
        let a = extract_hierarchy(&g, 1, 2).unwrap();
        let b = extract_hierarchy(&g, 3, 2).unwrap();
        let mix = TruncatedHierarchy {
            depth: 2,
            levels: (0..2)
                .map(|k| Level {
                    atoms: a.levels[k]
                        .atoms
                        .iter()
                        .chain(&b.levels[k].atoms)
                        .map(|atom| LevelAtom {
                            state: atom.state,
                            population: atom.population.clone(),
                            prob: 0.5 * atom.prob,
                        })
                        .collect(),
                })
                .collect(),
        };
        assert!(check_coherence(&mix).coherent);
    }

    #[test]
    fn different_state_pushforwards_differ_at_depth_one() {
        let g = complete_info_instance(&[0.5, 0.75]).unwrap();
        assert!(!hierarchy_equivalent(&g, 0, 1, 1).unwrap());
    }

    #[test]
    fn equivalence_is_reflexive() {
        let g = ladder_instance(LadderParams::default()).unwrap();
        assert!(hierarchy_equivalent(&g, 4, 4, 3).unwrap());
    }

    #[test]
    fn depth_guard_enforced() {
        let g = complete_info_instance(&[0.5]).unwrap();
        assert!(matches!(
            extract_hierarchy(&g, 0, 4),
            Err(HierarchyError::DepthCapExceeded { .. })
        ));
        assert!(extract_hierarchy_with_cap(&g, 0, 4, 4).is_ok());
    }

    #[test]
    fn extraction_is_deterministic() {
        let g = ladder_instance(LadderParams::default()).unwrap();
        let a = canonical_serialization(&extract_hierarchy(&g, 6, 3).unwrap());
        let b = canonical_serialization(&extract_hierarchy(&g, 6, 3).unwrap());
        assert_eq!(a, b);
    }
}
