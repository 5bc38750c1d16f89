//! JSON file format for game instances.
//!
//! The file speaks labels; the in-memory model speaks indices. Loading
//! resolves labels and reports unknown ones; writing emits a canonical form
//! (sorted map keys, derived operation tables included, sparse payoff entries
//! in index order) so that emit-parse-emit is byte-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::validate::{validate_game, ValidationReport, Violation};
use super::{
    ActionLattice, AvailabilityMap, BeliefVector, CharacteristicSpace, GameInstance,
    LinearPayoff, PayoffOracle, StateSpace, TauAtom, TypeSpace,
};
use crate::order::check_lattice;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameFile {
    pub characteristics: CharacteristicsSection,
    pub actions: ActionsSection,
    /// characteristic label -> available action labels
    pub availability: BTreeMap<String, Vec<String>>,
    pub states: StatesSection,
    pub type_space: TypeSpaceSection,
    /// Belief vectors over worlds, referenced elsewhere by index.
    pub beliefs: Vec<Vec<f64>>,
    pub payoff: PayoffSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub query_pairs: Vec<QueryPairEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacteristicsSection {
    pub labels: Vec<String>,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionsSection {
    pub list: Vec<String>,
    /// Non-reflexive related pairs `[lo, hi]`; reflexive pairs are implied.
    pub leq: Vec<(String, String)>,
    /// Row-major operation tables; derivable from `leq` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meet: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatesSection {
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeSpaceSection {
    pub worlds: Vec<String>,
    /// world label -> state label
    pub sigma: BTreeMap<String, String>,
    /// world label -> population atoms
    pub tau: BTreeMap<String, Vec<TauAtomEntry>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauAtomEntry {
    pub characteristic: String,
    pub belief: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryPairEntry {
    pub characteristic: String,
    pub belief: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PayoffSection {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub base: Vec<BaseEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<WeightEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseEntry {
    pub characteristic: String,
    pub action: String,
    pub state: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightEntry {
    pub characteristic: String,
    pub action: String,
    pub state: String,
    pub other_characteristic: String,
    pub other_action: String,
    pub value: f64,
}

struct Resolver<'a> {
    labels: &'a [String],
    index: BTreeMap<&'a str, usize>,
}

impl<'a> Resolver<'a> {
    fn new(labels: &'a [String]) -> Self {
        let index = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        Self { labels, index }
    }

    fn get(&self, label: &str, kind: &str, report: &mut Vec<Violation>) -> Option<usize> {
        let hit = self.index.get(label).copied();
        if hit.is_none() {
            report.push(Violation {
                location: kind.to_string(),
                message: format!("unknown {kind} label {label:?} (known: {:?})", self.labels),
            });
        }
        hit
    }
}

impl GameFile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Canonical serialization; emit-parse-emit is byte-identical.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("game file serializes");
        s.push('\n');
        s
    }

    /// Resolve labels into a [`GameInstance`]. Unknown labels abort with a
    /// report; integer belief references pass through unchecked so that
    /// dangling ids surface as ordinary validation findings.
    pub fn resolve(&self) -> Result<GameInstance, ValidationReport> {
        let mut errs: Vec<Violation> = Vec::new();
        let chars = Resolver::new(&self.characteristics.labels);
        let acts = Resolver::new(&self.actions.list);
        let states = Resolver::new(&self.states.labels);
        let worlds = Resolver::new(&self.type_space.worlds);

        let na = self.actions.list.len();
        let mut leq = vec![false; na * na];
        for i in 0..na {
            leq[i * na + i] = true;
        }
        for (lo, hi) in &self.actions.leq {
            let lo = acts.get(lo, "action", &mut errs);
            let hi = acts.get(hi, "action", &mut errs);
            if let (Some(lo), Some(hi)) = (lo, hi) {
                leq[lo * na + hi] = true;
            }
        }
        let mut resolve_table = |table: &Option<Vec<Vec<String>>>, kind: &str| -> Option<Vec<usize>> {
            let table = table.as_ref()?;
            if table.len() != na || table.iter().any(|row| row.len() != na) {
                errs.push(Violation {
                    location: format!("actions.{kind}"),
                    message: "table is not n-by-n".into(),
                });
                return None;
            }
            let mut out = vec![0usize; na * na];
            for (i, row) in table.iter().enumerate() {
                for (j, cell) in row.iter().enumerate() {
                    out[i * na + j] = acts.get(cell, "action", &mut errs)?;
                }
            }
            Some(out)
        };
        let join_given = resolve_table(&self.actions.join, "join");
        let meet_given = resolve_table(&self.actions.meet, "meet");

        let availability: Vec<Vec<usize>> = self
            .characteristics
            .labels
            .iter()
            .map(|c| {
                let mut set: Vec<usize> = self
                    .availability
                    .get(c)
                    .map(|actions| {
                        actions
                            .iter()
                            .filter_map(|a| acts.get(a, "action", &mut errs))
                            .collect()
                    })
                    .unwrap_or_default();
                set.sort_unstable();
                set.dedup();
                set
            })
            .collect();
        for key in self.availability.keys() {
            if !chars.index.contains_key(key.as_str()) {
                errs.push(Violation {
                    location: "availability".into(),
                    message: format!("unknown characteristic label {key:?}"),
                });
            }
        }

        let nw = self.type_space.worlds.len();
        let mut sigma = vec![0usize; nw];
        for (world, state) in &self.type_space.sigma {
            if let (Some(t), Some(s)) = (
                worlds.get(world, "world", &mut errs),
                states.get(state, "state", &mut errs),
            ) {
                sigma[t] = s;
            }
        }
        for world in &self.type_space.worlds {
            if !self.type_space.sigma.contains_key(world) {
                errs.push(Violation {
                    location: "type_space.sigma".into(),
                    message: format!("world {world:?} has no state assignment"),
                });
            }
        }
        let mut tau: Vec<Vec<TauAtom>> = vec![Vec::new(); nw];
        for (world, atoms) in &self.type_space.tau {
            let Some(t) = worlds.get(world, "world", &mut errs) else { continue };
            let mut resolved: Vec<TauAtom> = Vec::new();
            for atom in atoms {
                let Some(c) = chars.get(&atom.characteristic, "characteristic", &mut errs) else {
                    continue;
                };
                if atom.weight == 0.0 {
                    continue;
                }
                // Merge duplicate (characteristic, belief) atoms.
                if let Some(prev) = resolved
                    .iter_mut()
                    .find(|p| p.characteristic == c && p.belief == atom.belief)
                {
                    prev.weight += atom.weight;
                } else {
                    resolved.push(TauAtom { characteristic: c, belief: atom.belief, weight: atom.weight });
                }
            }
            resolved.sort_by_key(|a| (a.characteristic, a.belief));
            tau[t] = resolved;
        }

        let payoff = match self.payoff.mode.as_str() {
            "linear" => {
                let mut l = LinearPayoff::zeros(
                    self.characteristics.labels.len(),
                    na,
                    self.states.labels.len(),
                );
                for e in &self.payoff.base {
                    let c = chars.get(&e.characteristic, "characteristic", &mut errs);
                    let a = acts.get(&e.action, "action", &mut errs);
                    let s = states.get(&e.state, "state", &mut errs);
                    if let (Some(c), Some(a), Some(s)) = (c, a, s) {
                        l.set_base(c, a, s, e.value);
                    }
                }
                for e in &self.payoff.weights {
                    let c = chars.get(&e.characteristic, "characteristic", &mut errs);
                    let a = acts.get(&e.action, "action", &mut errs);
                    let s = states.get(&e.state, "state", &mut errs);
                    let c2 = chars.get(&e.other_characteristic, "characteristic", &mut errs);
                    let a2 = acts.get(&e.other_action, "action", &mut errs);
                    if let (Some(c), Some(a), Some(s), Some(c2), Some(a2)) = (c, a, s, c2, a2) {
                        l.set_weight(c, a, s, c2, a2, e.value);
                    }
                }
                Some(PayoffOracle::Linear(l))
            }
            "blackbox" => {
                errs.push(Violation {
                    location: "payoff.mode".into(),
                    message: "blackbox oracles are constructed programmatically and cannot be loaded from a file".into(),
                });
                None
            }
            other => {
                errs.push(Violation {
                    location: "payoff.mode".into(),
                    message: format!("unknown mode {other:?}, expected \"linear\""),
                });
                None
            }
        };

        let query_pairs: Vec<(usize, usize)> = self
            .query_pairs
            .iter()
            .filter_map(|q| chars.get(&q.characteristic, "characteristic", &mut errs).map(|c| (c, q.belief)))
            .collect();

        if !errs.is_empty() {
            return Err(ValidationReport { violations: errs });
        }

        // Operation tables: take the given ones verbatim (validation compares
        // them against leq) or derive them when the order is a lattice.
        let (join, meet) = match (join_given, meet_given) {
            (Some(j), Some(m)) => (j, m),
            (j, m) => {
                let poset = crate::order::FinitePoset::new(
                    self.actions.list.clone(),
                    &relation_pairs(&leq, na),
                );
                let derived = check_lattice(&poset);
                if derived.is_lattice {
                    (j.unwrap_or(derived.join), m.unwrap_or(derived.meet))
                } else {
                    // Leave empty; validation reports the missing lattice
                    // structure on the instance.
                    (j.unwrap_or_default(), m.unwrap_or_default())
                }
            }
        };

        Ok(GameInstance {
            characteristics: CharacteristicSpace {
                labels: self.characteristics.labels.clone(),
                nu: self.characteristics.nu.clone(),
            },
            actions: ActionLattice { labels: self.actions.list.clone(), leq, join, meet },
            availability: AvailabilityMap { sets: availability },
            states: StateSpace { labels: self.states.labels.clone(), values: self.states.values.clone() },
            type_space: TypeSpace { worlds: self.type_space.worlds.clone(), sigma, tau },
            beliefs: self.beliefs.iter().map(|p| BeliefVector { probs: p.clone() }).collect(),
            payoff: payoff.expect("errors were empty"),
            query_pairs,
        })
    }

    /// Resolve and validate in one step, merging resolution failures and
    /// structural findings into one report.
    pub fn validate(&self) -> ValidationReport {
        match self.resolve() {
            Ok(instance) => validate_game(&instance),
            Err(report) => report,
        }
    }

    /// Canonical file form of an instance. Fails for blackbox oracles, which
    /// have no file representation.
    pub fn from_instance(g: &GameInstance) -> Result<Self, UnrepresentableGame> {
        let PayoffOracle::Linear(lin) = &g.payoff else {
            return Err(UnrepresentableGame::BlackboxPayoff);
        };
        let na = g.n_actions();
        let mut leq_pairs: Vec<(String, String)> = Vec::new();
        for a in 0..na {
            for b in 0..na {
                if a != b && g.actions.leq[a * na + b] {
                    leq_pairs.push((g.actions.labels[a].clone(), g.actions.labels[b].clone()));
                }
            }
        }
        let table = |t: &Vec<usize>| -> Option<Vec<Vec<String>>> {
            if t.len() != na * na {
                return None;
            }
            Some(
                (0..na)
                    .map(|a| (0..na).map(|b| g.actions.labels[t[a * na + b]].clone()).collect())
                    .collect(),
            )
        };
        let mut base = Vec::new();
        let mut weights = Vec::new();
        for c in 0..g.n_characteristics() {
            for a in 0..na {
                for s in 0..g.n_states() {
                    let v = lin.base(c, a, s);
                    if v != 0.0 {
                        base.push(BaseEntry {
                            characteristic: g.characteristics.labels[c].clone(),
                            action: g.actions.labels[a].clone(),
                            state: g.states.labels[s].clone(),
                            value: v,
                        });
                    }
                    for c2 in 0..g.n_characteristics() {
                        for a2 in 0..na {
                            let w = lin.weight(c, a, s, c2, a2);
                            if w != 0.0 {
                                weights.push(WeightEntry {
                                    characteristic: g.characteristics.labels[c].clone(),
                                    action: g.actions.labels[a].clone(),
                                    state: g.states.labels[s].clone(),
                                    other_characteristic: g.characteristics.labels[c2].clone(),
                                    other_action: g.actions.labels[a2].clone(),
                                    value: w,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(GameFile {
            characteristics: CharacteristicsSection {
                labels: g.characteristics.labels.clone(),
                nu: g.characteristics.nu.clone(),
            },
            actions: ActionsSection {
                list: g.actions.labels.clone(),
                leq: leq_pairs,
                join: table(&g.actions.join),
                meet: table(&g.actions.meet),
            },
            availability: g
                .characteristics
                .labels
                .iter()
                .enumerate()
                .map(|(c, l)| {
                    (
                        l.clone(),
                        g.availability.sets[c]
                            .iter()
                            .map(|&a| g.actions.labels[a].clone())
                            .collect(),
                    )
                })
                .collect(),
            states: StatesSection { labels: g.states.labels.clone(), values: g.states.values.clone() },
            type_space: TypeSpaceSection {
                worlds: g.type_space.worlds.clone(),
                sigma: g
                    .type_space
                    .worlds
                    .iter()
                    .enumerate()
                    .map(|(t, w)| (w.clone(), g.states.labels[g.type_space.sigma[t]].clone()))
                    .collect(),
                tau: g
                    .type_space
                    .worlds
                    .iter()
                    .enumerate()
                    .map(|(t, w)| {
                        (
                            w.clone(),
                            g.type_space.tau[t]
                                .iter()
                                .map(|atom| TauAtomEntry {
                                    characteristic: g.characteristics.labels[atom.characteristic]
                                        .clone(),
                                    belief: atom.belief,
                                    weight: atom.weight,
                                })
                                .collect(),
                        )
                    })
                    .collect(),
            },
            beliefs: g.beliefs.iter().map(|b| b.probs.clone()).collect(),
            payoff: PayoffSection { mode: "linear".into(), base, weights },
            query_pairs: g
                .query_pairs
                .iter()
                .map(|&(c, b)| QueryPairEntry {
                    characteristic: g.characteristics.labels[c].clone(),
                    belief: b,
                })
                .collect(),
        })
    }
}

fn relation_pairs(leq: &[bool], n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|a| (0..n).filter(move |&b| a != b).map(move |b| (a, b)))
        .filter(|&(a, b)| leq[a * n + b])
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum UnrepresentableGame {
    #[error("blackbox payoff oracles have no file representation")]
    BlackboxPayoff,
}
