//! Structural validation. Every broken invariant becomes a report entry with
//! a location; a game is usable only when the report is empty.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{GameInstance, PayoffOracle};
use crate::order::{check_lattice, FinitePoset, PosetViolation};
use crate::STRUCT_TOL;

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { location: location.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            writeln!(f, "ok: no violations")
        } else {
            for v in &self.violations {
                writeln!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

/// Check every structural invariant of the model on finite data.
pub fn validate_game(g: &GameInstance) -> ValidationReport {
    let mut report = ValidationReport::default();
    let nc = g.n_characteristics();
    let na = g.n_actions();
    let ns = g.n_states();
    let nw = g.n_worlds();
    let nb = g.n_beliefs();

    // Characteristics: distinct labels, nu a probability vector.
    check_distinct(&g.characteristics.labels, "characteristics", &mut report);
    if g.characteristics.nu.len() != nc {
        report.push("characteristics", "nu length does not match labels");
    } else {
        check_prob_vector(&g.characteristics.nu, "characteristics.nu", &mut report);
    }

    // Action lattice: valid poset, operation tables consistent, top and
    // bottom present.
    check_distinct(&g.actions.labels, "actions", &mut report);
    let poset = poset_of_actions(g);
    for v in poset.violations() {
        match v {
            PosetViolation::NotAntisymmetric { a, b } => report.push(
                "actions.leq",
                format!(
                    "not antisymmetric: {} and {}",
                    g.actions.labels[a], g.actions.labels[b]
                ),
            ),
            PosetViolation::NotTransitive { a, b, c } => report.push(
                "actions.leq",
                format!(
                    "not transitive via {} <= {} <= {}",
                    g.actions.labels[a], g.actions.labels[b], g.actions.labels[c]
                ),
            ),
        }
    }
    if report.is_empty() || !report.violations.iter().any(|v| v.location == "actions.leq") {
        let check = check_lattice(&poset);
        if !check.is_lattice {
            let (a, b) = check.witness.unwrap_or((0, 0));
            report.push(
                "actions",
                format!(
                    "not a lattice: pair ({}, {}) lacks a join or meet",
                    g.actions.labels.get(a).map(String::as_str).unwrap_or("?"),
                    g.actions.labels.get(b).map(String::as_str).unwrap_or("?")
                ),
            );
        } else if na > 0 {
            if g.actions.join.len() != na * na || g.actions.meet.len() != na * na {
                report.push("actions", "join/meet tables have wrong dimensions");
            } else {
                for a in 0..na {
                    for b in 0..na {
                        if g.actions.join[a * na + b] != check.join[a * na + b] {
                            report.push(
                                "actions.join",
                                format!(
                                    "table disagrees with leq at ({}, {})",
                                    g.actions.labels[a], g.actions.labels[b]
                                ),
                            );
                        }
                        if g.actions.meet[a * na + b] != check.meet[a * na + b] {
                            report.push(
                                "actions.meet",
                                format!(
                                    "table disagrees with leq at ({}, {})",
                                    g.actions.labels[a], g.actions.labels[b]
                                ),
                            );
                        }
                    }
                }
            }
        }
    }

    // Availability: nonempty subsets of the action set.
    if g.availability.sets.len() != nc {
        report.push("availability", "entry count does not match characteristics");
    }
    for (c, set) in g.availability.sets.iter().enumerate() {
        let loc = || format!("availability[{}]", label(&g.characteristics.labels, c));
        if set.is_empty() {
            report.push(loc(), "empty availability set");
        }
        let mut seen = BTreeSet::new();
        for &a in set {
            if a >= na {
                report.push(loc(), format!("action index {a} out of range"));
            } else if !seen.insert(a) {
                report.push(loc(), format!("duplicate action {}", g.actions.labels[a]));
            }
        }
    }

    // States.
    check_distinct(&g.states.labels, "states", &mut report);
    if let Some(values) = &g.states.values {
        if values.len() != ns {
            report.push("states.values", "length does not match labels");
        }
    }

    // Beliefs: probability vectors over worlds.
    for (i, b) in g.beliefs.iter().enumerate() {
        if b.probs.len() != nw {
            report.push(format!("beliefs[{i}]"), "length does not match world count");
        } else {
            check_prob_vector(&b.probs, format!("beliefs[{i}]"), &mut report);
        }
    }

    // Type space: sigma range, population distributions in Delta_nu with
    // belief closure.
    if g.type_space.sigma.len() != nw {
        report.push("type_space.sigma", "length does not match worlds");
    }
    if g.type_space.tau.len() != nw {
        report.push("type_space.tau", "length does not match worlds");
    }
    for (t, &s) in g.type_space.sigma.iter().enumerate() {
        if s >= ns {
            report.push(
                format!("type_space.sigma[{}]", label(&g.type_space.worlds, t)),
                format!("state index {s} out of range"),
            );
        }
    }
    for (t, atoms) in g.type_space.tau.iter().enumerate() {
        let world = label(&g.type_space.worlds, t);
        let loc = format!("type_space.tau[{world}]");
        let mut total = 0.0;
        let mut per_char = vec![0.0_f64; nc];
        for atom in atoms {
            if atom.weight < -STRUCT_TOL {
                report.push(loc.clone(), format!("negative weight {}", atom.weight));
            }
            total += atom.weight;
            if atom.characteristic >= nc {
                report.push(
                    loc.clone(),
                    format!("characteristic index {} out of range", atom.characteristic),
                );
                continue;
            }
            per_char[atom.characteristic] += atom.weight;
            if atom.belief >= nb {
                report.push(loc.clone(), format!("dangling belief id {}", atom.belief));
            }
        }
        if (total - 1.0).abs() > STRUCT_TOL {
            report.push(loc.clone(), format!("weights sum to {total}, expected 1"));
        }
        if g.characteristics.nu.len() == nc {
            for c in 0..nc {
                if (per_char[c] - g.characteristics.nu[c]).abs() > STRUCT_TOL {
                    report.push(
                        loc.clone(),
                        format!(
                            "marginal mismatch at {world}: characteristic {} carries {} but nu says {}",
                            label(&g.characteristics.labels, c),
                            per_char[c],
                            g.characteristics.nu[c]
                        ),
                    );
                }
            }
        }
    }

    // Payoff oracle dimensions.
    if let PayoffOracle::Linear(l) = &g.payoff {
        if l.n_characteristics != nc || l.n_actions != na || l.n_states != ns {
            report.push("payoff", "linear payoff dimensions do not match the game");
        }
    }

    // Query pairs.
    for &(c, b) in &g.query_pairs {
        if c >= nc || b >= nb {
            report.push("query_pairs", format!("pair ({c}, {b}) out of range"));
        }
    }

    report
}

pub(crate) fn poset_of_actions(g: &GameInstance) -> FinitePoset {
    let na = g.n_actions();
    let pairs: Vec<(usize, usize)> = (0..na)
        .flat_map(|a| (0..na).filter(move |&b| a != b).map(move |b| (a, b)))
        .filter(|&(a, b)| g.actions.leq[a * na + b])
        .collect();
    FinitePoset::new(g.actions.labels.clone(), &pairs)
}

fn label(labels: &[String], i: usize) -> &str {
    labels.get(i).map(String::as_str).unwrap_or("?")
}

fn check_distinct(labels: &[String], location: &str, report: &mut ValidationReport) {
    let mut seen = BTreeSet::new();
    for l in labels {
        if !seen.insert(l) {
            report.push(location, format!("duplicate label {l:?}"));
        }
    }
}

fn check_prob_vector(v: &[f64], location: impl Into<String>, report: &mut ValidationReport) {
    let location = location.into();
    for (i, x) in v.iter().enumerate() {
        if !x.is_finite() || *x < -STRUCT_TOL {
            report.push(location.clone(), format!("entry {i} is {x}, expected nonnegative"));
        }
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > STRUCT_TOL {
        report.push(location, format!("sums to {s}, expected 1"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{BeliefVector, TauAtom};
    use crate::global_game::complete_info_instance;

    #[test]
    fn well_formed_instance_has_empty_report() {
        let g = complete_info_instance(&[0.5]).unwrap();
        let report = validate_game(&g);
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn marginal_mismatch_is_reported() {
        let mut g = complete_info_instance(&[0.5, 0.75]).unwrap();
        // Shift mass between atoms so the characteristic marginal breaks.
        g.type_space.tau[0] = vec![
            TauAtom { characteristic: 0, belief: 0, weight: 0.6 },
            TauAtom { characteristic: 0, belief: 1, weight: 0.3 },
        ];
        let report = validate_game(&g);
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("marginal mismatch")), "{report}");
    }

    #[test]
    fn dangling_belief_is_reported() {
        let mut g = complete_info_instance(&[0.5]).unwrap();
        g.type_space.tau[0][0].belief = 99;
        let report = validate_game(&g);
        assert!(report.violations.iter().any(|v| v.message.contains("dangling belief")));
    }

    #[test]
    fn bad_belief_vector_is_reported() {
        let mut g = complete_info_instance(&[0.5]).unwrap();
        g.beliefs.push(BeliefVector { probs: vec![0.7] });
        let report = validate_game(&g);
        assert!(!report.is_empty());
    }
}
