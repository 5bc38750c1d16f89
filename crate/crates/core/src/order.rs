//! Finite posets, lattice checks, and first-order stochastic dominance.
//!
//! Dominance of one distribution over another admits several equivalent
//! characterizations: existence of a coupling supported on the order graph,
//! domination on every upper set, and domination of every monotone 0/1 test
//! function. All three are implemented and must agree; the coupling route is
//! a transportation-feasibility problem solved exactly by max-flow.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::numerics::{self, FlowArc, FlowNetwork};
use crate::STRUCT_TOL;

/// Elements with an explicit order relation, stored as a dense matrix.
#[derive(Debug, Clone)]
pub struct FinitePoset {
    labels: Vec<String>,
    /// Row-major `leq[a * n + b]` meaning `a <= b`.
    leq: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PosetViolation {
    NotAntisymmetric { a: usize, b: usize },
    NotTransitive { a: usize, b: usize, c: usize },
}

impl FinitePoset {
    /// Build from non-reflexive related pairs `(lo, hi)`. Reflexive pairs are
    /// implied; the given relation must already be transitively closed, which
    /// [`FinitePoset::violations`] verifies.
    pub fn new(labels: Vec<String>, pairs: &[(usize, usize)]) -> Self {
        let n = labels.len();
        let mut leq = vec![false; n * n];
        for i in 0..n {
            leq[i * n + i] = true;
        }
        for &(a, b) in pairs {
            leq[a * n + b] = true;
        }
        Self { labels, leq }
    }

    /// A total order on the given labels, smallest first.
    pub fn chain(labels: Vec<String>) -> Self {
        let n = labels.len();
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                pairs.push((a, b));
            }
        }
        Self::new(labels, &pairs)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.leq[a * self.len() + b]
    }

    /// Exhaustive antisymmetry and transitivity check (reflexivity holds by
    /// construction).
    pub fn violations(&self) -> Vec<PosetViolation> {
        let n = self.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a != b && self.leq(a, b) && self.leq(b, a) {
                    if a < b {
                        out.push(PosetViolation::NotAntisymmetric { a, b });
                    }
                    continue;
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                if !self.leq(a, b) {
                    continue;
                }
                for c in 0..n {
                    if self.leq(b, c) && !self.leq(a, c) {
                        out.push(PosetViolation::NotTransitive { a, b, c });
                    }
                }
            }
        }
        out
    }
}

/// Outcome of the exhaustive lattice check.
#[derive(Debug, Clone)]
pub struct LatticeCheck {
    pub is_lattice: bool,
    /// `join[a * n + b]`, only meaningful when `is_lattice`.
    pub join: Vec<usize>,
    pub meet: Vec<usize>,
    /// A pair with no least upper or greatest lower bound.
    pub witness: Option<(usize, usize)>,
}

/// Verify every pair has a least upper and greatest lower bound and return
/// the operation tables. A finite lattice always has a global top and bottom.
pub fn check_lattice(p: &FinitePoset) -> LatticeCheck {
    let n = p.len();
    let mut join = vec![usize::MAX; n * n];
    let mut meet = vec![usize::MAX; n * n];
    for a in 0..n {
        for b in 0..n {
            let uppers: Vec<usize> =
                (0..n).filter(|&c| p.leq(a, c) && p.leq(b, c)).collect();
            let lub = uppers
                .iter()
                .copied()
                .find(|&c| uppers.iter().all(|&d| p.leq(c, d)));
            let lowers: Vec<usize> =
                (0..n).filter(|&c| p.leq(c, a) && p.leq(c, b)).collect();
            let glb = lowers
                .iter()
                .copied()
                .find(|&c| lowers.iter().all(|&d| p.leq(d, c)));
            match (lub, glb) {
                (Some(u), Some(l)) => {
                    join[a * n + b] = u;
                    meet[a * n + b] = l;
                }
                _ => {
                    return LatticeCheck {
                        is_lattice: false,
                        join: Vec::new(),
                        meet: Vec::new(),
                        witness: Some((a, b)),
                    }
                }
            }
        }
    }
    LatticeCheck { is_lattice: true, join, meet, witness: None }
}

/// A probability vector over the elements of a poset.
#[derive(Debug, Clone)]
pub struct DistributionOnPoset {
    pub probs: Vec<f64>,
}

impl DistributionOnPoset {
    pub fn new(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Self { probs }
    }

    pub fn validate(&self, p: &FinitePoset) -> Result<(), OrderError> {
        if self.probs.len() != p.len() {
            return Err(OrderError::DimensionMismatch);
        }
        if self.probs.iter().any(|x| *x < -STRUCT_TOL || !x.is_finite()) {
            return Err(OrderError::NotAProbabilityVector);
        }
        let s: f64 = self.probs.iter().sum();
        if (s - 1.0).abs() > STRUCT_TOL {
            return Err(OrderError::NotAProbabilityVector);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OrderError {
    #[error("distribution dimension does not match poset")]
    DimensionMismatch,
    #[error("vector is not a probability vector")]
    NotAProbabilityVector,
    #[error("upper-set enumeration capped at {cap} elements, poset has {got}")]
    EnumerationCapExceeded { cap: usize, got: usize },
    #[error("characteristic marginals do not match the population distribution")]
    MarginalMismatch,
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DominanceMethod {
    /// Strassen: a coupling supported on the order graph, found by max-flow.
    Coupling,
    /// Domination on every upper set.
    UpperSets,
    /// Domination of every monotone 0/1 test function.
    MonotoneFunctions,
}

#[derive(Debug, Clone)]
pub enum DominanceWitness {
    /// Coupling atoms `((hi_element, lo_element), mass)` with first marginal
    /// the dominating distribution and support inside the order graph.
    Coupling(Vec<((usize, usize), f64)>),
    /// An upper set on which the claimed-dominating distribution has less mass.
    ViolatingUpperSet(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct DominanceOutcome {
    pub dominates: bool,
    pub witness: Option<DominanceWitness>,
}

/// Upper-set enumeration is exponential; refuse beyond this many elements.
pub const ENUMERATION_CAP: usize = 12;

/// Test whether `hi` stochastically dominates `lo` on `p`.
pub fn stochastic_dominates(
    p: &FinitePoset,
    hi: &DistributionOnPoset,
    lo: &DistributionOnPoset,
    method: DominanceMethod,
) -> Result<DominanceOutcome, OrderError> {
    hi.validate(p)?;
    lo.validate(p)?;
    match method {
        DominanceMethod::Coupling => coupling_method(p, hi, lo),
        DominanceMethod::UpperSets => upper_set_method(p, hi, lo),
        DominanceMethod::MonotoneFunctions => monotone_fn_method(p, hi, lo),
    }
}

fn coupling_method(
    p: &FinitePoset,
    hi: &DistributionOnPoset,
    lo: &DistributionOnPoset,
) -> Result<DominanceOutcome, OrderError> {
    let n = p.len();
    // source -> hi-atom x -> lo-atom y (when x >= y) -> sink.
    let source = 2 * n;
    let sink = 2 * n + 1;
    let mut arcs = Vec::new();
    for x in 0..n {
        arcs.push(FlowArc { from: source, to: x, capacity: hi.probs[x].max(0.0) });
    }
    for y in 0..n {
        arcs.push(FlowArc { from: n + y, to: sink, capacity: lo.probs[y].max(0.0) });
    }
    let mut pair_arcs = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if p.leq(y, x) {
                pair_arcs.push((x, y));
                arcs.push(FlowArc { from: x, to: n + y, capacity: 1.0 });
            }
        }
    }
    let out = numerics::max_flow(&FlowNetwork { nodes: 2 * n + 2, source, sink, arcs })?;
    if out.value >= 1.0 - crate::DECISION_TOL {
        let coupling: Vec<((usize, usize), f64)> = pair_arcs
            .iter()
            .enumerate()
            .filter_map(|(k, &(x, y))| {
                let f = out.arc_flow[2 * n + k];
                (f > 0.0).then_some(((x, y), f))
            })
            .collect();
        Ok(DominanceOutcome { dominates: true, witness: Some(DominanceWitness::Coupling(coupling)) })
    } else {
        Ok(DominanceOutcome { dominates: false, witness: None })
    }
}

fn upper_sets(p: &FinitePoset) -> Result<Vec<u32>, OrderError> {
    let n = p.len();
    if n > ENUMERATION_CAP {
        return Err(OrderError::EnumerationCapExceeded { cap: ENUMERATION_CAP, got: n });
    }
    // up[x] = bitmask of elements >= x; U is upper iff up[x] subset of U for x in U.
    let up: Vec<u32> = (0..n)
        .map(|x| (0..n).filter(|&y| p.leq(x, y)).fold(0u32, |m, y| m | 1 << y))
        .collect();
    Ok((0..(1u32 << n))
        .filter(|&mask| (0..n).all(|x| mask >> x & 1 == 0 || up[x] & !mask == 0))
        .collect())
}

fn upper_set_method(
    p: &FinitePoset,
    hi: &DistributionOnPoset,
    lo: &DistributionOnPoset,
) -> Result<DominanceOutcome, OrderError> {
    let n = p.len();
    for mask in upper_sets(p)? {
        let hi_mass: f64 = (0..n).filter(|&x| mask >> x & 1 == 1).map(|x| hi.probs[x]).sum();
        let lo_mass: f64 = (0..n).filter(|&x| mask >> x & 1 == 1).map(|x| lo.probs[x]).sum();
        if hi_mass < lo_mass - crate::DECISION_TOL {
            let set = (0..n).filter(|&x| mask >> x & 1 == 1).collect();
            return Ok(DominanceOutcome {
                dominates: false,
                witness: Some(DominanceWitness::ViolatingUpperSet(set)),
            });
        }
    }
    Ok(DominanceOutcome { dominates: true, witness: None })
}

fn monotone_fn_method(
    p: &FinitePoset,
    hi: &DistributionOnPoset,
    lo: &DistributionOnPoset,
) -> Result<DominanceOutcome, OrderError> {
    let n = p.len();
    if n > ENUMERATION_CAP {
        return Err(OrderError::EnumerationCapExceeded { cap: ENUMERATION_CAP, got: n });
    }
    // Enumerate 0/1 functions g, keep the monotone ones (x <= y implies
    // g(x) <= g(y)), and compare expectations.
    for mask in 0..(1u32 << n) {
        let g = |x: usize| (mask >> x & 1) as f64;
        let monotone = (0..n)
            .all(|x| (0..n).all(|y| !p.leq(x, y) || g(x) <= g(y)));
        if !monotone {
            continue;
        }
        let e_hi: f64 = (0..n).map(|x| g(x) * hi.probs[x]).sum();
        let e_lo: f64 = (0..n).map(|x| g(x) * lo.probs[x]).sum();
        if e_hi < e_lo - crate::DECISION_TOL {
            let set = (0..n).filter(|&x| mask >> x & 1 == 1).collect();
            return Ok(DominanceOutcome {
                dominates: false,
                witness: Some(DominanceWitness::ViolatingUpperSet(set)),
            });
        }
    }
    Ok(DominanceOutcome { dominates: true, witness: None })
}

/// A nonnegative mass vector over characteristic-element pairs.
#[derive(Debug, Clone)]
pub struct ProductMass {
    /// `mass[c * n_elements + x]`.
    pub mass: Vec<f64>,
    pub n_characteristics: usize,
    pub n_elements: usize,
}

impl ProductMass {
    pub fn zeros(n_characteristics: usize, n_elements: usize) -> Self {
        Self { mass: vec![0.0; n_characteristics * n_elements], n_characteristics, n_elements }
    }

    pub fn get(&self, c: usize, x: usize) -> f64 {
        self.mass[c * self.n_elements + x]
    }

    pub fn set(&mut self, c: usize, x: usize, v: f64) {
        self.mass[c * self.n_elements + x] = v;
    }

    fn char_marginal(&self, c: usize) -> f64 {
        (0..self.n_elements).map(|x| self.get(c, x)).sum()
    }
}

/// Stochastic order on mass vectors over `C x X` with fixed characteristic
/// marginals, induced by the product order that compares elements only within
/// the same characteristic. Equivalent to per-characteristic dominance of the
/// conditionals wherever the characteristic has positive mass.
pub fn product_order_dominates(
    nu: &[f64],
    p: &FinitePoset,
    hi: &ProductMass,
    lo: &ProductMass,
    method: DominanceMethod,
) -> Result<bool, OrderError> {
    if hi.n_characteristics != nu.len() || lo.n_characteristics != nu.len() {
        return Err(OrderError::DimensionMismatch);
    }
    for (c, &target) in nu.iter().enumerate() {
        if (hi.char_marginal(c) - target).abs() > STRUCT_TOL
            || (lo.char_marginal(c) - target).abs() > STRUCT_TOL
        {
            return Err(OrderError::MarginalMismatch);
        }
    }
    for (c, &target) in nu.iter().enumerate() {
        if target <= STRUCT_TOL {
            continue; // null characteristics never matter
        }
        let hi_cond =
            DistributionOnPoset::new((0..p.len()).map(|x| hi.get(c, x) / target).collect());
        let lo_cond =
            DistributionOnPoset::new((0..p.len()).map(|x| lo.get(c, x) / target).collect());
        if !stochastic_dominates(p, &hi_cond, &lo_cond, method)?.dominates {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Check a coupling witness: marginals within `tol`, support inside the graph
/// exactly. Used by tests and the acceptance suite.
pub fn coupling_is_valid(
    p: &FinitePoset,
    hi: &DistributionOnPoset,
    lo: &DistributionOnPoset,
    coupling: &[((usize, usize), f64)],
    tol: f64,
) -> bool {
    let n = p.len();
    let mut m1 = vec![0.0_f64; n];
    let mut m2 = vec![0.0_f64; n];
    for &((x, y), mass) in coupling {
        if mass < -tol || !p.leq(y, x) {
            return false;
        }
        m1[x] += mass;
        m2[y] += mass;
    }
    (0..n).all(|i| (m1[i] - hi.probs[i]).abs() <= tol && (m2[i] - lo.probs[i]).abs() <= tol)
}

/// Collect the distinct labelled upper sets of a poset (test helper for the
/// method-agreement property; respects the enumeration cap).
pub fn all_upper_sets(p: &FinitePoset) -> Result<Vec<BTreeSet<usize>>, OrderError> {
    Ok(upper_sets(p)?
        .into_iter()
        .map(|mask| (0..p.len()).filter(|&x| mask >> x & 1 == 1).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_chain() -> FinitePoset {
        FinitePoset::chain(vec!["bot".into(), "top".into()])
    }

    #[test]
    fn chain_is_lattice() {
        let p = two_chain();
        assert!(p.violations().is_empty());
        let check = check_lattice(&p);
        assert!(check.is_lattice);
        assert_eq!(check.join[1], 1); // bot v top = top
        assert_eq!(check.meet[1], 0);
    }

    #[test]
    fn diamond_is_lattice() {
        // bot <= x, y <= top with x, y incomparable.
        let p = FinitePoset::new(
            vec!["bot".into(), "x".into(), "y".into(), "top".into()],
            &[(0, 1), (0, 2), (0, 3), (1, 3), (2, 3)],
        );
        assert!(p.violations().is_empty());
        let check = check_lattice(&p);
        assert!(check.is_lattice);
        assert_eq!(check.join[4 + 2], 3);
        assert_eq!(check.meet[4 + 2], 0);
    }

    #[test]
    fn n_poset_is_not_a_lattice() {
        // a <= c, a <= d, b <= d: the pair {c, d} has no upper bound.
        let p = FinitePoset::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &[(0, 2), (0, 3), (1, 3)],
        );
        assert!(p.violations().is_empty());
        let check = check_lattice(&p);
        assert!(!check.is_lattice);
        assert!(check.witness.is_some());
    }

    #[test]
    fn point_masses_embed_the_order() {
        let p = FinitePoset::new(
            vec!["a".into(), "b".into(), "c".into()],
            &[(0, 1), (0, 2), (1, 2)],
        );
        for x in 0..3 {
            for y in 0..3 {
                let dx = DistributionOnPoset::point_mass(3, x);
                let dy = DistributionOnPoset::point_mass(3, y);
                for method in [
                    DominanceMethod::Coupling,
                    DominanceMethod::UpperSets,
                    DominanceMethod::MonotoneFunctions,
                ] {
                    let out = stochastic_dominates(&p, &dx, &dy, method).unwrap();
                    assert_eq!(out.dominates, p.leq(y, x), "x={x} y={y} {method:?}");
                }
            }
        }
    }

    #[test]
    fn chain_shift_dominates() {
        let p = two_chain();
        let hi = DistributionOnPoset::new(vec![0.4, 0.6]);
        let lo = DistributionOnPoset::new(vec![0.5, 0.5]);
        for method in [
            DominanceMethod::Coupling,
            DominanceMethod::UpperSets,
            DominanceMethod::MonotoneFunctions,
        ] {
            assert!(stochastic_dominates(&p, &hi, &lo, method).unwrap().dominates);
            let rev = stochastic_dominates(&p, &lo, &hi, method).unwrap();
            assert!(!rev.dominates);
            if let Some(DominanceWitness::ViolatingUpperSet(set)) = rev.witness {
                // The violating upper set is {top}: 0.5 < 0.6.
                assert_eq!(set, vec![1]);
            }
        }
    }

    #[test]
    fn self_dominance_with_identity_coupling() {
        let p = two_chain();
        let mu = DistributionOnPoset::new(vec![0.25, 0.75]);
        let out = stochastic_dominates(&p, &mu, &mu, DominanceMethod::Coupling).unwrap();
        assert!(out.dominates);
        let Some(DominanceWitness::Coupling(coupling)) = out.witness else { panic!() };
        assert!(coupling_is_valid(&p, &mu, &mu, &coupling, 1e-9));
    }

    #[test]
    fn product_order_cases() {
        let p = two_chain();
        let nu = [0.5, 0.5];
        let mut a = ProductMass::zeros(2, 2);
        a.set(0, 0, 0.3);
        a.set(0, 1, 0.2);
        a.set(1, 0, 0.25);
        a.set(1, 1, 0.25);
        // Identical profiles dominate both ways.
        assert!(product_order_dominates(&nu, &p, &a, &a, DominanceMethod::Coupling).unwrap());
        // Shift 0.1 upward for characteristic 0.
        let mut b = a.clone();
        b.set(0, 0, 0.2);
        b.set(0, 1, 0.3);
        assert!(product_order_dominates(&nu, &p, &b, &a, DominanceMethod::UpperSets).unwrap());
        assert!(!product_order_dominates(&nu, &p, &a, &b, DominanceMethod::UpperSets).unwrap());
        // Mismatched marginal errors out.
        let mut c = a.clone();
        c.set(1, 0, 0.3);
        assert!(matches!(
            product_order_dominates(&nu, &p, &c, &a, DominanceMethod::Coupling),
            Err(OrderError::MarginalMismatch)
        ));
    }

    #[test]
    fn null_characteristic_is_ignored() {
        let p = two_chain();
        let nu = [1.0, 0.0];
        let mut a = ProductMass::zeros(2, 2);
        a.set(0, 0, 1.0);
        let b = a.clone();
        assert!(product_order_dominates(&nu, &p, &a, &b, DominanceMethod::Coupling).unwrap());
        assert!(product_order_dominates(&nu, &p, &b, &a, DominanceMethod::Coupling).unwrap());
    }

    #[test]
    fn enumeration_cap_enforced() {
        let p = FinitePoset::chain((0..13).map(|i| format!("e{i}")).collect());
        let u = DistributionOnPoset::point_mass(13, 0);
        assert!(matches!(
            stochastic_dominates(&p, &u, &u, DominanceMethod::UpperSets),
            Err(OrderError::EnumerationCapExceeded { .. })
        ));
    }
}

#[cfg(test)]
mod order_props {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_poset(rng: &mut rand_chacha::ChaCha8Rng) -> FinitePoset {
        let n = rng.gen_range(2..=7);
        let mut leq = vec![vec![false; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(0.35) {
                    leq[a][b] = true;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if leq[i][k] && leq[k][j] {
                        leq[i][j] = true;
                    }
                }
            }
        }
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| a != b && leq[a][b])
            .collect();
        FinitePoset::new((0..n).map(|i| format!("e{i}")).collect(), &pairs)
    }

    fn random_dist(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> DistributionOnPoset {
        let mut units = vec![0u64; n];
        for _ in 0..32 {
            units[rng.gen_range(0..n)] += 1;
        }
        DistributionOnPoset::new(units.into_iter().map(|u| u as f64 / 32.0).collect())
    }

    /// The stochastic order is a partial order on distributions:
    /// antisymmetry up to vector equality, transitivity on sampled triples.
    #[test]
    fn stochastic_order_is_a_partial_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..150 {
            let p = random_poset(&mut rng);
            let a = random_dist(&mut rng, p.len());
            let b = random_dist(&mut rng, p.len());
            let c = random_dist(&mut rng, p.len());
            let dom = |x: &DistributionOnPoset, y: &DistributionOnPoset| {
                stochastic_dominates(&p, x, y, DominanceMethod::Coupling).unwrap().dominates
            };
            if dom(&a, &b) && dom(&b, &a) {
                for (pa, pb) in a.probs.iter().zip(&b.probs) {
                    assert!((pa - pb).abs() <= 1e-9, "mutual dominance of unequal vectors");
                }
            }
            if dom(&a, &b) && dom(&b, &c) {
                assert!(dom(&a, &c), "transitivity failed");
            }
        }
    }
}
