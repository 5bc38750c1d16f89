//! Solver toolkit for finite large distributional Bayesian games.
//!
//! A game is specified in distributional form: a population distribution over
//! player characteristics, an action lattice with per-characteristic
//! availability sets, a finite space of states of the world carrying states of
//! nature and population belief distributions, and a payoff function that
//! depends on the societal characteristic-action distribution.
//!
//! The crate provides:
//!
//! - [`game`] — the game model, validation, and a JSON file format.
//! - [`order`] — finite posets, lattice checks, and first-order stochastic
//!   dominance with three interchangeable decision procedures.
//! - [`numerics`] — a bounded-variable phase-1 simplex for linear feasibility
//!   and an Edmonds–Karp max-flow kernel.
//! - [`icr`] — interim correlated rationalizability by iterated elimination of
//!   actions that are never best replies, with conjecture witnesses.
//! - [`equilibrium`] — symmetric Bayes–Nash equilibrium verification and the
//!   monotone top/bottom iteration computing extremal equilibria in
//!   supermodular games.
//! - [`global_game`] — expected-state statistics, rank beliefs, belief and
//!   certainty operators, and uniqueness certificates for binary-action
//!   regime-change games.
//! - [`email_game`] — the coordinated-attack circle game: discretized type
//!   space, analytic contagion quantities, and the contagion check.
//! - [`hierarchy`] — finite-depth belief hierarchies, coherence checking, and
//!   hierarchy-equivalence of beliefs.
//! - [`generators`] — seeded instance generators used by the test suites and
//!   the CLI.

pub mod email_game;
pub mod equilibrium;
pub mod game;
pub mod generators;
pub mod global_game;
pub mod hierarchy;
pub mod icr;
pub mod numerics;
pub mod order;

/// Tolerance for structural invariants (probability vectors summing to one,
/// marginal conditions, coupling marginals).
pub const STRUCT_TOL: f64 = 1e-12;

/// Tolerance for decisions (best-reply feasibility, argmax ties, equilibrium
/// verification slack).
pub const DECISION_TOL: f64 = 1e-9;
