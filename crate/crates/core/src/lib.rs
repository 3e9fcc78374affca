//! Symbolic-numeric engine for contact Lagrangian systems.
//!
//! Given a possibly singular Lagrangian `L(q, v, z)`, the engine builds the
//! unified bundle `W = TQ x_Q T*Q x R`, extracts the dynamical equations by
//! coefficient matching, runs the constraint algorithm to a final
//! submanifold, projects the result to the Lagrangian and Hamiltonian sides,
//! and integrates the reduced flow while monitoring its invariants.

#![allow(clippy::needless_range_loop, clippy::should_implement_trait)]

pub mod expr;
pub mod geometry;
pub mod unified;
pub mod dynamics;
