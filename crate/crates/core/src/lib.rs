//! Bonus plans for competing managers.
//!
//! A decision maker splits a fixed bonus pool among `k` managers according
//! to their realized earnings. Each manager picks a portfolio over a shared
//! finite market; the plan induces a game between them. This crate builds
//! those games exactly, checks equilibria, constructs plans under which the
//! top-expectation action is an equilibrium, and searches for
//! counterexamples showing that no single plan works for every market.

pub mod cli;
pub mod constructor;
pub mod error;
pub mod game;
pub mod impossibility;
pub mod market;
pub mod plans;
pub mod rational;

pub use error::{Error, Result};
pub use game::{check_optimal, dm_value, induce_game, Game, Resolution, Verdict};
pub use market::{Atom, Interval, Market, MixedAction, Profile};
pub use plans::{AllocationVector, BonusPlan, PlanKind};
pub use rational::Rational;
