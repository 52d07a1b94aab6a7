//! Deception Stackelberg equilibria of leader / insider / attackers games.
//!
//! The leader `X` commits to an action `x` and announces a deception parameter
//! `theta` drawn from a finite set. The insider `Y` responds through a utility
//! linear in its own action, and `N` attackers play a Nash game under the
//! announced parameter. [`dse::solve_dse`] runs the two-loop hypergradient
//! method, [`hne`] handles simultaneous-move equilibria and their consistency
//! with the hierarchical solution, and [`oracle`] provides brute-force
//! references on small instances.

pub mod dse;
pub mod error;
pub mod game;
pub mod hne;
pub mod lower;
pub mod middle;
pub mod oracle;
pub mod scenarios;
pub mod sensitivity;

pub use error::{Error, Result};
pub use game::{GameDefinition, GameModel, StrategyBox, TemplateLeaderUtility, Theta};
