//! Solvers for discounted stochastic games and their modified
//! (partition-and-cutoff) counterparts.

pub mod automaton;
pub mod chain;
pub mod error;
pub mod fixtures;
pub mod game;
pub mod linalg;
pub mod lp;
pub mod modified;
pub mod occupancy;
pub mod simulate;
pub mod structure;
pub mod uniform;
pub mod values;

pub use error::{Error, Result};
pub use game::{StationaryProfile, StationaryStrategy, StochasticGame};
