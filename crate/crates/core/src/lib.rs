//! Completely uncoupled dynamics for network utility maximization over finite
//! payoff games, with exact Markov-chain analysis for small instances.

pub mod baselines;
pub mod chain;
pub mod cnum;
pub mod error;
pub mod experiment;
pub mod game;
pub mod gamefile;
pub mod gnum;
pub mod numeric;
pub mod oracles;
pub mod trace;
pub mod utility;
pub mod verify;

pub use error::{Error, Result};
pub use game::{ActionSpace, GameEnvironment, Interdependence, OccupationMeasure};
pub use gamefile::GameDefinition;
pub use trace::{Algorithm, RunTrace};
pub use utility::{Scale, UtilityKind, UtilitySpec};
