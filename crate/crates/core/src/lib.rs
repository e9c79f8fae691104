//! Core of the harness-evolution workbench.
//!
//! Everything here is deterministic, allocation-only and free of IO: the
//! seeded Liar's Dice simulator, the belief engine over hidden dice, the
//! declarative harness pipeline, match play and paired-seed scoring, and the
//! post-hoc analytics. File formats, HTTP and the command line live in the
//! `harnevo` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analytics;
pub mod belief;
pub mod digest;
pub mod env;
pub mod eval;
pub mod gateway;
pub mod harness;
pub mod play;
pub mod rng;
pub mod trajectory;

pub use env::{Action, Bid, BidRecord, MatchState, Observation, Outcome, Variant};
pub use gateway::{ModelGateway, ModelRequest};
pub use harness::{decide, HarnessDescriptor};
pub use play::{play_match, AgentSpec};
pub use trajectory::{Actor, Trajectory};
