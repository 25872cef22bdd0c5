//! Fast-slow human-in-the-loop driving stack.
//!
//! The crate is `no_std` (with `alloc`) so that the world model, the safety
//! executor, the attention actor-critic and the directive pipeline can run
//! anywhere. File formats, networking and the command line live in the
//! `fastslow` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod control;
pub mod episode;
pub mod exec;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod slow;
pub mod trainer;

pub use control::{Action, Setpoints};
pub use sim::{Observation, ScenarioConfig, ScenarioKind, VehicleState, WorldState};
pub use slow::Directive;
