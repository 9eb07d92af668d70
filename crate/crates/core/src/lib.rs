//! Encounter-record forensics for relay meshes under black-hole, grey-hole
//! and colluding record-forging attackers.
//!
//! The crate is `no_std` (with `alloc`) and has no I/O: [`sim`] produces a
//! trace in memory, [`detect`] audits and classifies it, [`eval`] scores the
//! verdicts against ground truth. File formats and the command line live in
//! the `er-sentinel` crate.

#![no_std]

extern crate alloc;

pub mod detect;
pub mod error;
pub mod eval;
pub mod model;
pub mod sign;
pub mod sim;

pub use error::ConfigError;
pub use model::{
    Direction, EncounterRecord, EntryKind, Message, MessageEntry, MessageId, NodeId, Role, Signature, SimTime,
};
pub use sign::{Keyring, NodeKey};
