//! Deterministic simulator for a decentralized privacy-preserving search
//! middleware. Publishers encrypt readings under a threshold-held key,
//! replicated workers compute on ciphertexts, a BFT ledger pins message and
//! result hashes, and a validator quorum decrypts verified results.
//!
//! Everything runs in-process on a virtual millisecond clock. All randomness
//! flows from caller-provided seeds, so a run is reproducible byte for byte.

pub mod bus;
pub mod cli;
pub mod compute;
pub mod digest;
pub mod dkg;
pub mod field_math;
pub mod he;
pub mod ledger;
pub mod ppsm;
pub mod sim;
pub mod threshold;

/// Virtual time in milliseconds since simulation start.
pub type TimeMs = u64;
