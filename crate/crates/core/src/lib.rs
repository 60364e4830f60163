//! Digital-twin-assisted federated learning over NOMA uplinks.
//!
//! Reputation-based client selection under poisoning, a clients-lead,
//! server-follows allocation game for power, CPU frequency, twin mapping and
//! server CPU shares, a small federated-learning engine and brute-force
//! oracles that certify the solver.

pub mod baseline;
pub mod channel;
pub mod cost;
pub mod error;
pub mod fl;
pub mod oracle;
pub mod reputation;
pub mod rng;
pub mod scenario;
pub mod selftest;
pub mod sim;
pub mod solver;
pub mod sweep;

pub use error::{Binding, Error, Result};
