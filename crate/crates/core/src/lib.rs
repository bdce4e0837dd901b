//! Self-stabilizing Byzantine reliable broadcast with bounded round
//! recycling, a muteness detector, reference baselines and a deterministic
//! simulation harness with property checkers.

pub mod baseline;
pub mod brb;
pub mod irc;
pub mod muteness;
pub mod params;
pub mod scenario;
pub mod node;
pub mod sim;
pub mod trace;
pub mod verify;
