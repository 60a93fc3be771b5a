//! Capacity-optimal MIMO antenna directivities via spherical mode expansion.
//!
//! The library covers the special functions behind spherical vector waves, the
//! mode basis and its far-field patterns, a double-directional angular channel
//! model, the sequential Tx/Rx optimizer, surface-current synthesis on a planar
//! plate and a Monte Carlo capacity evaluator.

pub mod capacity;
pub mod channel;
pub mod cli;
pub mod currents;
pub mod error;
pub mod modes;
pub mod optimizer;
mod plot;
pub mod specialfn;

pub use error::{Error, Result};
