//! Work extraction from quantum thermal machines with arbitrary system-bath coupling.
//!
//! The crate evaluates the extractable-work bound for a machine `H_S + H_B + V`,
//! builds the quench/thermalise protocol that approaches it, and embeds quenches
//! as energy-conserving unitaries on an explicit battery with a control qubit.

pub mod bounds;
pub mod embedding;
pub mod harness;
pub mod error;
pub mod machine;
pub mod operator;
pub mod random;
pub mod thermo;

pub use error::{Error, Result};
