pub mod equilibrium;
pub mod error;
pub mod estimator;
pub mod identify;
pub mod oracle;
pub mod panelgen;
pub mod roundtrip;

pub use error::{Error, Result};
