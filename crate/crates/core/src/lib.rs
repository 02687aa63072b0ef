pub mod clustering;
pub mod contract;
pub mod domain;
pub mod error;
pub mod events;
pub mod experiments;
pub mod ledger;
pub mod swarm;

pub use error::{Error, Result};
