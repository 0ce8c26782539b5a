pub mod error;
pub mod numerics;
pub mod algebra;
pub mod hilbmod;
pub mod freespace;
pub mod fock;
pub mod oracle;
pub mod freestruct;
pub mod embedding;
pub mod ucp;
pub mod sampling;
pub mod cli;

pub use error::{Error, Result};
