pub mod anneal;
pub mod cli;
pub mod decoder;
pub mod error;
pub mod grad;
pub mod io;
pub mod logic;
pub mod lstm;
pub mod network;
pub mod par;
pub mod wlang;

pub use error::{Error, Result};
