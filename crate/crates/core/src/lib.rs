pub mod anchor;
pub mod assign;
pub mod associate;
pub mod config;
pub mod edgeopt;
pub mod engine;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod io;
pub mod model;
pub mod synth;

pub use error::{Error, Result};
pub use model::*;
