pub mod cli;
pub mod clock;
pub mod codec;
pub mod config;
pub mod corpus;
pub mod domain;
pub mod engine;
pub mod error;
pub mod feedback;
pub mod gradcheck;
pub mod interaction;
pub mod mdrnn;
pub mod nn;
pub mod render;
pub mod rng;
pub mod router;
pub mod session;

pub use error::{Error, Result};
