//! Curiosity-driven audiovisual exploration in simulation.

pub mod audio;
pub mod dsp_check;
pub mod error;
pub mod explore;
pub mod mlp;
pub mod oracle;
pub mod rng;
pub mod scene;
pub mod store;
pub mod tasks;
pub mod visual;

pub use error::{Error, Result};
