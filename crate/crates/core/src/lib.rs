//! Specular reflection detection and self-supervised inpainting for
//! colposcopic images.

pub mod dataset;
pub mod detect;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod net;
pub mod report;
pub mod restore;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
