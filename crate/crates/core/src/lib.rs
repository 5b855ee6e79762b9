//! Diffusion language model rescoring and joint CTC decoding.

pub mod ctc;
pub mod denoiser;
pub mod error;
pub mod eval;
pub mod joint;
pub mod rescore;
pub mod numeric;
pub mod schedule;
pub mod seed;
pub mod vocab;

pub use error::{Error, Result};
