//! Inverse semantic pyramids and hierarchical window attention.
//!
//! A single low-resolution patch-feature map is expanded into a
//! three-level pyramid by guided (joint bilateral) upsampling, then every
//! slice of a high-resolution image is compressed into a fixed `N x N`
//! grid of tokens by per-window cross-attention over RoI-aligned samples
//! from all pyramid levels.

pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod format;
pub mod hiwin_attn;
pub mod image_io;
pub mod numerics;
pub mod pipeline;
pub mod slicing;
pub mod token_org;
pub mod vdim;

pub use error::{Error, Result};
