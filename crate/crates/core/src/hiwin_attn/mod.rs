//! Hierarchical window attention: each of `N x N` learnable queries
//! attends only to RoI-aligned samples of its own window, gathered from
//! all three pyramid levels.

mod attention;
mod params;
mod window;

pub use attention::{assemble_kv, attend_window, compress, isp_grid, isp_windows, TokenMap, WindowAttention, WindowKv};
pub(crate) use attention::attend;
pub use params::{sinusoidal_2d, AttnParams, HiwinConfig, Linear, DEFAULT_HEADS, DEFAULT_N, KEY_LEVELS};
pub use window::{bin_centers, generate_windows, grid_score, roi_align, select_grid, RoiBox, WindowSet, PROPOSALS};

#[cfg(test)]
mod tests;
