//! Dense tensors, resampling, softmax, reverse-mode differentiation, and
//! the Adam optimizer.

mod adam;
mod gradcheck;
mod pca;
mod resize;
mod softmax;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::grad_check;
pub use pca::{pca_project, pca_rgb, principal_components, Principal};
pub use resize::{axis_taps, bilinear_resize, sample_clamped, ResizePlan, Tap};
pub use softmax::{softmax, softmax_backward, softmax_in_place, softmax_into};
pub use tape::{Backward, Gradients, Tape, Var};
pub use tensor::Tensor;
