//! Dense float64 arrays with reverse-mode differentiation.

mod array;
pub mod expm;
pub mod fft;
pub mod gradcheck;
pub mod kernels;
pub mod spectral;
mod tape;

pub use array::Tensor;
pub use expm::matrix_exp;
pub use spectral::SpectralGrid;
pub use tape::{Gradients, NodeId, Tape, Var};
