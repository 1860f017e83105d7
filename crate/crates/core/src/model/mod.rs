//! Fourier neural operators: vanilla and exponential Fourier layers, RevNet
//! couplings and the nine variant compositions.

pub mod checkpoint;
pub mod layers;
mod network;
pub mod params;
mod spec;

pub use checkpoint::read_spec;
pub use layers::{
    exp_fourier_layer, exp_fourier_layer_kdv, fourier_layer, kdv_ratios, lift_zero_stack, project_truncate,
    pseudo_inverse_project, revnet_forward, revnet_inverse,
};
pub use network::Model;
pub use params::{layout, Bound, ParamSet};
pub use spec::{Advance, ModelSpec, Variant};
