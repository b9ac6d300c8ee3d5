//! The matting network: configuration, layer inventory, parameters, forward
//! pass and the parameter archive format.

pub mod arch;
pub mod archive;
pub mod config;
pub mod model;

pub use archive::Archive;
pub use arch::{Architecture, ConvSpec, NetworkParams, ParamTensor, Weights};
pub use config::{Ablation, ModelConfig};
pub use model::{FeatureMap, Forward, Network, NetworkInput, Stage};
