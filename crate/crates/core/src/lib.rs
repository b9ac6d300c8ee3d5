//! Trimap-based image matting with an output-stride-4 encoder, an
//! intensive-connection decoder and a global foreground perception branch.
//!
//! The crate covers the full pipeline: dataset synthesis by alpha
//! compositing, augmentation, the network with hand-written reverse-mode
//! gradients, the four training losses, a two-stage trainer and the four
//! standard matting metrics (SAD, MSE, Grad, Conn).

pub mod data;
pub mod error;
pub mod graph;
pub mod inference;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod raster;
pub mod resample;
pub mod seed;
pub mod tensor;
pub mod toy;
pub mod trainer;

pub use error::{MattingError, Result};
pub use raster::{
    composite, generate_trimap, unknown_mask, AlphaMatte, Mask, MattingSample, RgbImage, Trimap,
    TrimapLabel,
};
