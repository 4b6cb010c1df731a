//! The implicit residual: a multi-resolution hash-grid encoder and a small
//! MLP decoder with exact reverse-mode parameter gradients.

pub mod hashgrid;
pub mod mlp;
mod net;

pub use hashgrid::{HashGrid, HashGridConfig, LevelFootprint};
pub use mlp::{Layer, LayerGrad, Mlp, MlpCache, MlpConfig};
pub use net::{GradBuffer, ResidualCache, ResidualNet};
