//! Forward-only learned MPI network.
//!
//! A detail encoder and a deeper depth-semantic branch are fused by a gated
//! attention step; shared mask heads assign pixels to planes and a shared
//! decoder turns each plane's context into color and density.

pub mod config;
pub mod error;
pub mod network;
pub mod tensor;
pub mod weights;

pub use config::NetworkConfig;
pub use error::{LmpinError, Result};
pub use network::{softmax_planes, ForwardOptions, ForwardOutput, Lmpin, PlaneDepthChannel};
pub use tensor::{FeatureMap, Tensor};
pub use weights::{init_weights, load_weights, zero_weights, NetworkWeights, MAGIC};
