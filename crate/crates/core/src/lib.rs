//! Physical-layer secret-key agreement from channel state information.
//!
//! The pipeline runs in four stages, each in its own module:
//!
//! 1. [`channel`] produces (or loads) reciprocal CSI magnitude captures for an
//!    access point, a station and an eavesdropper.
//! 2. [`scattering`] turns each CSI series into wavelet scattering features,
//!    and [`embedding`] projects the feature frames to 2-D with t-SNE.
//! 3. [`clustering`] fits Gaussian mixtures to the embeddings; [`hmm`] turns a
//!    mixture into a hidden Markov model whose state sequence is the key.
//! 4. [`protocol`] runs the public exchange, [`encoding`] maps state labels to
//!    bits, and [`metrics`] / [`randomness`] evaluate the resulting keys.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the file formats and
//! the wire protocol use.

pub mod channel;
pub mod clustering;
pub mod embedding;
pub mod encoding;
mod error;
pub mod hmm;
pub mod metrics;
mod num;
pub mod protocol;
pub mod randomness;
pub mod scattering;
pub mod seed;

pub use error::{Error, Result};
pub use num::Real;

pub use channel::{ChannelConfig, Role};
pub use embedding::TsneConfig;
pub use encoding::{BitString, EncodingScheme, SchemeKind};
pub use hmm::{StatePath, TransitionSpec};
pub use scattering::ScatteringConfig;

pub type CsiBlock = channel::CsiBlock<f64>;
pub type FilterBank = scattering::FilterBank<f64>;
pub type ScatteringFeatures = scattering::ScatteringFeatures<f64>;
pub type PointSet = embedding::PointSet<f64>;
pub type Embedding2D = embedding::Embedding2D<f64>;
pub type GmmComponent = clustering::GmmComponent<f64>;
pub type GmmModel = clustering::GmmModel<f64>;
pub type HmmModel = hmm::HmmModel<f64>;
pub type ObservationSequence = hmm::ObservationSequence<f64>;

pub type ScatteringFeatures32 = scattering::ScatteringFeatures<f32>;
pub type Embedding2D32 = embedding::Embedding2D<f32>;
pub type GmmModel32 = clustering::GmmModel<f32>;
