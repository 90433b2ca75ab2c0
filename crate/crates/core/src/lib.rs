//! Noise-robust speech emotion recognition toolkit.
//!
//! The crate covers the whole pipeline: colored-noise synthesis and two noise
//! injection protocols, quadruplet augmentation, ZCR/RMSE/MFCC feature vectors,
//! a dual-branch fusion classifier trained with hand-written backpropagation,
//! and gradient-free explanations (Shapley attribution, Score-CAM, occlusion and
//! counterfactual masking).

pub mod augment;
pub mod corruption;
pub mod emotion;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod features;
pub mod fusion;
pub mod nn;
pub mod noise;
pub mod signal;

pub use emotion::EmotionClass;
pub use error::{Error, Result};
pub use features::{FeatureConfig, FeatureExtractor, FeatureKind, FeatureVector};
pub use noise::{NoiseColor, RngSeed};
pub use signal::Waveform;
