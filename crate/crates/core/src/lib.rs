//! Inter-radial ring-topology texture codes and a three-stream expression
//! classifier built on a from-scratch tensor engine.
//!
//! * [`imagio`]: grayscale images, PGM I/O, augmentation
//! * [`rarity`]: the descriptor, an LBP baseline, block histograms, L1 distance
//! * [`tensor`]: tensors, kernels, reverse-mode tape, gradient check, SGD
//! * [`affemonet`]: the network (build, forward, training, checkpoints)
//! * [`evalharness`]: dataset indexing, leave-one-subject-out evaluation
//! * [`cli`]: the `rarity` command-line front end

pub mod affemonet;
pub mod cli;
pub mod evalharness;
pub mod imagio;
pub mod rarity;
pub mod tensor;

pub use imagio::GrayImage;
pub use rarity::{encode_rarity, FeatureVector, RarityResponse, RingParams};
pub use tensor::Tensor;
