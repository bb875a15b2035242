//! Learning with noisy labels through pseudo-label relaxed contrastive
//! learning, joint two-dimensional GMM sample selection and semi-supervised
//! co-training of two networks.
//!
//! The crate is organised by stage of the pipeline:
//!
//! * [`datagen`] synthetic class blobs, label noise and augmentations
//! * [`net`] a small MLP encoder with classifier and projection heads,
//!   analytic gradients and SGD
//! * [`plr`] reliable negative sets and contrastive losses
//! * [`protos`] momentum class prototypes and self-adaptive thresholds
//! * [`select`] loss pairs, 2D/1D Gaussian mixtures and the clean/noisy split
//! * [`sst`] pseudo targets, sharpening, MixUp and the semi-supervised loss
//! * [`trainer`] warmup, the co-divide loop and metrics
//! * [`diag`] gradient-conflict, negative-pair and separation diagnostics
//! * [`cli`] the command-line front end

pub mod cli;
pub mod datagen;
pub mod diag;
mod error;
pub mod net;
pub mod plr;
pub mod protos;
pub mod rng;
pub mod select;
pub mod sst;
pub mod trainer;

pub use error::{Error, Result};
