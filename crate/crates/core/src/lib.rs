//! Flower classification at desk scale.
//!
//! Two stages: [`segmentation`] removes image backgrounds by repeatedly
//! discarding the most frequent border hue, and a small from-scratch
//! convolutional stack ([`tensor`], [`models`], [`training`]) learns to
//! classify the segmented subjects. [`dataset`] handles ingestion,
//! splitting and a synthetic flower generator; [`evaluation`] computes
//! top-k accuracies and model comparisons.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod models;
pub mod segmentation;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/segmentation.md")]
    mod segmentation {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
