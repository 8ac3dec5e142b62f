//! Text-aware graph collaborative filtering for top-N recommendation.
//!
//! The pipeline has two training stages. An autoencoder first condenses
//! high-dimensional item text embeddings into `d`-dimensional vectors
//! ([`condenser`]). Those vectors seed the item table of a preference model
//! ([`model`]) in which each user's initial embedding is a multi-head
//! attention average over the items they interacted with, followed by layer
//! normalisation. Light graph convolution over the user-item graph
//! ([`graph`]) refines both sides, the layers are mean-pooled and scores are
//! inner products. The model is trained with BPR and AdamW ([`trainer`]) and
//! evaluated with all-ranking Recall@K / NDCG@K ([`eval`]).

pub mod checkpoint;
pub mod condenser;
pub mod config;
pub mod dataset;
pub mod embfile;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
