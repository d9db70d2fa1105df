//! Genomic prediction with residual networks over reshaped SNP sequences.
//!
//! The pipeline runs from nucleotide text files ([`geno_io`]) through a
//! square or multi-channel layout of the encoded sequence ([`tensorize`]) into
//! a ResNet-18 regression network ([`net`]) trained with plain SGD
//! ([`train`]). Models are compared by k-fold cross-validated Pearson
//! correlation and Friedman rank statistics ([`cv`], [`stats`], [`report`]).
//! A closed-form ridge regression ([`ridge`]) serves as the linear baseline
//! and a seeded generator ([`synth`]) provides data with known signal.

pub mod cv;
mod error;
pub mod geno_io;
pub mod models;
pub mod net;
pub mod report;
pub mod ridge;
pub mod seeds;
pub mod stats;
pub mod synth;
pub mod tensorize;
pub mod train;

pub use error::{Error, Result};
