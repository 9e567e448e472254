#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate blas_src;

pub mod checkpoint;
pub mod chem;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod experiments;
pub mod generation;
pub mod inner;
pub mod latent;
pub mod manifest;
pub mod nn;
pub mod oracle;
pub mod outer;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
