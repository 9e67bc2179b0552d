//! Two-hop cross-document relation extraction.
//!
//! The crate covers the whole pipeline: building two-hop instances from
//! multi-document QA records by distant supervision ([`corpus`]), token
//! encoding ([`encoder`]), mention and entity graphs ([`graphs`]), the
//! hierarchical entity GCN and four baselines ([`model`]), and training and
//! evaluation ([`training`]). Numerics are generic over the float type; the
//! aliases below pin the `f64` instantiation the pipeline uses.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod graphs;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};

pub type Tensor64 = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type Tape64 = numerics::Tape<f64>;
pub type ParamStore64 = numerics::ParamStore<f64>;
pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
