pub mod corpus;
pub mod error;
pub mod eval;
pub mod hintgen;
pub mod hints;
pub mod index;
pub mod pipeline;
pub mod rerank;
pub mod retrieval;
pub mod synth;

pub use error::{Classify, ErrorClass};
