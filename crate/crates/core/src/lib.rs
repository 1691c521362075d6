//! Identifiability certificates and exact parameter recovery for
//! latent-structure models: latent-class mixtures, hidden Markov models,
//! random graph mixtures and nonparametric product mixtures.
//!
//! Certificates check Kruskal's condition `I1 + I2 + I3 >= 2r + 2` on the
//! Kruskal ranks of three conditional-probability matrices; recovery
//! decomposes exact three-way probability tensors and undoes the clumping
//! of variables.

pub mod error;
pub mod hmm;
pub mod latent_class;
mod linalg;
pub mod model_file;
pub mod nonparametric;
pub mod random_graph;
pub mod recovery;
pub mod sample;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Matrix, ProbabilityVector, StochasticMatrix, Tensor3, TensorP, Tripartition};
