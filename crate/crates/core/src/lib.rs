//! Parameter-space factorization for zero-shot sequence labeling.
//!
//! Every classifier head in a task × language grid is generated from a task
//! latent and a language latent through a shared hypernetwork. The latents
//! carry Gaussian variational posteriors (diagonal or diagonal plus low-rank
//! covariance) trained by stochastic variational inference on the seen cells;
//! unseen cells are then predicted zero-shot, either by plugging in posterior
//! means or by Bayesian model averaging over posterior samples.

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod elbo;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod gauss;
pub mod hypernet;
pub mod latents;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod predict;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use latents::{Family, LangId, LatentStore, TaskId};
pub use model::Model;
