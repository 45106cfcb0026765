//! Few-shot meta-denoising.
//!
//! Denoising networks are meta-trained with Reptile on tasks built from
//! synthetic noise models, then fine-tuned on a handful of real noisy/clean
//! pairs. This crate holds the pure numerical side: dense tensors,
//! reverse-mode gradients, the denoising networks, optimizers, noise
//! synthesis (including a low-dose CT sinogram simulation), the task
//! engine, the three training algorithms under comparison and the
//! evaluation statistics.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the
//! command-line driver and a thread-pool executor live in the companion
//! `metadenoise` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod ct;
pub mod error;
pub mod evaluation;
pub mod exec;
mod fft;
mod math;
pub mod nets;
pub mod noise;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod tasks;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use nets::{DenoiserModel, LayerSpec, NetworkSpec};
pub use rng::RngStream;
pub use tensor::{ParamVector, Tensor};
