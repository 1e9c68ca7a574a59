//! Normal-form autoencoders: coordinate transformations mapping
//! parameter-dependent dynamical-system data onto canonical normal forms.

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod error;
pub mod integrate;
pub mod io;
pub mod mlp;
pub mod nf_autoencoder;
pub mod normal_forms;
pub mod pod;
pub mod systems;

pub use error::{Error, Result};
pub use integrate::{TimeGrid, Trajectory};
pub use mlp::{Activation, AdamState, Mlp};
pub use nf_autoencoder::{LossReport, LossWeights, NfAutoencoder, TrainConfig};
pub use config::{DataSource, RunConfig, TauPolicy};
pub use normal_forms::{NormalForm, NormalFormKind};
