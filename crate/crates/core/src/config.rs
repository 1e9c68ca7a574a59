//! Run configuration: one JSON document fully determines a
//! generate/train/validate pipeline. Named presets ship the reference
//! parameter sets verbatim.

use serde::{Deserialize, Serialize};

use crate::dataset::SamplingSpec;
use crate::error::{Error, Result};
use crate::integrate::TimeGrid;
use crate::mlp::Activation;
use crate::nf_autoencoder::{LossWeights, TrainConfig};
use crate::normal_forms::NormalFormKind;
use crate::systems::{System, SystemKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DataSource {
    /// One of the built-in dynamical systems.
    System { kind: SystemKind },
    /// Externally produced snapshot container (.nfds), reduced via POD.
    External { path: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum TauPolicy {
    Trainable { initial: f64 },
    Fixed { value: f64 },
    /// sqrt(T_data / T_nf) from dominant periods of the training data.
    EstimateFromData,
}

impl TauPolicy {
    pub fn initial_tau(&self) -> Option<f64> {
        match self {
            TauPolicy::Trainable { initial } => Some(*initial),
            TauPolicy::Fixed { value } => Some(*value),
            TauPolicy::EstimateFromData => None,
        }
    }

    pub fn trainable(&self) -> bool {
        matches!(self, TauPolicy::Trainable { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPolicy {
    /// "identity", "preset-4", or "random".
    pub kind: String,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodConfig {
    pub m: usize,
    pub trim: usize,
    pub stride: usize,
    pub gamma: GammaPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub source: DataSource,
    pub normal_form: NormalFormKind,
    pub omega: f64,
    pub activation: Activation,
    pub sampling: SamplingSpec,
    pub grid: TimeGrid,
    /// Leading transient columns dropped from every trajectory.
    pub trim: usize,
    pub loss_weights: LossWeights,
    pub training: TrainConfig,
    pub tau: TauPolicy,
    /// +1 or -1, the orientation flag of the sign loss.
    pub orientation: f64,
    pub phi1_hidden: Vec<usize>,
    pub psi1_hidden: Vec<usize>,
    pub phi2_hidden: Vec<usize>,
    pub psi2_hidden: Vec<usize>,
    #[serde(default)]
    pub pod: Option<PodConfig>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.orientation != 1.0 && self.orientation != -1.0 {
            return Err(Error::InvalidArgument("orientation must be +1 or -1".into()));
        }
        if let Some(tau) = self.tau.initial_tau() {
            if !(tau > 0.0) {
                return Err(Error::InvalidArgument("tau must be positive".into()));
            }
        }
        if self.training.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.trim + 2 > self.grid.n_points {
            return Err(Error::InvalidArgument(format!(
                "trim {} leaves fewer than 2 of {} grid points",
                self.trim, self.grid.n_points
            )));
        }
        if !(self.training.eta > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        match &self.source {
            DataSource::System { .. } => {}
            DataSource::External { path } => {
                if self.pod.is_none() {
                    return Err(Error::InvalidArgument(
                        "external data requires a pod section".into(),
                    ));
                }
                if path.is_empty() {
                    return Err(Error::InvalidArgument("external data path is empty".into()));
                }
            }
        }
        if let Some(pod) = &self.pod {
            if pod.m == 0 || pod.stride == 0 {
                return Err(Error::InvalidArgument("pod m and stride must be >= 1".into()));
            }
            match pod.gamma.kind.as_str() {
                "identity" | "preset-4" | "random" => {}
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown gamma policy {other:?}"
                    )))
                }
            }
        }
        Ok(())
    }

    /// State dimension of the source system (None for external data, which
    /// is sized by its POD truncation).
    pub fn state_dim(&self) -> Result<Option<usize>> {
        match &self.source {
            DataSource::System { kind } => Ok(Some(System::from_kind(*kind)?.state_dim())),
            DataSource::External { .. } => Ok(None),
        }
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<RunConfig> {
        let cfg = match name {
            "lorenz96" => RunConfig {
                name: "lorenz96".into(),
                source: DataSource::System { kind: SystemKind::Lorenz96 },
                normal_form: NormalFormKind::Hopf,
                omega: 1.0,
                activation: Activation::Tanh,
                sampling: SamplingSpec {
                    u_center: vec![0.0; 64],
                    alpha_center: 0.0,
                    sigma_u: 0.1,
                    sigma_alpha: 0.5,
                    n_train: 1000,
                    n_test: 20,
                    seed: 0,
                },
                grid: TimeGrid::new(0.0, 80.0, 500)?,
                trim: 200,
                loss_weights: LossWeights::lorenz96(),
                training: TrainConfig { epochs: 1000, batch_size: 100, eta: 1e-4, seed: 0 },
                tau: TauPolicy::Fixed { value: 0.825 },
                orientation: 1.0,
                phi1_hidden: vec![32, 16],
                psi1_hidden: vec![16, 32],
                phi2_hidden: vec![16, 16],
                psi2_hidden: vec![16, 16],
                pod: None,
            },
            "neuralfield" => RunConfig {
                name: "neuralfield".into(),
                source: DataSource::System { kind: SystemKind::NeuralField },
                normal_form: NormalFormKind::Hopf,
                omega: 1.0,
                activation: Activation::Tanh,
                sampling: SamplingSpec {
                    u_center: vec![0.0; 128],
                    alpha_center: 0.0,
                    sigma_u: 0.1,
                    sigma_alpha: 0.5,
                    n_train: 1000,
                    n_test: 20,
                    seed: 0,
                },
                grid: TimeGrid::new(0.0, 100.0, 250)?,
                trim: 50,
                loss_weights: LossWeights::neural_field(),
                training: TrainConfig { epochs: 2000, batch_size: 250, eta: 1e-4, seed: 0 },
                tau: TauPolicy::Fixed { value: 1.4 },
                orientation: 1.0,
                phi1_hidden: vec![64, 32],
                psi1_hidden: vec![32, 64],
                phi2_hidden: vec![16, 16],
                psi2_hidden: vec![16, 16],
                pod: None,
            },
            "navierstokes-pod" => RunConfig {
                name: "navierstokes-pod".into(),
                source: DataSource::External { path: "snapshots.nfds".into() },
                normal_form: NormalFormKind::Hopf,
                omega: 1.0,
                activation: Activation::Tanh,
                sampling: SamplingSpec {
                    u_center: vec![0.0; 4],
                    alpha_center: 0.0,
                    sigma_u: 1e-2,
                    sigma_alpha: 0.0,
                    n_train: 220,
                    n_test: 20,
                    seed: 0,
                },
                grid: TimeGrid::new(0.0, 77.0, 6180)?,
                trim: 3250,
                loss_weights: LossWeights::navier_stokes_pod(),
                training: TrainConfig { epochs: 2700, batch_size: 110, eta: 1e-3, seed: 0 },
                tau: TauPolicy::Fixed { value: 0.6 },
                orientation: 1.0,
                phi1_hidden: vec![20, 20, 30],
                psi1_hidden: vec![20, 20, 20],
                phi2_hidden: vec![10, 10],
                psi2_hidden: vec![10, 10],
                pod: Some(PodConfig {
                    m: 4,
                    trim: 3250,
                    stride: 10,
                    gamma: GammaPolicy { kind: "preset-4".into(), seed: 0 },
                }),
            },
            "scalar-sn" | "scalar-pf" | "scalar-tc" => {
                // saddle node: sample below the saddle and keep the window
                // inside the escape transit, so the data stays conjugate to
                // the local normal form; tau starts near the smooth-
                // equivalence speed of the translated field
                let (kind, nf, orientation, lambda6) = match name {
                    "scalar-sn" => {
                        (SystemKind::ScalarSn, NormalFormKind::SaddleNode, -1.0, 5e-1)
                    }
                    "scalar-pf" => (SystemKind::ScalarPf, NormalFormKind::Pitchfork, 1.0, 1e-1),
                    _ => (SystemKind::ScalarTc, NormalFormKind::Transcritical, 1.0, 0.0),
                };
                let (u_center, grid, trim, tau0, seed) = match name {
                    "scalar-sn" => (-0.5, TimeGrid::new(0.0, 2.5, 100)?, 5, 0.6, 3),
                    _ => (0.0, TimeGrid::new(0.0, 10.0, 100)?, 10, 1.4, 0),
                };
                RunConfig {
                    name: name.into(),
                    source: DataSource::System { kind },
                    normal_form: nf,
                    omega: 1.0,
                    activation: Activation::Elu,
                    sampling: SamplingSpec {
                        u_center: vec![u_center],
                        alpha_center: 0.0,
                        sigma_u: 0.5,
                        sigma_alpha: 0.5,
                        n_train: 100,
                        n_test: 20,
                        seed: 0,
                    },
                    grid,
                    trim,
                    loss_weights: LossWeights::new([1.0, 1.0, 1e-1, 1e-3, 1e-2, lambda6])?,
                    training: TrainConfig { epochs: 200, batch_size: 4, eta: 1e-3, seed },
                    tau: TauPolicy::Trainable { initial: tau0 },
                    orientation,
                    phi1_hidden: vec![16, 16],
                    psi1_hidden: vec![16, 16],
                    phi2_hidden: vec![8, 8],
                    psi2_hidden: vec![8, 8],
                    pod: None,
                }
            }
            other => {
                return Err(Error::InvalidArgument(format!("unknown preset {other:?}")))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "lorenz96",
            "neuralfield",
            "scalar-sn",
            "scalar-pf",
            "scalar-tc",
            "navierstokes-pod",
        ]
    }
}
