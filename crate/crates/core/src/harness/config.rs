use std::path::{Path, PathBuf};

use crate::gtn::ActivationKind;
use crate::train::TrainConfig;

use super::synth::SyntheticSpec;
use super::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gtn,
    RnnBaseline,
    GcnBaseline,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gtn, Family::RnnBaseline, Family::GcnBaseline];

    pub fn label(self) -> &'static str {
        match self {
            Family::Gtn => "GTN",
            Family::RnnBaseline => "RNN",
            Family::GcnBaseline => "GCN",
        }
    }
}

/// What the model emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Full pipeline ending in a dense layer with one output.
    #[default]
    Fig8,
    /// The first GTN layer alone; targets are the teacher's output tensor.
    Layer,
}

/// Mode sizes of one sample: `I_1` time steps, `I_2` vertices, `J_1` features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sizes {
    pub i1: usize,
    pub i2: usize,
    pub j1: usize,
}

impl Sizes {
    pub fn dims(&self) -> Vec<usize> {
        vec![self.i1, self.i2, self.j1]
    }
}

/// Header-free CSV inputs. `data` holds `samples · I_1 · I_2` rows of `J_1`
/// values (sample, time, vertex order); `targets` one row per sample.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub data: PathBuf,
    pub targets: PathBuf,
    pub adjacency: PathBuf,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
}

/// Layer hyperparameters shared by the three families.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `K_1`, output features of the first layer (RNN hidden size).
    pub hidden_features: usize,
    /// Output factors of the TT layer; their product is the hidden width
    /// of the baselines' dense layer.
    pub tt_out: Vec<usize>,
    /// Input factors of the TT layer; defaults to `[I_1, I_2, K_1]`.
    pub tt_in: Option<Vec<usize>>,
    pub tt_ranks: Vec<usize>,
    pub first_activation: ActivationKind,
    pub second_activation: ActivationKind,
    /// Decay `c` of the time GSO.
    pub time_decay: f64,
    pub first_layer_bias: bool,
    pub readout: Readout,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_features: 4,
            tt_out: vec![2, 2, 2],
            tt_in: None,
            tt_ranks: vec![2, 2],
            first_activation: ActivationKind::Tanh,
            second_activation: ActivationKind::Tanh,
            time_decay: 0.9,
            first_layer_bias: true,
            readout: Readout::Fig8,
        }
    }
}

impl ModelConfig {
    pub fn hidden_width(&self) -> usize {
        self.tt_out.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub data: DataSource,
    pub sizes: Sizes,
    pub family: Family,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Desk-scale synthetic regression: `I_1 = 6`, `I_2 = 8`, `J_1 = 4`.
    pub fn desk_default(family: Family) -> Self {
        let sizes = Sizes { i1: 6, i2: 8, j1: 4 };
        ExperimentConfig {
            task: Task::Regression,
            data: DataSource::Synthetic(SyntheticSpec::for_sizes(sizes)),
            sizes,
            family,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sizes;
        if s.i1 == 0 || s.i2 == 0 || s.j1 == 0 {
            return Err(HarnessError::Config(format!("mode sizes must be >= 1, got {s:?}")));
        }
        let m = &self.model;
        if m.hidden_features == 0 || m.tt_out.is_empty() || m.tt_out.contains(&0) {
            return Err(HarnessError::Config("hidden sizes must be >= 1".into()));
        }
        if !(m.time_decay > 0.0 && m.time_decay <= 1.0) {
            return Err(HarnessError::Config(format!("time_decay must lie in (0, 1], got {}", m.time_decay)));
        }
        if m.readout == Readout::Layer && (self.family != Family::Gtn || self.task != Task::Regression) {
            return Err(HarnessError::Config(
                "readout `layer` is only defined for the gtn family on regression".into(),
            ));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            if spec.steps != s.i1 || spec.nodes != s.i2 || spec.features != s.j1 {
                return Err(HarnessError::InconsistentSizes(format!(
                    "synthetic spec is {}×{}×{}, config sizes are {}×{}×{}",
                    spec.steps, spec.nodes, spec.features, s.i1, s.i2, s.j1
                )));
            }
        }
        Ok(())
    }
}
