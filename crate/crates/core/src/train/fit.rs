use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::par::Exec;

use super::loss::LossKind;
use super::model::{batch_loss_and_grad, ModelSpec, Sample};
use super::optim::{optimizer_step, OptimizerState};
use super::params::{Gradients, ParameterSet};
use super::{Result, TrainError};

/// Training hyperparameters. Missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    /// `None` trains on the full batch every step.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Steps without a new best loss before the learning rate is cut.
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_learning_rate: f64,
    /// Full-batch only: a step that raises the loss is undone and the
    /// learning rate cut by `plateau_factor`.
    pub reject_increase: bool,
    /// Stop once the training loss falls below this value.
    pub stop_below: Option<f64>,
    /// Set from the task by the harness.
    #[serde(skip)]
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: None,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            plateau_patience: 50,
            plateau_factor: 0.5,
            min_learning_rate: 1e-6,
            reject_increase: true,
            stop_below: None,
            loss: LossKind::Mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub params: ParameterSet,
    /// Training loss of the current parameters at each step.
    pub loss_curve: Vec<f64>,
    pub final_learning_rate: f64,
    pub lr_halvings: usize,
}

/// Adam with learning-rate reduction on plateau. Deterministic in `seed`
/// and independent of `exec`.
pub fn fit(model: &ModelSpec, train: &[Sample], cfg: &TrainConfig, seed: u64, exec: Exec) -> Result<FitOutcome> {
    if train.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if !(cfg.plateau_factor > 0.0 && cfg.plateau_factor < 1.0) {
        return Err(TrainError::InvalidSetting(format!(
            "plateau_factor must lie in (0, 1), got {}",
            cfg.plateau_factor
        )));
    }
    if cfg.batch_size == Some(0) {
        return Err(TrainError::InvalidSetting("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = model.params.clone();
    let mut state = OptimizerState::new(&params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = train.len();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut halvings = 0usize;
    let mut curve = Vec::with_capacity(cfg.steps);
    let mut batch_buf: Vec<Sample> = Vec::new();
    let backtrack = cfg.reject_increase && cfg.batch_size.is_none();
    let mut kept: Option<(ParameterSet, OptimizerState, Gradients)> = None;

    let cut = |state: &mut OptimizerState, halvings: &mut usize| {
        if state.learning_rate > cfg.min_learning_rate {
            state.learning_rate = (state.learning_rate * cfg.plateau_factor).max(cfg.min_learning_rate);
            *halvings += 1;
        }
    };

    for step in 0..cfg.steps {
        let batch: &[Sample] = match cfg.batch_size {
            None => train,
            Some(b) => {
                batch_buf.clear();
                while batch_buf.len() < b.min(train.len()) {
                    if cursor == train.len() {
                        order.shuffle(&mut rng);
                        cursor = 0;
                    }
                    batch_buf.push(train[order[cursor]].clone());
                    cursor += 1;
                }
                &batch_buf
            }
        };
        let (mut l, mut grads) = batch_loss_and_grad(model, &params, batch, cfg.loss, exec)?;
        if !l.is_finite() {
            return Err(TrainError::NonFiniteLoss { step });
        }
        if backtrack && l > best {
            let (p, s, g) = kept.clone().expect("a finite best loss has a snapshot");
            let lr = state.learning_rate;
            params = p;
            state = s;
            state.learning_rate = lr;
            grads = g;
            l = best;
            cut(&mut state, &mut halvings);
            since_best = 0;
        } else if l < best {
            best = l;
            since_best = 0;
            if backtrack {
                kept = Some((params.clone(), state.clone(), grads.clone()));
            }
        } else {
            since_best += 1;
            if since_best >= cfg.plateau_patience {
                cut(&mut state, &mut halvings);
                since_best = 0;
            }
        }
        curve.push(l);
        if cfg.stop_below.is_some_and(|t| l < t) {
            break;
        }
        let (p, s) = optimizer_step(&state, &params, &grads)?;
        params = p;
        state = s;
    }
    if let (true, Some((p, _, _))) = (backtrack, kept) {
        params = p;
    }
    Ok(FitOutcome {
        params,
        loss_curve: curve,
        final_learning_rate: state.learning_rate,
        lr_halvings: halvings,
    })
}
