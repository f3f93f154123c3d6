use rand::Rng;

use crate::graphs::GraphShiftOperator;
use crate::gtn::ActivationKind;
use crate::train::{DomainInit, ModelBuilder, ModelSpec};

use super::config::{ExperimentConfig, Family, Readout, Sizes, Task};
use super::{HarnessError, Result};

/// Input factors of the TT layer: configured, or `[I_1, I_2, K_1]`.
pub(crate) fn tt_in(cfg: &ExperimentConfig) -> Vec<usize> {
    cfg.model
        .tt_in
        .clone()
        .unwrap_or_else(|| vec![cfg.sizes.i1, cfg.sizes.i2, cfg.model.hidden_features])
}

fn head_activation(task: Task) -> ActivationKind {
    match task {
        Task::Regression => ActivationKind::Identity,
        Task::Classification => ActivationKind::Sigmoid,
    }
}

/// Builds the model for `cfg.family` with seeded initial weights.
///
/// * `gtn`: GTN layer (time GSO, graph GSO, `K_1 × J_1` weight) → TT layer
///   → vectorize → dense head.
/// * `rnn_baseline`: `X₍₁₎` (`I_1 × I_2 J_1`) → linear RNN with `K_1`
///   hidden units → dense layer of the TT layer's width → dense head.
/// * `gcn_baseline`: `X₍₂₎` (`I_2 × I_1 J_1`) → GCN layer with `K_1`
///   outputs → dense layer of the TT layer's width → dense head.
pub fn build_model<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    time_gso: &GraphShiftOperator,
    graph_gso: &GraphShiftOperator,
    rng: &mut R,
) -> Result<ModelSpec> {
    let Sizes { i1, i2, j1 } = cfg.sizes;
    if time_gso.size() != i1 || graph_gso.size() != i2 {
        return Err(HarnessError::InconsistentSizes(format!(
            "GSOs of size {} and {} for I_1 = {i1}, I_2 = {i2}",
            time_gso.size(),
            graph_gso.size()
        )));
    }
    let m = &cfg.model;
    let k1 = m.hidden_features;
    let head = head_activation(cfg.task);
    let mut b = ModelBuilder::new(vec![i1, i2, j1], rng)?;
    match cfg.family {
        Family::Gtn => {
            let domain = vec![DomainInit::Fixed(time_gso.clone()), DomainInit::Fixed(graph_gso.clone())];
            b.gtn("gtn", domain, &[k1], m.first_layer_bias, m.first_activation)?;
            if m.readout == Readout::Fig8 {
                let tt_in = tt_in(cfg);
                if tt_in.iter().product::<usize>() != i1 * i2 * k1 {
                    return Err(HarnessError::InconsistentSizes(format!(
                        "TT input factors {tt_in:?} do not multiply to I_1·I_2·K_1 = {}",
                        i1 * i2 * k1
                    )));
                }
                if tt_in.len() != m.tt_out.len() || m.tt_ranks.len() + 1 != m.tt_out.len() {
                    return Err(HarnessError::InconsistentSizes(format!(
                        "TT plan needs matching factor counts and one rank per bond: out {:?}, in {:?}, ranks {:?}",
                        m.tt_out, tt_in, m.tt_ranks
                    )));
                }
                b.tt_dense("tt", &m.tt_out, &tt_in, &m.tt_ranks, true, m.second_activation)?;
                b.vectorize();
                b.dense("head", 1, true, head)?;
            }
        }
        Family::RnnBaseline => {
            b.matricize(1)?;
            b.rnn("rnn", k1, m.first_layer_bias)?;
            b.activation(m.first_activation);
            b.vectorize();
            b.dense("hidden", m.hidden_width(), true, m.second_activation)?;
            b.dense("head", 1, true, head)?;
        }
        Family::GcnBaseline => {
            b.matricize(2)?;
            b.gtn("gcn", vec![DomainInit::Fixed(graph_gso.clone())], &[k1], m.first_layer_bias, m.first_activation)?;
            b.vectorize();
            b.dense("hidden", m.hidden_width(), true, m.second_activation)?;
            b.dense("head", 1, true, head)?;
        }
    }
    Ok(b.finish()?)
}

/// Trainable scalars in a built model.
pub fn count_params(model: &ModelSpec) -> usize {
    model.count_params()
}

/// Parameter count from the layer formulas alone, without building.
pub fn analytic_param_count(cfg: &ExperimentConfig) -> usize {
    let Sizes { i1, i2, j1 } = cfg.sizes;
    let m = &cfg.model;
    let k1 = m.hidden_features;
    let h = m.hidden_width();
    let bias = |n: usize| if m.first_layer_bias { n } else { 0 };
    let head = h + 1;
    match cfg.family {
        Family::Gtn => {
            let layer = k1 * j1 + bias(i1 * i2 * k1);
            if m.readout == Readout::Layer {
                return layer;
            }
            let tt_in = tt_in(cfg);
            let mut ranks = vec![1];
            ranks.extend_from_slice(&m.tt_ranks);
            ranks.push(1);
            let tt: usize = (0..m.tt_out.len())
                .map(|n| ranks[n] * m.tt_out[n] * tt_in[n] * ranks[n + 1])
                .sum();
            layer + tt + h + head
        }
        Family::RnnBaseline => k1 * k1 + k1 * i2 * j1 + bias(k1) + (i1 * k1 * h + h) + head,
        Family::GcnBaseline => k1 * i1 * j1 + bias(i2 * k1) + (i2 * k1 * h + h) + head,
    }
}

/// Desk-scale configurations, all three families each, used for the
/// parameter-count comparison.
pub fn default_sweep() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for (i1, i2, j1) in [(6, 8, 4), (4, 6, 3), (8, 8, 2), (6, 10, 5), (9, 10, 11), (6, 12, 27)] {
        for family in Family::ALL {
            let mut cfg = ExperimentConfig::desk_default(family);
            cfg.sizes = Sizes { i1, i2, j1 };
            if let super::DataSource::Synthetic(spec) = &mut cfg.data {
                spec.steps = i1;
                spec.nodes = i2;
                spec.features = j1;
            }
            out.push(cfg);
        }
    }
    out
}
