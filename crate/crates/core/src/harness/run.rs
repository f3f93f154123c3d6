use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graphs::{self, GraphShiftOperator};
use crate::gtn::DataTensorMeta;
use crate::par::Exec;
use crate::tensor::DenseTensor;
use crate::train::{fd_check, fit, FdReport, LossKind, ModelSpec, Sample};

use super::config::{DataSource, ExperimentConfig, Family, Readout, Task};
use super::data::{load_adjacency_csv, load_data_tensor, load_matrix_csv};
use super::models::build_model;
use super::synth::{split_indices, synth_generate, SynthSample};
use super::{HarnessError, Result};

/// Outcome of one experiment.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub family: Family,
    pub task: Task,
    /// Test accuracy at threshold 0.5 (classification).
    pub accuracy: Option<f64>,
    /// Test mean squared error (regression).
    pub mse: Option<f64>,
    pub param_count: usize,
    pub wall_clock_secs: f64,
    /// Training loss before each optimizer step.
    pub loss_curve: Vec<f64>,
    pub final_learning_rate: f64,
    pub lr_halvings: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub seed: u64,
}

impl MetricsReport {
    /// Equality of everything except the wall-clock time.
    pub fn same_outcome(&self, other: &MetricsReport) -> bool {
        let mut a = self.clone();
        a.wall_clock_secs = other.wall_clock_secs;
        &a == other
    }
}

/// Offsets the root seed for the CSV train/test shuffle.
const SPLIT_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;
/// Offsets the root seed for mini-batch shuffling.
const FIT_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

struct Prepared {
    train: Vec<Sample>,
    test: Vec<Sample>,
    time_gso: GraphShiftOperator,
    graph_gso: GraphShiftOperator,
}

fn synth_target(cfg: &ExperimentConfig, s: &SynthSample) -> DenseTensor {
    match (cfg.model.readout, cfg.task) {
        (Readout::Layer, _) => s.z.clone(),
        (Readout::Fig8, Task::Regression) => DenseTensor::vector(vec![s.score]).expect("finite"),
        (Readout::Fig8, Task::Classification) => DenseTensor::vector(vec![s.label()]).expect("finite"),
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let time_gso = graphs::gso_time_decay(cfg.sizes.i1, cfg.model.time_decay)?;
    match &cfg.data {
        DataSource::Synthetic(spec) => {
            let data = synth_generate(spec)?;
            let to_samples = |v: &[SynthSample]| -> Vec<Sample> {
                v.iter()
                    .map(|s| Sample {
                        x: s.x.clone(),
                        t: synth_target(cfg, s),
                    })
                    .collect()
            };
            Ok(Prepared {
                train: to_samples(&data.train),
                test: to_samples(&data.test),
                time_gso,
                graph_gso: data.graph_gso,
            })
        }
        DataSource::Csv(src) => {
            let (i1, i2, j1) = (cfg.sizes.i1, cfg.sizes.i2, cfg.sizes.j1);
            if src.samples < 2 {
                return Err(HarnessError::Config("csv source needs at least 2 samples".into()));
            }
            let meta = DataTensorMeta::new(vec![src.samples, i1, i2], vec![j1])?;
            let x = load_data_tensor(&src.data, &meta)?;
            let targets = load_matrix_csv(&src.targets)?;
            let width = if cfg.model.readout == Readout::Layer {
                i1 * i2 * cfg.model.hidden_features
            } else {
                1
            };
            if targets.rows() != src.samples || targets.cols() != width {
                return Err(HarnessError::Shape(format!(
                    "{}: expected {} rows of {width} targets, found {}",
                    src.targets.display(),
                    src.samples,
                    targets.shape()
                )));
            }
            if cfg.task == Task::Classification {
                if let Some(i) = targets.data().iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(HarnessError::Config(format!(
                        "{}: classification target at row {} is not 0 or 1",
                        src.targets.display(),
                        i / width + 1
                    )));
                }
            }
            let adjacency = load_adjacency_csv(&src.adjacency)?;
            if adjacency.size() != i2 {
                return Err(HarnessError::InconsistentSizes(format!(
                    "adjacency has {} vertices, I_2 = {i2}",
                    adjacency.size()
                )));
            }
            let graph_gso = graphs::gso_gcn(adjacency.matrix())?;
            let per = i1 * i2 * j1;
            let out_dims = if width == 1 { vec![1] } else { vec![i1, i2, cfg.model.hidden_features] };
            let all: Vec<Sample> = (0..src.samples)
                .map(|s| -> Result<Sample> {
                    Ok(Sample {
                        x: DenseTensor::new(vec![i1, i2, j1], x.data()[s * per..(s + 1) * per].to_vec())?,
                        t: DenseTensor::new(out_dims.clone(), targets.data()[s * width..(s + 1) * width].to_vec())?,
                    })
                })
                .collect::<Result<_>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(SPLIT_STREAM));
            let (tr, te) = split_indices(all.len(), &mut rng);
            Ok(Prepared {
                train: tr.iter().map(|&i| all[i].clone()).collect(),
                test: te.iter().map(|&i| all[i].clone()).collect(),
                time_gso,
                graph_gso,
            })
        }
    }
}

fn loss_kind(task: Task) -> LossKind {
    match task {
        Task::Regression => LossKind::Mse,
        Task::Classification => LossKind::BinaryCrossEntropy,
    }
}

fn build(cfg: &ExperimentConfig, data: &Prepared) -> Result<ModelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = build_model(cfg, &data.time_gso, &data.graph_gso, &mut rng)?;
    if let Some(s) = data.train.first() {
        if s.t.dims() != model.output_dims() {
            return Err(HarnessError::InconsistentSizes(format!(
                "model output {:?} does not match target {:?}",
                model.output_dims(),
                s.t.dims()
            )));
        }
    }
    Ok(model)
}

/// Trains on the training split and evaluates on the held-out split.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Exec) -> Result<MetricsReport> {
    cfg.validate()?;
    let start = Instant::now();
    let data = prepare(cfg)?;
    let mut model = build(cfg, &data)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.loss = loss_kind(cfg.task);
    let outcome = fit(&model, &data.train, &train_cfg, cfg.seed.wrapping_add(FIT_STREAM), exec)?;
    model.params = outcome.params;

    let predictions = crate::par::map_slice(exec, &data.test, |s| model.forward(&s.x));
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut correct = 0usize;
    for (s, p) in data.test.iter().zip(predictions) {
        let p = p?;
        for (a, b) in p.data().iter().zip(s.t.data()) {
            sq += (a - b) * (a - b);
            count += 1;
        }
        if cfg.task == Task::Classification {
            let label = if p.data()[0] >= 0.5 { 1.0 } else { 0.0 };
            if label == s.t.data()[0] {
                correct += 1;
            }
        }
    }
    let (accuracy, mse) = match cfg.task {
        Task::Classification => (Some(correct as f64 / data.test.len() as f64), None),
        Task::Regression => (None, Some(sq / count as f64)),
    };
    Ok(MetricsReport {
        family: cfg.family,
        task: cfg.task,
        accuracy,
        mse,
        param_count: model.count_params(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        loss_curve: outcome.loss_curve,
        final_learning_rate: outcome.final_learning_rate,
        lr_halvings: outcome.lr_halvings,
        train_samples: data.train.len(),
        test_samples: data.test.len(),
        seed: cfg.seed,
    })
}

/// Finite-difference check of the configured model on its first
/// `samples` training samples.
pub fn grad_check(cfg: &ExperimentConfig, samples: usize, h: f64, tolerance: f64, exec: Exec) -> Result<FdReport> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    let model = build(cfg, &data)?;
    let n = samples.clamp(1, data.train.len());
    Ok(fd_check(&model, &data.train[..n], loss_kind(cfg.task), h, tolerance, exec)?)
}

/// Plain-text table with one row per report: model, parameters, metric.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<8} {:>8} {:>12} {:>12} {:>10}\n", "Model", "Params", "Accuracy", "MSE", "Time (s)"));
    for r in reports {
        let acc = r.accuracy.map_or("-".to_string(), |a| format!("{:.2}%", a * 100.0));
        let mse = r.mse.map_or("-".to_string(), |m| format!("{m:.4e}"));
        out.push_str(&format!(
            "{:<8} {:>8} {:>12} {:>12} {:>10.2}\n",
            r.family.label(),
            r.param_count,
            acc,
            mse,
            r.wall_clock_secs
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(family: Family) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk_default(family);
        cfg.train.steps = 30;
        if let DataSource::Synthetic(spec) = &mut cfg.data {
            spec.samples = 30;
        }
        cfg
    }

    #[test]
    fn runs_are_reproducible() {
        for family in Family::ALL {
            let cfg = quick(family);
            let a = run_experiment(&cfg, Exec::Parallel).unwrap();
            let b = run_experiment(&cfg, Exec::Sequential).unwrap();
            assert!(a.same_outcome(&b), "{family:?}");
            assert_eq!(a.loss_curve.len(), 30);
            assert!(a.mse.unwrap() >= 0.0);
        }
    }

    #[test]
    fn table_lists_each_report() {
        let r = run_experiment(&quick(Family::Gtn), Exec::Parallel).unwrap();
        let table = render_table(&[r.clone(), r]);
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains("GTN"));
        assert!(table.contains("329"));
    }

    #[test]
    fn csv_source_runs() {
        let cfg = quick(Family::Gtn);
        let DataSource::Synthetic(spec) = &cfg.data else { unreachable!() };
        let data = synth_generate(spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = super::super::synth::write_synthetic(&data, spec, dir.path()).unwrap();
        let mut csv_cfg = cfg.clone();
        csv_cfg.data = DataSource::Csv(super::super::config::CsvSource {
            data: paths[0].clone(),
            targets: paths[1].clone(),
            adjacency: paths[4].clone(),
            samples: spec.samples,
        });
        let r = run_experiment(&csv_cfg, Exec::Parallel).unwrap();
        assert_eq!(r.train_samples + r.test_samples, 30);
        csv_cfg.task = Task::Classification;
        assert!(run_experiment(&csv_cfg, Exec::Parallel).is_err());
        if let DataSource::Csv(src) = &mut csv_cfg.data {
            src.targets = paths[2].clone();
        }
        let r = run_experiment(&csv_cfg, Exec::Parallel).unwrap();
        assert!((0.0..=1.0).contains(&r.accuracy.unwrap()));
    }
}
