//! Synthetic multi-domain data emitted by a hidden GTN teacher.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::graphs::{self, GraphShiftOperator};
use crate::gtn::{gtn_forward, DataTensorMeta, GtnLayerSpec};
use crate::tensor::{self, DenseTensor};
use crate::train::init::glorot_uniform;

use super::config::Sizes;
use super::data::{write_data_tensor, write_matrix_csv};
use super::{HarnessError, Result};

/// Share of samples held out for evaluation.
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    /// Cycle over the vertices.
    Ring,
    /// Uniform points in the unit square, linked within `radius`.
    Geometric,
    /// Planted partition with `communities` blocks.
    Community,
}

fn default_teacher_features() -> usize {
    4
}
fn default_samples() -> usize {
    200
}
fn default_decay() -> f64 {
    0.9
}
fn default_radius() -> f64 {
    0.5
}
fn default_communities() -> usize {
    2
}
fn default_p_in() -> f64 {
    0.8
}
fn default_p_out() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub graph: GraphFamily,
    /// `I_2`
    pub nodes: usize,
    /// `I_1`
    pub steps: usize,
    /// `J_1`
    pub features: usize,
    /// Output features `K_1` of the teacher layer.
    #[serde(default = "default_teacher_features")]
    pub teacher_features: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub teacher_seed: u64,
    /// Standard deviation of Gaussian noise added to the teacher output.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_decay")]
    pub time_decay: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_communities")]
    pub communities: usize,
    #[serde(default = "default_p_in")]
    pub p_in: f64,
    #[serde(default = "default_p_out")]
    pub p_out: f64,
}

impl SyntheticSpec {
    pub fn for_sizes(sizes: Sizes) -> Self {
        SyntheticSpec {
            graph: GraphFamily::Ring,
            nodes: sizes.i2,
            steps: sizes.i1,
            features: sizes.j1,
            teacher_features: default_teacher_features(),
            samples: default_samples(),
            teacher_seed: 0,
            noise: 0.0,
            time_decay: default_decay(),
            radius: default_radius(),
            communities: default_communities(),
            p_in: default_p_in(),
            p_out: default_p_out(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.steps == 0 || self.features == 0 || self.teacher_features == 0 {
            return Err(HarnessError::Config("synthetic mode sizes must be >= 1".into()));
        }
        if self.samples < 2 {
            return Err(HarnessError::Config("synthetic data needs at least 2 samples".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(HarnessError::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        if self.communities == 0 || !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return Err(HarnessError::Config("community parameters out of range".into()));
        }
        if !(self.radius >= 0.0) {
            return Err(HarnessError::Config(format!("radius must be >= 0, got {}", self.radius)));
        }
        Ok(())
    }
}

/// One generated sample: input, clean-plus-noise teacher output, and a
/// scalar score whose sign gives the class label.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub x: DenseTensor,
    pub z: DenseTensor,
    pub score: f64,
}

impl SynthSample {
    pub fn label(&self) -> f64 {
        if self.score > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: Vec<SynthSample>,
    pub test: Vec<SynthSample>,
    pub adjacency: DenseTensor,
    pub time_gso: GraphShiftOperator,
    pub graph_gso: GraphShiftOperator,
    pub teacher_weight: DenseTensor,
}

fn generate_graph(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> DenseTensor {
    let n = spec.nodes;
    let mut a = vec![0.0; n * n];
    let mut link = |i: usize, j: usize| {
        if i != j {
            a[i * n + j] = 1.0;
            a[j * n + i] = 1.0;
        }
    };
    match spec.graph {
        GraphFamily::Ring => {
            for i in 0..n {
                link(i, (i + 1) % n);
            }
        }
        GraphFamily::Geometric => {
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
            for i in 0..n {
                for j in 0..i {
                    let d = (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1);
                    if d <= spec.radius {
                        link(i, j);
                    }
                }
            }
        }
        GraphFamily::Community => {
            for i in 0..n {
                for j in 0..i {
                    let p = if i % spec.communities == j % spec.communities {
                        spec.p_in
                    } else {
                        spec.p_out
                    };
                    if rng.gen_bool(p) {
                        link(i, j);
                    }
                }
            }
        }
    }
    DenseTensor::new(vec![n, n], a).expect("finite")
}

fn normal_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Split `0..n` into shuffled train and test index sets.
pub fn split_indices(n: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_test = ((n as f64 * TEST_FRACTION).round() as usize).clamp(1, n - 1);
    let test = idx.split_off(n - n_test);
    (idx, test)
}

/// Teacher: GTN layer with time-decay and GCN operators, a random
/// `K_1 × J_1` weight, no bias and identity activation. The score is
/// `⟨u ⊗ v ⊗ w, vec Z⟩ / sqrt(|Z|)` for random Gaussian `u, v, w`.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.teacher_seed);
    let adjacency = generate_graph(spec, &mut rng);
    let time_gso = graphs::gso_time_decay(spec.steps, spec.time_decay)?;
    let graph_gso = graphs::gso_gcn(&adjacency)?;
    let teacher_weight = glorot_uniform(spec.teacher_features, spec.features, &mut rng);
    let u = DenseTensor::new(vec![spec.steps, 1], normal_vec(spec.steps, &mut rng))?;
    let v = DenseTensor::new(vec![spec.nodes, 1], normal_vec(spec.nodes, &mut rng))?;
    let w = DenseTensor::new(vec![spec.teacher_features, 1], normal_vec(spec.teacher_features, &mut rng))?;
    let direction = tensor::kronecker(&tensor::kronecker(&u, &v)?, &w)?;
    let meta = DataTensorMeta::new(vec![spec.steps, spec.nodes], vec![spec.features])?;
    let layer = GtnLayerSpec::new(vec![time_gso.clone(), graph_gso.clone()], vec![teacher_weight.clone()]);
    let z_len = spec.steps * spec.nodes * spec.teacher_features;
    let norm = (z_len as f64).sqrt();

    let mut all = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let x = DenseTensor::new(meta.dims(), normal_vec(meta.dims().iter().product(), &mut rng))?;
        let mut z = gtn_forward(&x, &meta, &layer)?;
        if spec.noise > 0.0 {
            let e = DenseTensor::new(z.dims().to_vec(), normal_vec(z_len, &mut rng))?;
            z = z.add(&e.scale(spec.noise))?;
        }
        let score = z.data().iter().zip(direction.data()).map(|(a, b)| a * b).sum::<f64>() / norm;
        all.push(SynthSample { x, z, score });
    }
    let (train_idx, test_idx) = split_indices(all.len(), &mut rng);
    Ok(SyntheticData {
        train: train_idx.iter().map(|&i| all[i].clone()).collect(),
        test: test_idx.iter().map(|&i| all[i].clone()).collect(),
        adjacency,
        time_gso,
        graph_gso,
        teacher_weight,
    })
}

/// Writes the generated set as header-free CSVs (train samples first):
/// `data.csv`, `scores.csv`, `labels.csv`, `teacher_output.csv`,
/// `adjacency.csv`, plus `spec.json`.
pub fn write_synthetic(data: &SyntheticData, spec: &SyntheticSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let samples: Vec<&SynthSample> = data.train.iter().chain(&data.test).collect();
    let n = samples.len();
    let (i1, i2, j1) = (spec.steps, spec.nodes, spec.features);
    let mut x = Vec::with_capacity(n * i1 * i2 * j1);
    let mut z = Vec::new();
    for s in &samples {
        x.extend_from_slice(s.x.data());
        z.extend_from_slice(s.z.data());
    }
    let meta = DataTensorMeta::new(vec![n, i1, i2], vec![j1])?;
    let paths: Vec<PathBuf> = ["data.csv", "scores.csv", "labels.csv", "teacher_output.csv", "adjacency.csv", "spec.json"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_data_tensor(&paths[0], &DenseTensor::new(meta.dims(), x)?, &meta)?;
    write_matrix_csv(&paths[1], &DenseTensor::new(vec![n, 1], samples.iter().map(|s| s.score).collect())?)?;
    write_matrix_csv(&paths[2], &DenseTensor::new(vec![n, 1], samples.iter().map(|s| s.label()).collect())?)?;
    write_matrix_csv(&paths[3], &DenseTensor::new(vec![n, z.len() / n], z)?)?;
    write_matrix_csv(&paths[4], &data.adjacency)?;
    let json = serde_json::to_string_pretty(spec)?;
    std::fs::write(&paths[5], json).map_err(|source| HarnessError::Io {
        path: paths[5].clone(),
        source,
    })?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(graph: GraphFamily) -> SyntheticSpec {
        SyntheticSpec {
            graph,
            samples: 20,
            ..SyntheticSpec::for_sizes(Sizes { i1: 3, i2: 6, j1: 2 })
        }
    }

    #[test]
    fn ring_is_cycle() {
        let d = synth_generate(&spec(GraphFamily::Ring)).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let adjacent = (i + 1) % 6 == j || (j + 1) % 6 == i;
                assert_eq!(d.adjacency.at(i, j), if adjacent { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        for g in [GraphFamily::Ring, GraphFamily::Geometric, GraphFamily::Community] {
            let a = synth_generate(&spec(g)).unwrap();
            let b = synth_generate(&spec(g)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.train.len() + a.test.len(), 20);
            assert_eq!(a.test.len(), 4);
            assert_eq!(a.adjacency, a.adjacency.transpose().unwrap());
        }
        let mut other = spec(GraphFamily::Ring);
        other.teacher_seed = 1;
        assert_ne!(synth_generate(&other).unwrap(), synth_generate(&spec(GraphFamily::Ring)).unwrap());
    }

    #[test]
    fn noiseless_targets_follow_teacher() {
        let s = spec(GraphFamily::Community);
        let d = synth_generate(&s).unwrap();
        let meta = DataTensorMeta::new(vec![3, 6], vec![2]).unwrap();
        let layer = GtnLayerSpec::new(vec![d.time_gso.clone(), d.graph_gso.clone()], vec![d.teacher_weight.clone()]);
        for smp in &d.train {
            assert_eq!(gtn_forward(&smp.x, &meta, &layer).unwrap(), smp.z);
        }
    }

    #[test]
    fn rejects_negative_noise() {
        let mut s = spec(GraphFamily::Ring);
        s.noise = -1.0;
        assert!(synth_generate(&s).is_err());
    }
}
