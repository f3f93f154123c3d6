//! Randomised agreement checks between each classical layer and its GTN form.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graphs;
use crate::par::{self, Exec};
use crate::tensor::DenseTensor;

use super::classical::*;
use super::Result;

/// Tolerance for the DNN / GCN / CNN / attention comparisons.
pub const DIRECT_TOLERANCE: f64 = 1e-12;
/// Tolerance for the closed-form RNN against the unrolled recurrence.
pub const RNN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, serde::Serialize)]
pub struct EquivalenceCase {
    pub name: &'static str,
    pub instances: usize,
    pub max_abs_error: f64,
    pub tolerance: f64,
    /// Exact cases require bit-identical results.
    pub exact: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EquivalenceReport {
    pub cases: Vec<EquivalenceCase>,
}

impl EquivalenceReport {
    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }
}

/// Instance counts for [`run_equivalence_suite`].
#[derive(Debug, Clone, Copy)]
pub struct SuiteSize {
    pub direct: usize,
    pub rnn: usize,
}

impl Default for SuiteSize {
    fn default() -> Self {
        SuiteSize { direct: 100, rnn: 50 }
    }
}

pub(crate) fn instance_rng(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index as u64);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn uniform(dims: Vec<usize>, rng: &mut ChaCha8Rng) -> DenseTensor {
    DenseTensor::random_uniform(dims, -1.0, 1.0, rng).expect("dims >= 1")
}

/// Random symmetric non-negative adjacency with zero diagonal.
pub fn random_adjacency(n: usize, rng: &mut impl Rng) -> DenseTensor {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            if rng.gen_bool(0.5) {
                let w = rng.gen_range(0.1..2.0);
                data[i * n + j] = w;
                data[j * n + i] = w;
            }
        }
    }
    DenseTensor::new(vec![n, n], data).expect("finite")
}

/// Orthogonal projection `Q (QᵀQ)⁻¹ Qᵀ` onto the span of a random `k × r`
/// matrix, an idempotent `k × k` matrix.
pub fn random_projection(k: usize, r: usize, rng: &mut impl Rng) -> DenseTensor {
    loop {
        let q = DMatrix::from_fn(k, r, |_, _| rng.gen_range(-1.0f64..1.0));
        let gram = q.transpose() * &q;
        if gram.determinant().abs() < 1e-3 {
            continue;
        }
        let inv = gram.try_inverse().expect("non-singular");
        let p = &q * inv * q.transpose();
        // symmetrise to remove roundoff asymmetry
        let p = (&p + p.transpose()) * 0.5;
        let data: Vec<f64> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| p[(i, j)]).collect();
        let t = DenseTensor::new(vec![k, k], data).expect("finite");
        if t.matmul(&t).unwrap().max_abs_diff(&t).unwrap() < IDEMPOTENCY_TOLERANCE / 10.0 {
            return t;
        }
    }
}

fn summarise(name: &'static str, errors: Vec<Result<f64>>, tolerance: f64, exact: bool) -> Result<EquivalenceCase> {
    let instances = errors.len();
    let mut max_abs_error: f64 = 0.0;
    for e in errors {
        max_abs_error = max_abs_error.max(e?);
    }
    let passed = if exact { max_abs_error == 0.0 } else { max_abs_error < tolerance };
    Ok(EquivalenceCase {
        name,
        instances,
        max_abs_error,
        tolerance: if exact { 0.0 } else { tolerance },
        exact,
        passed,
    })
}

/// Runs every classical-vs-GTN comparison on seeded random instances.
pub fn run_equivalence_suite(seed: u64, size: SuiteSize, exec: Exec) -> Result<EquivalenceReport> {
    let mut cases = Vec::new();

    let dnn = par::map_indexed(exec, size.direct, |i| {
        let mut rng = instance_rng(seed, 1, i);
        let (k, j) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let w = uniform(vec![k, j], &mut rng);
        let x = uniform(vec![j], &mut rng);
        Ok(dnn_forward(&x, &w)?.max_abs_diff(&dnn_as_gtn(&x, &w)?)?)
    });
    cases.push(summarise("dnn", dnn, DIRECT_TOLERANCE, false)?);

    let gcn = par::map_indexed(exec, size.direct, |i| {
        let mut rng = instance_rng(seed, 2, i);
        let n = rng.gen_range(1..=8);
        let (j, k) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let a = random_adjacency(n, &mut rng);
        let x = uniform(vec![n, j], &mut rng);
        let w = uniform(vec![j, k], &mut rng);
        Ok(gcn_forward(&x, &a, &w)?.max_abs_diff(&gcn_as_gtn(&x, &a, &w)?)?)
    });
    cases.push(summarise("gcn", gcn, DIRECT_TOLERANCE, false)?);

    let cnn = par::map_indexed(exec, size.direct, |i| {
        let mut rng = instance_rng(seed, 3, i);
        let n = rng.gen_range(2..=16);
        let p = rng.gen_range(1..n.min(6));
        let x = uniform(vec![n], &mut rng);
        let k = uniform(vec![p], &mut rng);
        Ok(cnn_forward(&x, &k)?.max_abs_diff(&cnn_as_gtn(&x, &k)?)?)
    });
    cases.push(summarise("cnn", cnn, DIRECT_TOLERANCE, false)?);

    let attention = par::map_indexed(exec, size.direct, |i| {
        let mut rng = instance_rng(seed, 4, i);
        let n = rng.gen_range(1..=6);
        let (j, k) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let x = uniform(vec![n, j], &mut rng);
        let wq = uniform(vec![j, k], &mut rng);
        let wk = uniform(vec![j, k], &mut rng);
        let wv = uniform(vec![j, k], &mut rng);
        let d_k = k as f64;
        Ok(attention_forward(&x, &wq, &wk, &wv, d_k)?.max_abs_diff(&attention_as_gtn(&x, &wq, &wk, &wv, d_k)?)?)
    });
    cases.push(summarise("attention", attention, DIRECT_TOLERANCE, false)?);

    let rnn = par::map_indexed(exec, size.rnn, |i| {
        let mut rng = instance_rng(seed, 5, i);
        let steps = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=4);
        let j = rng.gen_range(1..=4);
        let r = rng.gen_range(1..=k);
        let c = rng.gen_range(0.1..=1.0);
        let w1 = random_projection(k, r, &mut rng);
        let x = uniform(vec![steps, j], &mut rng);
        let wx = uniform(vec![k, j], &mut rng);
        let unrolled = rnn_unrolled(&x, &w1.scale(c), &wx)?;
        Ok(rnn_closed_form(&x, &w1, &wx, c)?.max_abs_diff(&unrolled)?)
    });
    cases.push(summarise("rnn_closed_form", rnn, RNN_TOLERANCE, false)?);

    let reduction = par::map_indexed(exec, size.rnn, |i| {
        let mut rng = instance_rng(seed, 6, i);
        let steps = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=4);
        let j = rng.gen_range(1..=4);
        let c = rng.gen_range(0.1..=1.0);
        let x = uniform(vec![steps, j], &mut rng);
        let wx = uniform(vec![k, j], &mut rng);
        let closed = rnn_closed_form(&x, &DenseTensor::identity(k)?, &wx, c)?;
        let s = graphs::gso_time_decay(steps, c)?;
        let x_tilde = x.matmul(&wx.transpose()?)?;
        Ok(closed.max_abs_diff(&unnormalized_gcn(&s, &x_tilde)?)?)
    });
    cases.push(summarise("unnormalized_gcn_reduction", reduction, 0.0, true)?);

    Ok(EquivalenceReport { cases })
}
