//! Seeded weight initialisation.

use rand::Rng;

use crate::tensor::DenseTensor;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))` for a `fan_out × fan_in` matrix.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_out: usize, fan_in: usize, rng: &mut R) -> DenseTensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseTensor::random_uniform(vec![fan_out, fan_in], -a, a, rng).expect("positive dims")
}

/// Cores `R_{n-1} × K_n × J_n × R_n` whose product has entry variance
/// `2 / (J + K)`, the Glorot variance of the dense matrix they replace.
pub fn tt_cores<R: Rng + ?Sized>(
    out_factors: &[usize],
    in_factors: &[usize],
    ranks: &[usize],
    rng: &mut R,
) -> Vec<DenseTensor> {
    let n = out_factors.len();
    let k: usize = out_factors.iter().product();
    let j: usize = in_factors.iter().product();
    let paths: f64 = ranks[1..n].iter().map(|&r| r as f64).product();
    let core_var = (2.0 / (j + k) as f64 / paths).powf(1.0 / n as f64);
    let a = (3.0 * core_var).sqrt();
    (0..n)
        .map(|c| {
            DenseTensor::random_uniform(vec![ranks[c], out_factors[c], in_factors[c], ranks[c + 1]], -a, a, rng)
                .expect("positive dims")
        })
        .collect()
}
