use crate::tensor::DenseTensor;

use super::{Result, TrainError};

/// Predictions within this distance of 0 or 1 are clamped before the log.
const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    BinaryCrossEntropy,
}

/// Mean loss over all entries and its gradient with respect to `y`.
pub fn loss(kind: LossKind, y: &DenseTensor, t: &DenseTensor) -> Result<(f64, DenseTensor)> {
    if y.dims() != t.dims() {
        return Err(TrainError::ShapeMismatch(format!(
            "prediction {} against target {}",
            y.shape(),
            t.shape()
        )));
    }
    let n = y.numel() as f64;
    match kind {
        LossKind::Mse => {
            let mut total = 0.0;
            let grad = y.zip_map(t, |a, b| 2.0 * (a - b) / n)?;
            for (a, b) in y.data().iter().zip(t.data()) {
                total += (a - b) * (a - b);
            }
            Ok((total / n, grad))
        }
        LossKind::BinaryCrossEntropy => {
            let mut total = 0.0;
            let mut grad = Vec::with_capacity(y.numel());
            for (index, (&p, &target)) in y.data().iter().zip(t.data()).enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(TrainError::BceDomain { index, value: p });
                }
                let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                total -= target * p.ln() + (1.0 - target) * (1.0 - p).ln();
                grad.push((p - target) / (p * (1.0 - p)) / n);
            }
            Ok((total / n, DenseTensor::new(y.dims().to_vec(), grad)?))
        }
    }
}
