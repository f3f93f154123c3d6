use std::collections::HashMap;

use crate::tensor::DenseTensor;

use super::{Result, TrainError};

/// Named trainable tensors in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    names: Vec<String>,
    values: Vec<DenseTensor>,
    index: HashMap<String, usize>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor and returns its slot.
    pub fn add(&mut self, name: impl Into<String>, value: DenseTensor) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TrainError::DuplicateParameter(name));
        }
        let slot = self.values.len();
        self.index.insert(name.clone(), slot);
        self.names.push(name);
        self.values.push(value);
        Ok(slot)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, slot: usize) -> &DenseTensor {
        &self.values[slot]
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[DenseTensor] {
        &self.values
    }

    pub fn by_name(&self, name: &str) -> Option<&DenseTensor> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Replaces a value, keeping its shape.
    pub fn set(&mut self, slot: usize, value: DenseTensor) -> Result<()> {
        if value.dims() != self.values[slot].dims() {
            return Err(TrainError::ShapeMismatch(format!(
                "parameter `{}` is {}, got {}",
                self.names[slot],
                self.values[slot].shape(),
                value.shape()
            )));
        }
        self.values[slot] = value;
        Ok(())
    }

    pub(crate) fn value_mut(&mut self, slot: usize) -> &mut DenseTensor {
        &mut self.values[slot]
    }

    /// Total number of trainable scalars.
    pub fn total_elements(&self) -> usize {
        self.values.iter().map(DenseTensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(DenseTensor::is_finite)
    }
}

/// One gradient tensor per parameter slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<DenseTensor>);

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Gradients(
            params
                .values()
                .iter()
                .map(|v| DenseTensor::zeros(v.dims().to_vec()).expect("existing shape"))
                .collect(),
        )
    }

    pub fn accumulate(&mut self, slot: usize, g: &DenseTensor) -> Result<()> {
        let dst = &mut self.0[slot];
        if dst.numel() != g.numel() {
            return Err(TrainError::ShapeMismatch(format!(
                "gradient {} for parameter {}",
                g.shape(),
                dst.shape()
            )));
        }
        for (d, &v) in dst.data_mut().iter_mut().zip(g.data()) {
            *d += v;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        for (slot, g) in other.0.iter().enumerate() {
            self.accumulate(slot, g)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.0 {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|g| g.data().iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}
