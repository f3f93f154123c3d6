//! Central finite-difference check of the analytic gradients.

use crate::par::{self, Exec};

use super::loss::LossKind;
use super::model::{batch_loss, batch_loss_and_grad, ModelSpec, Sample};
use super::params::Gradients;
use super::Result;

/// Denominator floor of the relative error
/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ParamFdStat {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FdReport {
    pub h: f64,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub entries_checked: usize,
    pub per_param: Vec<ParamFdStat>,
    pub passed: bool,
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of the mean batch loss
/// in every parameter entry.
pub fn fd_compare(
    model: &ModelSpec,
    batch: &[Sample],
    kind: LossKind,
    analytic: &Gradients,
    h: f64,
    tolerance: f64,
    exec: Exec,
) -> Result<FdReport> {
    if !(h > 0.0) {
        return Err(super::TrainError::InvalidSetting(format!("step h must be positive, got {h}")));
    }
    let params = &model.params;
    let entries: Vec<(usize, usize)> = (0..params.len())
        .flat_map(|slot| (0..params.get(slot).numel()).map(move |i| (slot, i)))
        .collect();
    let numeric = par::map_slice(exec, &entries, |&(slot, i)| -> Result<f64> {
        let mut p = params.clone();
        let base = p.get(slot).data()[i];
        p.value_mut(slot).data_mut()[i] = base + h;
        let up = batch_loss(model, &p, batch, kind, Exec::Sequential)?;
        p.value_mut(slot).data_mut()[i] = base - h;
        let down = batch_loss(model, &p, batch, kind, Exec::Sequential)?;
        Ok((up - down) / (2.0 * h))
    });
    let mut per_param: Vec<ParamFdStat> = params
        .names()
        .iter()
        .zip(params.values())
        .map(|(name, v)| ParamFdStat {
            name: name.clone(),
            entries: v.numel(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        })
        .collect();
    for (&(slot, i), n) in entries.iter().zip(numeric) {
        let n = n?;
        let a = analytic.0[slot].data()[i];
        let stat = &mut per_param[slot];
        stat.max_rel_error = stat.max_rel_error.max(rel_error(a, n));
        stat.max_abs_error = stat.max_abs_error.max((a - n).abs());
    }
    let max_rel_error = per_param.iter().fold(0.0, |m: f64, s| m.max(s.max_rel_error));
    let max_abs_error = per_param.iter().fold(0.0, |m: f64, s| m.max(s.max_abs_error));
    Ok(FdReport {
        h,
        tolerance,
        max_rel_error,
        max_abs_error,
        entries_checked: entries.len(),
        per_param,
        passed: max_rel_error < tolerance,
    })
}

/// [`fd_compare`] against the model's own backward pass.
pub fn fd_check(
    model: &ModelSpec,
    batch: &[Sample],
    kind: LossKind,
    h: f64,
    tolerance: f64,
    exec: Exec,
) -> Result<FdReport> {
    let (_, analytic) = batch_loss_and_grad(model, &model.params, batch, kind, exec)?;
    fd_compare(model, batch, kind, &analytic, h, tolerance, exec)
}
