//! One-parameter sweeps over an experiment config.

use serde_json::{Map, Value};

use super::{run_experiment, ExperimentConfig, ReportRow};
use crate::error::{Error, Result};

/// Rows of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Axis value as written in the config.
    pub value: String,
    pub rows: Vec<ReportRow>,
}

// Objects searched for the axis key, in order.
const SCOPES: &[&[&str]] = &[
    &[],
    &["allocator"],
    &["workload"],
    &["workload", "manifest"],
    &["workload", "inner"],
    &["workload", "inner", "manifest"],
    &["device_profile"],
];

fn scope_mut<'a>(root: &'a mut Value, path: &[&str]) -> Option<&'a mut Map<String, Value>> {
    let mut v = root;
    for key in path {
        v = v.as_object_mut()?.get_mut(*key)?;
    }
    v.as_object_mut()
}

fn number(value: f64) -> Result<Value> {
    if value.fract() == 0.0 && value >= 0.0 && value < u64::MAX as f64 {
        Ok(Value::from(value as u64))
    } else {
        serde_json::Number::from_f64(value)
            .map(Value::Number)
            .ok_or_else(|| Error::InvalidParameter(format!("axis value {value} is not finite")))
    }
}

/// `cfg` with the numeric field named `axis` set to `value`.
///
/// The field is looked up at the top level, then in the allocator, the
/// workload, its manifest, a wrapped inner workload and its manifest, and a
/// custom device profile. Whole values are written as integers.
pub fn apply_axis(cfg: &ExperimentConfig, axis: &str, value: f64) -> Result<ExperimentConfig> {
    let mut json = serde_json::to_value(cfg)?;
    let target = SCOPES.iter().find_map(|path| {
        let obj = scope_mut(&mut json, path)?;
        obj.get(axis).filter(|v| v.is_number())?;
        Some(path)
    });
    let Some(path) = target else {
        return Err(Error::InvalidParameter(format!(
            "unknown sweep axis `{axis}`"
        )));
    };
    let obj = scope_mut(&mut json, path).expect("scope found above");
    obj.insert(axis.to_string(), number(value)?);
    let out: ExperimentConfig = serde_json::from_value(json)
        .map_err(|e| Error::InvalidParameter(format!("axis `{axis}` = {value}: {e}")))?;
    out.validate()?;
    Ok(out)
}

fn label(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

/// Runs the template once per value of `axis`, in parallel. Results keep
/// the order of `values`.
pub fn sweep(template: &ExperimentConfig, axis: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    let configs = values
        .iter()
        .map(|&v| apply_axis(template, axis, v))
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<Result<Vec<ReportRow>>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(move || run_experiment(c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    values
        .iter()
        .zip(results)
        .map(|(&v, r)| {
            Ok(SweepRow {
                value: label(v),
                rows: r?,
            })
        })
        .collect()
}
