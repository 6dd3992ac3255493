use super::{FeatureVector, NormMethod, RawFlowRecord, FEATURE_NAMES, NUM_FEATURES, PORT_FEATURES};
use crate::error::{Error, Result};

/// Error function (musl-derived, within one ulp on the real line).
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Min-max scaling with `x_min = 0` and `x_max = 256^size - 1`.
pub fn normalize_minmax(feature: &str, x: f64, feature_size_bytes: u32) -> Result<f64> {
    let x_max = 256f64.powi(feature_size_bytes as i32) - 1.0;
    if !(0.0..=x_max).contains(&x) {
        return Err(Error::Range { feature: feature.to_string(), value: x, max: x_max });
    }
    Ok(x / x_max)
}

/// `erf(x / k_w)` for non-negative counters.
pub fn normalize_erf(feature: &str, x: f64, k_w: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Range { feature: feature.to_string(), value: x, max: f64::INFINITY });
    }
    if !(k_w > 0.0) {
        return Err(Error::InvalidArgument(format!("{feature}: coefficient k_w must be positive, got {k_w}")));
    }
    Ok(erf(x / k_w))
}

/// Normalize a raw record into the ten-dimensional model layout.
///
/// With `clamp`, values above the byte-width bound are clamped to `x_max`
/// (and counted in the returned flag); otherwise they are rejected.
/// With `drop_ports`, both port components are zeroed.
pub fn normalize_record(record: &RawFlowRecord, clamp: bool, drop_ports: bool) -> Result<(FeatureVector, bool)> {
    if record.label > 1 {
        return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {}", record.label)));
    }
    let raw = record.feature_values();
    let mut values = [0.0; NUM_FEATURES];
    let mut clamped = false;
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        let spec = super::spec_for(name).expect("feature table covers every model feature");
        let mut x = raw[i] as f64;
        let x_max = spec.x_max();
        if x > x_max && clamp {
            x = x_max;
            clamped = true;
        }
        if x > x_max {
            return Err(Error::Range { feature: name.to_string(), value: x, max: x_max });
        }
        values[i] = match spec.method {
            NormMethod::MinMax => normalize_minmax(name, x, spec.feature_size_bytes)?,
            NormMethod::Erf => normalize_erf(name, x, spec.k_w.expect("erf rows carry k_w"))?,
            NormMethod::Drop => unreachable!("dropped columns are not model features"),
        };
    }
    if drop_ports {
        for i in PORT_FEATURES {
            values[i] = 0.0;
        }
    }
    Ok((FeatureVector::new(values, record.label), clamped))
}
