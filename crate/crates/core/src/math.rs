//! Float helpers over `libm` so the crate stays `no_std`.

/// Floor applied to log-probabilities that would otherwise be `-inf`.
pub const LOG_FLOOR: f64 = -50.0;

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

#[inline]
pub fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln(x)` clamped from below at [`LOG_FLOOR`]; zero and negative inputs map to the floor.
#[inline]
pub fn floored_ln(x: f64) -> f64 {
    if x > 0.0 {
        ln(x).max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}

/// Mean and population standard deviation. Empty input gives `(0, 0)`.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, sqrt(var))
}

/// Relative-or-absolute closeness used by tests and invariant checks.
pub fn approx_eq(a: f64, b: f64, rel: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(1.0);
    (a - b).abs() <= rel * scale
}
