use crate::error::{Error, Result};

pub fn midi_to_hz(pitch: f64) -> f64 {
    440.0 * 2f64.powf((pitch - 69.0) / 12.0)
}

pub fn hz_to_midi(freq: f64) -> Result<f64> {
    if !(freq > 0.0) || !freq.is_finite() {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {freq}"
        )));
    }
    Ok(69.0 + 12.0 * (freq / 440.0).log2())
}

/// Interval from `from` to `to` in cents.
pub fn cents_between(from: f64, to: f64) -> Result<f64> {
    if !(from > 0.0) || !(to > 0.0) || !from.is_finite() || !to.is_finite() {
        return Err(Error::Domain(format!(
            "cents_between needs positive frequencies, got {from} and {to}"
        )));
    }
    Ok(1200.0 * (to / from).log2())
}
