use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pitch::{cents_between, median_note_pitch, midi_to_hz, NoteSegment, PitchTrack};

/// Notes further than this from the reference are left out of the median.
pub const MEDIAN_WINDOW_CENTS: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationStats {
    /// Per note, cents from the reference pitch to the sung median.
    pub deviations: Vec<f64>,
    /// Population standard deviation of `deviations`.
    pub std: f64,
    /// Median absolute deviation over notes within ±200 cents; `None` when
    /// no note qualifies.
    pub median_abs_within: Option<f64>,
}

pub fn summarize_deviations(deviations: Vec<f64>) -> Result<DeviationStats> {
    if deviations.is_empty() {
        return Err(Error::Domain("no notes to summarize".into()));
    }
    let n = deviations.len() as f64;
    let mean = deviations.iter().sum::<f64>() / n;
    let std = (deviations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut within: Vec<f64> = deviations
        .iter()
        .map(|d| d.abs())
        .filter(|d| *d <= MEDIAN_WINDOW_CENTS)
        .collect();
    within.sort_by(f64::total_cmp);
    let median_abs_within = match within.len() {
        0 => None,
        k if k % 2 == 1 => Some(within[k / 2]),
        k => Some(0.5 * (within[k / 2 - 1] + within[k / 2])),
    };
    Ok(DeviationStats {
        deviations,
        std,
        median_abs_within,
    })
}

/// Deviation of each note's median f0 from its reference MIDI pitch.
pub fn deviation_stats(
    track: &PitchTrack,
    notes: &[NoteSegment],
    reference: &[f64],
) -> Result<DeviationStats> {
    if notes.len() != reference.len() {
        return Err(Error::Shape(format!(
            "{} notes but {} reference pitches",
            notes.len(),
            reference.len()
        )));
    }
    let deviations = notes
        .iter()
        .zip(reference)
        .map(|(n, &r)| cents_between(midi_to_hz(r), median_note_pitch(track, n)?))
        .collect::<Result<Vec<_>>>()?;
    summarize_deviations(deviations)
}
