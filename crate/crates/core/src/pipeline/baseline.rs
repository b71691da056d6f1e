use std::path::Path;

use super::correct::{analyze_vocal, read_performance, render_corrections, CorrectionReport};
use crate::audio::{save_wav, AudioBuffer};
use crate::error::Result;
use crate::pitch::hz_to_midi;

/// Cents from `f0` to the nearest equal-tempered MIDI pitch in 0..=127.
/// Exact half-way points resolve to the lower pitch.
pub fn baseline_shift_cents(f0: f64) -> Result<f64> {
    let m = hz_to_midi(f0)?;
    let lower = m.floor();
    let target = if m - lower <= 0.5 { lower } else { lower + 1.0 };
    Ok(100.0 * (target.clamp(0.0, 127.0) - m))
}

/// Moves every note's median pitch onto the nearest scale degree.
pub fn baseline_correct(vocal: &AudioBuffer) -> Result<(AudioBuffer, CorrectionReport)> {
    let (track, notes) = analyze_vocal(vocal)?;
    let mut warnings = Vec::new();
    let shifts: Vec<f64> = notes
        .iter()
        .map(|n| {
            if n.median_f0 > 0.0 {
                // Ties and clamping keep this inside ±50 cents except at the MIDI range edges.
                Ok((baseline_shift_cents(n.median_f0)? / 100.0).clamp(-1.0, 1.0))
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<_>>()?;
    if notes.is_empty() {
        warnings.push("no voiced notes found; nothing to correct".into());
    }
    let degenerate = vec![false; notes.len()];
    render_corrections(
        "baseline",
        vocal,
        &track,
        &notes,
        &shifts,
        &degenerate,
        warnings,
    )
}

pub fn cmd_baseline(vocal: &Path, out: &Path, report: Option<&Path>) -> Result<CorrectionReport> {
    let vocal = read_performance(vocal)?;
    let (audio, rep) = if vocal.peak() == 0.0 {
        log::warn!("vocal is silent; nothing to correct");
        (
            vocal.clone(),
            CorrectionReport {
                method: "baseline".into(),
                sample_rate: vocal.sample_rate,
                notes: Vec::new(),
                warnings: vec!["vocal is silent; nothing to correct".into()],
            },
        )
    } else {
        baseline_correct(&vocal)?
    };
    save_wav(&audio, out)?;
    if let Some(path) = report {
        rep.write_json(path)?;
    }
    Ok(rep)
}
