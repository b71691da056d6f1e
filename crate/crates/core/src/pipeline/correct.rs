use std::path::Path;

use serde::{Deserialize, Serialize};

use super::infer::{NetPredictor, NotePredictor};
use crate::audio::{read_wav_raw, save_wav, AudioBuffer, WORKING_RATE};
use crate::cqt::{truncate_buffer, CqtParams, CqtPlan};
use crate::error::{Error, Result};
use crate::features::PerformanceFeatures;
use crate::nn::{load_checkpoint, AutotunerNet};
use crate::pitch::{
    pyin_track, segment_notes_pyin, NoteSegment, PitchTrack, PyinParams, SegmentParams,
};
use crate::psola::{apply_corrections, detect_pitch_marks};

/// Largest correction applied at inference, in semitones.
pub const MAX_CORRECTION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteReport {
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_secs: f64,
    pub end_secs: f64,
    pub median_f0: f64,
    pub shift_cents: f64,
    /// Too short for the network; left unshifted.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub method: String,
    pub sample_rate: u32,
    pub notes: Vec<NoteReport>,
    pub warnings: Vec<String>,
}

impl CorrectionReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Pitch track and note list shared by the model and baseline correctors.
pub fn analyze_vocal(vocal: &AudioBuffer) -> Result<(PitchTrack, Vec<NoteSegment>)> {
    let track = pyin_track(vocal, &PyinParams::default())?;
    let notes = segment_notes_pyin(&track, &SegmentParams::default());
    Ok((track, notes))
}

/// Reads a WAV at the working rate, peak-normalized unless silent.
pub fn read_performance(path: &Path) -> Result<AudioBuffer> {
    let audio = read_wav_raw(path)?.resampled(WORKING_RATE);
    if audio.peak() > 0.0 {
        audio.normalized()
    } else {
        Ok(audio)
    }
}

/// Shifts every note by `shifts` (semitones) and builds the report.
pub(crate) fn render_corrections(
    method: &str,
    vocal: &AudioBuffer,
    track: &PitchTrack,
    notes: &[NoteSegment],
    shifts: &[f64],
    degenerate: &[bool],
    mut warnings: Vec<String>,
) -> Result<(AudioBuffer, CorrectionReport)> {
    let marks = detect_pitch_marks(vocal, track);
    let audio = apply_corrections(vocal, &marks, notes, shifts)?;
    let t = |f: usize| track.frame_time(f);
    let reports = notes
        .iter()
        .zip(shifts)
        .zip(degenerate)
        .map(|((n, &s), &d)| NoteReport {
            start_frame: n.start_frame,
            end_frame: n.end_frame,
            start_secs: t(n.start_frame),
            end_secs: t(n.end_frame),
            median_f0: n.median_f0,
            shift_cents: 100.0 * s,
            degenerate: d,
        })
        .collect();
    if degenerate.iter().any(|&d| d) {
        warnings.push(format!(
            "{} notes too short for the model were left unshifted",
            degenerate.iter().filter(|&&d| d).count()
        ));
    }
    Ok((
        audio,
        CorrectionReport {
            method: method.into(),
            sample_rate: vocal.sample_rate,
            notes: reports,
            warnings,
        },
    ))
}

fn pass_through(
    method: &str,
    vocal: &AudioBuffer,
    warning: &str,
) -> (AudioBuffer, CorrectionReport) {
    log::warn!("{warning}");
    (
        vocal.clone(),
        CorrectionReport {
            method: method.into(),
            sample_rate: vocal.sample_rate,
            notes: Vec::new(),
            warnings: vec![warning.into()],
        },
    )
}

/// Score-free correction: per-note network predictions, clamped to ±1
/// semitone, applied with PSOLA.
pub fn correct_performance(
    vocal: &AudioBuffer,
    backing: &AudioBuffer,
    net: &AutotunerNet<f32>,
) -> Result<(AudioBuffer, CorrectionReport)> {
    if vocal.peak() == 0.0 {
        return Ok(pass_through(
            "model",
            vocal,
            "vocal is silent; nothing to correct",
        ));
    }
    let (track, notes) = analyze_vocal(vocal)?;
    if notes.is_empty() {
        return Ok(pass_through(
            "model",
            vocal,
            "no voiced notes found; nothing to correct",
        ));
    }
    let mut backing = backing.samples.clone();
    backing.resize(vocal.len(), 0.0);
    let backing = AudioBuffer::new(backing, vocal.sample_rate)?;
    let plan = CqtPlan::new(CqtParams::default(), vocal.sample_rate)?;
    let features = PerformanceFeatures::new(
        &truncate_buffer(&plan.transform(vocal)?)?,
        &truncate_buffer(&plan.transform(&backing)?)?,
    )?;
    let mut predictor = NetPredictor::new(net);
    predictor.reset();
    let mut shifts = Vec::with_capacity(notes.len());
    let mut degenerate = Vec::with_capacity(notes.len());
    for note in &notes {
        let mut n = note.clone();
        n.end_frame = n.end_frame.min(features.frames());
        match predictor.predict(&features.note_input(&n)?)? {
            Some(p) => {
                shifts.push(p.clamp(-MAX_CORRECTION, MAX_CORRECTION));
                degenerate.push(false);
            }
            None => {
                shifts.push(0.0);
                degenerate.push(true);
            }
        }
    }
    render_corrections(
        "model",
        vocal,
        &track,
        &notes,
        &shifts,
        &degenerate,
        Vec::new(),
    )
}

pub fn cmd_correct(
    vocal: &Path,
    backing: &Path,
    checkpoint: &Path,
    out: &Path,
    report: Option<&Path>,
) -> Result<CorrectionReport> {
    let ck = load_checkpoint(checkpoint)?;
    let vocal = read_performance(vocal)?;
    let backing = read_performance(backing)?;
    let (audio, rep) = correct_performance(&vocal, &backing, &ck.net)?;
    save_wav(&audio, out)?;
    if let Some(path) = report {
        rep.write_json(path)?;
    }
    Ok(rep)
}
