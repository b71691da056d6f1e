use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cqt::{shift_columns, truncate_buffer, CqtSpectrogram};
use crate::error::{Error, Result};
use crate::features::{ModelInput, PerformanceFeatures};
use crate::pitch::NoteSegment;

/// Detuned versions generated per performance.
pub const VERSIONS: usize = 7;
/// Largest detune in semitones.
pub const MAX_DETUNE: f64 = 1.0;

/// Per-note detunes in semitones for one version of a performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuneSpec {
    pub shifts: Vec<f64>,
    pub seed: u64,
    pub version_index: usize,
}

impl DetuneSpec {
    pub fn sample(n_notes: usize, seed: u64, version_index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            shifts: sample_note_shifts(n_notes, &mut rng),
            seed,
            version_index,
        }
    }

    pub fn validate(&self, n_notes: usize) -> Result<()> {
        if self.shifts.len() != n_notes {
            return Err(Error::Shape(format!(
                "{} shifts for {n_notes} notes",
                self.shifts.len()
            )));
        }
        if let Some(s) = self.shifts.iter().find(|s| !(s.abs() <= MAX_DETUNE)) {
            return Err(Error::Range(format!(
                "detune {s} outside ±{MAX_DETUNE} semitones"
            )));
        }
        Ok(())
    }
}

/// Independent `U(-1, 1)` semitone shifts.
pub fn sample_note_shifts<R: Rng + ?Sized>(n_notes: usize, rng: &mut R) -> Vec<f64> {
    (0..n_notes)
        .map(|_| rng.random_range(-MAX_DETUNE..=MAX_DETUNE))
        .collect()
}

/// One detuned copy of the vocal CQT, truncated to model bins.
#[derive(Debug, Clone)]
pub struct DetunedVersion {
    pub cqt: CqtSpectrogram,
    pub detune: DetuneSpec,
}

fn check_notes(notes: &[NoteSegment], frames: usize) -> Result<()> {
    for (i, n) in notes.iter().enumerate() {
        if n.start_frame >= n.end_frame || n.end_frame > frames {
            return Err(Error::Range(format!(
                "note {i} span [{}, {}) invalid for {frames} frames",
                n.start_frame, n.end_frame
            )));
        }
        if let Some(j) = notes[..i].iter().position(|m| m.overlaps(n)) {
            return Err(Error::Invariant(format!("notes {j} and {i} overlap")));
        }
    }
    Ok(())
}

/// Shifts each note's columns of a full-height vocal CQT by its detune, then
/// drops the buffer bins. Columns outside notes are left as they are.
pub fn apply_detune(
    vocal: &CqtSpectrogram,
    notes: &[NoteSegment],
    detune: &DetuneSpec,
) -> Result<CqtSpectrogram> {
    if vocal.bins != vocal.params.total_bins() {
        return Err(Error::Shape(format!(
            "detuning needs the {}-bin CQT, got {} bins",
            vocal.params.total_bins(),
            vocal.bins
        )));
    }
    check_notes(notes, vocal.frames)?;
    detune.validate(notes.len())?;
    let mut out = vocal.clone();
    let cents_per_bin = vocal.params.cents_per_bin();
    for (note, &shift) in notes.iter().zip(&detune.shifts) {
        if shift != 0.0 {
            shift_columns(
                vocal,
                &mut out,
                note.start_frame..note.end_frame,
                100.0 * shift / cents_per_bin,
            );
        }
    }
    truncate_buffer(&out)
}

pub fn make_detuned_versions(
    vocal: &CqtSpectrogram,
    notes: &[NoteSegment],
    seeds: &[u64],
) -> Result<Vec<DetunedVersion>> {
    seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| {
            let detune = DetuneSpec::sample(notes.len(), seed, i);
            Ok(DetunedVersion {
                cqt: apply_detune(vocal, notes, &detune)?,
                detune,
            })
        })
        .collect()
}

/// A note of a detuned version with its corrective label.
#[derive(Debug, Clone)]
pub struct NoteExample {
    pub note: NoteSegment,
    pub input: ModelInput,
    /// Semitones that undo the detune: the negated applied shift.
    pub target: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub performance_id: String,
    pub version_index: usize,
    pub notes: Vec<NoteExample>,
}

impl TrainingExample {
    pub fn build(
        performance_id: &str,
        version: &DetunedVersion,
        backing: &CqtSpectrogram,
        notes: &[NoteSegment],
    ) -> Result<Self> {
        let features = PerformanceFeatures::new(&version.cqt, backing)?;
        let notes = notes
            .iter()
            .zip(&version.detune.shifts)
            .map(|(n, &shift)| {
                let mut note = n.clone();
                note.target_shift = Some(-shift);
                Ok(NoteExample {
                    input: features.note_input(&note)?,
                    note,
                    target: -shift,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            performance_id: performance_id.to_string(),
            version_index: version.detune.version_index,
            notes,
        })
    }
}
