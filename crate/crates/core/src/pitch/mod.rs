//! Fundamental-frequency tracking, note segmentation and pitch units.

mod pyin;
mod segment;
mod units;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pyin::{pyin_track, yin_frame, PitchCandidate, PyinParams};
pub use segment::{
    median_note_pitch, note_deviation_cents, segment_notes_pyin, segment_notes_silence,
    SegmentParams,
};
pub use units::{cents_between, hz_to_midi, midi_to_hz};

/// Per-frame f0 (0 where unvoiced) and voiced probability mass.
///
/// Frame `t` is centered on sample `t * hop`.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub f0: Vec<f64>,
    pub voicing: Vec<f64>,
    pub hop: usize,
    pub sample_rate: u32,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    #[inline]
    pub fn is_voiced(&self, frame: usize) -> bool {
        self.f0[frame] > 0.0
    }

    pub fn voiced_fraction(&self, range: std::ops::Range<usize>) -> f64 {
        let n = range.len();
        if n == 0 {
            return 0.0;
        }
        range.filter(|&t| self.is_voiced(t)).count() as f64 / n as f64
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        (frame * self.hop) as f64 / self.sample_rate as f64
    }

    /// Sample range `[start, end)` covered by a half-open frame span.
    pub fn sample_span(&self, start_frame: usize, end_frame: usize, len: usize) -> (usize, usize) {
        let half = self.hop / 2;
        let a = (start_frame * self.hop).saturating_sub(half).min(len);
        let b = (end_frame * self.hop).saturating_sub(half).min(len);
        let b = if end_frame >= self.len() { len } else { b };
        (a, b)
    }

    /// CSV with header `frame,time_s,f0_hz,voicing`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("frame,time_s,f0_hz,voicing\n");
        for t in 0..self.len() {
            out.push_str(&format!(
                "{t},{:.6},{:.4},{:.6}\n",
                self.frame_time(t),
                self.f0[t],
                self.voicing[t]
            ));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Half-open frame span treated as one note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteSegment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub median_f0: f64,
    /// Ground-truth corrective shift in semitones, when known.
    pub target_shift: Option<f64>,
}

impl NoteSegment {
    pub fn new(start_frame: usize, end_frame: usize) -> Self {
        Self {
            start_frame,
            end_frame,
            median_f0: 0.0,
            target_shift: None,
        }
    }

    pub fn frames(&self) -> usize {
        self.end_frame.saturating_sub(self.start_frame)
    }

    pub fn overlaps(&self, other: &NoteSegment) -> bool {
        self.start_frame < other.end_frame && other.start_frame < self.end_frame
    }
}

pub fn write_notes_json(notes: &[NoteSegment], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_vec_pretty(notes)?).map_err(|e| Error::io(path, e))
}

pub fn read_notes_json(path: impl AsRef<Path>) -> Result<Vec<NoteSegment>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Checks that segments are non-empty, sorted and pairwise disjoint.
pub fn validate_notes(notes: &[NoteSegment], frames: usize) -> Result<()> {
    for (i, n) in notes.iter().enumerate() {
        if n.start_frame >= n.end_frame || n.end_frame > frames {
            return Err(Error::Range(format!(
                "note {i} span [{}, {}) invalid for {frames} frames",
                n.start_frame, n.end_frame
            )));
        }
        if i > 0 && notes[i - 1].end_frame > n.start_frame {
            return Err(Error::Invariant(format!(
                "notes {} and {i} overlap or are unsorted",
                i - 1
            )));
        }
    }
    Ok(())
}
