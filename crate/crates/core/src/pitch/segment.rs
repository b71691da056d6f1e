//! Note segmentation. Training uses silence boundaries only; inference also
//! splits where the pitch moves to a new level and stays there.

use serde::{Deserialize, Serialize};

use super::{cents_between, NoteSegment, PitchTrack};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub min_note_frames: usize,
    pub min_gap_frames: usize,
    pub split_threshold_cents: f64,
    pub smoothing_frames: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            min_note_frames: 5,
            min_gap_frames: 3,
            split_threshold_cents: 80.0,
            smoothing_frames: 5,
        }
    }
}

/// Maximal voiced runs, bridging unvoiced gaps shorter than
/// `min_gap_frames` and dropping runs shorter than `min_note_frames`.
pub fn segment_notes_silence(track: &PitchTrack, params: &SegmentParams) -> Vec<NoteSegment> {
    let n = track.len();
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut t = 0;
    while t < n {
        if !track.is_voiced(t) {
            t += 1;
            continue;
        }
        let start = t;
        while t < n && track.is_voiced(t) {
            t += 1;
        }
        runs.push((start, t));
    }
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(last) if run.0 - last.1 < params.min_gap_frames => last.1 = run.1,
            _ => merged.push(run),
        }
    }
    merged
        .into_iter()
        .filter(|(a, b)| b - a >= params.min_note_frames)
        .map(|(a, b)| with_median(track, a, b))
        .collect()
}

/// Silence segmentation refined at sustained pitch changes: a note ends when
/// the smoothed pitch departs from the note's running median by more than
/// `split_threshold_cents` for `min_note_frames` consecutive voiced frames.
pub fn segment_notes_pyin(track: &PitchTrack, params: &SegmentParams) -> Vec<NoteSegment> {
    let smoothed = smoothed_cents(track, params.smoothing_frames);
    let mut out = Vec::new();
    for seg in segment_notes_silence(track, params) {
        let mut start = seg.start_frame;
        let mut history: Vec<f64> = Vec::new();
        let mut t = seg.start_frame;
        while t < seg.end_frame {
            let Some(c) = smoothed[t] else {
                t += 1;
                continue;
            };
            if history.len() >= params.min_note_frames && t - start >= params.min_note_frames {
                let reference = median(&mut history.clone());
                let dev = c - reference;
                if dev.abs() > params.split_threshold_cents
                    && persists(&smoothed, t, seg.end_frame, reference, dev.signum(), params)
                {
                    out.push(with_median(track, start, t));
                    start = t;
                    history.clear();
                }
            }
            history.push(c);
            t += 1;
        }
        out.push(with_median(track, start, seg.end_frame));
    }
    out
}

fn persists(
    smoothed: &[Option<f64>],
    from: usize,
    end: usize,
    reference: f64,
    sign: f64,
    params: &SegmentParams,
) -> bool {
    let mut count = 0;
    for c in smoothed[from..end].iter().flatten() {
        if (c - reference) * sign > params.split_threshold_cents {
            count += 1;
            if count >= params.min_note_frames {
                return true;
            }
        } else {
            return false;
        }
    }
    false
}

/// Median-filtered pitch in cents relative to 440 Hz; `None` where unvoiced.
fn smoothed_cents(track: &PitchTrack, width: usize) -> Vec<Option<f64>> {
    let raw: Vec<Option<f64>> = track
        .f0
        .iter()
        .map(|&f| (f > 0.0).then(|| 1200.0 * (f / 440.0).log2()))
        .collect();
    let half = width / 2;
    (0..raw.len())
        .map(|t| {
            raw[t]?;
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(raw.len());
            let mut window: Vec<f64> = raw[lo..hi].iter().flatten().copied().collect();
            Some(median(&mut window))
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn with_median(track: &PitchTrack, start: usize, end: usize) -> NoteSegment {
    let mut note = NoteSegment::new(start, end);
    note.median_f0 = median_note_pitch(track, &note).unwrap_or(0.0);
    note
}

/// Median f0 over the voiced frames of a note.
pub fn median_note_pitch(track: &PitchTrack, note: &NoteSegment) -> Result<f64> {
    let end = note.end_frame.min(track.len());
    let mut voiced: Vec<f64> = (note.start_frame.min(end)..end)
        .filter(|&t| track.is_voiced(t))
        .map(|t| track.f0[t])
        .collect();
    if voiced.is_empty() {
        return Err(Error::Domain(format!(
            "note [{}, {}) has no voiced frames",
            note.start_frame, note.end_frame
        )));
    }
    Ok(median(&mut voiced))
}

/// Cent offset of a note's median pitch from `reference_hz`.
pub fn note_deviation_cents(
    track: &PitchTrack,
    note: &NoteSegment,
    reference_hz: f64,
) -> Result<f64> {
    cents_between(reference_hz, median_note_pitch(track, note)?)
}
