//! Time-domain pitch-synchronous overlap-add (TD-PSOLA) note shifting.
//!
//! Grains are two local periods long, Hann-windowed and centered on the
//! analysis epochs. They are re-spaced by `period / 2^(cents/1200)` and
//! normalized by the overlapping window sum. Synthesis marks walk through
//! the note in real time, so duration is preserved by reusing or skipping
//! analysis grains.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::pitch::{NoteSegment, PitchTrack};

/// Largest shift `psola_shift_note` accepts.
pub const MAX_SHIFT_CENTS: f64 = 200.0;
/// Linear crossfade at the edges of every processed region.
pub const CROSSFADE_SECS: f64 = 0.010;

#[derive(Debug, Clone, PartialEq)]
pub struct PitchMarks {
    /// Strictly increasing sample indices of glottal-cycle anchors.
    pub epochs: Vec<usize>,
    /// Voiced sample ranges `[start, end)` the epochs were placed in.
    pub regions: Vec<(usize, usize)>,
    pub hop: usize,
    pub sample_rate: u32,
}

impl PitchMarks {
    pub fn in_range(&self, start: usize, end: usize) -> &[usize] {
        let lo = self.epochs.partition_point(|&e| e < start);
        let hi = self.epochs.partition_point(|&e| e < end);
        &self.epochs[lo..hi]
    }
}

/// One epoch per period in each voiced run. The first sits on the largest
/// magnitude sample of the run's first period; each later one is the
/// position within a quarter period of the f0-predicted spot whose
/// surrounding cycle best matches the previous epoch's cycle.
pub fn detect_pitch_marks(audio: &AudioBuffer, track: &PitchTrack) -> PitchMarks {
    let x = &audio.samples;
    let sr = audio.sample_rate as f64;
    let mut epochs = Vec::new();
    let mut regions = Vec::new();
    let n = track.len();
    let mut t = 0;
    while t < n {
        if !track.is_voiced(t) {
            t += 1;
            continue;
        }
        let first = t;
        while t < n && track.is_voiced(t) {
            t += 1;
        }
        let (a, b) = track.sample_span(first, t, x.len());
        if b <= a {
            continue;
        }
        regions.push((a, b));
        let period_at = |pos: usize| -> f64 {
            let frame = ((pos + track.hop / 2) / track.hop).clamp(first, t - 1);
            sr / track.f0[frame]
        };
        let argmax_abs = |lo: usize, hi: usize| -> usize {
            (lo..hi.min(x.len()))
                .max_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs()))
                .unwrap_or(lo)
        };
        let p0 = period_at(a);
        let mut prev = argmax_abs(a, (a + p0.ceil() as usize).min(b));
        epochs.push(prev);
        loop {
            let p = period_at(prev);
            let guess = prev as f64 + p;
            let lo = (guess - p / 4.0).ceil().max(prev as f64 + 1.0) as usize;
            let hi = (guess + p / 4.0).floor() as usize + 1;
            if lo >= b || guess + p / 4.0 >= b as f64 {
                break;
            }
            let next = best_aligned(x, prev, lo, hi.min(b), p);
            if next <= prev {
                break;
            }
            epochs.push(next);
            prev = next;
        }
    }
    PitchMarks {
        epochs,
        regions,
        hop: track.hop,
        sample_rate: audio.sample_rate,
    }
}

fn best_aligned(x: &[f32], prev: usize, lo: usize, hi: usize, period: f64) -> usize {
    let half = (period / 2.0).round() as isize;
    let window = |c: usize| (-half..=half).map(move |k| c as isize + k);
    let at = |i: isize| -> f64 {
        if i >= 0 && (i as usize) < x.len() {
            x[i as usize] as f64
        } else {
            0.0
        }
    };
    let reference: Vec<f64> = window(prev).map(at).collect();
    let mut best = (f64::NEG_INFINITY, lo);
    for c in lo..hi.max(lo + 1) {
        let (mut dot, mut energy) = (0.0, 0.0);
        for (r, i) in reference.iter().zip(window(c)) {
            let v = at(i);
            dot += r * v;
            energy += v * v;
        }
        let score = dot / energy.sqrt().max(1e-12);
        if score > best.0 {
            best = (score, c);
        }
    }
    best.1
}

/// Shifts one note by `cents`, leaving every sample outside its voiced
/// regions untouched.
pub fn psola_shift_note(
    audio: &AudioBuffer,
    note: &NoteSegment,
    marks: &PitchMarks,
    cents: f64,
) -> Result<AudioBuffer> {
    let mut out = audio.clone();
    shift_note_into(&audio.samples, &mut out.samples, note, marks, cents)?;
    Ok(out)
}

fn note_sample_span(note: &NoteSegment, marks: &PitchMarks, len: usize) -> (usize, usize) {
    let half = marks.hop / 2;
    let a = (note.start_frame * marks.hop).saturating_sub(half).min(len);
    let b = (note.end_frame * marks.hop).saturating_sub(half).min(len);
    (a, b)
}

fn shift_note_into(
    src: &[f32],
    dst: &mut [f32],
    note: &NoteSegment,
    marks: &PitchMarks,
    cents: f64,
) -> Result<()> {
    if !cents.is_finite() || cents.abs() > MAX_SHIFT_CENTS {
        return Err(Error::Range(format!(
            "PSOLA shift of {cents} cents outside ±{MAX_SHIFT_CENTS}"
        )));
    }
    let (a, b) = note_sample_span(note, marks, src.len());
    let found = marks.in_range(a, b).len();
    if found < 2 {
        return Err(Error::InsufficientMarks { found });
    }
    let ratio = 2f64.powf(cents / 1200.0);
    let fade = (CROSSFADE_SECS * marks.sample_rate as f64).round() as usize;
    for &(ra, rb) in &marks.regions {
        let (lo, hi) = (ra.max(a), rb.min(b));
        if hi <= lo {
            continue;
        }
        let epochs = marks.in_range(lo, hi);
        if epochs.len() < 2 {
            continue;
        }
        let shifted = resynthesize(src, lo, hi, epochs, ratio);
        let f = fade.min((hi - lo) / 2).max(1);
        for (k, &y) in shifted.iter().enumerate() {
            let pos = lo + k;
            let from_start = k as f64 / f as f64;
            let to_end = (hi - 1 - pos) as f64 / f as f64;
            let g = from_start.min(to_end).min(1.0);
            dst[pos] = ((1.0 - g) * src[pos] as f64 + g * y) as f32;
        }
    }
    Ok(())
}

/// PSOLA output for samples `[lo, hi)` given the epochs inside that span.
fn resynthesize(src: &[f32], lo: usize, hi: usize, epochs: &[usize], ratio: f64) -> Vec<f64> {
    let m = epochs.len();
    let period = |j: usize| -> f64 {
        if j == 0 {
            (epochs[1] - epochs[0]) as f64
        } else if j == m - 1 {
            (epochs[m - 1] - epochs[m - 2]) as f64
        } else {
            (epochs[j + 1] - epochs[j - 1]) as f64 / 2.0
        }
    };
    let left_half = |j: usize| -> f64 {
        if j == 0 {
            period(0)
        } else {
            (epochs[j] - epochs[j - 1]) as f64
        }
    };
    let right_half = |j: usize| -> f64 {
        if j == m - 1 {
            period(m - 1)
        } else {
            (epochs[j + 1] - epochs[j]) as f64
        }
    };
    // Forward epoch spacing of the interval containing `pos`; synthesis marks
    // land exactly on the epochs when the ratio is 1.
    let period_at = |pos: f64| -> f64 {
        let j = epochs.partition_point(|&e| (e as f64) <= pos);
        if j == 0 {
            period(0)
        } else if j >= m {
            period(m - 1)
        } else {
            (epochs[j] - epochs[j - 1]) as f64
        }
    };
    let sample = |pos: f64| -> f64 {
        let i = pos.floor();
        let frac = pos - i;
        let get = |k: isize| -> f64 {
            if k >= 0 && (k as usize) < src.len() {
                src[k as usize] as f64
            } else {
                0.0
            }
        };
        let k = i as isize;
        (1.0 - frac) * get(k) + frac * get(k + 1)
    };

    let len = hi - lo;
    let mut acc = vec![0.0f64; len];
    let mut wsum = vec![0.0f64; len];
    let first = epochs[0] as f64;
    let last = epochs[m - 1] as f64;
    let mut t = first;
    let mut last_mark = first;
    while t <= last + 1e-9 {
        let j = nearest(epochs, t);
        let e = epochs[j] as f64;
        let (lh, rh) = (left_half(j), right_half(j));
        let start = ((t - lh).ceil().max(lo as f64)) as usize;
        let end = ((t + rh).floor() + 1.0).min(hi as f64).max(start as f64) as usize;
        for pos in start..end {
            let off = pos as f64 - t;
            let w = if off < 0.0 {
                0.5 * (1.0 + (std::f64::consts::PI * off / lh).cos())
            } else {
                0.5 * (1.0 + (std::f64::consts::PI * off / rh).cos())
            };
            if w <= 0.0 {
                continue;
            }
            acc[pos - lo] += w * sample(e + off);
            wsum[pos - lo] += w;
        }
        last_mark = t;
        t += period_at(t) / ratio;
    }

    (0..len)
        .map(|k| {
            let pos = (lo + k) as f64;
            let x = src[lo + k] as f64;
            if pos >= first && pos <= last_mark && wsum[k] > 1e-9 {
                acc[k] / wsum[k]
            } else {
                // Outside the synthesis marks only a single grain tail
                // reaches; fill the rest of its window with the input.
                let w = wsum[k].min(1.0);
                if wsum[k] > 1.0 {
                    acc[k] / wsum[k]
                } else {
                    acc[k] + (1.0 - w) * x
                }
            }
        })
        .collect()
}

fn nearest(epochs: &[usize], t: f64) -> usize {
    let j = epochs.partition_point(|&e| (e as f64) < t);
    if j == 0 {
        0
    } else if j >= epochs.len() {
        epochs.len() - 1
    } else if t - epochs[j - 1] as f64 <= epochs[j] as f64 - t {
        j - 1
    } else {
        j
    }
}

/// Applies one constant shift (in semitones) per note. Notes without enough
/// pitch marks pass through unchanged.
pub fn apply_corrections(
    audio: &AudioBuffer,
    marks: &PitchMarks,
    notes: &[NoteSegment],
    shifts: &[f64],
) -> Result<AudioBuffer> {
    if notes.len() != shifts.len() {
        return Err(Error::Shape(format!(
            "{} notes but {} shifts",
            notes.len(),
            shifts.len()
        )));
    }
    if let Some(bad) = shifts
        .iter()
        .find(|s| !s.is_finite() || s.abs() > 1.0 + 1e-9)
    {
        return Err(Error::Range(format!("shift {bad} semitones outside ±1")));
    }
    let mut out = audio.clone();
    for (note, &shift) in notes.iter().zip(shifts) {
        if shift == 0.0 {
            continue;
        }
        match shift_note_into(&audio.samples, &mut out.samples, note, marks, 100.0 * shift) {
            Ok(()) => {}
            Err(Error::InsufficientMarks { found }) => log::warn!(
                "note [{}, {}) has {found} pitch marks; left unshifted",
                note.start_frame,
                note.end_frame
            ),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::WORKING_RATE;
    use crate::pitch::{cents_between, median_note_pitch, pyin_track, PyinParams};
    use std::f64::consts::PI;

    const SR: u32 = WORKING_RATE;

    /// Sawtooth-like vowel with a smooth spectral tilt.
    fn vowel(freq: f64, secs: f64) -> AudioBuffer {
        let n = (SR as f64 * secs) as usize;
        let s = (0..n)
            .map(|i| {
                let t = i as f64 / SR as f64;
                (1..=12)
                    .map(|h| (2.0 * PI * freq * h as f64 * t).sin() / h as f64)
                    .sum::<f64>() as f32
                    * 0.4
            })
            .collect();
        AudioBuffer::new(s, SR).unwrap()
    }

    fn whole_note(track: &PitchTrack) -> NoteSegment {
        NoteSegment::new(0, track.len())
    }

    fn measured(audio: &AudioBuffer, note: &NoteSegment) -> f64 {
        let track = pyin_track(audio, &PyinParams::default()).unwrap();
        let inner = NoteSegment::new(note.start_frame + 4, note.end_frame - 4);
        median_note_pitch(&track, &inner).unwrap()
    }

    #[test]
    fn pulse_train_epochs_follow_period() {
        // Band-limited 100 Hz pulse train: peaks fall at multiples of 220.5.
        let n = SR as usize;
        let s = (0..n)
            .map(|i| {
                let t = i as f64 / SR as f64;
                (1..=50)
                    .map(|h| (2.0 * PI * 100.0 * h as f64 * t).cos())
                    .sum::<f64>() as f32
                    / 50.0
            })
            .collect();
        let audio = AudioBuffer::new(s, SR).unwrap();
        let track = pyin_track(&audio, &PyinParams::default()).unwrap();
        let marks = detect_pitch_marks(&audio, &track);
        assert!(marks.epochs.len() > 50);
        for w in marks.epochs.windows(2) {
            let d = w[1] - w[0];
            assert!((220..=221).contains(&d), "spacing {d}");
        }
    }

    #[test]
    fn silence_has_no_marks() {
        let audio = AudioBuffer::new(vec![0.0; 22_050], SR).unwrap();
        let track = pyin_track(&audio, &PyinParams::default()).unwrap();
        assert!(detect_pitch_marks(&audio, &track).epochs.is_empty());
    }

    #[test]
    fn one_second_a440_has_about_440_marks() {
        let audio = vowel(440.0, 1.0);
        let track = pyin_track(&audio, &PyinParams::default()).unwrap();
        let marks = detect_pitch_marks(&audio, &track);
        assert!(
            (438..=442).contains(&marks.epochs.len()),
            "{}",
            marks.epochs.len()
        );
        let (lo, hi) = (SR as f64 / 1000.0, SR as f64 / 80.0);
        for w in marks.epochs.windows(2) {
            let d = (w[1] - w[0]) as f64;
            assert!(d >= lo && d <= hi);
        }
    }

    #[test]
    fn zero_shift_is_identity() {
        let audio = vowel(300.0, 0.6);
        let track = pyin_track(&audio, &PyinParams::default()).unwrap();
        let marks = detect_pitch_marks(&audio, &track);
        let out = psola_shift_note(&audio, &whole_note(&track), &marks, 0.0).unwrap();
        let rms = (out
            .samples
            .iter()
            .zip(&audio.samples)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / audio.len() as f64)
            .sqrt();
        assert!(rms < 1e-6, "rms {rms}");
    }

    #[test]
    fn up_one_semitone_and_back() {
        let audio = vowel(440.0, 1.0);
        let track = pyin_track(&audio, &PyinParams::default()).unwrap();
        let note = whole_note(&track);
        let marks = detect_pitch_marks(&audio, &track);
        let up = psola_shift_note(&audio, &note, &marks, 100.0).unwrap();
        assert_eq!(up.len(), audio.len());
        let f = measured(&up, &note);
        assert!(cents_between(466.16, f).unwrap().abs() < 5.0, "{f}");

        let down = psola_shift_note(&audio, &note, &marks, -100.0).unwrap();
        let f = measured(&down, &note);
        assert!(cents_between(415.30, f).unwrap().abs() < 5.0, "{f}");
        let track_d = pyin_track(&down, &PyinParams::default()).unwrap();
        let marks_d = detect_pitch_marks(&down, &track_d);
        let back = psola_shift_note(&down, &note, &marks_d, 100.0).unwrap();
        let f = measured(&back, &note);
        assert!(cents_between(440.0, f).unwrap().abs() < 5.0, "{f}");
    }

    #[test]
    fn rms_change_is_under_one_db() {
        let audio = vowel(250.0, 0.8);
        let track = pyin_track(&audio, &PyinParams::default()).unwrap();
        let marks = detect_pitch_marks(&audio, &track);
        let rms = |s: &[f32]| {
            (s.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / s.len() as f64).sqrt()
        };
        for cents in [-100.0, -50.0, 50.0, 100.0] {
            let out = psola_shift_note(&audio, &whole_note(&track), &marks, cents).unwrap();
            let db = 20.0 * (rms(&out.samples) / rms(&audio.samples)).log10();
            assert!(db.abs() < 1.0, "{cents}: {db} dB");
        }
    }

    #[test]
    fn errors() {
        let audio = vowel(300.0, 0.3);
        let track = pyin_track(&audio, &PyinParams::default()).unwrap();
        let marks = detect_pitch_marks(&audio, &track);
        assert!(matches!(
            psola_shift_note(&audio, &whole_note(&track), &marks, 250.0),
            Err(Error::Range(_))
        ));
        let empty = PitchMarks {
            epochs: vec![100],
            ..marks.clone()
        };
        assert!(matches!(
            psola_shift_note(&audio, &whole_note(&track), &empty, 50.0),
            Err(Error::InsufficientMarks { found: 1 })
        ));
        assert!(matches!(
            apply_corrections(&audio, &marks, &[whole_note(&track)], &[]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn corrections_are_local() {
        let mut s = vowel(330.0, 0.5).samples;
        s.extend(vec![0.0f32; 4410]);
        s.extend(vowel(392.0, 0.5).samples);
        let audio = AudioBuffer::new(s, SR).unwrap();
        let track = pyin_track(&audio, &PyinParams::default()).unwrap();
        let marks = detect_pitch_marks(&audio, &track);
        let notes = crate::pitch::segment_notes_silence(&track, &Default::default());
        assert_eq!(notes.len(), 2);
        let out = apply_corrections(&audio, &marks, &notes, &[0.5, 0.0]).unwrap();
        assert_eq!(out.len(), audio.len());
        let (a, b) = note_sample_span(&notes[0], &marks, audio.len());
        for i in (0..a).chain(b..audio.len()) {
            assert_eq!(
                out.samples[i].to_bits(),
                audio.samples[i].to_bits(),
                "sample {i}"
            );
        }
        let before = measured(&audio, &notes[0]);
        let after = measured(&out, &notes[0]);
        let moved = cents_between(before, after).unwrap();
        assert!((moved - 50.0).abs() < 5.0, "moved {moved}");

        let zero = apply_corrections(&audio, &marks, &notes, &[0.0, 0.0]).unwrap();
        assert_eq!(zero, audio);
    }
}
