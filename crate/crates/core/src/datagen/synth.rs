//! Desk-scale stand-in performances: a vibrato sawtooth "singer" over
//! sustained triads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, WORKING_RATE};
use crate::error::{Error, Result};
use crate::pitch::{midi_to_hz, NoteSegment};

/// Melody pitches must stay inside the tracker and CQT ranges even after a
/// one-semitone detune.
pub const MELODY_RANGE: (f64, f64) = (50.0, 83.0);
pub const CHORD_ROOT_RANGE: (u8, u8) = (48, 71);
const HOP: usize = 256;
const BACKING_HARMONICS: usize = 6;
const VOCAL_BANDWIDTH_HZ: f64 = 8000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chord {
    pub root: u8,
    pub minor: bool,
}

impl Chord {
    pub fn tones(&self) -> [u8; 3] {
        let third = if self.minor { 3 } else { 4 };
        [self.root, self.root + third, self.root + 7]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelodyNote {
    /// MIDI pitch.
    pub pitch: f64,
    pub duration_secs: f64,
    /// Silence before this note.
    pub rest_before_secs: f64,
    /// Index into [`SongSpec::chords`].
    pub chord: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongSpec {
    pub chords: Vec<Chord>,
    pub melody: Vec<MelodyNote>,
    pub tail_secs: f64,
    pub vibrato_hz: f64,
    pub vibrato_cents: f64,
}

/// Random-song generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SongParams {
    pub n_notes: usize,
    pub note_secs: (f64, f64),
    pub rest_secs: (f64, f64),
    pub notes_per_chord: usize,
    pub lead_in_secs: f64,
    pub tail_secs: f64,
}

impl Default for SongParams {
    fn default() -> Self {
        Self {
            n_notes: 8,
            note_secs: (0.25, 0.6),
            rest_secs: (0.08, 0.12),
            notes_per_chord: 2,
            lead_in_secs: 0.25,
            tail_secs: 0.25,
        }
    }
}

const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

impl SongSpec {
    /// Chords come from `backing_seed` alone, so songs sharing a backing seed
    /// share a progression; the melody is drawn from chord tones with
    /// `song_seed`.
    pub fn generate(song_seed: u64, backing_seed: u64, params: &SongParams) -> Result<Self> {
        if params.n_notes == 0 || params.notes_per_chord == 0 {
            return Err(Error::Spec("song needs at least one note per chord".into()));
        }
        let mut brng = ChaCha8Rng::seed_from_u64(backing_seed);
        let key = 48 + brng.random_range(0..12u8);
        let n_chords = params.n_notes.div_ceil(params.notes_per_chord);
        let chords: Vec<Chord> = (0..n_chords)
            .map(|_| {
                let degree = [0usize, 3, 4, 5][brng.random_range(0..4)];
                let root = key + MAJOR_SCALE[degree];
                Chord {
                    root: if root > CHORD_ROOT_RANGE.1 {
                        root - 12
                    } else {
                        root
                    },
                    minor: degree == 5,
                }
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(song_seed);
        let melody = (0..params.n_notes)
            .map(|i| {
                let chord: Chord = chords_at(&chords, i / params.notes_per_chord);
                let tone = chord.tones()[rng.random_range(0..3)] as f64;
                // Lift chord tones into a singing register.
                let octaves = rng.random_range(1..=2) as f64;
                let mut pitch = tone + 12.0 * octaves;
                while pitch > 79.0 {
                    pitch -= 12.0;
                }
                MelodyNote {
                    pitch,
                    duration_secs: uniform(&mut rng, params.note_secs),
                    rest_before_secs: if i == 0 {
                        params.lead_in_secs
                    } else {
                        uniform(&mut rng, params.rest_secs)
                    },
                    chord: i / params.notes_per_chord,
                }
            })
            .collect();
        Ok(Self {
            chords,
            melody,
            tail_secs: params.tail_secs,
            vibrato_hz: 5.0,
            vibrato_cents: 20.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.melody.is_empty() {
            return Err(Error::Spec("empty melody".into()));
        }
        for (i, n) in self.melody.iter().enumerate() {
            if !(MELODY_RANGE.0..=MELODY_RANGE.1).contains(&n.pitch) {
                return Err(Error::Spec(format!(
                    "melody note {i} pitch {} outside MIDI {:?}",
                    n.pitch, MELODY_RANGE
                )));
            }
            if !(n.duration_secs > 0.0) || !(n.rest_before_secs >= 0.0) {
                return Err(Error::Spec(format!("melody note {i} has a bad duration")));
            }
            if n.chord >= self.chords.len() {
                return Err(Error::Spec(format!(
                    "melody note {i} refers to a missing chord"
                )));
            }
        }
        if let Some(c) = self
            .chords
            .iter()
            .find(|c| !(CHORD_ROOT_RANGE.0..=CHORD_ROOT_RANGE.1).contains(&c.root))
        {
            return Err(Error::Spec(format!(
                "chord root {} outside {:?}",
                c.root, CHORD_ROOT_RANGE
            )));
        }
        if !(self.tail_secs >= 0.0)
            || !(self.vibrato_hz >= 0.0)
            || !(self.vibrato_cents.abs() < 100.0)
        {
            return Err(Error::Spec("bad tail or vibrato settings".into()));
        }
        Ok(())
    }
}

fn chords_at(chords: &[Chord], i: usize) -> Chord {
    chords[i.min(chords.len() - 1)]
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone)]
pub struct SynthPerformance {
    pub vocal: AudioBuffer,
    pub backing: AudioBuffer,
    /// Exact note spans with `median_f0` set to the intended pitch.
    pub notes: Vec<NoteSegment>,
    /// Intended MIDI pitch per note.
    pub pitches: Vec<f64>,
}

/// Renders `spec` at the working rate. `seed` sets vibrato phases.
pub fn synth_performance(seed: u64, spec: &SongSpec) -> Result<SynthPerformance> {
    spec.validate()?;
    let sr = WORKING_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spans = Vec::with_capacity(spec.melody.len());
    let mut cursor = 0.0;
    for n in &spec.melody {
        cursor += n.rest_before_secs;
        let start = (cursor * sr).round() as usize;
        cursor += n.duration_secs;
        spans.push((start, ((cursor * sr).round() as usize).max(start + 1)));
    }
    let len = ((cursor + spec.tail_secs) * sr).round() as usize;
    let mut vocal = vec![0.0f64; len];
    for (n, &(a, b)) in spec.melody.iter().zip(&spans) {
        render_vocal_note(
            &mut vocal[a..b],
            n.pitch,
            spec,
            rng.random_range(0.0..2.0 * PI),
            sr,
        );
    }

    let mut backing = vec![0.0f64; len];
    let chord_starts: Vec<usize> = (0..spec.chords.len())
        .map(|c| {
            spec.melody
                .iter()
                .position(|n| n.chord == c)
                .map(|i| if c == 0 { 0 } else { spans[i].0 })
        })
        .scan(0usize, |last, s| {
            *last = s.unwrap_or(*last);
            Some(*last)
        })
        .collect();
    for (c, chord) in spec.chords.iter().enumerate() {
        let a = chord_starts[c];
        let b = chord_starts.get(c + 1).copied().unwrap_or(len).max(a);
        for tone in chord.tones() {
            render_backing_tone(&mut backing[a..b], midi_to_hz(tone as f64), sr);
        }
    }

    let notes = spec
        .melody
        .iter()
        .zip(&spans)
        .map(|(n, &(a, b))| NoteSegment {
            start_frame: a.div_ceil(HOP),
            end_frame: b.div_ceil(HOP),
            median_f0: midi_to_hz(n.pitch),
            target_shift: None,
        })
        .collect();
    let to_buffer = |v: Vec<f64>| {
        AudioBuffer::new(v.into_iter().map(|x| x as f32).collect(), WORKING_RATE)?.normalized()
    };
    Ok(SynthPerformance {
        vocal: to_buffer(vocal)?,
        backing: to_buffer(backing)?,
        notes,
        pitches: spec.melody.iter().map(|n| n.pitch).collect(),
    })
}

/// Band-limited sawtooth with sinusoidal vibrato and attack/release ramps.
fn render_vocal_note(out: &mut [f64], pitch: f64, spec: &SongSpec, vib_phase: f64, sr: f64) {
    let f0 = midi_to_hz(pitch);
    let top = f0 * 2f64.powf(spec.vibrato_cents.abs() / 1200.0);
    let harmonics = ((VOCAL_BANDWIDTH_HZ.min(0.45 * sr)) / top).floor().max(1.0) as usize;
    let attack = (0.015 * sr) as usize;
    let release = (0.025 * sr) as usize;
    let n = out.len();
    let mut phase = 0.0f64;
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let cents = spec.vibrato_cents * (2.0 * PI * spec.vibrato_hz * t + vib_phase).sin();
        let f = f0 * 2f64.powf(cents / 1200.0);
        let env = ramp(i, attack).min(ramp(n - 1 - i, release));
        let wave: f64 = (1..=harmonics)
            .map(|k| (k as f64 * phase).sin() / k as f64)
            .sum();
        *o += 0.5 * env * wave;
        phase = (phase + 2.0 * PI * f / sr) % (2.0 * PI);
    }
}

fn render_backing_tone(out: &mut [f64], f0: f64, sr: f64) {
    let fade = (0.02 * sr) as usize;
    let n = out.len();
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let env = ramp(i, fade).min(ramp(n - 1 - i, fade));
        let wave: f64 = (1..=BACKING_HARMONICS)
            .map(|k| (2.0 * PI * k as f64 * f0 * t).sin() / k as f64)
            .sum();
        *o += 0.2 * env * wave;
    }
}

fn ramp(i: usize, len: usize) -> f64 {
    if len == 0 {
        1.0
    } else {
        (i as f64 / len as f64).min(1.0)
    }
}
