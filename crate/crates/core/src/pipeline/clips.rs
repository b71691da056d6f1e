use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{save_wav, AudioBuffer};
use crate::error::{Error, Result};
use crate::pitch::PitchTrack;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipParams {
    pub count: usize,
    pub length_secs: f64,
    pub fade_secs: f64,
    /// Starting voiced-frame fraction a window must reach.
    pub threshold: f64,
    /// Decrement applied while too few windows qualify.
    pub threshold_step: f64,
    /// Window starts are multiples of this.
    pub grid_secs: f64,
    pub seed: u64,
}

impl Default for ClipParams {
    fn default() -> Self {
        Self {
            count: 4,
            length_secs: 12.0,
            fade_secs: 1.0,
            threshold: 0.7,
            threshold_step: 0.05,
            grid_secs: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub start_secs: f64,
    pub voiced_fraction: f64,
    pub audio: AudioBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipSelection {
    pub clips: Vec<Clip>,
    /// Every threshold tried, in order.
    pub thresholds: Vec<f64>,
}

impl ClipSelection {
    pub fn final_threshold(&self) -> f64 {
        *self.thresholds.last().unwrap()
    }
}

fn voiced_fraction(track: &PitchTrack, start: f64, end: f64) -> f64 {
    let frames: Vec<usize> = (0..track.len())
        .filter(|&t| {
            let time = track.frame_time(t);
            time >= start && time < end
        })
        .collect();
    if frames.is_empty() {
        return 0.0;
    }
    frames.iter().filter(|&&t| track.is_voiced(t)).count() as f64 / frames.len() as f64
}

/// Picks distinct grid-aligned windows whose voiced fraction reaches the
/// threshold, lowering it step by step until enough windows qualify.
pub fn sample_clips(
    audio: &AudioBuffer,
    track: &PitchTrack,
    params: &ClipParams,
) -> Result<ClipSelection> {
    let sr = audio.sample_rate as f64;
    let dur = audio.duration_secs();
    if dur + 1e-9 < params.length_secs {
        return Err(Error::Size(format!(
            "{dur:.2} s of audio is shorter than one {} s clip",
            params.length_secs
        )));
    }
    if !(params.grid_secs > 0.0 && params.threshold_step > 0.0) {
        return Err(Error::Config(
            "clip grid and threshold step must be positive".into(),
        ));
    }
    let n_windows = ((dur - params.length_secs) / params.grid_secs + 1e-9).floor() as usize + 1;
    let windows: Vec<(f64, f64)> = (0..n_windows)
        .map(|k| {
            let s = k as f64 * params.grid_secs;
            (s, voiced_fraction(track, s, s + params.length_secs))
        })
        .collect();
    let mut thresholds = Vec::new();
    let mut chosen = Vec::new();
    for k in 0.. {
        let tau = (params.threshold - k as f64 * params.threshold_step).max(0.0);
        // Guard against drift from repeated subtraction.
        let tau = (tau * 1e9).round() / 1e9;
        thresholds.push(tau);
        let mut ok: Vec<(f64, f64)> = windows.iter().copied().filter(|w| w.1 >= tau).collect();
        if ok.len() >= params.count || tau <= 0.0 {
            ok.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));
            ok.truncate(params.count);
            ok.sort_by(|a, b| a.0.total_cmp(&b.0));
            chosen = ok;
            break;
        }
    }
    let len = (params.length_secs * sr).round() as usize;
    let fade = (params.fade_secs * sr).round() as usize;
    let clips = chosen
        .into_iter()
        .map(|(start, frac)| {
            let a = (start * sr).round() as usize;
            let mut samples = audio.samples[a..(a + len).min(audio.len())].to_vec();
            samples.resize(len, 0.0);
            apply_fades(&mut samples, fade);
            Ok(Clip {
                start_secs: start,
                voiced_fraction: frac,
                audio: AudioBuffer::new(samples, audio.sample_rate)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ClipSelection { clips, thresholds })
}

/// Linear ramps reaching zero at the first and last samples.
fn apply_fades(samples: &mut [f32], fade: usize) {
    let n = samples.len();
    if fade == 0 || n == 0 {
        return;
    }
    for i in 0..fade.min(n) {
        let g = i as f32 / fade as f32;
        samples[i] *= g;
        samples[n - 1 - i] *= g;
    }
}

/// Writes `clip_<k>.wav` files into `out_dir`.
pub fn cmd_clips(
    audio: &AudioBuffer,
    track: &PitchTrack,
    params: &ClipParams,
    out_dir: &Path,
) -> Result<ClipSelection> {
    let sel = sample_clips(audio, track, params)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (k, c) in sel.clips.iter().enumerate() {
        save_wav(&c.audio, out_dir.join(format!("clip_{k}.wav")))?;
    }
    if sel.final_threshold() < params.threshold {
        log::warn!("voicing threshold lowered to {:.2}", sel.final_threshold());
    }
    Ok(sel)
}
