//! Probabilistic YIN: per-frame pitch candidates from a threshold prior,
//! decoded by Viterbi over a pitch x voicing state space.

use serde::{Deserialize, Serialize};

use super::PitchTrack;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyinParams {
    pub frame: usize,
    pub hop: usize,
    pub n_thresholds: usize,
    /// Integer shape parameters of the beta prior over thresholds.
    pub prior_beta: (u32, u32),
    pub f_min: f64,
    pub f_max: f64,
    pub cents_per_state: f64,
    pub max_transition_octaves_per_sec: f64,
    pub switch_prob: f64,
    pub voicing_threshold: f64,
    /// Frames quieter than this (relative to the loudest frame) are unvoiced.
    pub silence_db: f64,
    /// Prior mass given to the global minimum when no trough clears a threshold.
    pub no_trough_prob: f64,
}

impl Default for PyinParams {
    fn default() -> Self {
        Self {
            frame: 2048,
            hop: 256,
            n_thresholds: 100,
            prior_beta: (2, 18),
            f_min: 80.0,
            f_max: 1000.0,
            cents_per_state: 10.0,
            max_transition_octaves_per_sec: 35.92,
            switch_prob: 0.01,
            voicing_threshold: 0.5,
            silence_db: -40.0,
            no_trough_prob: 0.01,
        }
    }
}

impl PyinParams {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !(0.0 < self.f_min && self.f_min < self.f_max && self.f_max < sample_rate as f64 / 2.0) {
            return Err(Error::Config(format!(
                "need 0 < f_min < f_max < {} Hz",
                sample_rate as f64 / 2.0
            )));
        }
        if self.frame < 4 || self.hop == 0 || self.n_thresholds == 0 {
            return Err(Error::Config(
                "frame, hop and n_thresholds must be positive".into(),
            ));
        }
        let (window, max_lag) = self.window_and_max_lag(sample_rate);
        if window + max_lag + 1 > self.frame {
            return Err(Error::Config(format!(
                "frame of {} samples cannot hold lags down to {} Hz",
                self.frame, self.f_min
            )));
        }
        Ok(())
    }

    /// Integration window and the largest lag searched.
    fn window_and_max_lag(&self, sample_rate: u32) -> (usize, usize) {
        let window = self.frame / 2;
        let max_lag = (sample_rate as f64 / self.f_min).ceil() as usize + 1;
        (window, max_lag.min(self.frame - window - 1))
    }

    /// `(threshold, prior weight)` pairs; weights sum to 1.
    pub fn threshold_prior(&self) -> Vec<(f64, f64)> {
        let (a, b) = self.prior_beta;
        let n = self.n_thresholds;
        (1..=n)
            .map(|i| {
                let hi = i as f64 / n as f64;
                let lo = (i - 1) as f64 / n as f64;
                (hi, beta_cdf_int(hi, a, b) - beta_cdf_int(lo, a, b))
            })
            .collect()
    }

    fn n_states(&self) -> usize {
        (1200.0 * (self.f_max / self.f_min).log2() / self.cents_per_state).floor() as usize + 1
    }

    fn state_of(&self, freq: f64) -> usize {
        let s = (1200.0 * (freq / self.f_min).log2() / self.cents_per_state).round();
        (s.max(0.0) as usize).min(self.n_states() - 1)
    }
}

/// Regularized incomplete beta function for integer shape parameters.
fn beta_cdf_int(x: f64, a: u32, b: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let n = a + b - 1;
    let mut total = 0.0;
    let mut binom = 1.0f64;
    for j in 0..=n {
        if j > 0 {
            binom *= (n - j + 1) as f64 / j as f64;
        }
        if j >= a {
            total += binom * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32);
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchCandidate {
    pub f0: f64,
    pub probability: f64,
}

/// Pitch candidates for one analysis frame. Probabilities sum to at most 1;
/// the remainder is unvoiced mass.
pub fn yin_frame(
    frame: &[f32],
    sample_rate: u32,
    params: &PyinParams,
) -> Result<Vec<PitchCandidate>> {
    if frame.len() != params.frame {
        return Err(Error::Size(format!(
            "frame has {} samples, expected {}",
            frame.len(),
            params.frame
        )));
    }
    let (window, max_lag) = params.window_and_max_lag(sample_rate);
    let min_lag = ((sample_rate as f64 / params.f_max).floor() as usize).max(2);
    // Center the analysed span inside the frame.
    let offset = (params.frame - window - max_lag) / 2;
    let x: Vec<f64> = frame[offset..offset + window + max_lag + 1]
        .iter()
        .map(|&v| v as f64)
        .collect();

    let mut diff = vec![0.0f64; max_lag + 2];
    for (lag, d) in diff.iter_mut().enumerate().skip(1) {
        *d = x[..window]
            .iter()
            .zip(&x[lag..lag + window])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
    }
    let mut cmnd = vec![1.0f64; max_lag + 2];
    let mut running = 0.0;
    for lag in 1..diff.len() {
        running += diff[lag];
        cmnd[lag] = if running > 0.0 {
            diff[lag] * lag as f64 / running
        } else {
            1.0
        };
    }
    if running <= 0.0 {
        return Ok(Vec::new());
    }

    let troughs: Vec<usize> = (min_lag.max(1)..=max_lag)
        .filter(|&l| cmnd[l] < cmnd[l - 1] && cmnd[l] <= cmnd[l + 1])
        .collect();
    if troughs.is_empty() {
        return Ok(Vec::new());
    }
    let mut mass = vec![0.0f64; troughs.len()];
    let global = (0..troughs.len())
        .min_by(|&a, &b| cmnd[troughs[a]].total_cmp(&cmnd[troughs[b]]))
        .unwrap();
    for (threshold, weight) in params.threshold_prior() {
        match troughs.iter().position(|&l| cmnd[l] < threshold) {
            Some(i) => mass[i] += weight,
            None => mass[global] += weight * params.no_trough_prob,
        }
    }

    let candidates = troughs
        .iter()
        .zip(&mass)
        .filter(|(_, &p)| p > 0.0)
        .filter_map(|(&lag, &p)| {
            let (a, b, c) = (cmnd[lag - 1], cmnd[lag], cmnd[lag + 1]);
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 1e-12 {
                (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            let f0 = sample_rate as f64 / (lag as f64 + shift);
            (f0 >= params.f_min && f0 <= params.f_max).then_some(PitchCandidate {
                f0,
                probability: p.min(1.0),
            })
        })
        .collect();
    Ok(candidates)
}

fn centered_frame(samples: &[f32], center: usize, len: usize) -> Vec<f32> {
    let start = center as isize - (len / 2) as isize;
    (0..len)
        .map(|i| {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize]
            } else {
                0.0
            }
        })
        .collect()
}

fn frame_rms(samples: &[f32], center: usize, half: usize) -> f64 {
    let lo = center.saturating_sub(half);
    let hi = (center + half).min(samples.len());
    if hi <= lo {
        return 0.0;
    }
    let e: f64 = samples[lo..hi]
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum();
    (e / (2 * half) as f64).sqrt()
}

/// Frame-wise pYIN. Frame `t` is centered on sample `t * hop`.
pub fn pyin_track(audio: &AudioBuffer, params: &PyinParams) -> Result<PitchTrack> {
    params.validate(audio.sample_rate)?;
    if audio.len() < params.frame {
        return Err(Error::Size(format!(
            "audio has {} samples, need at least one {}-sample frame",
            audio.len(),
            params.frame
        )));
    }
    let sr = audio.sample_rate;
    let n_frames = audio.len().div_ceil(params.hop);
    let rms: Vec<f64> = (0..n_frames)
        .map(|t| frame_rms(&audio.samples, t * params.hop, params.hop))
        .collect();
    let loudest = rms.iter().cloned().fold(0.0, f64::max);
    let gate = loudest * 10f64.powf(params.silence_db / 20.0);

    let mut candidates = Vec::with_capacity(n_frames);
    for (t, &level) in rms.iter().enumerate() {
        if level <= gate || level == 0.0 {
            candidates.push(Vec::new());
            continue;
        }
        let frame = centered_frame(&audio.samples, t * params.hop, params.frame);
        candidates.push(yin_frame(&frame, sr, params)?);
    }

    let states = viterbi(&candidates, params, sr);
    let n_pitch = params.n_states();
    let mut f0 = vec![0.0; n_frames];
    let mut voicing = vec![0.0; n_frames];
    for t in 0..n_frames {
        let mass: f64 = candidates[t].iter().map(|c| c.probability).sum();
        voicing[t] = mass.min(1.0);
        let state = states[t];
        if state < n_pitch && mass >= params.voicing_threshold {
            let target = params.f_min * 2f64.powf(state as f64 * params.cents_per_state / 1200.0);
            f0[t] = candidates[t]
                .iter()
                .min_by(|a, b| {
                    (a.f0 / target)
                        .ln()
                        .abs()
                        .total_cmp(&(b.f0 / target).ln().abs())
                })
                .map(|c| c.f0)
                .unwrap_or(target);
        }
    }
    Ok(PitchTrack {
        f0,
        voicing,
        hop: params.hop,
        sample_rate: sr,
    })
}

/// Most likely state per frame; states `0..n` are voiced pitches, `n..2n`
/// their unvoiced twins.
fn viterbi(
    candidates: &[Vec<PitchCandidate>],
    params: &PyinParams,
    sample_rate: u32,
) -> Vec<usize> {
    let n = params.n_states();
    let frames = candidates.len();
    let per_frame_octaves =
        params.max_transition_octaves_per_sec * params.hop as f64 / sample_rate as f64;
    let reach = ((per_frame_octaves * 1200.0 / params.cents_per_state).round() as isize).max(1);
    let tri_total: f64 = (-reach..=reach).map(|k| (reach + 1 - k.abs()) as f64).sum();
    let log_tri: Vec<f64> = (-reach..=reach)
        .map(|k| ((reach + 1 - k.abs()) as f64 / tri_total).ln())
        .collect();
    let log_stay = (1.0 - params.switch_prob).ln();
    let log_switch = params.switch_prob.ln();
    let floor = 1e-30f64;

    let emissions = |t: usize| -> Vec<f64> {
        let mut obs = vec![0.0f64; 2 * n];
        let mut mass = 0.0;
        for c in &candidates[t] {
            obs[params.state_of(c.f0)] += c.probability;
            mass += c.probability;
        }
        let unvoiced = ((1.0 - mass).max(0.0)) / n as f64;
        for v in obs[n..].iter_mut() {
            *v = unvoiced;
        }
        obs.iter().map(|&p| p.max(floor).ln()).collect()
    };

    let mut delta: Vec<f64> = emissions(0)
        .into_iter()
        .map(|e| e - ((2 * n) as f64).ln())
        .collect();
    let mut back: Vec<Vec<u16>> = Vec::with_capacity(frames);
    back.push(Vec::new());
    let mut into_v = vec![0.0f64; n];
    let mut into_v_src = vec![0usize; n];
    let mut into_u = vec![0.0f64; n];
    let mut into_u_src = vec![0usize; n];
    for t in 1..frames {
        // Best way to arrive in the voiced / unvoiced layer at each pitch.
        for i in 0..n {
            let (sv, su) = (delta[i] + log_stay, delta[n + i] + log_switch);
            if sv >= su {
                into_v[i] = sv;
                into_v_src[i] = i;
            } else {
                into_v[i] = su;
                into_v_src[i] = n + i;
            }
            let (su, sv) = (delta[n + i] + log_stay, delta[i] + log_switch);
            if su >= sv {
                into_u[i] = su;
                into_u_src[i] = n + i;
            } else {
                into_u[i] = sv;
                into_u_src[i] = i;
            }
        }
        let obs = emissions(t);
        let mut next = vec![f64::NEG_INFINITY; 2 * n];
        let mut ptr = vec![0u16; 2 * n];
        for j in 0..n {
            let lo = (j as isize - reach).max(0) as usize;
            let hi = ((j as isize + reach) as usize).min(n - 1);
            let (mut best_v, mut arg_v) = (f64::NEG_INFINITY, 0);
            let (mut best_u, mut arg_u) = (f64::NEG_INFINITY, 0);
            for i in lo..=hi {
                let w = log_tri[(j as isize - i as isize + reach) as usize];
                let v = into_v[i] + w;
                if v > best_v {
                    best_v = v;
                    arg_v = into_v_src[i];
                }
                let u = into_u[i] + w;
                if u > best_u {
                    best_u = u;
                    arg_u = into_u_src[i];
                }
            }
            next[j] = best_v + obs[j];
            ptr[j] = arg_v as u16;
            next[n + j] = best_u + obs[n + j];
            ptr[n + j] = arg_u as u16;
        }
        delta = next;
        back.push(ptr);
    }
    let mut state = (0..2 * n)
        .max_by(|&a, &b| delta[a].total_cmp(&delta[b]))
        .unwrap_or(n);
    let mut path = vec![0usize; frames];
    for t in (0..frames).rev() {
        path[t] = state;
        if t > 0 {
            state = back[t][state] as usize;
        }
    }
    path
}
