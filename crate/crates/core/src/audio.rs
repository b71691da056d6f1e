//! Mono audio buffers and WAV I/O.
//!
//! Everything downstream runs at [`WORKING_RATE`]; [`load_wav`] downmixes,
//! resamples and peak-normalizes so callers never see anything else.

use std::f64::consts::PI;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

pub const WORKING_RATE: u32 = 22_050;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Size("audio buffer is empty".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Domain("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("audio contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Scales the buffer so its peak magnitude is exactly 1.
    pub fn normalize(&mut self) -> Result<()> {
        let peak = self.peak();
        if peak <= 0.0 {
            return Err(Error::SilentInput);
        }
        let gain = 1.0 / peak;
        for s in &mut self.samples {
            *s = (*s * gain).clamp(-1.0, 1.0);
        }
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn resampled(&self, target_rate: u32) -> AudioBuffer {
        if target_rate == self.sample_rate {
            return self.clone();
        }
        AudioBuffer {
            samples: resample(&self.samples, self.sample_rate, target_rate),
            sample_rate: target_rate,
        }
    }
}

/// Band-limited resampling with a Blackman-windowed sinc kernel.
pub fn resample(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    const HALF_TAPS: isize = 32;
    let ratio = to as f64 / from as f64;
    let out_len = ((input.len() as f64) * ratio).round() as usize;
    // Cutoff sits just below the lower of the two Nyquist frequencies.
    let cutoff = 0.97 * ratio.min(1.0);
    let half = HALF_TAPS as f64 / cutoff.min(1.0);
    let reach = half.ceil() as isize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let center = n as f64 / ratio;
        let base = center.floor() as isize;
        let mut acc = 0.0f64;
        let mut norm = 0.0f64;
        for i in (base - reach + 1)..=(base + reach) {
            let dist = i as f64 - center;
            if dist.abs() >= half {
                continue;
            }
            let x = dist * cutoff;
            let sinc = if x.abs() < 1e-12 {
                1.0
            } else {
                (PI * x).sin() / (PI * x)
            };
            let phase = (dist / half + 1.0) * 0.5;
            let window = 0.42 - 0.5 * (2.0 * PI * phase).cos() + 0.08 * (4.0 * PI * phase).cos();
            let w = sinc * window;
            norm += w;
            if i >= 0 && (i as usize) < input.len() {
                acc += w * input[i as usize] as f64;
            }
        }
        out.push(if norm.abs() > 1e-12 {
            (acc / norm) as f32
        } else {
            0.0
        });
    }
    out
}

/// Reads a PCM16 or float32 WAV, downmixes to mono, resamples to
/// [`WORKING_RATE`] and peak-normalizes.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let raw = read_wav_raw(path)?;
    raw.resampled(WORKING_RATE).normalized()
}

/// Reads and downmixes a WAV without resampling or normalization.
pub fn read_wav_raw(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::Unsupported(path.display().to_string()),
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::Unsupported(format!(
            "{} channels (only mono or stereo)",
            spec.channels
        )));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(e.to_string()))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(e.to_string()))?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!("{bits}-bit {fmt:?}")));
        }
    };
    let channels = spec.channels as usize;
    let mono: Vec<f32> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    if mono.is_empty() {
        return Err(Error::Format(format!("{}: no samples", path.display())));
    }
    AudioBuffer::new(mono, spec.sample_rate)
}

/// Writes a mono 32-bit float WAV.
pub fn save_wav(audio: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    write_wav(audio, path, SampleFormat::Float)
}

/// Writes a mono 16-bit PCM WAV.
pub fn save_wav_pcm16(audio: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    write_wav(audio, path, SampleFormat::Int)
}

fn write_wav(audio: &AudioBuffer, path: impl AsRef<Path>, format: SampleFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: if format == SampleFormat::Int { 16 } else { 32 },
        sample_format: format,
    };
    let map_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(other.to_string()),
    };
    let mut writer = WavWriter::create(path, spec).map_err(map_err)?;
    for &s in &audio.samples {
        match format {
            SampleFormat::Int => {
                let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                writer.write_sample(v).map_err(map_err)?;
            }
            SampleFormat::Float => writer.write_sample(s).map_err(map_err)?,
        }
    }
    writer.finalize().map_err(map_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, secs: f64, amp: f32) -> Vec<f32> {
        let n = (rate as f64 * secs) as usize;
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin() as f32)
            .collect()
    }

    #[test]
    fn stereo_44k_sine_loads_as_normalized_mono() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for s in sine(440.0, 44_100, 1.0, 0.5) {
            let v = (s * 32767.0) as i16;
            w.write_sample(v).unwrap();
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();

        let audio = load_wav(&path).unwrap();
        assert_eq!(audio.sample_rate, WORKING_RATE);
        assert_eq!(audio.len(), 22_050);
        assert!((audio.peak() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn all_zero_file_is_rejected_as_silent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.wav");
        save_wav(
            &AudioBuffer::new(vec![0.0; 1000], WORKING_RATE).unwrap(),
            &path,
        )
        .unwrap();
        assert!(matches!(load_wav(&path), Err(Error::SilentInput)));
    }

    #[test]
    fn thirty_seconds_at_working_rate() {
        let audio = AudioBuffer::new(sine(220.0, 44_100, 30.0, 0.3), 44_100)
            .unwrap()
            .resampled(WORKING_RATE)
            .normalized()
            .unwrap();
        assert_eq!(audio.sample_rate, 22_050);
        assert_eq!(audio.len(), 661_500);
    }

    #[test]
    fn resampling_preserves_in_band_tone_amplitude() {
        let src = sine(1000.0, 44_100, 0.5, 0.8);
        let out = resample(&src, 44_100, 22_050);
        let mid = &out[2000..9000];
        let peak = mid.iter().fold(0.0f32, |m, s| m.max(s.abs()));
        assert!((peak - 0.8).abs() < 0.01, "peak {peak}");
    }

    #[test]
    fn garbage_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFF\x10\x00\x00\x00WAVEjunkjunkjunk").unwrap();
        let err = load_wav(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_) | Error::Io { .. }), "{err}");
    }

    #[test]
    fn pcm24_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p24.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 22_050,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for i in 0..100 {
            w.write_sample(i * 1000).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(load_wav(&path), Err(Error::Unsupported(_))));
    }

    #[test]
    fn pcm16_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let audio = AudioBuffer::new(sine(300.0, WORKING_RATE, 0.2, 0.9), WORKING_RATE).unwrap();
        save_wav_pcm16(&audio, &path).unwrap();
        let back = read_wav_raw(&path).unwrap();
        assert_eq!(back.len(), audio.len());
        let err = back
            .samples
            .iter()
            .zip(&audio.samples)
            .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-4);
    }
}
