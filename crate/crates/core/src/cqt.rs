//! Constant-Q magnitude spectrogram at 16 bins per semitone, plus the
//! bin-axis operations used for detuning.
//!
//! The transform runs octave by octave from the top down. Each octave
//! evaluates its 192 bins against a sparse spectral kernel with one FFT per
//! frame, then the signal is low-passed and decimated by two for the next
//! octave. Kernel lengths are `Q * sr / f`, so the lowest bins integrate over
//! far more than one hop; the hop alone sets the time grid.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CqtParams {
    pub bins_per_semitone: usize,
    pub octaves: f64,
    pub f_min: f64,
    pub hop: usize,
    pub buffer_bins: usize,
    pub filter_scale: f64,
}

impl Default for CqtParams {
    fn default() -> Self {
        Self {
            bins_per_semitone: 16,
            octaves: 5.5,
            f_min: 125.0,
            hop: 256,
            buffer_bins: 16,
            filter_scale: 1.0,
        }
    }
}

impl CqtParams {
    pub fn bins_per_octave(&self) -> usize {
        12 * self.bins_per_semitone
    }

    pub fn total_bins(&self) -> usize {
        (self.octaves * self.bins_per_octave() as f64).round() as usize
    }

    pub fn truncated_bins(&self) -> usize {
        self.total_bins() - 2 * self.buffer_bins
    }

    pub fn cents_per_bin(&self) -> f64 {
        100.0 / self.bins_per_semitone as f64
    }

    /// Center frequency of bin `b` of the full (untruncated) axis.
    pub fn bin_frequency(&self, bin: f64) -> f64 {
        self.f_min * 2f64.powf(bin / self.bins_per_octave() as f64)
    }

    /// Fractional bin index of `freq` on the full axis.
    pub fn frequency_bin(&self, freq: f64) -> f64 {
        self.bins_per_octave() as f64 * (freq / self.f_min).log2()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins_per_semitone == 0 || self.hop == 0 {
            return Err(Error::Config(
                "bins_per_semitone and hop must be >= 1".into(),
            ));
        }
        if !(self.f_min > 0.0) || !(self.octaves > 0.0) || !(self.filter_scale > 0.0) {
            return Err(Error::Config(
                "f_min, octaves and filter_scale must be positive".into(),
            ));
        }
        if self.total_bins() <= 2 * self.buffer_bins {
            return Err(Error::Config(
                "buffer bins leave nothing after truncation".into(),
            ));
        }
        let n_oct = self.total_bins().div_ceil(self.bins_per_octave());
        if !self.hop.is_multiple_of(1 << (n_oct - 1)) {
            return Err(Error::Config(format!(
                "hop {} must be divisible by 2^{} for octave decimation",
                self.hop,
                n_oct - 1
            )));
        }
        Ok(())
    }
}

/// Magnitude spectrogram, row-major `[bins][frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CqtSpectrogram {
    pub mag: Vec<f32>,
    pub bins: usize,
    pub frames: usize,
    pub params: CqtParams,
}

impl CqtSpectrogram {
    pub fn new(mag: Vec<f32>, bins: usize, frames: usize, params: CqtParams) -> Result<Self> {
        if mag.len() != bins * frames {
            return Err(Error::Shape(format!(
                "{} values for a {bins}x{frames} spectrogram",
                mag.len()
            )));
        }
        if mag.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numeric(
                "spectrogram entries must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            mag,
            bins,
            frames,
            params,
        })
    }

    pub fn zeros(bins: usize, frames: usize, params: CqtParams) -> Self {
        Self {
            mag: vec![0.0; bins * frames],
            bins,
            frames,
            params,
        }
    }

    #[inline]
    pub fn get(&self, bin: usize, frame: usize) -> f32 {
        self.mag[bin * self.frames + frame]
    }

    #[inline]
    pub fn set(&mut self, bin: usize, frame: usize, value: f32) {
        self.mag[bin * self.frames + frame] = value;
    }

    pub fn column(&self, frame: usize) -> Vec<f32> {
        (0..self.bins).map(|b| self.get(b, frame)).collect()
    }

    pub fn max(&self) -> f32 {
        self.mag.iter().fold(0.0f32, |m, &v| m.max(v))
    }

    pub fn argmax_bin(&self, frame: usize) -> usize {
        (0..self.bins)
            .max_by(|&a, &b| self.get(a, frame).total_cmp(&self.get(b, frame)))
            .unwrap_or(0)
    }

    pub fn is_truncated(&self) -> bool {
        self.bins == self.params.truncated_bins()
    }

    /// Writes little-endian f32 values plus a `<path>.json` sidecar.
    pub fn write_f32(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self.mag.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let sidecar = MatrixSidecar {
            shape: [self.bins, self.frames],
            dtype: "float32-le".into(),
            layout: "row-major [bins][frames]".into(),
            params: self.params,
        };
        let side = sidecar_path(path);
        std::fs::write(&side, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))
    }

    pub fn read_f32(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = sidecar_path(path);
        let text = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        let sidecar: MatrixSidecar = serde_json::from_slice(&text)?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let [bins, frames] = sidecar.shape;
        if bytes.len() != bins * frames * 4 {
            return Err(Error::Shape(format!(
                "{}: {} bytes, sidecar expects {bins}x{frames} f32",
                path.display(),
                bytes.len()
            )));
        }
        let mag = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        CqtSpectrogram::new(mag, bins, frames, sidecar.params)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixSidecar {
    shape: [usize; 2],
    dtype: String,
    layout: String,
    params: CqtParams,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

struct SparseKernel {
    /// (fft index, conj(K[j]) / N)
    taps: Vec<(usize, Complex<f64>)>,
}

struct OctavePlan {
    first_bin: usize,
    kernels: Vec<SparseKernel>,
    hop: usize,
}

/// Precomputed kernels for one parameter set and sample rate.
pub struct CqtPlan {
    params: CqtParams,
    sample_rate: u32,
    fft_len: usize,
    fft: Arc<dyn Fft<f64>>,
    octaves: Vec<OctavePlan>,
    lowpass: Vec<f64>,
}

impl CqtPlan {
    pub fn new(params: CqtParams, sample_rate: u32) -> Result<Self> {
        params.validate()?;
        let total = params.total_bins();
        let bpo = params.bins_per_octave();
        let top = params.bin_frequency((total - 1) as f64);
        if top * (1.0 + 1.0 / bpo as f64) >= sample_rate as f64 / 2.0 {
            return Err(Error::Config(format!(
                "top bin {top:.1} Hz exceeds Nyquist at {sample_rate} Hz"
            )));
        }
        let q = params.filter_scale / (2f64.powf(1.0 / bpo as f64) - 1.0);
        let n_oct = total.div_ceil(bpo);

        // Every octave has the same kernel lengths relative to its own rate.
        let top_first = total.saturating_sub(bpo);
        let max_len = q * sample_rate as f64 / params.bin_frequency(top_first as f64);
        let fft_len = (max_len.ceil() as usize + 1).next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);

        let mut octaves = Vec::with_capacity(n_oct);
        for oct in 0..n_oct {
            let hi = total - oct * bpo;
            let lo = hi.saturating_sub(bpo);
            let rate = sample_rate as f64 / (1u64 << oct) as f64;
            let kernels = (lo..hi)
                .map(|b| sparse_kernel(params.bin_frequency(b as f64), q, rate, fft_len, &*fft))
                .collect();
            octaves.push(OctavePlan {
                first_bin: lo,
                kernels,
                hop: params.hop >> oct,
            });
        }
        Ok(Self {
            params,
            sample_rate,
            fft_len,
            fft,
            octaves,
            lowpass: halfband_lowpass(64),
        })
    }

    pub fn params(&self) -> &CqtParams {
        &self.params
    }

    pub fn transform(&self, audio: &AudioBuffer) -> Result<CqtSpectrogram> {
        if audio.sample_rate != self.sample_rate {
            return Err(Error::Config(format!(
                "plan built for {} Hz, audio is {} Hz",
                self.sample_rate, audio.sample_rate
            )));
        }
        let hop = self.params.hop;
        if audio.len() < hop {
            return Err(Error::Size(format!(
                "audio has {} samples, shorter than one hop ({hop})",
                audio.len()
            )));
        }
        let frames = audio.len().div_ceil(hop);
        let bins = self.params.total_bins();
        let mut mag = vec![0.0f32; bins * frames];

        let mut signal: Vec<f64> = audio.samples.iter().map(|&s| s as f64).collect();
        let n = self.fft_len;
        let half = (n / 2) as isize;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];

        for (oct_index, oct) in self.octaves.iter().enumerate() {
            if oct_index > 0 {
                signal = decimate(&signal, &self.lowpass);
            }
            for t in 0..frames {
                let center = (t * oct.hop) as isize;
                let mut any = false;
                for (m, slot) in buf.iter_mut().enumerate() {
                    let idx = center - half + m as isize;
                    let v = if idx >= 0 && (idx as usize) < signal.len() {
                        signal[idx as usize]
                    } else {
                        0.0
                    };
                    any |= v != 0.0;
                    *slot = Complex::new(v, 0.0);
                }
                if !any {
                    continue;
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                for (k, kernel) in oct.kernels.iter().enumerate() {
                    let acc: Complex<f64> = kernel.taps.iter().map(|&(j, c)| buf[j] * c).sum();
                    mag[(oct.first_bin + k) * frames + t] = acc.norm() as f32;
                }
            }
        }
        CqtSpectrogram::new(mag, bins, frames, self.params)
    }
}

fn sparse_kernel(freq: f64, q: f64, rate: f64, n: usize, fft: &dyn Fft<f64>) -> SparseKernel {
    let len = (q * rate / freq).ceil() as usize;
    let len = len.min(n - 1).max(2);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let window: Vec<f64> = (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * (i as f64 + 0.5) / len as f64).cos())
        .collect();
    let wsum: f64 = window.iter().sum();
    let start = n / 2 - len / 2;
    for (i, w) in window.iter().enumerate() {
        let rel = (start + i) as f64 - (n / 2) as f64;
        let phase = 2.0 * PI * freq * rel / rate;
        buf[start + i] = Complex::from_polar(w / wsum, phase);
    }
    fft.process(&mut buf);
    let peak = buf.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let taps = buf
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() >= 5e-4 * peak)
        .map(|(j, c)| (j, c.conj() / n as f64))
        .collect();
    SparseKernel { taps }
}

/// Zero-phase Blackman-windowed sinc with cutoff at a quarter of the input
/// rate, ahead of a 2:1 decimation.
fn halfband_lowpass(half_taps: usize) -> Vec<f64> {
    let cutoff = 0.2;
    let len = 2 * half_taps + 1;
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let m = i as f64 - half_taps as f64;
            let sinc = if m == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * m).sin() / (PI * m)
            };
            let phase = i as f64 / (len - 1) as f64;
            let w = 0.42 - 0.5 * (2.0 * PI * phase).cos() + 0.08 * (4.0 * PI * phase).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

fn decimate(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let out_len = signal.len().div_ceil(2);
    (0..out_len)
        .map(|k| {
            let center = (2 * k) as isize;
            taps.iter()
                .enumerate()
                .filter_map(|(i, h)| {
                    let idx = center + i as isize - half;
                    (idx >= 0 && (idx as usize) < signal.len()).then(|| h * signal[idx as usize])
                })
                .sum()
        })
        .collect()
}

/// One-shot transform; build a [`CqtPlan`] when transforming many buffers.
pub fn cqt(audio: &AudioBuffer, params: &CqtParams) -> Result<CqtSpectrogram> {
    CqtPlan::new(*params, audio.sample_rate)?.transform(audio)
}

/// Translates every column along the bin axis by `cents`, linearly
/// interpolating fractional bins and zero-filling vacated edges.
pub fn shift_cqt_bins(spec: &CqtSpectrogram, cents: f64) -> Result<CqtSpectrogram> {
    let limit = spec.params.buffer_bins as f64 * spec.params.cents_per_bin();
    if !cents.is_finite() || cents.abs() > limit + 1e-9 {
        return Err(Error::Range(format!(
            "shift of {cents} cents exceeds the {limit}-cent buffer"
        )));
    }
    let mut out = spec.clone();
    shift_columns(
        spec,
        &mut out,
        0..spec.frames,
        cents / spec.params.cents_per_bin(),
    );
    Ok(out)
}

/// Writes the shifted version of `src` columns `range` into `dst`.
pub(crate) fn shift_columns(
    src: &CqtSpectrogram,
    dst: &mut CqtSpectrogram,
    range: std::ops::Range<usize>,
    shift_bins: f64,
) {
    let floor = shift_bins.floor();
    let frac = (shift_bins - floor) as f32;
    let whole = floor as isize;
    let bins = src.bins as isize;
    for b in 0..bins {
        // out[b] = in(b - shift) = (1 - frac) * in[b - whole] + frac * in[b - whole - 1]
        let i0 = b - whole;
        let i1 = i0 - 1;
        let w0 = 1.0 - frac;
        for t in range.clone() {
            let mut v = 0.0f32;
            if (0..bins).contains(&i0) && w0 != 0.0 {
                v += w0 * src.get(i0 as usize, t);
            }
            if (0..bins).contains(&i1) && frac != 0.0 {
                v += frac * src.get(i1 as usize, t);
            }
            dst.set(b as usize, t, v);
        }
    }
}

/// Drops the top and bottom buffer bins.
pub fn truncate_buffer(spec: &CqtSpectrogram) -> Result<CqtSpectrogram> {
    let total = spec.params.total_bins();
    if spec.bins != total {
        return Err(Error::Shape(format!(
            "truncate_buffer expects {total} bins, got {}",
            spec.bins
        )));
    }
    let lo = spec.params.buffer_bins;
    let hi = total - lo;
    let mag = spec.mag[lo * spec.frames..hi * spec.frames].to_vec();
    Ok(CqtSpectrogram {
        mag,
        bins: hi - lo,
        frames: spec.frames,
        params: spec.params,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    pub bits: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl BinaryMatrix {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.cols + col]
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn popcount_columns(&self, range: std::ops::Range<usize>) -> usize {
        (0..self.rows)
            .map(|r| {
                range
                    .clone()
                    .map(|c| self.get(r, c) as usize)
                    .sum::<usize>()
            })
            .sum()
    }
}

/// 1 where the magnitude is strictly above the spectrogram-wide mean.
pub fn binarize_mean_threshold(spec: &CqtSpectrogram) -> BinaryMatrix {
    let mean = if spec.mag.is_empty() {
        0.0
    } else {
        spec.mag.iter().map(|&v| v as f64).sum::<f64>() / spec.mag.len() as f64
    };
    BinaryMatrix {
        bits: spec
            .mag
            .iter()
            .map(|&v| u8::from(v as f64 > mean))
            .collect(),
        rows: spec.bins,
        cols: spec.frames,
    }
}

/// Elementwise exclusive-or.
pub fn disagreement(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<BinaryMatrix> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::Shape(format!(
            "disagreement of {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(BinaryMatrix {
        bits: a.bits.iter().zip(&b.bits).map(|(x, y)| x ^ y).collect(),
        rows: a.rows,
        cols: a.cols,
    })
}
