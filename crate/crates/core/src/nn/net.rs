use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::conv::{Conv2d, ConvSpec, Volume};
use super::gru::{Gru, GruTrace};
use super::real::Real;
use crate::error::{Error, Result};
use crate::features::{ModelInput, CHANNELS};

pub const INPUT_BINS: usize = 1024;
pub const GRU_HIDDEN: usize = 64;
/// Shortest note the Table-1 stack accepts.
pub const MIN_NOTE_FRAMES: usize = 8;

pub const TABLE1: [ConvSpec; 6] = [
    ConvSpec::new(CHANNELS, 128, (5, 5), (1, 2), (2, 2)),
    ConvSpec::new(128, 64, (5, 5), (1, 2), (2, 2)),
    ConvSpec::new(64, 64, (3, 3), (2, 2), (1, 1)),
    ConvSpec::new(64, 64, (3, 3), (1, 1), (1, 1)),
    ConvSpec::new(64, 8, (48, 1), (1, 1), (24, 1)),
    ConvSpec::new(8, 1, (1, 1), (1, 1), (0, 0)),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArch {
    pub input_bins: usize,
    pub convs: Vec<ConvSpec>,
    pub hidden: usize,
    pub min_frames: usize,
}

impl NetArch {
    pub fn table1() -> Self {
        Self {
            input_bins: INPUT_BINS,
            convs: TABLE1.to_vec(),
            hidden: GRU_HIDDEN,
            min_frames: MIN_NOTE_FRAMES,
        }
    }

    pub fn is_table1(&self) -> bool {
        *self == Self::table1()
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.convs.first() else {
            return Err(Error::Shape("architecture has no conv layers".into()));
        };
        if first.in_channels != CHANNELS {
            return Err(Error::Shape(format!(
                "first conv must take {CHANNELS} channels"
            )));
        }
        for pair in self.convs.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::Shape("conv channel chain is broken".into()));
            }
        }
        if self
            .convs
            .iter()
            .any(|c| c.stride.0 == 0 || c.stride.1 == 0)
        {
            return Err(Error::Shape("zero stride".into()));
        }
        if self.hidden == 0 || self.min_frames == 0 {
            return Err(Error::Shape(
                "hidden size and minimum frames must be positive".into(),
            ));
        }
        self.output_shape(self.min_frames)
            .map(|_| ())
            .ok_or_else(|| Error::Shape("stack does not fit the minimum note length".into()))
    }

    /// `(channels, freq, time)` after the conv stack for a `frames`-long note.
    pub fn output_shape(&self, frames: usize) -> Option<(usize, usize, usize)> {
        let (mut f, mut t) = (self.input_bins, frames);
        for c in &self.convs {
            (f, t) = c.output_dims(f, t)?;
        }
        Some((self.convs.last()?.out_channels, f, t))
    }

    pub fn gru_input(&self) -> usize {
        self.output_shape(self.min_frames)
            .map(|(c, f, _)| c * f)
            .unwrap_or(0)
    }
}

/// The six-conv, GRU, dense regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct AutotunerNet<T> {
    pub arch: NetArch,
    pub convs: Vec<Conv2d<T>>,
    pub gru: Gru<T>,
    pub dense_w: Vec<T>,
    pub dense_b: Vec<T>,
}

/// Gradients aligned with [`AutotunerNet::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T>(pub Vec<Vec<T>>);

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &AutotunerNet<T>) -> Self {
        Self(
            net.params()
                .iter()
                .map(|p| vec![T::zero(); p.len()])
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn scale(&mut self, s: T) {
        self.0.iter_mut().flatten().for_each(|x| *x *= s);
    }

    pub fn global_norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|x| x.to_f64().unwrap().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Activations from a forward pass, consumed by [`AutotunerNet::backward`].
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// Input to each conv layer.
    acts: Vec<Volume<T>>,
    conv_out: (usize, usize, usize),
    gru: GruTrace<T>,
    pub output: T,
    pub hidden: Vec<T>,
}

impl<T: Real> AutotunerNet<T> {
    pub fn zeros(arch: NetArch) -> Result<Self> {
        arch.validate()?;
        let convs = arch.convs.iter().map(|&s| Conv2d::zeros(s)).collect();
        let gru = Gru::zeros(arch.gru_input(), arch.hidden);
        let dense_w = vec![T::zero(); arch.hidden];
        Ok(Self {
            arch,
            convs,
            gru,
            dense_w,
            dense_b: vec![T::zero()],
        })
    }

    /// He-normal conv and dense weights, zero biases, GRU weights uniform in
    /// `±1/sqrt(hidden)`.
    pub fn he_init<R: Rng + ?Sized>(arch: NetArch, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        for conv in &mut net.convs {
            fill_normal(
                &mut conv.weight,
                (2.0 / conv.spec.fan_in() as f64).sqrt(),
                rng,
            );
        }
        let bound = 1.0 / (net.arch.hidden as f64).sqrt();
        let uniform = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        for v in net.gru.w.iter_mut().chain(net.gru.u.iter_mut()) {
            *v = T::lit(uniform.sample(rng));
        }
        fill_normal(&mut net.dense_w, (2.0 / net.arch.hidden as f64).sqrt(), rng);
        Ok(net)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 1..=self.convs.len() {
            names.push(format!("conv{i}.weight"));
            names.push(format!("conv{i}.bias"));
        }
        names.extend(["gru.w", "gru.u", "gru.b", "dense.weight", "dense.bias"].map(String::from));
        names
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        out.extend([
            &self.gru.w[..],
            &self.gru.u,
            &self.gru.b,
            &self.dense_w,
            &self.dense_b,
        ]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.extend([
            &mut self.gru.w[..],
            &mut self.gru.u,
            &mut self.gru.b,
            &mut self.dense_w,
            &mut self.dense_b,
        ]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> AutotunerNet<U> {
        let cv = |v: &[T]| {
            v.iter()
                .map(|x| U::lit(x.to_f64().unwrap()))
                .collect::<Vec<U>>()
        };
        AutotunerNet {
            arch: self.arch.clone(),
            convs: self
                .convs
                .iter()
                .map(|c| Conv2d {
                    spec: c.spec,
                    weight: cv(&c.weight),
                    bias: cv(&c.bias),
                })
                .collect(),
            gru: Gru {
                input: self.gru.input,
                hidden: self.gru.hidden,
                w: cv(&self.gru.w),
                u: cv(&self.gru.u),
                b: cv(&self.gru.b),
            },
            dense_w: cv(&self.dense_w),
            dense_b: cv(&self.dense_b),
        }
    }

    pub fn volume_from_input(input: &ModelInput) -> Result<Volume<T>> {
        let data: Vec<T> = input.data.iter().map(|&v| T::lit(v as f64)).collect();
        Volume::from_freq_major(&data, CHANNELS, input.bins, input.frames)
    }

    fn check_input(&self, x: &Volume<T>, h0: &[T]) -> Result<()> {
        if x.channels != CHANNELS || x.freq != self.arch.input_bins {
            return Err(Error::Shape(format!(
                "net expects {CHANNELS}x{}xT input, got {:?}",
                self.arch.input_bins,
                x.shape()
            )));
        }
        if x.time < self.arch.min_frames || self.arch.output_shape(x.time).is_none() {
            return Err(Error::DegenerateNote {
                frames: x.time,
                min: self.arch.min_frames,
            });
        }
        if h0.len() != self.arch.hidden {
            return Err(Error::Shape(format!(
                "hidden state has {} entries, expected {}",
                h0.len(),
                self.arch.hidden
            )));
        }
        if h0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite initial hidden state".into()));
        }
        Ok(())
    }

    fn run(&self, x: &Volume<T>, h0: &[T], keep: bool) -> Result<Trace<T>> {
        self.check_input(x, h0)?;
        let mut acts = Vec::new();
        let mut cur = self.convs[0].forward(x)?;
        if keep {
            acts.push(x.clone());
        }
        for conv in &self.convs[1..] {
            relu(&mut cur.data);
            let next = conv.forward(&cur)?;
            if keep {
                acts.push(std::mem::replace(&mut cur, next));
            } else {
                cur = next;
            }
        }
        let conv_out = cur.shape();
        let seq = to_sequence(&cur);
        let gru = self.gru.forward(&seq, conv_out.2, h0)?;
        let hidden = gru.last(self.arch.hidden).to_vec();
        let output = self.dense_b[0]
            + self
                .dense_w
                .iter()
                .zip(&hidden)
                .map(|(w, h)| *w * *h)
                .sum::<T>();
        if !output.is_finite() {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        Ok(Trace {
            acts,
            conv_out,
            gru,
            output,
            hidden,
        })
    }

    /// Predicted shift in semitones and the final hidden state.
    pub fn forward(&self, x: &Volume<T>, h0: &[T]) -> Result<(T, Vec<T>)> {
        let trace = self.run(x, h0, false)?;
        Ok((trace.output, trace.hidden))
    }

    pub fn forward_trace(&self, x: &Volume<T>, h0: &[T]) -> Result<Trace<T>> {
        self.run(x, h0, true)
    }

    pub fn predict(&self, input: &ModelInput, h0: &[T]) -> Result<(T, Vec<T>)> {
        self.forward(&Self::volume_from_input(input)?, h0)
    }

    /// Parameter gradients for `d loss / d output = grad_output`. The initial
    /// hidden state is treated as a constant.
    pub fn backward(&self, trace: &Trace<T>, grad_output: T) -> Result<Gradients<T>> {
        if trace.acts.len() != self.convs.len() {
            return Err(Error::State(
                "trace was recorded without activations".into(),
            ));
        }
        let n = self.convs.len();
        let mut grads: Vec<Vec<T>> = Vec::with_capacity(2 * n + 5);
        let dense_w: Vec<T> = trace.hidden.iter().map(|h| *h * grad_output).collect();
        let dense_b = vec![grad_output];
        let d_hidden: Vec<T> = self.dense_w.iter().map(|w| *w * grad_output).collect();
        let g = self.gru.backward(&trace.gru, &d_hidden)?;
        let (c, f, t) = trace.conv_out;
        let mut d_cur = Volume::new(from_sequence(&g.xs, c, f, t), c, f, t)?;
        let mut conv_grads = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let input = &trace.acts[i];
            let cg = self.convs[i].backward(input, &d_cur, i > 0)?;
            conv_grads.push((cg.weight, cg.bias));
            if let Some(mut dx) = cg.input {
                // Layer i's input is relu(conv_{i-1}), so mask by its sign.
                for (d, a) in dx.data.iter_mut().zip(&input.data) {
                    if *a <= T::zero() {
                        *d = T::zero();
                    }
                }
                d_cur = dx;
            }
        }
        for (w, b) in conv_grads.into_iter().rev() {
            grads.push(w);
            grads.push(b);
        }
        grads.extend([g.w, g.u, g.b, dense_w, dense_b]);
        Ok(Gradients(grads))
    }
}

fn fill_normal<T: Real, R: Rng + ?Sized>(dst: &mut [T], std: f64, rng: &mut R) {
    let normal = Normal::new(0.0, std).expect("finite std");
    dst.iter_mut().for_each(|v| *v = T::lit(normal.sample(rng)));
}

/// Initial GRU state for the first note of a song: `N(0, 1e-4^2)` entries.
pub fn gru_hidden_init<T: Real, R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Vec<T> {
    let mut h = vec![T::zero(); hidden];
    fill_normal(&mut h, 1e-4, rng);
    h
}

fn relu<T: Real>(v: &mut [T]) {
    v.iter_mut().for_each(|x| {
        if *x < T::zero() {
            *x = T::zero();
        }
    });
}

/// `(c, f, t)` volume to `[t][c * f]` rows.
fn to_sequence<T: Real>(v: &Volume<T>) -> Vec<T> {
    let (c, f, t) = v.shape();
    let mut out = vec![T::zero(); c * f * t];
    for ch in 0..c {
        for step in 0..t {
            out[step * c * f + ch * f..][..f].copy_from_slice(&v.data[(ch * t + step) * f..][..f]);
        }
    }
    out
}

fn from_sequence<T: Real>(seq: &[T], c: usize, f: usize, t: usize) -> Vec<T> {
    let mut out = vec![T::zero(); c * f * t];
    for ch in 0..c {
        for step in 0..t {
            out[(ch * t + step) * f..][..f].copy_from_slice(&seq[step * c * f + ch * f..][..f]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table1_shape_chain() {
        let arch = NetArch::table1();
        assert_eq!(arch.output_shape(100), Some((1, 513, 15)));
        assert_eq!(arch.gru_input(), 513);
        for t in 8..200 {
            let (c, f, tp) = arch.output_shape(t).unwrap();
            let t1 = (t - 1) / 2 + 1;
            let t2 = (t1 - 1) / 2 + 1;
            let t3 = (t2 - 1) / 2 + 1;
            assert_eq!((c, f, tp), (1, 513, t3 + 2));
        }
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = AutotunerNet::<f32>::zeros(NetArch::table1()).unwrap();
        let x = Volume::new(vec![0.5; 3 * 1024 * 8], 3, 1024, 8).unwrap();
        let (y, h) = net.forward(&x, &[0.0; 64]).unwrap();
        assert_eq!(y, 0.0);
        assert_eq!(h.len(), 64);
    }

    #[test]
    fn short_note_is_degenerate() {
        let net = AutotunerNet::<f32>::zeros(NetArch::table1()).unwrap();
        let x = Volume::zeros(3, 1024, 7);
        assert!(matches!(
            net.forward(&x, &[0.0; 64]),
            Err(Error::DegenerateNote { frames: 7, min: 8 })
        ));
    }

    #[test]
    fn wrong_bin_count_is_shape_error() {
        let net = AutotunerNet::<f32>::zeros(NetArch::table1()).unwrap();
        assert!(matches!(
            net.forward(&Volume::zeros(3, 1056, 10), &[0.0; 64]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn params_and_names_align() {
        let net = AutotunerNet::<f32>::zeros(NetArch::table1()).unwrap();
        assert_eq!(net.params().len(), net.param_names().len());
        assert_eq!(net.params()[0].len(), 128 * 3 * 25);
        assert_eq!(net.gru.w.len(), 3 * 64 * 513);
    }

    #[test]
    fn he_init_matches_fan_in_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = AutotunerNet::<f64>::he_init(NetArch::table1(), &mut rng).unwrap();
        let w = &net.convs[2].weight[..10_000];
        let std = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
        let want = (2.0f64 / 576.0).sqrt();
        assert!((std / want - 1.0).abs() < 0.05, "std {std} vs {want}");
        assert!(net.convs.iter().all(|c| c.bias.iter().all(|&b| b == 0.0)));
        let again =
            AutotunerNet::<f64>::he_init(NetArch::table1(), &mut ChaCha8Rng::seed_from_u64(11))
                .unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn hidden_init_has_tiny_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h: Vec<f64> = gru_hidden_init(10_000, &mut rng);
        let std = (h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64).sqrt();
        assert!((std / 1e-4 - 1.0).abs() < 0.2);
    }

    #[test]
    fn sequence_layout_round_trips() {
        // Value 100c + 10f + t at logical (c, f, t).
        let fm: Vec<f64> = (0..2)
            .flat_map(|c| {
                (0..3).flat_map(move |f| (0..4).map(move |t| (100 * c + 10 * f + t) as f64))
            })
            .collect();
        let v = Volume::from_freq_major(&fm, 2, 3, 4).unwrap();
        assert_eq!(v.get(1, 2, 3), 123.0);
        let seq = to_sequence(&v);
        assert_eq!(&seq[6..12], &[1.0, 11.0, 21.0, 101.0, 111.0, 121.0]);
        assert_eq!(from_sequence(&seq, 2, 3, 4), v.data);
    }
}
