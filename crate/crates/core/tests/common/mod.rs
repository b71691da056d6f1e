//! Central finite-difference oracles shared by the gradient and acceptance
//! tests. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
#![allow(dead_code)]

use autotune::nn::{mse_loss, AutotunerNet, Conv2d, ConvSpec, Gru, NetArch, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Max relative error of `analytic` against central differences of `f`
/// with respect to each entry of `x`.
fn compare(x: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + H;
        let up = f(x);
        x[i] = orig - H;
        let down = f(x);
        x[i] = orig;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * H)));
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conv layer against `L = <G, conv(x)>` for a random upstream `G`.
pub fn conv_check(seed: u64, spec: ConvSpec, freq: usize, time: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = Conv2d::<f64>::zeros(spec);
    conv.weight = uniform(&mut rng, conv.weight.len(), 1.0);
    conv.bias = uniform(&mut rng, conv.bias.len(), 1.0);
    let x = Volume::new(
        uniform(&mut rng, spec.in_channels * freq * time, 1.0),
        spec.in_channels,
        freq,
        time,
    )
    .unwrap();
    let y = conv.forward(&x).unwrap();
    let g = Volume::new(
        uniform(&mut rng, y.data.len(), 1.0),
        y.channels,
        y.freq,
        y.time,
    )
    .unwrap();
    let grads = conv.backward(&x, &g, true).unwrap();
    let obj = |c: &Conv2d<f64>, x: &Volume<f64>| dot(&c.forward(x).unwrap().data, &g.data);

    let mut w = conv.weight.clone();
    let e_w = compare(&mut w, &grads.weight, |w| {
        let mut c = conv.clone();
        c.weight = w.to_vec();
        obj(&c, &x)
    });
    let mut b = conv.bias.clone();
    let e_b = compare(&mut b, &grads.bias, |b| {
        let mut c = conv.clone();
        c.bias = b.to_vec();
        obj(&c, &x)
    });
    let mut xd = x.data.clone();
    let e_x = compare(&mut xd, &grads.input.unwrap().data, |d| {
        obj(
            &conv,
            &Volume::new(d.to_vec(), x.channels, x.freq, x.time).unwrap(),
        )
    });
    e_w.max(e_b).max(e_x)
}

/// GRU over `steps` inputs against `L = <g, h_T>`.
pub fn gru_check(seed: u64, n_in: usize, n_h: usize, steps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gru = Gru::<f64>::zeros(n_in, n_h);
    gru.w = uniform(&mut rng, gru.w.len(), 0.8);
    gru.u = uniform(&mut rng, gru.u.len(), 0.8);
    gru.b = uniform(&mut rng, gru.b.len(), 0.5);
    let xs = uniform(&mut rng, steps * n_in, 1.0);
    let h0 = uniform(&mut rng, n_h, 0.9);
    let g = uniform(&mut rng, n_h, 1.0);
    let trace = gru.forward(&xs, steps, &h0).unwrap();
    let grads = gru.backward(&trace, &g).unwrap();
    let obj = |gru: &Gru<f64>, xs: &[f64], h0: &[f64]| {
        dot(gru.forward(xs, steps, h0).unwrap().last(n_h), &g)
    };

    let mut errs = Vec::new();
    for (k, analytic) in [&grads.w, &grads.u, &grads.b].into_iter().enumerate() {
        let mut p = [&gru.w, &gru.u, &gru.b][k].clone();
        errs.push(compare(&mut p, analytic, |p| {
            let mut c = gru.clone();
            *[&mut c.w, &mut c.u, &mut c.b][k] = p.to_vec();
            obj(&c, &xs, &h0)
        }));
    }
    let mut xd = xs.clone();
    errs.push(compare(&mut xd, &grads.xs, |x| obj(&gru, x, &h0)));
    let mut hd = h0.clone();
    errs.push(compare(&mut hd, &grads.h0, |h| obj(&gru, &xs, h)));
    errs.into_iter().fold(0.0, f64::max)
}

/// MSE gradient against central differences.
pub fn loss_check(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut preds = uniform(&mut rng, n, 1.5);
    let targets = uniform(&mut rng, n, 1.0);
    let (_, grad) = mse_loss(&preds, &targets).unwrap();
    compare(&mut preds, &grad, |p| mse_loss(p, &targets).unwrap().0)
}

/// Table-1 layer geometry with narrow channels on an 8-bin input.
pub fn tiny_arch() -> NetArch {
    let mut arch = NetArch::table1();
    arch.input_bins = 8;
    let widths = [3, 4, 3, 3, 3, 2, 1];
    for (i, c) in arch.convs.iter_mut().enumerate() {
        c.in_channels = widths[i];
        c.out_channels = widths[i + 1];
    }
    arch.hidden = 4;
    arch
}

/// Per-group max relative error `(conv, gru, dense)` of the summed squared-error
/// loss over two consecutive notes, with the hidden state carried from the
/// first note as a constant into the second.
pub fn net_check(seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = tiny_arch();
    let mut net = AutotunerNet::<f64>::he_init(arch.clone(), &mut rng).unwrap();
    for b in net.convs.iter_mut().flat_map(|c| c.bias.iter_mut()) {
        *b = rng.random_range(-0.1..0.1);
    }
    net.dense_b[0] = 0.05;
    let notes: Vec<Volume<f64>> = [9usize, 12]
        .iter()
        .map(|&t| {
            Volume::new(
                uniform(&mut rng, 3 * 8 * t, 1.0)
                    .iter()
                    .map(|v| v.abs())
                    .collect(),
                3,
                8,
                t,
            )
            .unwrap()
        })
        .collect();
    let targets = [0.4, -0.6];
    let h_init = uniform(&mut rng, arch.hidden, 0.1);
    let h_second = net.forward(&notes[0], &h_init).unwrap().1;
    let starts = [h_init.clone(), h_second.clone()];

    let mut grads = autotune::nn::Gradients::zeros_like(&net);
    for (i, x) in notes.iter().enumerate() {
        let trace = net.forward_trace(x, &starts[i]).unwrap();
        let (_, d) = mse_loss(&[trace.output], &[targets[i]]).unwrap();
        grads.add_assign(&net.backward(&trace, d[0]).unwrap());
    }
    let loss = |n: &AutotunerNet<f64>| -> f64 {
        notes
            .iter()
            .enumerate()
            .map(|(i, x)| {
                mse_loss(&[n.forward(x, &starts[i]).unwrap().0], &[targets[i]])
                    .unwrap()
                    .0
            })
            .sum()
    };

    let n_conv = 2 * net.convs.len();
    let mut errs = [0.0f64; 3];
    for k in 0..net.params().len() {
        let mut p = net.params()[k].to_vec();
        let e = compare(&mut p, &grads.0[k], |p| {
            let mut m = net.clone();
            m.params_mut()[k].copy_from_slice(p);
            loss(&m)
        });
        let group = if k < n_conv {
            0
        } else if k < n_conv + 3 {
            1
        } else {
            2
        };
        errs[group] = errs[group].max(e);
    }
    (errs[0], errs[1], errs[2])
}
