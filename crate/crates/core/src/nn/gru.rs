//! Unidirectional GRU with `h' = (1 - z) * h + z * tanh(W_h x + U_h (r * h) + b_h)`.

use super::real::Real;
use crate::error::{Error, Result};

/// Gate blocks are stacked in the order z, r, h.
#[derive(Debug, Clone, PartialEq)]
pub struct Gru<T> {
    pub input: usize,
    pub hidden: usize,
    /// `[3 * hidden][input]`
    pub w: Vec<T>,
    /// `[3 * hidden][hidden]`
    pub u: Vec<T>,
    /// `[3 * hidden]`
    pub b: Vec<T>,
}

/// Activations kept from a forward pass over a sequence.
#[derive(Debug, Clone)]
pub struct GruTrace<T> {
    pub steps: usize,
    /// `[steps][input]`
    xs: Vec<T>,
    /// `[steps + 1][hidden]`; row 0 is the initial state.
    hs: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    c: Vec<T>,
}

impl<T: Real> GruTrace<T> {
    pub fn last(&self, hidden: usize) -> &[T] {
        &self.hs[self.steps * hidden..]
    }

    pub fn states(&self) -> &[T] {
        &self.hs
    }
}

#[derive(Debug, Clone)]
pub struct GruGrads<T> {
    pub w: Vec<T>,
    pub u: Vec<T>,
    pub b: Vec<T>,
    pub xs: Vec<T>,
    pub h0: Vec<T>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Gru<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w: vec![T::zero(); 3 * hidden * input],
            u: vec![T::zero(); 3 * hidden * hidden],
            b: vec![T::zero(); 3 * hidden],
        }
    }

    pub fn step(&self, x: &[T], h_prev: &[T]) -> Result<Vec<T>> {
        let trace = self.forward(x, 1, h_prev)?;
        Ok(trace.last(self.hidden).to_vec())
    }

    /// Runs `steps` inputs laid out as `[steps][input]` from `h0`.
    pub fn forward(&self, xs: &[T], steps: usize, h0: &[T]) -> Result<GruTrace<T>> {
        let (n_in, n_h) = (self.input, self.hidden);
        if xs.len() != steps * n_in {
            return Err(Error::Shape(format!(
                "GRU expects {steps}x{n_in} inputs, got {} values",
                xs.len()
            )));
        }
        if h0.len() != n_h {
            return Err(Error::Shape(format!(
                "GRU hidden state has {} entries, expected {n_h}",
                h0.len()
            )));
        }
        let g = 3 * n_h;
        let mut pre = vec![T::zero(); steps * g];
        T::gemm(
            false,
            true,
            steps,
            g,
            n_in,
            T::one(),
            xs,
            &self.w,
            T::zero(),
            &mut pre,
            g,
        );
        let mut hs = Vec::with_capacity((steps + 1) * n_h);
        hs.extend_from_slice(h0);
        let mut z = vec![T::zero(); steps * n_h];
        let mut r = vec![T::zero(); steps * n_h];
        let mut c = vec![T::zero(); steps * n_h];
        let mut rh = vec![T::zero(); n_h];
        for t in 0..steps {
            let h = hs[t * n_h..(t + 1) * n_h].to_vec();
            let p = &pre[t * g..(t + 1) * g];
            for i in 0..n_h {
                let uz: T = (0..n_h).map(|j| self.u[i * n_h + j] * h[j]).sum();
                let ur: T = (0..n_h).map(|j| self.u[(n_h + i) * n_h + j] * h[j]).sum();
                z[t * n_h + i] = sigmoid(p[i] + uz + self.b[i]);
                r[t * n_h + i] = sigmoid(p[n_h + i] + ur + self.b[n_h + i]);
            }
            for j in 0..n_h {
                rh[j] = r[t * n_h + j] * h[j];
            }
            for i in 0..n_h {
                let uh: T = (0..n_h)
                    .map(|j| self.u[(2 * n_h + i) * n_h + j] * rh[j])
                    .sum();
                let cand = (p[2 * n_h + i] + uh + self.b[2 * n_h + i]).tanh();
                c[t * n_h + i] = cand;
                let zi = z[t * n_h + i];
                hs.push((T::one() - zi) * h[i] + zi * cand);
            }
        }
        if hs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite GRU state".into()));
        }
        Ok(GruTrace {
            steps,
            xs: xs.to_vec(),
            hs,
            z,
            r,
            c,
        })
    }

    /// Backpropagates a gradient on the final hidden state through the sequence.
    pub fn backward(&self, trace: &GruTrace<T>, grad_last: &[T]) -> Result<GruGrads<T>> {
        let (n_in, n_h, steps) = (self.input, self.hidden, trace.steps);
        if grad_last.len() != n_h {
            return Err(Error::Shape(format!(
                "GRU output gradient has {} entries, expected {n_h}",
                grad_last.len()
            )));
        }
        let g = 3 * n_h;
        let mut u = vec![T::zero(); g * n_h];
        let mut b = vec![T::zero(); g];
        let mut da = vec![T::zero(); steps * g];
        let mut dh = grad_last.to_vec();
        let mut d_rh = vec![T::zero(); n_h];
        for t in (0..steps).rev() {
            let h = &trace.hs[t * n_h..(t + 1) * n_h];
            let z = &trace.z[t * n_h..(t + 1) * n_h];
            let r = &trace.r[t * n_h..(t + 1) * n_h];
            let c = &trace.c[t * n_h..(t + 1) * n_h];
            let (da_z, rest) = da[t * g..(t + 1) * g].split_at_mut(n_h);
            let (da_r, da_h) = rest.split_at_mut(n_h);
            let mut dh_prev = vec![T::zero(); n_h];
            for i in 0..n_h {
                let dz = dh[i] * (c[i] - h[i]);
                da_z[i] = dz * z[i] * (T::one() - z[i]);
                da_h[i] = dh[i] * z[i] * (T::one() - c[i] * c[i]);
                dh_prev[i] = dh[i] * (T::one() - z[i]);
            }
            for (j, d) in d_rh.iter_mut().enumerate() {
                *d = (0..n_h)
                    .map(|i| self.u[(2 * n_h + i) * n_h + j] * da_h[i])
                    .sum();
            }
            for j in 0..n_h {
                da_r[j] = d_rh[j] * h[j] * r[j] * (T::one() - r[j]);
                dh_prev[j] += d_rh[j] * r[j];
            }
            for i in 0..n_h {
                for j in 0..n_h {
                    u[i * n_h + j] += da_z[i] * h[j];
                    u[(n_h + i) * n_h + j] += da_r[i] * h[j];
                    u[(2 * n_h + i) * n_h + j] += da_h[i] * r[j] * h[j];
                    dh_prev[j] +=
                        self.u[i * n_h + j] * da_z[i] + self.u[(n_h + i) * n_h + j] * da_r[i];
                }
            }
            for k in 0..g {
                b[k] += da[t * g + k];
            }
            dh = dh_prev;
        }
        let mut w = vec![T::zero(); g * n_in];
        T::gemm(
            true,
            false,
            g,
            n_in,
            steps,
            T::one(),
            &da,
            &trace.xs,
            T::zero(),
            &mut w,
            n_in,
        );
        let mut xs = vec![T::zero(); steps * n_in];
        T::gemm(
            false,
            false,
            steps,
            n_in,
            g,
            T::one(),
            &da,
            &self.w,
            T::zero(),
            &mut xs,
            n_in,
        );
        Ok(GruGrads {
            w,
            u,
            b,
            xs,
            h0: dh,
        })
    }
}
