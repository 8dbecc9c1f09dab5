//! Clamped L1 objective with exact subgradients, and Adam.

use rayon::prelude::*;

use super::network::{input_rows, Mlp, Real};
use super::SdfSample;

/// Rows per independent forward/backward chunk. Chunk results are summed in
/// order, so gradients do not depend on the thread count.
pub const LOSS_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub loss: f64,
    /// Mean clamped residual, without the latent penalty.
    pub data_loss: f64,
    pub grad_params: Option<Vec<T>>,
    pub grad_z: Vec<T>,
}

fn clamp(v: f64, delta: f64) -> f64 {
    v.clamp(-delta, delta)
}

/// `mean |clamp(f(x_i), ±δ) - clamp(s_i, ±δ)| + λ‖z‖²` and its gradients.
///
/// The clamp has derivative 1 strictly inside `(-δ, δ)` and 0 elsewhere;
/// the absolute value uses `sign(0) = 0`.
pub fn loss_and_gradients<T: Real>(
    net: &Mlp<T>,
    z: &[T],
    samples: &[SdfSample],
    delta: f64,
    lambda: f64,
    want_params: bool,
) -> LossOutput<T> {
    let d = z.len();
    assert_eq!(d, net.latent_dim());
    let n = samples.len();
    let inv_n = if n > 0 { 1.0 / n as f64 } else { 0.0 };

    let chunks: Vec<(f64, Option<Vec<T>>, Vec<T>)> = samples
        .par_chunks(LOSS_CHUNK)
        .map(|chunk| {
            let positions: Vec<[f64; 3]> = chunk
                .iter()
                .map(|s| [s.position.x, s.position.y, s.position.z])
                .collect();
            let rows = chunk.len();
            let input = input_rows(z, &positions);
            let cache = net.forward_cached(&input, rows);
            let mut sum = 0.0;
            let d_out: Vec<T> = cache
                .outputs
                .iter()
                .zip(chunk)
                .map(|(&f, s)| {
                    let f = f.to_f64().unwrap();
                    let r = clamp(f, delta) - clamp(s.sdf, delta);
                    sum += r.abs();
                    let active = f.abs() < delta;
                    let g = if active && r != 0.0 { r.signum() * inv_n } else { 0.0 };
                    T::from_f64(g).unwrap()
                })
                .collect();
            let mut gp = want_params.then(|| vec![T::zero(); net.param_count()]);
            let d_in = net.backward(&cache, &d_out, gp.as_deref_mut());
            let mut gz = vec![T::zero(); d];
            let width = d + 3;
            for r in 0..rows {
                for (acc, &v) in gz.iter_mut().zip(&d_in[r * width..r * width + d]) {
                    *acc += v;
                }
            }
            (sum, gp, gz)
        })
        .collect();

    let mut data = 0.0;
    let mut grad_params = want_params.then(|| vec![T::zero(); net.param_count()]);
    let mut grad_z = vec![T::zero(); d];
    for (sum, gp, gz) in chunks {
        data += sum;
        if let (Some(acc), Some(gp)) = (grad_params.as_mut(), gp) {
            for (a, v) in acc.iter_mut().zip(gp) {
                *a += v;
            }
        }
        for (a, v) in grad_z.iter_mut().zip(gz) {
            *a += v;
        }
    }
    let data_loss = data * inv_n;
    let two_lambda = T::from_f64(2.0 * lambda).unwrap();
    let mut z_sq = 0.0;
    for (g, &zi) in grad_z.iter_mut().zip(z) {
        let zf = zi.to_f64().unwrap();
        z_sq += zf * zf;
        *g += two_lambda * zi;
    }
    LossOutput {
        loss: data_loss + lambda * z_sq,
        data_loss,
        grad_params,
        grad_z,
    }
}

/// Adaptive moment estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<T>,
    v: Vec<T>,
    steps: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            steps: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.steps += 1;
        let c = |v: f64| T::from_f64(v).unwrap();
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let one = T::one();
        let bc1 = c(1.0 - self.beta1.powi(self.steps));
        let bc2 = c(1.0 - self.beta2.powi(self.steps));
        let lr = c(self.learning_rate);
        let eps = c(self.epsilon);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            if self.learning_rate != 0.0 {
                params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
