//! The latent-conditioned MLP and its hand-written backward pass.
//!
//! Parameters live in one flat buffer. Layer `l` owns a row-major
//! `fan_out × fan_in` weight block followed by `fan_out` biases. Input rows are
//! `[z_0 .. z_{d-1}, x, y, z]`.

use std::fmt::Debug;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Floating-point types the network can run in.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + Default + Debug + Send + Sync + 'static
{
    /// `C ← α·A·B + β·C` with arbitrary strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m×k`, `k×n` and `m×n` matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// `out (m×n) = a (m×k) · wᵀ` where `w` is `n×k` row-major; `beta` scales `out`.
fn matmul_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], w: &[T], beta: T, out: &mut [T]) {
    assert!(a.len() >= m * k && w.len() >= n * k && out.len() >= m * n);
    unsafe {
        T::gemm_raw(
            m, k, n, T::one(), a.as_ptr(), k as isize, 1, w.as_ptr(), 1, k as isize, beta,
            out.as_mut_ptr(), n as isize, 1,
        )
    }
}

/// `out (n×k) += gᵀ · a` where `g` is `m×n` and `a` is `m×k`.
fn matmul_tn_acc<T: Real>(m: usize, n: usize, k: usize, g: &[T], a: &[T], out: &mut [T]) {
    assert!(g.len() >= m * n && a.len() >= m * k && out.len() >= n * k);
    unsafe {
        T::gemm_raw(
            n, m, k, T::one(), g.as_ptr(), 1, n as isize, a.as_ptr(), k as isize, 1, T::one(),
            out.as_mut_ptr(), k as isize, 1,
        )
    }
}

/// `out (m×k) = g (m×n) · w (n×k)`.
fn matmul_nn<T: Real>(m: usize, n: usize, k: usize, g: &[T], w: &[T], out: &mut [T]) {
    assert!(g.len() >= m * n && w.len() >= n * k && out.len() >= m * k);
    unsafe {
        T::gemm_raw(
            m, n, k, T::one(), g.as_ptr(), n as isize, 1, w.as_ptr(), k as isize, 1, T::zero(),
            out.as_mut_ptr(), k as isize, 1,
        )
    }
}

/// Architecture of the SDF network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkShape {
    pub latent_dim: usize,
    pub width: usize,
    pub hidden_layers: usize,
    /// Hidden layer whose input is `[previous activation, network input]`.
    pub skip_layer: Option<usize>,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            width: 256,
            hidden_layers: 8,
            skip_layer: Some(4),
        }
    }
}

impl NetworkShape {
    pub fn input_dim(&self) -> usize {
        self.latent_dim + 3
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hidden_layers == 0 || self.width == 0 {
            return Err("network needs at least one hidden layer of non-zero width".into());
        }
        if let Some(s) = self.skip_layer {
            if s == 0 || s >= self.hidden_layers {
                return Err(format!("skip layer {s} must lie in 1..{}", self.hidden_layers));
            }
            if self.width <= self.input_dim() {
                return Err("width must exceed the input size when a skip layer is used".into());
            }
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let d = self.input_dim();
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        for l in 0..self.hidden_layers {
            let fan_in = if l == 0 { d } else { self.width };
            let fan_out = if self.skip_layer == Some(l + 1) {
                self.width - d
            } else {
                self.width
            };
            dims.push((fan_in, fan_out));
        }
        dims.push((self.width, 1));
        dims
    }

    /// Widths as stored in model files: input, each layer output, final 1.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layer_dims().iter().map(|&(_, o)| o));
        w
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

/// Fully connected ReLU network with a tanh output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    shape: NetworkShape,
    layers: Vec<LayerSpec>,
    pub params: Vec<T>,
}

/// The network in its storage precision.
pub type SdfNetwork = Mlp<f32>;

/// Per-layer activations kept for the backward pass.
pub struct ForwardCache<T> {
    rows: usize,
    /// Input to each layer (`rows × fan_in`).
    inputs: Vec<Vec<T>>,
    /// `tanh` outputs.
    pub outputs: Vec<T>,
}

impl<T: Real> Mlp<T> {
    pub fn zeros(shape: NetworkShape) -> Self {
        let mut layers = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in shape.layer_dims() {
            layers.push(LayerSpec {
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        }
        Self {
            shape,
            layers,
            params: vec![T::zero(); offset],
        }
    }

    /// Geometric initialization: the untrained network approximates the signed
    /// distance of a sphere of radius `radius` and ignores the latent code.
    pub fn geometric_init(shape: NetworkShape, radius: f64, seed: u64) -> Self {
        let mut net = Self::zeros(shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = shape.latent_dim;
        let last = net.layers.len() - 1;
        for (l, spec) in net.layers.clone().iter().enumerate() {
            let w = &mut net.params[spec.weight_offset..spec.bias_offset];
            if l == last {
                let mean = (std::f64::consts::PI / spec.fan_in as f64).sqrt();
                let dist = Normal::new(mean, 1e-5).unwrap();
                for v in w.iter_mut() {
                    *v = T::from_f64(dist.sample(&mut rng)).unwrap();
                }
                net.params[spec.bias_offset] = T::from_f64(-radius).unwrap();
                continue;
            }
            let dist = Normal::new(0.0, (2.0 / spec.fan_out as f64).sqrt()).unwrap();
            for v in w.iter_mut() {
                *v = T::from_f64(dist.sample(&mut rng)).unwrap();
            }
            // Latent columns start at zero in every layer that sees the raw input.
            let latent_start = if l == 0 {
                Some(0)
            } else if shape.skip_layer == Some(l) {
                Some(spec.fan_in - shape.input_dim())
            } else {
                None
            };
            if let Some(start) = latent_start {
                for row in 0..spec.fan_out {
                    for c in start..start + d {
                        w[row * spec.fan_in + c] = T::zero();
                    }
                }
            }
        }
        net
    }

    pub fn from_params(shape: NetworkShape, params: Vec<T>) -> Result<Self, String> {
        shape.validate()?;
        let mut net = Self::zeros(shape);
        if params.len() != net.params.len() {
            return Err(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            ));
        }
        net.params = params;
        Ok(net)
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    /// Flat parameter vector, laid out as in [`Mlp::from_params`].
    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn latent_dim(&self) -> usize {
        self.shape.latent_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Converts to another precision.
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            shape: self.shape,
            layers: self.layers.clone(),
            params: self
                .params
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }

    /// Zeroes the output layer so the network returns `tanh(0) = 0` everywhere.
    pub fn zero_output_layer(&mut self) {
        let spec = *self.layers.last().unwrap();
        self.params[spec.weight_offset..spec.bias_offset + 1]
            .iter_mut()
            .for_each(|v| *v = T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    fn layer_forward(&self, l: usize, input: &[T], rows: usize, out: &mut Vec<T>) {
        let spec = self.layers[l];
        out.clear();
        out.reserve(rows * spec.fan_out);
        let bias = &self.params[spec.bias_offset..spec.bias_offset + spec.fan_out];
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        matmul_nt(
            rows,
            spec.fan_in,
            spec.fan_out,
            input,
            &self.params[spec.weight_offset..spec.bias_offset],
            T::one(),
            out,
        );
    }

    fn concat_skip(h: &[T], x: &[T], rows: usize, hw: usize, xw: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(rows * (hw + xw));
        for r in 0..rows {
            out.extend_from_slice(&h[r * hw..(r + 1) * hw]);
            out.extend_from_slice(&x[r * xw..(r + 1) * xw]);
        }
        out
    }

    /// Outputs for `rows` input rows, without keeping activations.
    pub fn forward(&self, input: &[T], rows: usize) -> Vec<T> {
        let d = self.shape.input_dim();
        assert_eq!(input.len(), rows * d);
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let hidden = self.layers.len() - 1;
        for l in 0..hidden {
            if self.shape.skip_layer == Some(l) {
                cur = Self::concat_skip(&cur, input, rows, self.layers[l].fan_in - d, d);
            }
            self.layer_forward(l, &cur, rows, &mut next);
            next.iter_mut().for_each(|v| *v = v.max(T::zero()));
            std::mem::swap(&mut cur, &mut next);
        }
        self.layer_forward(hidden, &cur, rows, &mut next);
        next.iter().map(|v| v.tanh()).collect()
    }

    /// Forward pass that keeps what [`Mlp::backward`] needs.
    pub fn forward_cached(&self, input: &[T], rows: usize) -> ForwardCache<T> {
        let d = self.shape.input_dim();
        assert_eq!(input.len(), rows * d);
        let hidden = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = input.to_vec();
        for l in 0..hidden {
            if self.shape.skip_layer == Some(l) {
                cur = Self::concat_skip(&cur, input, rows, self.layers[l].fan_in - d, d);
            }
            let mut out = Vec::new();
            self.layer_forward(l, &cur, rows, &mut out);
            out.iter_mut().for_each(|v| *v = v.max(T::zero()));
            inputs.push(std::mem::replace(&mut cur, out));
        }
        let mut out = Vec::new();
        self.layer_forward(hidden, &cur, rows, &mut out);
        inputs.push(cur);
        ForwardCache {
            rows,
            inputs,
            outputs: out.iter().map(|v| v.tanh()).collect(),
        }
    }

    /// Backpropagates `d_out = ∂L/∂output` (one value per row).
    ///
    /// Adds parameter gradients into `grad_params` when given, and returns
    /// `∂L/∂input` as a `rows × input_dim` matrix.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        d_out: &[T],
        mut grad_params: Option<&mut [T]>,
    ) -> Vec<T> {
        let rows = cache.rows;
        let d = self.shape.input_dim();
        let hidden = self.layers.len() - 1;
        // Through tanh.
        let mut g: Vec<T> = d_out
            .iter()
            .zip(&cache.outputs)
            .map(|(&g, &f)| g * (T::one() - f * f))
            .collect();
        let mut d_input = vec![T::zero(); rows * d];
        for l in (0..=hidden).rev() {
            let spec = self.layers[l];
            let layer_in = &cache.inputs[l];
            if let Some(gp) = grad_params.as_deref_mut() {
                matmul_tn_acc(
                    rows,
                    spec.fan_out,
                    spec.fan_in,
                    &g,
                    layer_in,
                    &mut gp[spec.weight_offset..spec.bias_offset],
                );
                let gb = &mut gp[spec.bias_offset..spec.bias_offset + spec.fan_out];
                for r in 0..rows {
                    for (b, &v) in gb.iter_mut().zip(&g[r * spec.fan_out..(r + 1) * spec.fan_out]) {
                        *b += v;
                    }
                }
            }
            let mut g_in = vec![T::zero(); rows * spec.fan_in];
            matmul_nn(
                rows,
                spec.fan_out,
                spec.fan_in,
                &g,
                &self.params[spec.weight_offset..spec.bias_offset],
                &mut g_in,
            );
            if l == 0 {
                for (acc, v) in d_input.iter_mut().zip(&g_in) {
                    *acc += *v;
                }
                break;
            }
            let prev_w = if self.shape.skip_layer == Some(l) {
                let hw = spec.fan_in - d;
                for r in 0..rows {
                    for c in 0..d {
                        d_input[r * d + c] += g_in[r * spec.fan_in + hw + c];
                    }
                }
                g_in = (0..rows)
                    .flat_map(|r| g_in[r * spec.fan_in..r * spec.fan_in + hw].to_vec())
                    .collect();
                hw
            } else {
                spec.fan_in
            };
            // ReLU mask from the previous layer's output, which is the part of
            // this layer's input that came from it.
            let prev_out = &cache.inputs[l];
            for r in 0..rows {
                for c in 0..prev_w {
                    if prev_out[r * spec.fan_in + c] <= T::zero() {
                        g_in[r * prev_w + c] = T::zero();
                    }
                }
            }
            g = g_in;
        }
        d_input
    }

    /// ReLU pre-activations of every hidden unit for one input row.
    pub fn preactivations(&self, input: &[T]) -> Vec<T> {
        let d = self.shape.input_dim();
        assert_eq!(input.len(), d);
        let mut cur = input.to_vec();
        let mut out = Vec::new();
        let mut pre = Vec::new();
        for l in 0..self.layers.len() - 1 {
            if self.shape.skip_layer == Some(l) {
                cur = Self::concat_skip(&cur, input, 1, self.layers[l].fan_in - d, d);
            }
            self.layer_forward(l, &cur, 1, &mut out);
            pre.extend_from_slice(&out);
            out.iter_mut().for_each(|v| *v = v.max(T::zero()));
            std::mem::swap(&mut cur, &mut out);
        }
        pre
    }
}

/// Builds network input rows from a latent code and positions.
pub fn input_rows<T: Real>(z: &[T], positions: &[[f64; 3]]) -> Vec<T> {
    let mut rows = Vec::with_capacity(positions.len() * (z.len() + 3));
    for p in positions {
        rows.extend_from_slice(z);
        rows.extend(p.iter().map(|&c| T::from_f64(c).unwrap()));
    }
    rows
}
