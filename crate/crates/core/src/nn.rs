//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat `Vec<f64>` so that soft updates, clipping,
//! serialization and finite-difference checks can treat them uniformly.
//! Layer `l` stores its weight matrix (`out x in`, row-major) followed by
//! its bias vector.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
}

/// Intermediate values kept by [`Mlp::forward_cached`] for backpropagation.
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l`; the last entry is the network output.
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }

    /// On/off state of every hidden ReLU unit, sample-major within each layer.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let hidden = &self.activations[1..self.activations.len() - 1];
        hidden.iter().flat_map(|h| h.iter().map(|&v| v > 0.0)).collect()
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Fan-in uniform initialization for hidden layers; the output layer is
    /// drawn from `[-final_scale, final_scale]`.
    pub fn new<R: Rng>(sizes: &[usize], output: OutputActivation, final_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and an output layer");
        let mut params = Vec::with_capacity(param_count(sizes));
        let n_layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = if l + 1 == n_layers { final_scale } else { 1.0 / (fan_in as f64).sqrt() };
            for _ in 0..fan_in * fan_out + fan_out {
                params.push(if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 });
            }
        }
        Self { sizes: sizes.to_vec(), output, params }
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        Self { sizes: sizes.to_vec(), output, params: vec![0.0; param_count(sizes)] }
    }

    pub fn from_params(sizes: &[usize], output: OutputActivation, params: Vec<f64>) -> Result<Self> {
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(Error::ShapeMismatch { expected, actual: params.len() });
        }
        Ok(Self { sizes: sizes.to_vec(), output, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes && self.output == other.output
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let offset: usize = param_count(&self.sizes[..=l]);
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (
            ArrayView2::from_shape((n_out, n_in), w).expect("layout"),
            ArrayView1::from(b),
        )
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.input_dim(), actual: x.ncols() });
        }
        Ok(())
    }

    fn apply_layer(&self, l: usize, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        let (w, b) = self.layer(l);
        let mut z = x.dot(&w.t());
        z += &b;
        let last = l + 2 == self.sizes.len();
        if !last {
            z.mapv_inplace(|v| v.max(0.0));
        } else if self.output == OutputActivation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
        z
    }

    /// Batched forward pass: one row per sample.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = self.apply_layer(0, &x);
        for l in 1..self.sizes.len() - 1 {
            h = self.apply_layer(l, &h.view());
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(x.to_owned());
        for l in 0..self.sizes.len() - 1 {
            let next = self.apply_layer(l, &activations[l].view());
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    /// Backpropagates `d_output` (gradient of a scalar objective w.r.t. the
    /// network output, one row per sample) and returns the parameter gradient
    /// together with the gradient w.r.t. the input batch.
    pub fn backward(&self, cache: &ForwardCache, d_output: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
        let n_layers = self.sizes.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_output.to_owned();
        for l in (0..n_layers).rev() {
            let out = &cache.activations[l + 1];
            if l + 1 == n_layers {
                if self.output == OutputActivation::Tanh {
                    delta.zip_mut_with(out, |d, &y| *d *= 1.0 - y * y);
                }
            } else {
                delta.zip_mut_with(out, |d, &y| {
                    if y <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            let input = &cache.activations[l];
            let g_w = delta.t().dot(input);
            let g_b = delta.sum_axis(Axis(0));
            let offset = param_count(&self.sizes[..=l]);
            let n_w = g_w.len();
            for (dst, src) in grad[offset..offset + n_w].iter_mut().zip(g_w.iter()) {
                *dst = *src;
            }
            grad[offset + n_w..offset + n_w + g_b.len()].copy_from_slice(g_b.as_slice().unwrap());
            let (w, _) = self.layer(l);
            delta = delta.dot(&w);
        }
        (grad, delta)
    }
}

/// Optimizer family. Plain gradient descent is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Minimizing first-order optimizer with optional global-norm gradient clipping.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    clip: Option<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, clip: Option<f64>, n_params: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => (vec![0.0; n_params], vec![0.0; n_params]),
        };
        Self { kind, lr, clip, m, v, t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &mut [f64]) {
        if let Some(max_norm) = self.clip {
            clip_grad_norm(grad, max_norm);
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad.iter()) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Builds a `rows x cols` matrix from row slices.
pub fn stack_rows<'a, I>(rows: I, cols: usize) -> Array2<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut flat = Vec::new();
    let mut n = 0;
    for r in rows {
        debug_assert_eq!(r.len(), cols);
        flat.extend_from_slice(r);
        n += 1;
    }
    Array2::from_shape_vec((n, cols), flat).expect("rows of equal length")
}

pub fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column")
}

pub fn to_vec1(a: Array1<f64>) -> Vec<f64> {
    a.into_raw_vec_and_offset().0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(output: OutputActivation) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        Mlp::new(&[4, 6, 5, 2], output, 0.5, &mut rng)
    }

    #[test]
    fn relu_pattern_by_hand() {
        // 1 -> 2 -> 1 with hidden pre-activations (x, -x).
        let m = Mlp::from_params(&[1, 2, 1], OutputActivation::Identity, vec![1.0, -1.0, 0.0, 0.0, 1.0, 1.0, 0.0])
            .unwrap();
        let x = Array2::from_shape_vec((2, 1), vec![2.0, -3.0]).unwrap();
        let cache = m.forward_cached(x.view()).unwrap();
        assert_eq!(cache.relu_pattern(), vec![true, false, false, true]);
        assert_eq!(cache.output().column(0).to_vec(), vec![2.0, 3.0]);
    }

    // Objective: sum of output * fixed weights, so d_output is the weight matrix.
    fn objective(m: &Mlp, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
        (m.forward(x.view()).unwrap() * w).sum()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[3, 4, 2], OutputActivation::Tanh);
        let y = m.forward_one(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = net(OutputActivation::Identity);
        assert!(matches!(m.forward_one(&[1.0, 2.0]), Err(Error::ShapeMismatch { expected: 4, actual: 2 })));
    }

    #[test]
    fn parameter_count_matches_architecture() {
        let m = net(OutputActivation::Identity);
        assert_eq!(m.num_params(), 4 * 6 + 6 + 6 * 5 + 5 + 5 * 2 + 2);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for output in [OutputActivation::Identity, OutputActivation::Tanh] {
            let m = net(output);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
            let w = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
            let cache = m.forward_cached(x.view()).unwrap();
            let (grad, d_in) = m.backward(&cache, w.view());
            let h = 1e-6;
            for i in 0..m.num_params() {
                let mut plus = m.clone();
                plus.params_mut()[i] += h;
                let mut minus = m.clone();
                minus.params_mut()[i] -= h;
                let fd = (objective(&plus, &x, &w) - objective(&minus, &x, &w)) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
            }
            for r in 0..3 {
                for c in 0..4 {
                    let mut xp = x.clone();
                    xp[[r, c]] += h;
                    let mut xm = x.clone();
                    xm[[r, c]] -= h;
                    let fd = (objective(&m, &xp, &w) - objective(&m, &xm, &w)) / (2.0 * h);
                    assert!((fd - d_in[[r, c]]).abs() <= 1e-6 * (1.0 + fd.abs()));
                }
            }
        }
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        let before = clip_grad_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn sgd_step_moves_against_gradient() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, None, 2);
        let mut p = vec![1.0, 1.0];
        let mut g = vec![1.0, -2.0];
        opt.step(&mut p, &mut g);
        assert_eq!(p, vec![0.9, 1.2]);
    }
}
