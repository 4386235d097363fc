//! Minimal dense networks with recorded forward traces and exact reverse-mode
//! gradients, including per-example gradient access for DP training.
//!
//! Everything is f64 and deterministic; batch sizes here are small enough that
//! per-record backward passes are the simplest correct implementation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math::F64Ext;
use crate::rng::RandomnessSource;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    /// Project each row into the l1 ball of radius `l` (identity inside).
    NuClip(f64),
    /// Row-wise softmax.
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Layer {
    /// in_dim x out_dim.
    pub weights: Tensor,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }
    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseNetwork {
    layers: Vec<Layer>,
}

/// Per-layer gradients, in the same order as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<(Tensor, Vec<f64>)>,
}

impl ParamGrads {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| {
                (
                    Tensor::zeros(l.weights.shape().to_vec()),
                    vec![0.0; l.biases.len()],
                )
            })
            .collect();
        Self { layers }
    }

    pub fn add_in_place(&mut self, other: &ParamGrads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(CoreError::shape("gradient layer counts differ"));
        }
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.add_in_place(ow)?;
            for (x, y) in b.iter_mut().zip(ob) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            w.scale_in_place(factor);
            for x in b.iter_mut() {
                *x *= factor;
            }
        }
    }

    /// l2 norm over all parameters jointly.
    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for (w, b) in &self.layers {
            sum += w.values().iter().map(|v| v * v).sum::<f64>();
            sum += b.iter().map(|v| v * v).sum::<f64>();
        }
        sum.sqrt()
    }

    /// Append all gradient entries to a flat vector, layer by layer.
    pub fn extend_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in &self.layers {
            out.extend_from_slice(w.values());
            out.extend_from_slice(b);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.extend_flat(&mut out);
        out
    }
}

/// Retained intermediates of one forward pass; consumed by exactly one
/// backward pass.
#[derive(Debug)]
pub struct ForwardTrace {
    /// Input to each layer (the batch for layer 0, activations after that).
    layer_inputs: Vec<Tensor>,
    /// Pre-activation values per layer.
    pre_activations: Vec<Tensor>,
    /// Activation outputs per layer.
    activations: Vec<Tensor>,
    consumed: bool,
}

impl DenseNetwork {
    /// Build a network from layers, checking that dimensions compose and that
    /// nu-clip appears only as the final activation.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(CoreError::validation("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(CoreError::shape(format!(
                    "layer output {} does not match next input {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
            if matches!(pair[0].activation, Activation::NuClip(_)) {
                return Err(CoreError::validation("nu-clip allowed only as the final activation"));
            }
        }
        for layer in &layers {
            if layer.biases.len() != layer.out_dim() {
                return Err(CoreError::shape("bias length does not match layer width"));
            }
            if let Activation::NuClip(l) = layer.activation {
                if !(l > 0.0) {
                    return Err(CoreError::validation("nu-clip radius must be positive"));
                }
            }
        }
        Ok(Self { layers })
    }

    /// Seeded initialization: weights uniform in +-sqrt(6/(fan_in+fan_out)),
    /// biases zero.
    pub fn init(
        sizes: &[usize],
        hidden_activation: Activation,
        final_activation: Activation,
        rng: &mut RandomnessSource,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(CoreError::validation("need at least input and output sizes"));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for i in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let values = (0..fan_in * fan_out)
                .map(|_| rng.uniform_in(-bound, bound))
                .collect();
            let activation = if i + 2 == sizes.len() {
                final_activation
            } else {
                hidden_activation
            };
            layers.push(Layer {
                weights: Tensor::matrix(fan_in, fan_out, values)?,
                biases: vec![0.0; fan_out],
                activation,
            });
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.values());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn load_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(CoreError::shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let wn = l.weights.len();
            l.weights.values_mut().copy_from_slice(&flat[offset..offset + wn]);
            offset += wn;
            let bn = l.biases.len();
            l.biases.copy_from_slice(&flat[offset..offset + bn]);
            offset += bn;
        }
        Ok(())
    }

    /// Layer-by-layer forward pass retaining a trace for backward.
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        if batch.cols() != self.input_dim() {
            return Err(CoreError::shape(format!(
                "batch width {} does not match network input {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        batch.ensure_finite("forward input")?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for layer in &self.layers {
            let mut pre = current.matmul(&layer.weights)?;
            for i in 0..pre.rows() {
                for (v, b) in pre.row_mut(i).iter_mut().zip(&layer.biases) {
                    *v += b;
                }
            }
            let act = apply_activation(&pre, layer.activation);
            act.ensure_finite("forward activation")?;
            layer_inputs.push(current);
            pre_activations.push(pre);
            activations.push(act.clone());
            current = act;
        }
        let trace = ForwardTrace {
            layer_inputs,
            pre_activations,
            activations,
            consumed: false,
        };
        Ok((current, trace))
    }

    /// Forward pass without retaining intermediates.
    pub fn forward_only(&self, batch: &Tensor) -> Result<Tensor> {
        self.forward(batch).map(|(out, _)| out)
    }

    /// Reverse-mode gradients of the traced computation, batch-summed.
    /// Returns the parameter gradients and the gradient w.r.t. the input
    /// batch (needed for chaining networks).
    pub fn backward(
        &self,
        trace: &mut ForwardTrace,
        output_gradient: &Tensor,
    ) -> Result<(ParamGrads, Tensor)> {
        if trace.consumed {
            return Err(CoreError::Contract("forward trace already consumed".into()));
        }
        trace.consumed = true;
        if trace.layer_inputs.len() != self.layers.len() {
            return Err(CoreError::Contract("trace does not match this network".into()));
        }
        let last = self.layers.len() - 1;
        if output_gradient.shape() != trace.activations[last].shape() {
            return Err(CoreError::shape("output gradient shape mismatch"));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut grad_out = output_gradient.clone();
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let pre = &trace.pre_activations[idx];
            let act = &trace.activations[idx];
            let grad_pre = activation_backward(pre, act, &grad_out, layer.activation);
            // dL/dW = input^T * grad_pre
            let input = &trace.layer_inputs[idx];
            let w_grad = matmul_at_b(input, &grad_pre)?;
            let mut b_grad = vec![0.0; layer.out_dim()];
            for r in 0..grad_pre.rows() {
                for (bg, v) in b_grad.iter_mut().zip(grad_pre.row(r)) {
                    *bg += v;
                }
            }
            // dL/dinput = grad_pre * W^T
            grad_out = matmul_a_bt(&grad_pre, &layer.weights)?;
            grads.push((w_grad, b_grad));
        }
        grads.reverse();
        Ok((ParamGrads { layers: grads }, grad_out))
    }
}

/// A^T * B where A is m x k and B is m x n, giving k x n.
fn matmul_at_b(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = (a.rows(), a.cols());
    let n = b.cols();
    if b.rows() != m {
        return Err(CoreError::shape("matmul_at_b: row counts differ"));
    }
    let mut out = vec![0.0; k * n];
    for r in 0..m {
        let a_row = a.row(r);
        let b_row = b.row(r);
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let o = &mut out[i * n..(i + 1) * n];
            for (ov, &bv) in o.iter_mut().zip(b_row) {
                *ov += av * bv;
            }
        }
    }
    Tensor::matrix(k, n, out)
}

/// A * B^T where A is m x n and B is k x n, giving m x k.
fn matmul_a_bt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n) = (a.rows(), a.cols());
    let k = b.rows();
    if b.cols() != n {
        return Err(CoreError::shape("matmul_a_bt: column counts differ"));
    }
    let mut out = vec![0.0; m * k];
    for r in 0..m {
        let a_row = a.row(r);
        for j in 0..k {
            let b_row = b.row(j);
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out[r * k + j] = acc;
        }
    }
    Tensor::matrix(m, k, out)
}

fn apply_activation(pre: &Tensor, activation: Activation) -> Tensor {
    match activation {
        Activation::Identity => pre.clone(),
        Activation::Relu => pre.map(|v| if v > 0.0 { v } else { 0.0 }),
        Activation::Tanh => pre.map(|v| v.tanh()),
        Activation::NuClip(l) => {
            let mut out = pre.clone();
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                let norm: f64 = row.iter().map(|v| v.abs()).sum();
                if norm > l {
                    let factor = l / norm;
                    for v in row.iter_mut() {
                        *v *= factor;
                    }
                }
            }
            out
        }
        Activation::Softmax => {
            let mut out = pre.clone();
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            out
        }
    }
}

/// Map dL/d(activation output) to dL/d(pre-activation), row-wise.
fn activation_backward(pre: &Tensor, act: &Tensor, grad_out: &Tensor, activation: Activation) -> Tensor {
    match activation {
        Activation::Identity => grad_out.clone(),
        Activation::Relu => {
            let mut g = grad_out.clone();
            for (gv, &p) in g.values_mut().iter_mut().zip(pre.values()) {
                if p <= 0.0 {
                    *gv = 0.0;
                }
            }
            g
        }
        Activation::Tanh => {
            let mut g = grad_out.clone();
            for (gv, &a) in g.values_mut().iter_mut().zip(act.values()) {
                *gv *= 1.0 - a * a;
            }
            g
        }
        Activation::NuClip(l) => {
            // interior: identity; clipped rows: d(y*l/s)/dy with s = ||y||_1.
            // The boundary s == l takes the interior branch.
            let mut g = grad_out.clone();
            for r in 0..g.rows() {
                let pre_row = pre.row(r);
                let norm: f64 = pre_row.iter().map(|v| v.abs()).sum();
                if norm > l {
                    let dot: f64 = grad_out
                        .row(r)
                        .iter()
                        .zip(pre_row)
                        .map(|(gv, pv)| gv * pv)
                        .sum();
                    let row = g.row_mut(r);
                    for (gv, &pv) in row.iter_mut().zip(pre_row) {
                        *gv = (l / norm) * *gv - (l / (norm * norm)) * pv.signum_or_zero() * dot;
                    }
                }
            }
            g
        }
        Activation::Softmax => {
            let mut g = grad_out.clone();
            for r in 0..g.rows() {
                let a_row = act.row(r);
                let dot: f64 = grad_out.row(r).iter().zip(a_row).map(|(gv, av)| gv * av).sum();
                let row = g.row_mut(r);
                for (gv, &av) in row.iter_mut().zip(a_row) {
                    *gv = av * (*gv - dot);
                }
            }
            g
        }
    }
}

/// Per-record parameter gradients: element k is the batch-of-one backward of
/// record k under `output_grad_fn`, which maps (record index, network output
/// row) to dL/d(output row).
pub fn per_example_gradients(
    net: &DenseNetwork,
    batch: &Tensor,
    output_grad_fn: impl Fn(usize, &[f64]) -> Vec<f64>,
) -> Result<Vec<ParamGrads>> {
    let mut result = Vec::with_capacity(batch.rows());
    for r in 0..batch.rows() {
        let row = batch.row_tensor(r);
        let (out, mut trace) = net.forward(&row)?;
        let g = output_grad_fn(r, out.row(0));
        if g.len() != out.cols() {
            return Err(CoreError::shape("loss gradient width mismatch"));
        }
        let g = Tensor::row_vector(g);
        let (grads, _) = net.backward(&mut trace, &g)?;
        result.push(grads);
    }
    Ok(result)
}
