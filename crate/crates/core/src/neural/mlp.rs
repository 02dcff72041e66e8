use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::DenseMatrix;
use crate::math::{sqrt, tanh_fast};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected network: tanh on hidden layers, configurable activation
/// (identity by default) on the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    /// `weights[l]` is `out x in`.
    weights: Vec<DenseMatrix>,
    biases: Vec<Vec<f64>>,
    output_activation: Activation,
}

/// Layer outputs recorded by a batched forward pass, stored feature-major
/// (`acts[l][f * rows + k]` is feature `f` of sample `k`): `acts[0]` is the
/// input, `acts[l + 1]` the activated output of layer `l`.
#[derive(Debug, Clone)]
pub struct Tape {
    rows: usize,
    acts: Vec<Vec<f64>>,
    /// Final layer output, sample-major.
    output: Vec<f64>,
}

impl Tape {
    /// Network output, one row per sample.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// `rows × cols` row-major to `cols × rows` row-major.
fn transpose(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for k in 0..rows {
        for f in 0..cols {
            out[f * rows + k] = src[k * cols + f];
        }
    }
    out
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Dot product with four interleaved partial sums.
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(invalid!("an MLP needs at least input and output sizes"));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(invalid!("layer sizes must be positive: {:?}", layer_sizes));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases. Deterministic in `seed`.
pub fn mlp_init(layer_sizes: &[usize], seed: u64) -> Result<Mlp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mlp::with_rng(layer_sizes, &mut rng)
}

/// Evaluates `net` on one input vector.
pub fn mlp_forward(net: &Mlp, x: &[f64]) -> Result<Vec<f64>> {
    net.forward(x)
}

impl Mlp {
    pub fn with_rng<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
            weights.push(DenseMatrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-limit..limit)));
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            output_activation: Activation::Identity,
        })
    }

    pub fn from_parts(weights: Vec<DenseMatrix>, biases: Vec<Vec<f64>>, output_activation: Activation) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(invalid!("need matching, non-empty weight and bias lists"));
        }
        let mut sizes = vec![weights[0].cols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.cols() != *sizes.last().unwrap() {
                return Err(invalid!("layer {} expects {} inputs, previous layer gives {}", l, w.cols(), sizes.last().unwrap()));
            }
            if b.len() != w.rows() {
                return Err(invalid!("layer {} bias has length {}, expected {}", l, b.len(), w.rows()));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(invalid!("layer {} bias has non-finite entries", l));
            }
            sizes.push(w.rows());
        }
        check_sizes(&sizes)?;
        Ok(Self {
            layer_sizes: sizes,
            weights,
            biases,
            output_activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn set_output_activation(&mut self, act: Activation) {
        self.output_activation = act;
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output_activation
        } else {
            Activation::Tanh
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().zip(&self.biases).map(|(w, b)| w.as_slice().len() + b.len()).sum()
    }

    /// Appends parameters, layer by layer: weights row-major, then biases.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
    }

    /// Reads parameters in [`Mlp::write_params`] order; returns the number
    /// consumed.
    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let nw = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&src[k..k + nw]);
            k += nw;
            let nb = b.len();
            b.copy_from_slice(&src[k..k + nb]);
            k += nb;
        }
        k
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(invalid!("input has length {}, network expects {}", x.len(), self.input_dim()));
        }
        Ok(self.forward_batch(x, 1).output)
    }

    /// Forward pass over `rows` samples stored row-major in `x`.
    ///
    /// Every output is `b_o + Σ_i w_oi x_i` summed in input order, so a
    /// sample gives the same bits whatever batch it is part of.
    pub fn forward_batch(&self, x: &[f64], rows: usize) -> Tape {
        debug_assert_eq!(x.len(), rows * self.input_dim());
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(transpose(x, rows, self.input_dim()));
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (n_out, n_in) = w.shape();
            let input = &acts[l];
            let mut out = vec![0.0; rows * n_out];
            for (o, yrow) in out.chunks_exact_mut(rows).enumerate() {
                yrow.iter_mut().for_each(|v| *v = b[o]);
                for (i, &wv) in w.row(o).iter().enumerate() {
                    axpy(yrow, wv, &input[i * rows..(i + 1) * rows]);
                }
            }
            if self.activation(l) == Activation::Tanh {
                out.iter_mut().for_each(|v| *v = tanh_fast(*v));
            }
            debug_assert_eq!(n_in * rows, input.len());
            acts.push(out);
        }
        let output = transpose(acts.last().unwrap(), self.output_dim(), rows);
        Tape { rows, acts, output }
    }

    /// Back-propagates `d_out` (gradient w.r.t. the network output, row
    /// per sample) through a recorded pass. Parameter gradients are added
    /// into `grad` in [`Mlp::write_params`] order. Returns the gradient
    /// w.r.t. the input (row per sample) when `want_input` is set.
    pub fn backward_batch(&self, tape: &Tape, d_out: Vec<f64>, grad: &mut [f64], want_input: bool) -> Option<Vec<f64>> {
        let rows = tape.rows;
        debug_assert_eq!(grad.len(), self.param_count());
        debug_assert_eq!(d_out.len(), rows * self.output_dim());
        let mut offsets = Vec::with_capacity(self.weights.len());
        let mut k = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            offsets.push(k);
            k += w.as_slice().len() + b.len();
        }
        let mut delta = transpose(&d_out, rows, self.output_dim());
        for l in (0..self.weights.len()).rev() {
            let w = &self.weights[l];
            let (n_out, n_in) = w.shape();
            if self.activation(l) == Activation::Tanh {
                for (d, y) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let input = &tape.acts[l];
            let (gw, rest) = grad[offsets[l]..].split_at_mut(n_out * n_in);
            let gb = &mut rest[..n_out];
            for (o, drow) in delta.chunks_exact(rows).enumerate() {
                gb[o] += drow.iter().sum::<f64>();
                for (i, g) in gw[o * n_in..(o + 1) * n_in].iter_mut().enumerate() {
                    *g += dot4(drow, &input[i * rows..(i + 1) * rows]);
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let mut prev = vec![0.0; rows * n_in];
            for (o, drow) in delta.chunks_exact(rows).enumerate() {
                for (i, &wv) in w.row(o).iter().enumerate() {
                    axpy(&mut prev[i * rows..(i + 1) * rows], wv, drow);
                }
            }
            delta = prev;
        }
        Some(transpose(&delta, self.input_dim(), rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = mlp_init(&[3, 5, 2], 4).unwrap();
        let b = mlp_init(&[3, 5, 2], 4).unwrap();
        assert_eq!(a, b);
        assert!(a.biases().iter().flatten().all(|&v| v == 0.0));
        let limit = sqrt(6.0 / 8.0);
        assert!(a.weights()[0].as_slice().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn table_layout_parameter_count() {
        let mut sizes = vec![3];
        sizes.extend([20; 7]);
        sizes.push(6);
        assert_eq!(mlp_init(&sizes, 0).unwrap().param_count(), 2726);
    }

    #[test]
    fn invalid_sizes() {
        assert!(mlp_init(&[3], 0).is_err());
        assert!(mlp_init(&[3, 0, 2], 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = mlp_init(&[2, 4, 3], 1).unwrap();
        for w in net.weights_mut() {
            w.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(net.forward(&[0.3, -2.0]).unwrap(), vec![0.0; 3]);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn single_linear_layer() {
        let w = DenseMatrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]).unwrap();
        let net = Mlp::from_parts(vec![w], vec![vec![0.1, -0.2]], Activation::Identity).unwrap();
        let y = mlp_forward(&net, &[3.0, 4.0]).unwrap();
        assert_eq!(y, vec![0.1 + 3.0 + 8.0, -0.2 - 3.0 + 2.0]);
    }

    #[test]
    fn params_round_trip() {
        let net = mlp_init(&[2, 3, 1], 9).unwrap();
        let mut p = Vec::new();
        net.write_params(&mut p);
        let mut other = mlp_init(&[2, 3, 1], 10).unwrap();
        assert_eq!(other.read_params(&p), p.len());
        assert_eq!(other, net);
    }
}
