//! Dense layers, activations and Glorot initialization.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    ReLU,
    Sigmoid,
    /// Row-wise softmax. Only valid on the last layer of a stack.
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::ReLU => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }

    /// Applies the activation to a matrix of pre-activations.
    pub fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Identity => z.clone(),
            Activation::ReLU => z.map(|v| v.max(0.0)),
            Activation::Sigmoid => sigmoid_elementwise(z),
            Activation::Softmax => softmax_rows(z),
        }
    }

    /// Maps the gradient w.r.t. this activation's output back to its pre-activation,
    /// using only the cached output.
    pub fn backprop(self, output: &Matrix, grad_output: &Matrix) -> Matrix {
        match self {
            Activation::Identity => grad_output.clone(),
            Activation::ReLU => {
                let mut dz = grad_output.clone();
                for (g, &a) in dz.as_mut_slice().iter_mut().zip(output.as_slice()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
                dz
            }
            Activation::Sigmoid => {
                let mut dz = grad_output.clone();
                for (g, &a) in dz.as_mut_slice().iter_mut().zip(output.as_slice()) {
                    *g *= a * (1.0 - a);
                }
                dz
            }
            Activation::Softmax => {
                let mut dz = grad_output.clone();
                for i in 0..output.rows() {
                    let a = output.row(i);
                    let inner: f64 = a.iter().zip(grad_output.row(i)).map(|(x, g)| x * g).sum();
                    for (g, &p) in dz.row_mut(i).iter_mut().zip(a) {
                        *g = p * (*g - inner);
                    }
                }
                dz
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::ReLU),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::InvalidConfig(format!("unknown activation '{other}'"))),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic function applied to every entry.
pub fn sigmoid_elementwise(z: &Matrix) -> Matrix {
    z.map(sigmoid)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
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

/// Weight and bias gradients for one [`DenseLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerGradients {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: Matrix::zeros(layer.out_dim(), layer.in_dim()),
            bias: vec![0.0; layer.out_dim()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.as_slice().iter().chain(&self.bias).all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }
}

/// A dense layer: `activation(x · Wᵀ + b)` with `W` shaped `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape {
                context: "DenseLayer::new",
                left: weights.shape(),
                right: (bias.len(), 1),
            });
        }
        if bias.iter().any(|b| !b.is_finite()) || !weights.is_finite() {
            return Err(Error::NonFinite("DenseLayer::new"));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidConfig("layer dims must be >= 1".into()));
        }
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new(-limit, limit).expect("finite Glorot bounds");
        let data = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Ok(Self {
            weights: Matrix::from_vec(out_dim, in_dim, data)?,
            bias: vec![0.0; out_dim],
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    #[inline]
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    /// Affine part only: `x · Wᵀ + b`.
    pub fn preactivation(&self, input: &Matrix) -> Result<Matrix> {
        let mut z = input.matmul_transposed(&self.weights)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let out = self.activation.apply(&self.preactivation(input)?);
        if !out.is_finite() {
            return Err(Error::NonFinite("DenseLayer::forward"));
        }
        Ok(out)
    }

    /// Given `dL/dz` for this layer's pre-activation and the layer input, returns the
    /// parameter gradients and `dL/d input`.
    pub fn backward_from_preactivation(
        &self,
        input: &Matrix,
        grad_preact: &Matrix,
    ) -> Result<(LayerGradients, Matrix)> {
        if grad_preact.cols() != self.out_dim() || grad_preact.rows() != input.rows() {
            return Err(Error::Shape {
                context: "DenseLayer::backward",
                left: grad_preact.shape(),
                right: (input.rows(), self.out_dim()),
            });
        }
        let weights = grad_preact.transposed_matmul(input)?;
        let bias = grad_preact.column_sums();
        let grad_input = grad_preact.matmul(&self.weights)?;
        Ok((LayerGradients { weights, bias }, grad_input))
    }

    /// `p ← p − lr · grad`.
    pub fn apply_gradients(&mut self, grads: &LayerGradients, learning_rate: f64) {
        for (w, g) in self
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(grads.weights.as_slice())
        {
            *w -= learning_rate * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grads.bias) {
            *b -= learning_rate * g;
        }
    }
}

/// Builds a layer stack with Glorot weights. `layer_dims` holds the input width followed by
/// each layer's output width, so it has one more entry than `activations`.
pub fn init_layers(
    layer_dims: &[usize],
    activations: &[Activation],
    rng_seed: u64,
) -> Result<Vec<DenseLayer>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    init_layers_with_rng(layer_dims, activations, &mut rng)
}

pub fn init_layers_with_rng<R: Rng + ?Sized>(
    layer_dims: &[usize],
    activations: &[Activation],
    rng: &mut R,
) -> Result<Vec<DenseLayer>> {
    if layer_dims.len() < 2 {
        return Err(Error::InvalidConfig(
            "layer dims need an input width and at least one layer".into(),
        ));
    }
    if activations.len() != layer_dims.len() - 1 {
        return Err(Error::InvalidConfig(format!(
            "{} activations for {} layers",
            activations.len(),
            layer_dims.len() - 1
        )));
    }
    let layers = layer_dims
        .windows(2)
        .zip(activations)
        .map(|(dims, &act)| DenseLayer::glorot(dims[0], dims[1], act, rng))
        .collect::<Result<Vec<_>>>()?;
    super::network::validate_stack(&layers)?;
    Ok(layers)
}
