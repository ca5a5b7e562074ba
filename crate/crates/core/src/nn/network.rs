//! Forward and backward passes over an ordered stack of [`DenseLayer`]s.

use super::{Activation, DenseLayer, LayerGradients, Matrix};
use crate::{Error, Result};

/// Gradients for every layer of a stack, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub layers: Vec<LayerGradients>,
}

impl ParamGradients {
    pub fn zeros_like(layers: &[DenseLayer]) -> Self {
        Self {
            layers: layers.iter().map(LayerGradients::zeros_like).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(LayerGradients::is_zero)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(LayerGradients::is_finite)
    }
}

/// Activations retained by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn input(&self) -> &Matrix {
        &self.input
    }

    /// One activation matrix per layer; the last one is the network output.
    pub fn activations(&self) -> &[Matrix] {
        &self.activations
    }

    pub fn output(&self) -> &Matrix {
        self.activations.last().unwrap_or(&self.input)
    }

    pub fn into_output(mut self) -> Matrix {
        self.activations.pop().unwrap_or(self.input)
    }

    /// Input seen by layer `i`.
    fn layer_input(&self, i: usize) -> &Matrix {
        if i == 0 {
            &self.input
        } else {
            &self.activations[i - 1]
        }
    }
}

/// Checks that consecutive dimensions chain and Softmax only appears last.
pub fn validate_stack(layers: &[DenseLayer]) -> Result<()> {
    for (i, pair) in layers.windows(2).enumerate() {
        if pair[0].out_dim() != pair[1].in_dim() {
            return Err(Error::LayerDimension {
                layer: i + 1,
                expected: pair[1].in_dim(),
                actual: pair[0].out_dim(),
            });
        }
    }
    if let Some(pos) = layers
        .iter()
        .position(|l| l.activation() == Activation::Softmax)
    {
        if pos + 1 != layers.len() {
            return Err(Error::InvalidConfig(format!(
                "softmax activation on layer {pos}, only allowed on the final layer"
            )));
        }
    }
    Ok(())
}

pub fn forward(layers: &[DenseLayer], input: &Matrix) -> Result<ForwardCache> {
    let mut activations: Vec<Matrix> = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let x = activations.last().unwrap_or(input);
        if x.cols() != layer.in_dim() {
            return Err(Error::LayerDimension {
                layer: i,
                expected: layer.in_dim(),
                actual: x.cols(),
            });
        }
        let a = layer.forward(x)?;
        activations.push(a);
    }
    Ok(ForwardCache {
        input: input.clone(),
        activations,
    })
}

fn check_cache(layers: &[DenseLayer], cache: &ForwardCache) -> Result<()> {
    if cache.activations.len() != layers.len() {
        return Err(Error::StaleCache(format!(
            "{} cached activations for {} layers",
            cache.activations.len(),
            layers.len()
        )));
    }
    let n = cache.input.rows();
    for (i, (layer, a)) in layers.iter().zip(&cache.activations).enumerate() {
        if a.cols() != layer.out_dim() || a.rows() != n || cache.layer_input(i).cols() != layer.in_dim()
        {
            return Err(Error::StaleCache(format!(
                "activation {i} is {:?}, layer expects ({n}, {})",
                a.shape(),
                layer.out_dim()
            )));
        }
    }
    Ok(())
}

/// Backpropagates `dL/d output` through the whole stack.
pub fn backward(
    layers: &[DenseLayer],
    cache: &ForwardCache,
    grad_output: &Matrix,
) -> Result<(ParamGradients, Matrix)> {
    check_cache(layers, cache)?;
    let Some(last) = layers.last() else {
        return Ok((ParamGradients { layers: vec![] }, grad_output.clone()));
    };
    grad_output.check_same_shape(cache.output(), "backward grad_output")?;
    let dz = last.activation().backprop(cache.output(), grad_output);
    backward_from_preactivation(layers, cache, &dz)
}

/// Backpropagates starting from `dL/dz` of the last layer's pre-activation. Used for
/// fused losses such as softmax + cross-entropy where `dL/dz = pred − target`.
pub fn backward_from_preactivation(
    layers: &[DenseLayer],
    cache: &ForwardCache,
    grad_last_preact: &Matrix,
) -> Result<(ParamGradients, Matrix)> {
    check_cache(layers, cache)?;
    let mut grads = Vec::with_capacity(layers.len());
    let mut dz = grad_last_preact.clone();
    for i in (0..layers.len()).rev() {
        let (g, grad_input) = layers[i].backward_from_preactivation(cache.layer_input(i), &dz)?;
        grads.push(g);
        if i > 0 {
            dz = layers[i - 1]
                .activation()
                .backprop(&cache.activations[i - 1], &grad_input);
        } else {
            dz = grad_input;
        }
    }
    grads.reverse();
    let grads = ParamGradients { layers: grads };
    if !grads.is_finite() || !dz.is_finite() {
        return Err(Error::NonFinite("backward"));
    }
    Ok((grads, dz))
}

/// Plain gradient-descent update. Layers flagged in `freeze` are left untouched.
pub fn sgd_step(
    layers: &mut [DenseLayer],
    grads: &ParamGradients,
    learning_rate: f64,
    freeze: &[bool],
) -> Result<()> {
    if grads.layers.len() != layers.len() {
        return Err(Error::LengthMismatch {
            left: layers.len(),
            right: grads.layers.len(),
        });
    }
    if !learning_rate.is_finite() || learning_rate < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be a nonnegative finite number, got {learning_rate}"
        )));
    }
    for (i, (layer, g)) in layers.iter_mut().zip(&grads.layers).enumerate() {
        if freeze.get(i).copied().unwrap_or(false) {
            continue;
        }
        if g.weights.shape() != layer.weights().shape() || g.bias.len() != layer.bias().len() {
            return Err(Error::Shape {
                context: "sgd_step",
                left: layer.weights().shape(),
                right: g.weights.shape(),
            });
        }
        layer.apply_gradients(g, learning_rate);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_layers, sigmoid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer::new(Matrix::identity(3), vec![0.0; 3], Activation::Identity).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.5]]).unwrap();
        let cache = forward(&[layer], &x).unwrap();
        assert_eq!(cache.output(), &x);
    }

    #[test]
    fn zero_sigmoid_layer_outputs_half() {
        let layer = DenseLayer::zeros(4, 2, Activation::Sigmoid);
        let x = Matrix::from_rows(&[vec![9.0, -3.0, 0.1, 2.0], vec![1.0; 4]]).unwrap();
        let out = forward(&[layer], &x).unwrap().into_output();
        assert!(out.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_matches_naive_reevaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layers = init_layers(&[4, 5, 3], &[Activation::ReLU, Activation::Sigmoid], 5).unwrap();
        let x = random_matrix(6, 4, &mut rng);
        let cache = forward(&layers, &x).unwrap();
        for n in 0..6 {
            let mut h = x.row(n).to_vec();
            for layer in &layers {
                h = (0..layer.out_dim())
                    .map(|o| {
                        let z = layer.bias()[o]
                            + h.iter().enumerate().map(|(i, v)| layer.weights()[(o, i)] * v).sum::<f64>();
                        match layer.activation() {
                            Activation::ReLU => z.max(0.0),
                            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                            _ => unreachable!(),
                        }
                    })
                    .collect();
            }
            for (a, b) in h.iter().zip(cache.output().row(n)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_reports_offending_layer() {
        let layers = init_layers(&[3, 2], &[Activation::ReLU], 0).unwrap();
        let x = Matrix::zeros(1, 4);
        assert!(matches!(
            forward(&layers, &x),
            Err(Error::LayerDimension { layer: 0, expected: 3, actual: 4 })
        ));
        let broken = vec![
            DenseLayer::zeros(3, 2, Activation::ReLU),
            DenseLayer::zeros(5, 1, Activation::ReLU),
        ];
        assert!(matches!(
            forward(&broken, &Matrix::zeros(1, 3)),
            Err(Error::LayerDimension { layer: 1, .. })
        ));
    }

    #[test]
    fn softmax_must_be_last() {
        let layers = vec![
            DenseLayer::zeros(3, 2, Activation::Softmax),
            DenseLayer::zeros(2, 2, Activation::Identity),
        ];
        assert!(validate_stack(&layers).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_param_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layers = init_layers(&[3, 4, 2], &[Activation::Sigmoid, Activation::Identity], 2).unwrap();
        let x = random_matrix(5, 3, &mut rng);
        let cache = forward(&layers, &x).unwrap();
        let (g, dx) = backward(&layers, &cache, &Matrix::zeros(5, 2)).unwrap();
        assert!(g.is_zero());
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let a = init_layers(&[3, 4, 2], &[Activation::ReLU, Activation::Identity], 2).unwrap();
        let b = init_layers(&[3, 5, 2], &[Activation::ReLU, Activation::Identity], 2).unwrap();
        let cache = forward(&a, &Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(
            backward(&b, &cache, &Matrix::zeros(2, 2)),
            Err(Error::StaleCache(_))
        ));
        assert!(matches!(
            backward(&a[..1], &cache, &Matrix::zeros(2, 4)),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn linear_squared_loss_matches_closed_form() {
        // L = mean_n ||x W^T + b - y||^2  =>  dL/dW = 2 err^T x / n
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layers = init_layers(&[3, 2], &[Activation::Identity], 4).unwrap();
        let x = random_matrix(7, 3, &mut rng);
        let y = random_matrix(7, 2, &mut rng);
        let cache = forward(&layers, &x).unwrap();
        let n = x.rows() as f64;
        let mut err = cache.output().clone();
        for (e, t) in err.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *e -= t;
        }
        let upstream = err.map(|e| 2.0 * e / n);
        let (g, _) = backward(&layers, &cache, &upstream).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                let mut closed = 0.0;
                for r in 0..7 {
                    closed += err[(r, o)] * x[(r, i)];
                }
                closed *= 2.0 / n;
                assert!((g.layers[0].weights[(o, i)] - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sgd_step_arithmetic_and_freeze() {
        let mut layers = vec![DenseLayer::new(
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            vec![0.0],
            Activation::Identity,
        )
        .unwrap()];
        let grads = ParamGradients {
            layers: vec![LayerGradients {
                weights: Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
                bias: vec![0.0],
            }],
        };
        let before = layers.clone();
        sgd_step(&mut layers, &grads, 0.0, &[false]).unwrap();
        assert_eq!(layers, before);
        sgd_step(&mut layers, &grads, 0.1, &[true]).unwrap();
        assert_eq!(layers, before);
        sgd_step(&mut layers, &grads, 0.1, &[false]).unwrap();
        assert!((layers[0].weights()[(0, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_helper_matches_activation() {
        let m = Matrix::from_rows(&[vec![-2.0, 0.0, 3.0]]).unwrap();
        let s = Activation::Sigmoid.apply(&m);
        for (a, z) in s.as_slice().iter().zip(m.as_slice()) {
            assert_eq!(*a, sigmoid(*z));
        }
    }
}
