//! Compare the analytic meta-loss gradients of a small bottleneck model with central
//! finite differences, parameter by parameter.
//!
//!     cargo run --example gradient_check

use cbx::model::{meta_loss, ConceptBottleneckModel};
use cbx::nn::{Activation, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn main() -> cbx::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, d, k) = (8, 6, 4);
    let names = (0..k).map(|i| format!("concept {i}")).collect();
    let model = ConceptBottleneckModel::new(d, &[8, 8], Activation::ReLU, names, 2, 3)?;

    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let mut yd = Matrix::zeros(n, 2);
    let mut ye = Matrix::zeros(n, k);
    for i in 0..n {
        yd[(i, usize::from(rng.random_bool(0.3)))] = 1.0;
        for c in 0..k {
            ye[(i, c)] = f64::from(u8::from(rng.random_bool(0.3)));
        }
    }
    let mask = vec![true; n];

    for alpha in [0.0, 0.3, 1.0] {
        let (_, grads) = model.loss_and_gradients(&x, &yd, &ye, &mask, alpha, true)?;
        let loss = |m: &ConceptBottleneckModel| -> cbx::Result<f64> {
            Ok(meta_loss(&m.predict(&x)?, &yd, &ye, &mask, alpha)?.total)
        };
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        let trunk_len = model.trunk().len();
        for li in 0..trunk_len + 2 {
            let g = match li {
                _ if li < trunk_len => &grads.trunk.layers[li],
                _ if li == trunk_len => &grads.explain,
                _ => &grads.decision,
            };
            let weights = g.weights.as_slice().len();
            for p in 0..weights + g.bias.len() {
                let nudged = |delta: f64| {
                    let mut m = model.clone();
                    let layer = if li < trunk_len {
                        &mut m.trunk_mut()[li]
                    } else if li == trunk_len {
                        m.explain_head_mut()
                    } else {
                        m.decision_head_mut()
                    };
                    if p < weights {
                        layer.weights_mut().as_mut_slice()[p] += delta;
                    } else {
                        layer.bias_mut()[p - weights] += delta;
                    }
                    loss(&m)
                };
                let numeric = (nudged(H)? - nudged(-H)?) / (2.0 * H);
                let analytic = if p < weights { g.weights.as_slice()[p] } else { g.bias[p - weights] };
                worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1.0));
                checked += 1;
            }
        }
        println!("alpha {alpha:.1}: {checked} parameters, worst relative error {worst:.2e}");
    }
    Ok(())
}
