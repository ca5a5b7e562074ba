//! Train a concept-bottleneck model on a toy problem where fraud is decided by two of
//! four concepts, then show that the decision head reads the concept layer.
//!
//!     cargo run --example bottleneck_model

use cbx::model::ConceptBottleneckModel;
use cbx::nn::{Activation, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cbx::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, d) = (512, 8);
    let names: Vec<String> = ["velocity", "new device", "mismatch", "bulk order"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let k = names.len();

    // concept c fires when feature c is large; fraud = velocity AND mismatch
    let mut x = Matrix::zeros(n, d);
    let mut ye = Matrix::zeros(n, k);
    let mut yd = Matrix::zeros(n, 2);
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] = rng.random_range(-1.0..1.0);
        }
        for c in 0..k {
            ye[(i, c)] = f64::from(u8::from(x[(i, c)] > 0.2));
        }
        let fraud = ye[(i, 0)] > 0.5 && ye[(i, 2)] > 0.5;
        yd[(i, usize::from(fraud))] = 1.0;
    }
    let mask = vec![true; n];

    let mut model = ConceptBottleneckModel::new(d, &[16], Activation::ReLU, names.clone(), 2, 1)?;
    println!("{} parameters, trunk {:?}", model.param_count(), model.hidden_dims());
    for epoch in 0..=400 {
        let loss = model.train_step(&x, &yd, &ye, &mask, 0.5, 0.5, false)?;
        if epoch % 100 == 0 {
            println!(
                "step {epoch:>3}: total {:.4}  decision {:.4}  explain {:.4}",
                loss.total, loss.decision, loss.explain
            );
        }
    }

    let probe = Matrix::from_rows(&[
        vec![0.9, -0.5, 0.9, -0.5, 0.0, 0.0, 0.0, 0.0],
        vec![0.9, -0.5, -0.9, -0.5, 0.0, 0.0, 0.0, 0.0],
    ])?;
    let pred = model.predict(&probe)?;
    for i in 0..probe.rows() {
        let concepts: Vec<String> = names
            .iter()
            .enumerate()
            .map(|(c, name)| format!("{name} {:.2}", pred.concepts[(i, c)]))
            .collect();
        println!("probe {i}: p(fraud) {:.3}  [{}]", pred.decision[(i, 1)], concepts.join(", "));
    }

    // the decision depends on x only through the concept probabilities
    let from_concepts = model.decide_from_concepts(&pred.concepts)?;
    assert_eq!(from_concepts, pred.decision);
    println!("decision head output reproduced from the concept layer alone");
    Ok(())
}
