//! Meta-loss, bottleneck structure and row masking of the concept-bottleneck model.

mod common;

use cbx::model::{combine, meta_loss, ConceptBottleneckModel};
use cbx::nn::{Activation, Matrix};
use common::names;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> (Matrix, Matrix) {
    let mut yd = Matrix::zeros(n, 2);
    let mut ye = Matrix::zeros(n, k);
    for i in 0..n {
        yd[(i, rng.random_range(0..2))] = 1.0;
        for c in 0..k {
            ye[(i, c)] = f64::from(u8::from(rng.random_bool(0.35)));
        }
    }
    (yd, ye)
}

/// Scalar oracle: mean CE over rows; BCE summed over concepts, averaged over masked rows.
fn oracle_parts(pd: &Matrix, pe: &Matrix, yd: &Matrix, ye: &Matrix, mask: &[bool]) -> (f64, f64) {
    let clamp = |p: f64| p.clamp(1e-12, 1.0 - 1e-12);
    let n = pd.rows();
    let mut ce = 0.0;
    for i in 0..n {
        for j in 0..pd.cols() {
            if yd[(i, j)] > 0.0 {
                ce -= yd[(i, j)] * clamp(pd[(i, j)]).ln();
            }
        }
    }
    let mut bce = 0.0;
    let mut rows = 0;
    for i in (0..n).filter(|&i| mask[i]) {
        rows += 1;
        for c in 0..pe.cols() {
            let (p, y) = (clamp(pe[(i, c)]), ye[(i, c)]);
            bce -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
    }
    let explain = if rows == 0 { 0.0 } else { bce / rows as f64 };
    (ce / n as f64, explain)
}

#[test]
fn meta_loss_is_the_weighted_sum_of_its_parts() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (d, e, a) = (rng.random_range(0.0..20.0), rng.random_range(0.0..20.0), rng.random_range(0.0..=1.0));
        let expected = a * d + (1.0 - a) * e;
        assert!((combine(a, d, e) - expected).abs() <= 1e-15 * expected.max(1.0));
    }
    let model = ConceptBottleneckModel::new(5, &[6], Activation::ReLU, names(3), 2, 9).unwrap();
    for t in 0..200 {
        let n = 1 + t % 7;
        let x = random_matrix(n, 5, &mut rng);
        let (yd, ye) = labels(n, 3, &mut rng);
        let mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        let alpha = rng.random_range(0.0..=1.0);
        let p = model.predict(&x).unwrap();
        let parts = meta_loss(&p, &yd, &ye, &mask, alpha).unwrap();
        let (od, oe) = oracle_parts(&p.decision, &p.concepts, &yd, &ye, &mask);
        assert!((parts.decision - od).abs() < 1e-12);
        assert!((parts.explain - oe).abs() < 1e-12);
        assert!((parts.total - (alpha * parts.decision + (1.0 - alpha) * parts.explain)).abs() <= 1e-15 * parts.total.max(1.0));
    }
}

#[test]
fn alpha_endpoints_route_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..20 {
        let model = ConceptBottleneckModel::new(6, &[8, 8], Activation::ReLU, names(4), 2, seed).unwrap();
        let x = random_matrix(5, 6, &mut rng);
        let (yd, ye) = labels(5, 4, &mut rng);
        let mask = vec![true; 5];
        let (_, g0) = model.loss_and_gradients(&x, &yd, &ye, &mask, 0.0, true).unwrap();
        assert!(g0.decision.is_zero(), "alpha 0 must leave the decision head untouched");
        let (_, g1) = model.loss_and_gradients(&x, &yd, &ye, &mask, 1.0, true).unwrap();
        assert!(!g1.explain.is_zero(), "decision loss must reach the explain head");
    }
}

#[test]
fn decision_depends_only_on_concept_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = ConceptBottleneckModel::new(6, &[8], Activation::ReLU, names(4), 2, 1).unwrap();
    let x = random_matrix(10, 6, &mut rng);
    let pred = model.predict(&x).unwrap();
    assert_eq!(model.decide_from_concepts(&pred.concepts).unwrap(), pred.decision);

    // a different trunk changes the concepts, but the head applied to them is the same map
    let mut other = model.clone();
    for layer in other.trunk_mut() {
        for w in layer.weights_mut().as_mut_slice() {
            *w = rng.random_range(-1.0..1.0);
        }
    }
    let p2 = other.predict(&x).unwrap();
    assert_ne!(p2.concepts, pred.concepts);
    assert_eq!(model.decide_from_concepts(&p2.concepts).unwrap(), p2.decision);
}

proptest! {
    #[test]
    fn unmasked_rows_leave_the_explain_loss_alone(seed in any::<u64>(), n in 1usize..6, extra in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = ConceptBottleneckModel::new(4, &[5], Activation::Sigmoid, names(3), 2, seed).unwrap();
        let x = random_matrix(n, 4, &mut rng);
        let (yd, ye) = labels(n, 3, &mut rng);
        let base = meta_loss(&model.predict(&x).unwrap(), &yd, &ye, &vec![true; n], 0.5).unwrap();

        let x2 = x.vstack(&random_matrix(extra, 4, &mut rng)).unwrap();
        let (yd_extra, ye_extra) = labels(extra, 3, &mut rng);
        let yd2 = yd.vstack(&yd_extra).unwrap();
        let ye2 = ye.vstack(&ye_extra).unwrap();
        let mut mask = vec![true; n];
        mask.extend(vec![false; extra]);
        let p2 = model.predict(&x2).unwrap();
        let grown = meta_loss(&p2, &yd2, &ye2, &mask, 0.5).unwrap();
        prop_assert!((grown.explain - base.explain).abs() < 1e-12);
        let (od, oe) = oracle_parts(&p2.decision, &p2.concepts, &yd2, &ye2, &mask);
        prop_assert!((grown.decision - od).abs() < 1e-12);
        prop_assert!((grown.explain - oe).abs() < 1e-12);
    }
}

#[test]
fn model_checkpoints_keep_concept_order() {
    let names: Vec<String> = vec!["Suspicious Items".into(), "Card Testing".into()];
    let model = ConceptBottleneckModel::new(3, &[4], Activation::ReLU, names.clone(), 2, 5).unwrap();
    let text = model.to_checkpoint_string();
    let back = ConceptBottleneckModel::from_checkpoint_str(&text).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.concept_names(), names.as_slice());
}
