//! Concept-bottleneck multi-task network.
//!
//! A shared trunk of hidden layers feeds a sigmoid *explainability* head with one unit
//! per concept. The softmax *decision* head reads only those concept probabilities, so
//! every decision is a function of the predicted concepts:
//!
//! ```text
//! x ──trunk──▶ h ──explain head (sigmoid)──▶ ŷ_E ──decision head (softmax)──▶ ŷ_D
//! ```
//!
//! Training minimizes `α · CE(ŷ_D, y_D) + (1 − α) · BCE(ŷ_E, y_E)`, each part averaged
//! over the batch (the concept part over rows whose mask flag is set).

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    self, categorical_ce, multilabel_bce, Activation, DenseLayer, ForwardCache, LayerGradients,
    Matrix, ParamGradients,
};
use crate::{Error, Result};

pub use checkpoint::{decode_concept_name, encode_concept_name};

/// Weight of the decision loss in the meta-loss, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaLossConfig {
    alpha: f64,
}

impl MetaLossConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }
}

/// Model outputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `n × k` per-concept probabilities (uncalibrated).
    pub concepts: Matrix,
    /// `n × m` class probabilities.
    pub decision: Matrix,
}

impl Prediction {
    /// Probability of `class` for every row; class 1 is the fraud class in binary setups.
    pub fn class_scores(&self, class: usize) -> Vec<f64> {
        (0..self.decision.rows())
            .map(|i| self.decision[(i, class)])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub decision: f64,
    pub explain: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.decision.is_finite() && self.explain.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub trunk: ParamGradients,
    pub explain: LayerGradients,
    pub decision: LayerGradients,
}

/// Activations retained for a backward pass.
#[derive(Debug, Clone)]
pub struct ModelCache {
    trunk: ForwardCache,
    concepts: Matrix,
    decision: Matrix,
}

impl ModelCache {
    pub fn prediction(&self) -> Prediction {
        Prediction {
            concepts: self.concepts.clone(),
            decision: self.decision.clone(),
        }
    }
}

/// Combines the two task losses: `α · decision + (1 − α) · explain`.
pub fn meta_loss(
    pred: &Prediction,
    y_decision: &Matrix,
    y_concepts: &Matrix,
    concept_mask: &[bool],
    alpha: f64,
) -> Result<LossParts> {
    let alpha = MetaLossConfig::new(alpha)?.alpha();
    let decision = categorical_ce(&pred.decision, y_decision)?;
    let explain = multilabel_bce(&pred.concepts, y_concepts, concept_mask)?;
    Ok(LossParts {
        total: combine(alpha, decision, explain),
        decision,
        explain,
    })
}

#[inline]
pub fn combine(alpha: f64, decision: f64, explain: f64) -> f64 {
    alpha * decision + (1.0 - alpha) * explain
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBottleneckModel {
    trunk: Vec<DenseLayer>,
    explain_head: DenseLayer,
    decision_head: DenseLayer,
    concept_names: Vec<String>,
}

impl ConceptBottleneckModel {
    /// Glorot-initialized model. `hidden` lists trunk widths (may be empty).
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        hidden_activation: Activation,
        concept_names: Vec<String>,
        class_count: usize,
        seed: u64,
    ) -> Result<Self> {
        if hidden_activation == Activation::Softmax {
            return Err(Error::InvalidConfig(
                "softmax is reserved for the decision head".into(),
            ));
        }
        if class_count < 2 {
            return Err(Error::InvalidConfig("decision task needs >= 2 classes".into()));
        }
        let k = concept_names.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(k);
        dims.push(class_count);
        let mut acts = vec![hidden_activation; hidden.len()];
        acts.push(Activation::Sigmoid);
        acts.push(Activation::Softmax);
        let mut layers = nn::init_layers_with_rng(&dims, &acts, &mut rng)?;
        let decision_head = layers.pop().expect("decision layer");
        let explain_head = layers.pop().expect("explain layer");
        Self::from_parts(layers, explain_head, decision_head, concept_names)
    }

    pub fn from_parts(
        trunk: Vec<DenseLayer>,
        explain_head: DenseLayer,
        decision_head: DenseLayer,
        concept_names: Vec<String>,
    ) -> Result<Self> {
        if explain_head.activation() != Activation::Sigmoid {
            return Err(Error::InvalidConfig("explain head must use sigmoid".into()));
        }
        if decision_head.activation() != Activation::Softmax {
            return Err(Error::InvalidConfig("decision head must use softmax".into()));
        }
        if trunk.iter().any(|l| l.activation() == Activation::Softmax) {
            return Err(Error::InvalidConfig("softmax not allowed in the trunk".into()));
        }
        if concept_names.len() != explain_head.out_dim() {
            return Err(Error::InvalidConfig(format!(
                "{} concept names for an explain head of width {}",
                concept_names.len(),
                explain_head.out_dim()
            )));
        }
        let mut all = trunk.clone();
        all.push(explain_head.clone());
        all.push(decision_head.clone());
        nn::validate_stack(&all)?;
        Ok(Self {
            trunk,
            explain_head,
            decision_head,
            concept_names,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.trunk
            .first()
            .unwrap_or(&self.explain_head)
            .in_dim()
    }

    pub fn concept_count(&self) -> usize {
        self.explain_head.out_dim()
    }

    pub fn class_count(&self) -> usize {
        self.decision_head.out_dim()
    }

    pub fn concept_names(&self) -> &[String] {
        &self.concept_names
    }

    pub fn trunk(&self) -> &[DenseLayer] {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.trunk
    }

    pub fn explain_head(&self) -> &DenseLayer {
        &self.explain_head
    }

    pub fn explain_head_mut(&mut self) -> &mut DenseLayer {
        &mut self.explain_head
    }

    pub fn decision_head(&self) -> &DenseLayer {
        &self.decision_head
    }

    pub fn decision_head_mut(&mut self) -> &mut DenseLayer {
        &mut self.decision_head
    }

    /// Hidden widths, e.g. `[64, 32]`.
    pub fn hidden_dims(&self) -> Vec<usize> {
        self.trunk.iter().map(DenseLayer::out_dim).collect()
    }

    /// All layers in forward order: trunk, explain head, decision head.
    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.trunk
            .iter()
            .chain([&self.explain_head, &self.decision_head])
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(DenseLayer::param_count).sum()
    }

    /// Raw bit patterns of every trunk parameter, for freeze checks.
    pub fn trunk_bits(&self) -> Vec<u64> {
        self.trunk
            .iter()
            .flat_map(|l| l.weights().as_slice().iter().chain(l.bias()))
            .map(|v| v.to_bits())
            .collect()
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ModelCache> {
        if x.cols() != self.input_dim() {
            return Err(Error::LayerDimension {
                layer: 0,
                expected: self.input_dim(),
                actual: x.cols(),
            });
        }
        let trunk = nn::forward(&self.trunk, x)?;
        let concepts = self.explain_head.forward(trunk.output())?;
        let decision = self.decision_head.forward(&concepts)?;
        Ok(ModelCache {
            trunk,
            concepts,
            decision,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Prediction> {
        let cache = self.forward_cached(x)?;
        Ok(Prediction {
            concepts: cache.concepts,
            decision: cache.decision,
        })
    }

    /// Applies only the decision head to given concept probabilities.
    pub fn decide_from_concepts(&self, concepts: &Matrix) -> Result<Matrix> {
        self.decision_head.forward(concepts)
    }

    /// Meta-loss and its exact gradients for one batch. Trunk gradients are skipped
    /// (left zero) when `with_trunk` is false.
    pub fn loss_and_gradients(
        &self,
        x: &Matrix,
        y_decision: &Matrix,
        y_concepts: &Matrix,
        concept_mask: &[bool],
        alpha: f64,
        with_trunk: bool,
    ) -> Result<(LossParts, ModelGradients)> {
        let alpha = MetaLossConfig::new(alpha)?.alpha();
        let n = x.rows();
        if n == 0 {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        let cache = self.forward_cached(x)?;
        let loss = meta_loss(
            &Prediction {
                concepts: cache.concepts.clone(),
                decision: cache.decision.clone(),
            },
            y_decision,
            y_concepts,
            concept_mask,
            alpha,
        )?;

        // softmax + CE fused: dL/dz_D = α (ŷ_D − y_D) / n
        let mut dz_decision = cache.decision.clone();
        for (g, &y) in dz_decision
            .as_mut_slice()
            .iter_mut()
            .zip(y_decision.as_slice())
        {
            *g = alpha * (*g - y) / n as f64;
        }
        let (decision_grads, d_concepts) = self
            .decision_head
            .backward_from_preactivation(&cache.concepts, &dz_decision)?;

        // concept pre-activation: backflow from the decision head through the sigmoid,
        // plus the fused sigmoid + BCE term (1 − α)(ŷ_E − y_E) / n_masked on masked rows.
        let masked = concept_mask.iter().filter(|&&m| m).count();
        let mut dz_explain = Activation::Sigmoid.backprop(&cache.concepts, &d_concepts);
        if masked > 0 {
            let scale = (1.0 - alpha) / masked as f64;
            for (i, _) in concept_mask.iter().enumerate().filter(|(_, &m)| m) {
                let p = cache.concepts.row(i);
                let y = y_concepts.row(i);
                for ((g, &p), &y) in dz_explain.row_mut(i).iter_mut().zip(p).zip(y) {
                    *g += scale * (p - y);
                }
            }
        }
        let (explain_grads, d_hidden) = self
            .explain_head
            .backward_from_preactivation(cache.trunk.output(), &dz_explain)?;

        let trunk_grads = if with_trunk && !self.trunk.is_empty() {
            nn::backward(&self.trunk, &cache.trunk, &d_hidden)?.0
        } else {
            ParamGradients::zeros_like(&self.trunk)
        };

        Ok((
            loss,
            ModelGradients {
                trunk: trunk_grads,
                explain: explain_grads,
                decision: decision_grads,
            },
        ))
    }

    /// Applies `p ← p − lr · grad` to every parameter, leaving the trunk untouched when
    /// `freeze_trunk` is set.
    pub fn apply_gradients(
        &mut self,
        grads: &ModelGradients,
        learning_rate: f64,
        freeze_trunk: bool,
    ) -> Result<()> {
        let freeze = vec![freeze_trunk; self.trunk.len()];
        nn::sgd_step(&mut self.trunk, &grads.trunk, learning_rate, &freeze)?;
        let heads = ParamGradients {
            layers: vec![grads.explain.clone(), grads.decision.clone()],
        };
        let mut head_layers = [self.explain_head.clone(), self.decision_head.clone()];
        nn::sgd_step(&mut head_layers, &heads, learning_rate, &[false, false])?;
        let [explain, decision] = head_layers;
        self.explain_head = explain;
        self.decision_head = decision;
        Ok(())
    }

    /// One forward/backward/update step on a batch. Returns the pre-update losses.
    #[allow(clippy::too_many_arguments)]
    pub fn train_step(
        &mut self,
        x: &Matrix,
        y_decision: &Matrix,
        y_concepts: &Matrix,
        concept_mask: &[bool],
        alpha: f64,
        learning_rate: f64,
        freeze_trunk: bool,
    ) -> Result<LossParts> {
        let (loss, grads) =
            self.loss_and_gradients(x, y_decision, y_concepts, concept_mask, alpha, !freeze_trunk)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        self.apply_gradients(&grads, learning_rate, freeze_trunk)?;
        Ok(loss)
    }

    pub fn to_checkpoint_string(&self) -> String {
        checkpoint::write(self)
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        checkpoint::read(text, "<checkpoint>")
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        checkpoint::read(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("Concept {i}")).collect()
    }

    fn one_hot(labels: &[usize], m: usize) -> Matrix {
        let mut y = Matrix::zeros(labels.len(), m);
        for (i, &c) in labels.iter().enumerate() {
            y[(i, c)] = 1.0;
        }
        y
    }

    #[test]
    fn zero_parameters_give_symmetric_outputs() {
        let model = ConceptBottleneckModel::from_parts(
            vec![DenseLayer::zeros(3, 4, Activation::ReLU)],
            DenseLayer::zeros(4, 5, Activation::Sigmoid),
            DenseLayer::zeros(5, 2, Activation::Softmax),
            names(5),
        )
        .unwrap();
        let x = Matrix::filled(3, 3, 1.7);
        let p = model.predict(&x).unwrap();
        assert!(p.concepts.as_slice().iter().all(|&v| v == 0.5));
        assert!(p.decision.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn output_shapes_follow_dimensions() {
        let model = ConceptBottleneckModel::new(20, &[32], Activation::ReLU, names(14), 2, 1).unwrap();
        let p = model.predict(&Matrix::filled(5, 20, 0.3)).unwrap();
        assert_eq!(p.concepts.shape(), (5, 14));
        assert_eq!(p.decision.shape(), (5, 2));
        for i in 0..5 {
            let s: f64 = p.decision.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(model.predict(&Matrix::zeros(1, 19)).is_err());
    }

    #[test]
    fn decision_head_perturbation_leaves_concepts_untouched() {
        let model = ConceptBottleneckModel::new(6, &[8], Activation::ReLU, names(4), 2, 9).unwrap();
        let x = Matrix::filled(2, 6, 0.4);
        let before = model.predict(&x).unwrap();
        let mut tweaked = model.clone();
        tweaked.decision_head_mut().weights_mut()[(0, 1)] += 0.5;
        let after = tweaked.predict(&x).unwrap();
        assert_eq!(
            before.concepts.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            after.concepts.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(before.decision, after.decision);
    }

    #[test]
    fn meta_loss_endpoints_and_mix() {
        let model = ConceptBottleneckModel::new(3, &[4], Activation::ReLU, names(2), 2, 3).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0]]).unwrap();
        let pred = model.predict(&x).unwrap();
        let yd = one_hot(&[0, 1], 2);
        let ye = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let l1 = meta_loss(&pred, &yd, &ye, &[true, true], 1.0).unwrap();
        assert_eq!(l1.total, l1.decision);
        let l0 = meta_loss(&pred, &yd, &ye, &[true, true], 0.0).unwrap();
        assert_eq!(l0.total, l0.explain);
        assert_eq!(combine(0.5, 2.0, 4.0), 3.0);
        assert!(matches!(
            meta_loss(&pred, &yd, &ye, &[true, true], 1.5),
            Err(Error::AlphaOutOfRange(_))
        ));
        assert!(MetaLossConfig::new(-0.1).is_err());
    }

    #[test]
    fn alpha_zero_gives_no_decision_gradient_and_freeze_holds() {
        let mut model = ConceptBottleneckModel::new(4, &[5], Activation::ReLU, names(3), 2, 5).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -0.2, 1.0, 0.5], vec![1.0, 1.0, -1.0, 0.0]]).unwrap();
        let yd = one_hot(&[1, 0], 2);
        let ye = Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let (_, g) = model
            .loss_and_gradients(&x, &yd, &ye, &[true, true], 0.0, true)
            .unwrap();
        assert!(g.decision.is_zero());
        assert!(!g.explain.is_zero());

        let (_, g1) = model
            .loss_and_gradients(&x, &yd, &ye, &[true, true], 1.0, true)
            .unwrap();
        assert!(!g1.explain.is_zero());

        let trunk_before = model.trunk_bits();
        model
            .train_step(&x, &yd, &ye, &[true, true], 0.5, 0.3, true)
            .unwrap();
        assert_eq!(model.trunk_bits(), trunk_before);
    }

    #[test]
    fn rejects_inconsistent_parts() {
        assert!(ConceptBottleneckModel::from_parts(
            vec![],
            DenseLayer::zeros(3, 4, Activation::Sigmoid),
            DenseLayer::zeros(5, 2, Activation::Softmax),
            names(4),
        )
        .is_err());
        assert!(ConceptBottleneckModel::from_parts(
            vec![],
            DenseLayer::zeros(3, 4, Activation::ReLU),
            DenseLayer::zeros(4, 2, Activation::Softmax),
            names(4),
        )
        .is_err());
        assert!(ConceptBottleneckModel::new(3, &[2], Activation::ReLU, names(2), 1, 0).is_err());
    }
}
