//! Dense-network numerical kernel: matrices, layers, losses, backprop and SGD.

pub mod checkpoint;
mod layer;
mod loss;
mod matrix;
mod network;

pub use layer::{
    init_layers, init_layers_with_rng, sigmoid, sigmoid_elementwise, softmax_rows, Activation,
    DenseLayer, LayerGradients,
};
pub use loss::{categorical_ce, multilabel_bce, one_hot_index, EPS};
pub use matrix::Matrix;
pub use network::{
    backward, backward_from_preactivation, forward, sgd_step, validate_stack, ForwardCache,
    ParamGradients,
};
