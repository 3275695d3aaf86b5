//! Networks: the bounded two-layer class and a small ReLU MLP classifier.
//!
//! Both implement [`Model`], which exposes the analytic passes the trainer
//! needs (parameter backprop, input gradients, Jacobians and the parameter
//! gradient of a Jacobian penalty), and [`TapeModel`] so the same forward
//! pass can be recorded on an autodiff tape and cross-checked.

mod io;
mod mlp;
mod two_layer;

pub use io::{read_net, write_net, SavedNet};
pub use mlp::Mlp;
pub use two_layer::{Activation, TwoLayerNet};

use crate::autodiff::TapeModel;

pub trait Model: TapeModel + Clone + Send + Sync {
    fn num_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]);

    /// Output scores `φ(x)`, one per channel.
    fn forward(&self, x: &[f64]) -> Vec<f64>;

    /// Accumulates `∂/∂θ Σ_k u_k φ_k(x)` into `grad`.
    fn backward(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]);

    /// `∇_x Σ_k u_k φ_k(x)`.
    fn input_grad(&self, x: &[f64], upstream: &[f64]) -> Vec<f64>;

    /// Row-major `n × d` Jacobian `∂φ_k/∂x_i`.
    fn jacobian(&self, x: &[f64]) -> Vec<f64>;

    /// Accumulates `∂/∂θ Σ_{k,i} G_{ki} J_{ki}(x; θ)` into `grad`, with `G`
    /// held fixed. This is the second backward pass of double backprop.
    fn jacobian_backward(&self, x: &[f64], g: &[f64], grad: &mut [f64]);

    /// Scores and Jacobian together.
    fn forward_jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.forward(x), self.jacobian(x))
    }

    /// [`Model::backward`] followed by [`Model::jacobian_backward`].
    fn backward_with_jacobian(&self, x: &[f64], upstream: &[f64], g: &[f64], grad: &mut [f64]) {
        self.backward(x, upstream, grad);
        self.jacobian_backward(x, g, grad);
    }

    /// Hook applied after every optimizer step when training inside a
    /// bounded class. No-op for unconstrained models.
    fn project(&mut self, _bound: f64) {}

    fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.forward(x))
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}
