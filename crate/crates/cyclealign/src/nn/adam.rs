//! Adam with bias correction, holding one moment pair per parameter tensor.

use crate::error::{Error, Result};
use crate::nn::{Matrix, MlpGrads, MlpParams};

#[derive(Debug, Clone)]
pub struct AdamState {
    m_weights: Vec<Matrix>,
    v_weights: Vec<Matrix>,
    m_biases: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
    step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with zero moments, shaped after `params`.
    pub fn new(params: &MlpParams) -> Self {
        Self {
            m_weights: params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            v_weights: params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            m_biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One Adam update. Shapes of `params`, `grads`, and `state` must agree.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &MlpGrads,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.weights.len() != params.weights.len()
        || grads
            .weights
            .iter()
            .zip(&params.weights)
            .any(|(g, w)| g.rows() != w.rows() || g.cols() != w.cols())
        || grads
            .biases
            .iter()
            .zip(&params.biases)
            .any(|(g, b)| g.len() != b.len())
    {
        return Err(Error::DimMismatch {
            context: "adam_step gradient shapes",
            expected: params.coord_count(),
            actual: grads.weights.iter().map(|w| w.data().len()).sum::<usize>()
                + grads.biases.iter().map(|b| b.len()).sum::<usize>(),
        });
    }
    if state.m_weights.len() != params.weights.len() {
        return Err(Error::DimMismatch {
            context: "adam_step state shapes",
            expected: params.weights.len(),
            actual: state.m_weights.len(),
        });
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };

    for layer in 0..params.weights.len() {
        update(
            params.weights[layer].data_mut(),
            grads.weights[layer].data(),
            state.m_weights[layer].data_mut(),
            state.v_weights[layer].data_mut(),
        );
        update(
            &mut params.biases[layer],
            &grads.biases[layer],
            &mut state.m_biases[layer],
            &mut state.v_biases[layer],
        );
    }
    Ok(())
}
