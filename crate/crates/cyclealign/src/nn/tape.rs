//! Vector-valued Wengert tape.
//!
//! Forward evaluation pushes one node per primitive (affine layer, activation,
//! concat, elementwise arithmetic, loss reduction). `backprop` walks the tape
//! in reverse and accumulates gradients for every parameter that was marked
//! trainable via a [`NetKey`]. Networks evaluated without a key contribute
//! gradients to their *inputs* only, which is exactly the contract a frozen
//! forward model needs.
//!
//! The tape borrows parameters immutably, so the borrow ends before an
//! optimizer step mutates them:
//!
//! ```text
//! build tape -> backprop -> drop tape -> adam_step(&mut params, grads)
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{Activation, Matrix, MlpParams};

/// Identifies one trainable network inside a [`GradStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NetKey(pub u32);

/// Handle to a value recorded on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'p> {
    /// Constant leaf; no gradient flows out of it.
    Leaf,
    /// `W x + b`. When `grad` is set, parameter gradients accumulate under
    /// that (net, layer) slot.
    Affine {
        w: &'p Matrix,
        b: &'p [f64],
        x: Var,
        grad: Option<(NetKey, usize)>,
    },
    Act {
        kind: Activation,
        x: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    /// `(x - shift) * scale`, elementwise; input normalization.
    ScaleShift {
        x: Var,
        shift: Vec<f64>,
        scale: Vec<f64>,
    },
    /// Scalar `mean_i |x_i|`.
    MeanAbs {
        x: Var,
    },
    /// Scalar `mean_i [softplus(x_i) - target * x_i]`, the sigmoid
    /// cross-entropy of logits against a constant label.
    BceLogits {
        x: Var,
        target: f64,
    },
    /// Scalar `sum_k c_k * terms_k` over scalar nodes.
    WeightedSum {
        terms: Vec<(Var, f64)>,
    },
}

pub struct Tape<'p> {
    ops: Vec<Op<'p>>,
    vals: Vec<Vec<f64>>,
}

impl<'p> Default for Tape<'p> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            vals: Vec::new(),
        }
    }

    fn push(&mut self, op: Op<'p>, val: Vec<f64>) -> Var {
        self.ops.push(op);
        self.vals.push(val);
        Var(self.ops.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.vals[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.vals[v.0].len(), 1);
        self.vals[v.0][0]
    }

    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Re-registers an existing value as a constant, cutting the gradient
    /// path to whatever produced it.
    pub fn detach(&mut self, v: Var) -> Var {
        let val = self.vals[v.0].clone();
        self.leaf(val)
    }

    pub fn affine(
        &mut self,
        w: &'p Matrix,
        b: &'p [f64],
        x: Var,
        grad: Option<(NetKey, usize)>,
    ) -> Var {
        debug_assert_eq!(self.vals[x.0].len(), w.cols());
        let mut out = b.to_vec();
        let mut z = vec![0.0; w.rows()];
        w.matvec(&self.vals[x.0], &mut z);
        for (o, zv) in out.iter_mut().zip(&z) {
            *o += zv;
        }
        self.push(Op::Affine { w, b, x, grad }, out)
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Var {
        if kind == Activation::Linear {
            return x;
        }
        let out = self.vals[x.0].iter().map(|&v| kind.apply(v)).collect();
        self.push(Op::Act { kind, x }, out)
    }

    /// Evaluates a whole MLP on the tape. `key` marks its parameters
    /// trainable; `None` freezes them (gradient still reaches the input).
    pub fn mlp(&mut self, params: &'p MlpParams, x: Var, key: Option<NetKey>) -> Result<Var> {
        if self.vals[x.0].len() != params.spec.input_dim() {
            return Err(Error::DimMismatch {
                context: "tape mlp input",
                expected: params.spec.input_dim(),
                actual: self.vals[x.0].len(),
            });
        }
        let mut cur = x;
        for layer in 0..params.spec.num_layers() {
            cur = self.affine(
                &params.weights[layer],
                &params.biases[layer],
                cur,
                key.map(|k| (k, layer)),
            );
            cur = self.activation(params.spec.activation_of_layer(layer), cur);
        }
        Ok(cur)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.vals[a.0].clone();
        out.extend_from_slice(&self.vals[b.0]);
        self.push(Op::Concat { a, b }, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(self.vals[a.0].len(), self.vals[b.0].len());
        let out = self.vals[a.0]
            .iter()
            .zip(&self.vals[b.0])
            .map(|(x, y)| x + y)
            .collect();
        self.push(Op::Add { a, b }, out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(self.vals[a.0].len(), self.vals[b.0].len());
        let out = self.vals[a.0]
            .iter()
            .zip(&self.vals[b.0])
            .map(|(x, y)| x - y)
            .collect();
        self.push(Op::Sub { a, b }, out)
    }

    /// `(x - shift) * scale`, elementwise.
    pub fn scale_shift(&mut self, x: Var, shift: &[f64], scale: &[f64]) -> Var {
        debug_assert_eq!(self.vals[x.0].len(), shift.len());
        debug_assert_eq!(shift.len(), scale.len());
        let out = self.vals[x.0]
            .iter()
            .zip(shift)
            .zip(scale)
            .map(|((v, sh), sc)| (v - sh) * sc)
            .collect();
        self.push(
            Op::ScaleShift {
                x,
                shift: shift.to_vec(),
                scale: scale.to_vec(),
            },
            out,
        )
    }

    /// Scalar mean absolute value of a vector node.
    pub fn mean_abs(&mut self, x: Var) -> Var {
        let v = &self.vals[x.0];
        let m = v.iter().map(|a| a.abs()).sum::<f64>() / v.len() as f64;
        self.push(Op::MeanAbs { x }, vec![m])
    }

    /// Mean L1 between two vector nodes.
    pub fn l1(&mut self, pred: Var, target: Var) -> Var {
        let d = self.sub(pred, target);
        self.mean_abs(d)
    }

    /// Sigmoid cross-entropy of logits against constant label `target`.
    pub fn bce_logits(&mut self, logits: Var, target: f64) -> Var {
        let v = &self.vals[logits.0];
        let m = v
            .iter()
            .map(|&z| crate::nn::softplus(z) - target * z)
            .sum::<f64>()
            / v.len() as f64;
        self.push(Op::BceLogits { x: logits, target }, vec![m])
    }

    /// Weighted sum of scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let total = terms
            .iter()
            .map(|(v, c)| {
                debug_assert_eq!(self.vals[v.0].len(), 1);
                self.vals[v.0][0] * c
            })
            .sum();
        self.push(
            Op::WeightedSum {
                terms: terms.to_vec(),
            },
            vec![total],
        )
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, terms: &[Var]) -> Var {
        let c = 1.0 / terms.len() as f64;
        let weighted: Vec<(Var, f64)> = terms.iter().map(|&v| (v, c)).collect();
        self.weighted_sum(&weighted)
    }

    /// Recomputes the forward value of `out` from the recorded operations.
    /// Replaying must reproduce the recorded value exactly.
    pub fn replay(&self, out: Var) -> f64 {
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(self.ops.len());
        for (i, op) in self.ops.iter().enumerate() {
            let v = match op {
                Op::Leaf => self.vals[i].clone(),
                Op::Affine { w, b, x, .. } => {
                    let mut out = b.to_vec();
                    let mut z = vec![0.0; w.rows()];
                    w.matvec(&vals[x.0], &mut z);
                    for (o, zv) in out.iter_mut().zip(&z) {
                        *o += zv;
                    }
                    out
                }
                Op::Act { kind, x } => vals[x.0].iter().map(|&v| kind.apply(v)).collect(),
                Op::Concat { a, b } => {
                    let mut out = vals[a.0].clone();
                    out.extend_from_slice(&vals[b.0]);
                    out
                }
                Op::Add { a, b } => vals[a.0].iter().zip(&vals[b.0]).map(|(x, y)| x + y).collect(),
                Op::Sub { a, b } => vals[a.0].iter().zip(&vals[b.0]).map(|(x, y)| x - y).collect(),
                Op::ScaleShift { x, shift, scale } => vals[x.0]
                    .iter()
                    .zip(shift)
                    .zip(scale)
                    .map(|((v, sh), sc)| (v - sh) * sc)
                    .collect(),
                Op::MeanAbs { x } => {
                    let v = &vals[x.0];
                    vec![v.iter().map(|a| a.abs()).sum::<f64>() / v.len() as f64]
                }
                Op::BceLogits { x, target } => {
                    let v = &vals[x.0];
                    vec![
                        v.iter()
                            .map(|&z| crate::nn::softplus(z) - target * z)
                            .sum::<f64>()
                            / v.len() as f64,
                    ]
                }
                Op::WeightedSum { terms } => {
                    vec![terms.iter().map(|(v, c)| vals[v.0][0] * c).sum()]
                }
            };
            vals.push(v);
        }
        vals[out.0][0]
    }

    /// Reverse pass from a scalar node. Returns parameter gradients keyed by
    /// net, plus per-node adjoints for input-gradient checks.
    pub fn backprop(&self, out: Var) -> Result<Backprop> {
        if out.0 >= self.ops.len() {
            return Err(Error::InvalidSpec(
                "backprop target is not a node of this tape".into(),
            ));
        }
        if self.vals[out.0].len() != 1 {
            return Err(Error::InvalidSpec(
                "backprop target must be a scalar node".into(),
            ));
        }
        let mut adj: Vec<Vec<f64>> = self.vals.iter().map(|v| vec![0.0; v.len()]).collect();
        adj[out.0][0] = 1.0;
        let mut grads = GradStore::default();

        for i in (0..=out.0).rev() {
            if adj[i].iter().all(|&a| a == 0.0) {
                continue;
            }
            match &self.ops[i] {
                Op::Leaf => {}
                Op::Affine { w, x, grad, .. } => {
                    let (d, rest) = split_adjoints(&mut adj, i, x.0);
                    w.t_matvec_acc(d, rest);
                    if let Some((key, layer)) = grad {
                        let slot = grads.slot(*key, *layer, w.rows(), w.cols());
                        slot.0.outer_acc(d, &self.vals[x.0]);
                        for (g, dv) in slot.1.iter_mut().zip(d.iter()) {
                            *g += dv;
                        }
                    }
                }
                Op::Act { kind, x } => {
                    let (d, rest) = split_adjoints(&mut adj, i, x.0);
                    for (j, dv) in d.iter().enumerate() {
                        rest[j] += dv * kind.grad_from_output(self.vals[i][j]);
                    }
                }
                Op::Concat { a, b } => {
                    let la = self.vals[a.0].len();
                    let d = adj[i].clone();
                    for (j, dv) in d[..la].iter().enumerate() {
                        adj[a.0][j] += dv;
                    }
                    for (j, dv) in d[la..].iter().enumerate() {
                        adj[b.0][j] += dv;
                    }
                }
                Op::Add { a, b } => {
                    let d = adj[i].clone();
                    for (j, dv) in d.iter().enumerate() {
                        adj[a.0][j] += dv;
                        adj[b.0][j] += dv;
                    }
                }
                Op::Sub { a, b } => {
                    let d = adj[i].clone();
                    for (j, dv) in d.iter().enumerate() {
                        adj[a.0][j] += dv;
                        adj[b.0][j] -= dv;
                    }
                }
                Op::ScaleShift { x, scale, .. } => {
                    let (d, rest) = split_adjoints(&mut adj, i, x.0);
                    for (j, dv) in d.iter().enumerate() {
                        rest[j] += dv * scale[j];
                    }
                }
                Op::MeanAbs { x } => {
                    let d = adj[i][0];
                    let n = self.vals[x.0].len() as f64;
                    let (_, rest) = split_adjoints(&mut adj, i, x.0);
                    for (j, v) in self.vals[x.0].iter().enumerate() {
                        // subgradient 0 at the kink
                        rest[j] += d * v.signum() * if *v == 0.0 { 0.0 } else { 1.0 } / n;
                    }
                }
                Op::BceLogits { x, target } => {
                    let d = adj[i][0];
                    let n = self.vals[x.0].len() as f64;
                    let (_, rest) = split_adjoints(&mut adj, i, x.0);
                    for (j, &z) in self.vals[x.0].iter().enumerate() {
                        rest[j] += d * (crate::nn::sigmoid(z) - target) / n;
                    }
                }
                Op::WeightedSum { terms } => {
                    let d = adj[i][0];
                    for (v, c) in terms {
                        adj[v.0][0] += d * c;
                    }
                }
            }
        }
        Ok(Backprop {
            params: grads,
            adjoints: adj,
        })
    }
}

/// Disjoint mutable access to node `i`'s adjoint (read) and node `j`'s
/// adjoint (accumulate), with `j < i` by tape construction.
fn split_adjoints(adj: &mut [Vec<f64>], i: usize, j: usize) -> (&[f64], &mut [f64]) {
    debug_assert!(j < i);
    let (lo, hi) = adj.split_at_mut(i);
    (&hi[0], &mut lo[j])
}

/// Result of a reverse pass.
pub struct Backprop {
    pub params: GradStore,
    adjoints: Vec<Vec<f64>>,
}

impl Backprop {
    /// Gradient of the scalar with respect to the values of node `v`.
    pub fn adjoint(&self, v: Var) -> &[f64] {
        &self.adjoints[v.0]
    }
}

/// Per-layer gradients of one network, shaped like its `MlpParams`.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        let w = self.weights.iter().fold(0.0f64, |m, w| m.max(w.max_abs()));
        let b = self
            .biases
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        w.max(b)
    }
}

/// Gradients keyed by `(net, layer)`; assembled per network on demand.
#[derive(Default)]
pub struct GradStore {
    weights: BTreeMap<(NetKey, usize), Matrix>,
    biases: BTreeMap<(NetKey, usize), Vec<f64>>,
}

impl GradStore {
    fn slot(
        &mut self,
        key: NetKey,
        layer: usize,
        rows: usize,
        cols: usize,
    ) -> (&mut Matrix, &mut Vec<f64>) {
        let w = self
            .weights
            .entry((key, layer))
            .or_insert_with(|| Matrix::zeros(rows, cols));
        let b = self
            .biases
            .entry((key, layer))
            .or_insert_with(|| vec![0.0; rows]);
        (w, b)
    }

    /// True if any gradient was recorded for `key`.
    pub fn has_net(&self, key: NetKey) -> bool {
        self.weights.keys().any(|(k, _)| *k == key)
    }

    /// Gradients for one network, zero-filled for layers that never appeared.
    pub fn net_grads(&self, key: NetKey, params: &MlpParams) -> MlpGrads {
        let mut g = MlpGrads::zeros_like(params);
        for layer in 0..params.spec.num_layers() {
            if let Some(w) = self.weights.get(&(key, layer)) {
                g.weights[layer] = w.clone();
            }
            if let Some(b) = self.biases.get(&(key, layer)) {
                g.biases[layer] = b.clone();
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpSpec;

    const G: NetKey = NetKey(0);

    #[test]
    fn constant_loss_has_zero_gradients() {
        let params = MlpParams::init(
            MlpSpec::new(vec![2, 3], Activation::Relu, Activation::Linear).unwrap(),
            0,
        )
        .unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(vec![1.0, 2.0]);
        let _net = tape.mlp(&params, x, Some(G)).unwrap();
        // loss built only from leaves
        let c = tape.leaf(vec![3.0]);
        let loss = tape.mean_abs(c);
        let bp = tape.backprop(loss).unwrap();
        assert!(!bp.params.has_net(G) || bp.params.net_grads(G, &params).max_abs() == 0.0);
    }

    #[test]
    fn dot_product_gradient_is_the_input() {
        // f(w) = w . x with x = (2, 3): a single linear layer whose weight
        // matrix is w. df/dw = x.
        let spec = MlpSpec::new(vec![2, 1], Activation::Relu, Activation::Linear).unwrap();
        let mut params = MlpParams::zeros(spec).unwrap();
        params.weights[0].set(0, 0, 1.0);
        params.weights[0].set(0, 1, 1.0);
        let mut tape = Tape::new();
        let x = tape.leaf(vec![2.0, 3.0]);
        let y = tape.mlp(&params, x, Some(G)).unwrap();
        let two = tape.leaf(vec![0.0]);
        let diff = tape.sub(y, two);
        // scale by len to undo the mean: loss = y itself (y > 0 here)
        let loss = tape.mean_abs(diff);
        let bp = tape.backprop(loss).unwrap();
        let g = bp.params.net_grads(G, &params);
        assert!((g.weights[0].get(0, 0) - 2.0).abs() < 1e-12);
        assert!((g.weights[0].get(0, 1) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn backprop_rejects_non_scalar_and_foreign_nodes() {
        let mut tape = Tape::new();
        let v = tape.leaf(vec![1.0, 2.0]);
        assert!(tape.backprop(v).is_err());
        assert!(tape.backprop(Var(99)).is_err());
    }

    #[test]
    fn frozen_mlp_gets_no_parameter_gradients_but_passes_input_gradients() {
        let params = MlpParams::init(
            MlpSpec::new(vec![3, 8, 2], Activation::Tanh, Activation::Linear).unwrap(),
            4,
        )
        .unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(vec![0.3, -0.2, 0.9]);
        let y = tape.mlp(&params, x, None).unwrap();
        let loss = tape.mean_abs(y);
        let bp = tape.backprop(loss).unwrap();
        assert!(!bp.params.has_net(G));
        assert!(bp.adjoint(x).iter().any(|&g| g != 0.0));
    }

    #[test]
    fn replay_reproduces_recorded_scalar_exactly() {
        let params = MlpParams::init(
            MlpSpec::new(vec![4, 8, 8, 2], Activation::Relu, Activation::Tanh).unwrap(),
            9,
        )
        .unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(vec![0.1, -0.4, 0.7, 0.2]);
        let t = tape.leaf(vec![0.5, -0.5]);
        let y = tape.mlp(&params, x, Some(G)).unwrap();
        let loss = tape.l1(y, t);
        assert_eq!(tape.scalar(loss).to_bits(), tape.replay(loss).to_bits());
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let spec = MlpSpec::new(vec![4, 8, 3], Activation::Tanh, Activation::Linear).unwrap();
        let mut params = MlpParams::init(spec, 21).unwrap();
        let input = vec![0.25, -0.5, 0.75, -1.0];
        let target = vec![0.1, 0.9, -0.3];

        let loss_of = |p: &MlpParams| -> f64 {
            let mut tape = Tape::new();
            let x = tape.leaf(input.clone());
            let t = tape.leaf(target.clone());
            let y = tape.mlp(p, x, None).unwrap();
            let l = tape.l1(y, t);
            tape.scalar(l)
        };

        let grads = {
            let mut tape = Tape::new();
            let x = tape.leaf(input.clone());
            let t = tape.leaf(target.clone());
            let y = tape.mlp(&params, x, Some(G)).unwrap();
            let l = tape.l1(y, t);
            let bp = tape.backprop(l).unwrap();
            bp.params.net_grads(G, &params)
        };

        let h = 1e-5;
        for idx in 0..params.coord_count() {
            let orig = params.get_coord(idx);
            params.set_coord(idx, orig + h);
            let plus = loss_of(&params);
            params.set_coord(idx, orig - h);
            let minus = loss_of(&params);
            params.set_coord(idx, orig);
            let fd = (plus - minus) / (2.0 * h);

            // reconstruct flat index against grads
            let analytic = flat_coord(&grads, idx);
            let denom = analytic.abs().max(fd.abs()).max(1e-6);
            assert!(
                (analytic - fd).abs() / denom < 1e-4,
                "coord {idx}: analytic {analytic} vs fd {fd}"
            );
        }
    }

    fn flat_coord(g: &MlpGrads, mut idx: usize) -> f64 {
        for layer in 0..g.weights.len() {
            let wl = g.weights[layer].data().len();
            if idx < wl {
                return g.weights[layer].data()[idx];
            }
            idx -= wl;
            let bl = g.biases[layer].len();
            if idx < bl {
                return g.biases[layer][idx];
            }
            idx -= bl;
        }
        panic!("index out of range");
    }
}
