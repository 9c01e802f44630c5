//! Fully connected networks: specs, seeded initialization, and plain forward
//! evaluation. Gradient-carrying evaluation lives on the [`Tape`](super::Tape).

use rand::distributions::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Linear => v,
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => sigmoid(v),
        }
    }

    /// Derivative expressed through the activation *output*.
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Activation::Linear,
            1 => Activation::Relu,
            2 => Activation::Tanh,
            3 => Activation::Sigmoid,
            _ => return Err(Error::InvalidSpec(format!("unknown activation code {code}"))),
        })
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Architecture of one MLP: layer widths plus activation choices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "an MLP needs at least input and output sizes, got {:?}",
                self.layer_sizes
            )));
        }
        if let Some(pos) = self.layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidSpec(format!(
                "layer size at index {pos} is 0; all layer sizes must be >= 1"
            )));
        }
        if !matches!(self.hidden_activation, Activation::Relu | Activation::Tanh) {
            return Err(Error::InvalidSpec(
                "hidden activation must be relu or tanh".into(),
            ));
        }
        if !matches!(
            self.output_activation,
            Activation::Linear | Activation::Tanh | Activation::Sigmoid
        ) {
            return Err(Error::InvalidSpec(
                "output activation must be linear, tanh, or sigmoid".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn activation_of_layer(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

/// Weights and biases of one MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Seeded initialization: weights uniform in `±sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream_rng(seed, rng::stream::INIT);
        let mut weights = Vec::with_capacity(spec.num_layers());
        let mut biases = Vec::with_capacity(spec.num_layers());
        for layer in 0..spec.num_layers() {
            let fan_in = spec.layer_sizes[layer];
            let fan_out = spec.layer_sizes[layer + 1];
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let mut w = Matrix::zeros(fan_out, fan_in);
            for v in w.data_mut() {
                *v = dist.sample(&mut rng);
            }
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            spec,
            weights,
            biases,
        })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let weights = (0..spec.num_layers())
            .map(|l| Matrix::zeros(spec.layer_sizes[l + 1], spec.layer_sizes[l]))
            .collect();
        let biases = (0..spec.num_layers())
            .map(|l| vec![0.0; spec.layer_sizes[l + 1]])
            .collect();
        Ok(Self {
            spec,
            weights,
            biases,
        })
    }

    /// Zeroes the final layer; with a residual readout this makes the network
    /// the identity map at initialization.
    pub fn zero_final_layer(&mut self) {
        let last = self.weights.len() - 1;
        self.weights[last].data_mut().fill(0.0);
        self.biases[last].fill(0.0);
    }

    /// Plain forward evaluation. Pure: identical inputs give bit-identical
    /// outputs.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.spec.input_dim() {
            return Err(Error::DimMismatch {
                context: "mlp forward input",
                expected: self.spec.input_dim(),
                actual: input.len(),
            });
        }
        let mut cur = input.to_vec();
        for layer in 0..self.spec.num_layers() {
            let mut next = self.biases[layer].clone();
            let w = &self.weights[layer];
            let mut z = vec![0.0; w.rows()];
            w.matvec(&cur, &mut z);
            let act = self.spec.activation_of_layer(layer);
            for (n, zv) in next.iter_mut().zip(&z) {
                *n = act.apply(*n + zv);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Total number of scalar parameters.
    pub fn coord_count(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.data().len())
            .chain(self.biases.iter().map(|b| b.len()))
            .sum()
    }

    /// Flat coordinate access (weights of layer 0, biases of layer 0, weights
    /// of layer 1, ...). Used by finite-difference checks.
    pub fn get_coord(&self, mut idx: usize) -> f64 {
        for layer in 0..self.weights.len() {
            let wl = self.weights[layer].data().len();
            if idx < wl {
                return self.weights[layer].data()[idx];
            }
            idx -= wl;
            let bl = self.biases[layer].len();
            if idx < bl {
                return self.biases[layer][idx];
            }
            idx -= bl;
        }
        panic!("coordinate index out of range");
    }

    pub fn set_coord(&mut self, mut idx: usize, v: f64) {
        for layer in 0..self.weights.len() {
            let wl = self.weights[layer].data().len();
            if idx < wl {
                self.weights[layer].data_mut()[idx] = v;
                return;
            }
            idx -= wl;
            let bl = self.biases[layer].len();
            if idx < bl {
                self.biases[layer][idx] = v;
                return;
            }
            idx -= bl;
        }
        panic!("coordinate index out of range");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> MlpSpec {
        MlpSpec::new(vec![2, 3], Activation::Relu, Activation::Linear).unwrap()
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = MlpParams::init(small_spec(), 7).unwrap();
        let b = MlpParams::init(small_spec(), 7).unwrap();
        assert_eq!(a, b);
        let c = MlpParams::init(small_spec(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_biases_are_zero() {
        let p = MlpParams::init(small_spec(), 3).unwrap();
        assert!(p.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_rejects_zero_layer_size() {
        let err = MlpSpec::new(vec![2, 0, 1], Activation::Relu, Activation::Linear);
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn action_mapper_shape_stack() {
        // five-layer MLP with hidden sizes 32/64/128/32
        let spec = MlpSpec::new(
            vec![4, 32, 64, 128, 32, 4],
            Activation::Relu,
            Activation::Linear,
        )
        .unwrap();
        let p = MlpParams::init(spec, 0).unwrap();
        let shapes: Vec<(usize, usize)> = p.weights.iter().map(|w| (w.rows(), w.cols())).collect();
        assert_eq!(
            shapes,
            vec![(32, 4), (64, 32), (128, 64), (32, 128), (4, 32)]
        );
    }

    #[test]
    fn forward_zero_params_is_zero_map() {
        let p = MlpParams::zeros(small_spec()).unwrap();
        let out = p.forward(&[1.0, -2.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_identity_single_layer() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu, Activation::Linear).unwrap();
        let mut p = MlpParams::zeros(spec).unwrap();
        p.weights[0] = Matrix::identity(2);
        let out = p.forward(&[1.0, -1.0]).unwrap();
        assert_eq!(out, vec![1.0, -1.0]);
    }

    #[test]
    fn forward_matches_naive_layerwise_oracle() {
        let spec = MlpSpec::new(vec![4, 5, 3], Activation::Tanh, Activation::Sigmoid).unwrap();
        let p = MlpParams::init(spec, 11).unwrap();
        let x = [0.3, -0.8, 1.2, 0.05];

        // independent naive evaluation
        let mut cur: Vec<f64> = x.to_vec();
        for layer in 0..p.spec.num_layers() {
            let w = &p.weights[layer];
            let mut next = vec![0.0; w.rows()];
            for r in 0..w.rows() {
                let mut s = p.biases[layer][r];
                for c in 0..w.cols() {
                    s += w.get(r, c) * cur[c];
                }
                next[r] = p.spec.activation_of_layer(layer).apply(s);
            }
            cur = next;
        }

        let out = p.forward(&x).unwrap();
        for (a, b) in out.iter().zip(&cur) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_bad_input_dim() {
        let p = MlpParams::init(small_spec(), 0).unwrap();
        assert!(p.forward(&[1.0]).is_err());
    }

    #[test]
    fn forward_is_pure() {
        let p = MlpParams::init(small_spec(), 5).unwrap();
        let a = p.forward(&[0.1, 0.2]).unwrap();
        let b = p.forward(&[0.1, 0.2]).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
