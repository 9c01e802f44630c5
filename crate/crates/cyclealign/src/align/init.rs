//! Action-map initialization.
//!
//! With equal action dimensions H and P start as the exact identity on
//! actions; with differing dimensions each X coordinate copies its
//! corresponding Y coordinate, and novel joints repeat their nearest mapped
//! joint's action.
//!
//! Exactness trick: a ReLU network carries a linear map `m . v` through its
//! hidden layers as the pair `(relu(m.v), relu(-m.v))` and reconstructs it in
//! the final layer as their difference. All remaining hidden units keep their
//! random initialization but start disconnected from the output (zero final
//! columns), so the map is exact while leaving the network fully trainable.

use super::{mlp_spec, Dims, MAP_HIDDEN};
use crate::envs::JointCorrespondence;
use crate::error::{Error, Result};
use crate::nn::{Matrix, MlpParams, MlpSpec};

/// Builds a ReLU MLP computing exactly `map * input[offset..offset+map.cols]`
/// at initialization. Every hidden width must be at least `2 * map.rows()`.
pub fn exact_linear_network(
    spec: MlpSpec,
    map: &Matrix,
    offset: usize,
    seed: u64,
) -> Result<MlpParams> {
    let carriers = 2 * map.rows();
    let hidden_widths = &spec.layer_sizes[1..spec.layer_sizes.len() - 1];
    if hidden_widths.iter().any(|&w| w < carriers) {
        return Err(Error::InvalidSpec(format!(
            "exact linear init needs hidden widths >= {carriers}"
        )));
    }
    if spec.output_dim() != map.rows() {
        return Err(Error::DimMismatch {
            context: "exact_linear_network output",
            expected: map.rows(),
            actual: spec.output_dim(),
        });
    }
    if offset + map.cols() > spec.input_dim() {
        return Err(Error::DimMismatch {
            context: "exact_linear_network input slice",
            expected: spec.input_dim(),
            actual: offset + map.cols(),
        });
    }
    if spec.hidden_activation != crate::nn::Activation::Relu {
        return Err(Error::InvalidSpec("exact linear init needs relu hidden".into()));
    }

    let mut params = MlpParams::init(spec, seed)?;
    let out_dim = map.rows();
    let last = params.weights.len() - 1;

    // first layer: carrier pairs read +/- the mapped input slice
    for j in 0..out_dim {
        for (sign, row) in [(1.0, 2 * j), (-1.0, 2 * j + 1)] {
            let w = params.weights[0].row_mut(row);
            w.fill(0.0);
            for c in 0..map.cols() {
                w[offset + c] = sign * map.get(j, c);
            }
            params.biases[0][row] = 0.0;
        }
    }
    // middle layers: carriers pass straight through
    for layer in 1..last {
        for row in 0..carriers {
            let w = params.weights[layer].row_mut(row);
            w.fill(0.0);
            w[row] = 1.0;
            params.biases[layer][row] = 0.0;
        }
    }
    // final layer: reconstruct the pairs, nothing else connected yet
    params.weights[last].data_mut().fill(0.0);
    params.biases[last].fill(0.0);
    for j in 0..out_dim {
        let w = params.weights[last].row_mut(j);
        w[2 * j] = 1.0;
        w[2 * j + 1] = -1.0;
    }
    Ok(params)
}

/// Selection matrix mapping Y actions to X actions: X coordinate `i` copies
/// Y coordinate `corr[i]`.
fn selection_y_to_x(corr: &[usize], act_x: usize, act_y: usize) -> Result<Matrix> {
    if corr.len() != act_x {
        return Err(Error::InvalidSpec(format!(
            "correspondence covers {} joints but domain X has {act_x}",
            corr.len()
        )));
    }
    let mut m = Matrix::zeros(act_x, act_y);
    for (i, &j) in corr.iter().enumerate() {
        if j >= act_y {
            return Err(Error::InvalidSpec(format!(
                "correspondence maps joint {i} to nonexistent Y joint {j}"
            )));
        }
        m.set(i, j, 1.0);
    }
    Ok(m)
}

/// Selection matrix mapping X actions to Y actions: Y coordinate `j` copies
/// the first X coordinate assigned to it.
fn selection_x_to_y(corr: &[usize], act_x: usize, act_y: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(act_y, act_x);
    for j in 0..act_y {
        let src = corr
            .iter()
            .position(|&c| c == j)
            .ok_or_else(|| Error::InvalidSpec(format!("no X joint corresponds to Y joint {j}")))?;
        m.set(j, src, 1.0);
    }
    Ok(m)
}

/// Initial parameters for H (X action -> Y action) and P (Y action -> X
/// action). Equal dimensions initialize both to the exact identity on
/// actions; differing dimensions require a joint correspondence.
pub fn init_action_maps(
    dims: &Dims,
    correspondence: Option<&JointCorrespondence>,
    seed: u64,
) -> Result<(MlpParams, MlpParams)> {
    let (map_h, map_p) = if dims.act_x == dims.act_y {
        let ident: Vec<usize> = (0..dims.act_x).collect();
        let corr = correspondence.map(|c| c.0.as_slice()).unwrap_or(&ident);
        (
            selection_x_to_y(corr, dims.act_x, dims.act_y)?,
            selection_y_to_x(corr, dims.act_x, dims.act_y)?,
        )
    } else {
        let corr = correspondence.ok_or_else(|| {
            Error::InvalidSpec(
                "action dimensions differ; a joint correspondence is required".into(),
            )
        })?;
        (
            selection_x_to_y(&corr.0, dims.act_x, dims.act_y)?,
            selection_y_to_x(&corr.0, dims.act_x, dims.act_y)?,
        )
    };
    let h = exact_linear_network(
        mlp_spec(dims.obs_x + dims.act_x, &MAP_HIDDEN, dims.act_y)?,
        &map_h,
        dims.obs_x,
        crate::rng::derive(seed, 11),
    )?;
    let p = exact_linear_network(
        mlp_spec(dims.obs_y + dims.act_y, &MAP_HIDDEN, dims.act_x)?,
        &map_p,
        dims.obs_y,
        crate::rng::derive(seed, 12),
    )?;
    Ok((h, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::AlignMode;
    use crate::align::AlignmentModel;
    use rand::Rng;

    fn eval_h(model: &AlignmentModel, x: &[f64], a: &[f64]) -> Vec<f64> {
        model.translate_action_to_y(x, a).unwrap()
    }

    #[test]
    fn equal_dims_identity_is_exact_for_any_input() {
        let dims = Dims {
            obs_x: 3,
            obs_y: 3,
            act_x: 2,
            act_y: 2,
        };
        let model = AlignmentModel::new(dims, AlignMode::CrossPhysics, None, 5).unwrap();
        let mut rng = crate::rng::stream_rng(3, 1);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let h = eval_h(&model, &x, &a);
            assert_eq!(h, a, "H must be the exact identity at init");
            let p = model.translate_action_to_x(&x, &h).unwrap();
            assert_eq!(p, a, "P . H must be the exact identity at init");
        }
    }

    #[test]
    fn chain_tail_repetition_init() {
        // k = 3 -> 4: P maps (u1, u2, u3) to (u1, u2, u3, u3)
        let dims = Dims {
            obs_x: 8,
            obs_y: 6,
            act_x: 4,
            act_y: 3,
        };
        let corr = JointCorrespondence(vec![0, 1, 2, 2]);
        let model = AlignmentModel::new(dims, AlignMode::Joint, Some(&corr), 0).unwrap();
        let y = vec![0.3; 6];
        let u = vec![0.5, -0.25, 0.8];
        let a = model.translate_action_to_x(&y, &u).unwrap();
        assert_eq!(a, vec![0.5, -0.25, 0.8, 0.8]);

        // H selects the shared joints
        let x = vec![0.1; 8];
        let back = model.translate_action_to_y(&x, &a).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn differing_dims_without_correspondence_rejected() {
        let dims = Dims {
            obs_x: 8,
            obs_y: 6,
            act_x: 4,
            act_y: 3,
        };
        assert!(AlignmentModel::new(dims, AlignMode::Joint, None, 0).is_err());
    }

    #[test]
    fn correspondence_missing_novel_joint_rejected() {
        let dims = Dims {
            obs_x: 8,
            obs_y: 6,
            act_x: 4,
            act_y: 3,
        };
        // joint 3 points past Y's action space
        let corr = JointCorrespondence(vec![0, 1, 2, 7]);
        assert!(AlignmentModel::new(dims, AlignMode::Joint, Some(&corr), 0).is_err());
    }

    #[test]
    fn exact_linear_network_realizes_arbitrary_maps() {
        // doubling map through the carrier construction
        let map = Matrix::from_data(2, 2, vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        let spec = mlp_spec(5, &MAP_HIDDEN, 2).unwrap();
        let net = exact_linear_network(spec, &map, 3, 9).unwrap();
        let input = [9.0, -9.0, 9.0, 0.75, -1.5];
        let out = net.forward(&input).unwrap();
        assert_eq!(out, vec![1.5, -3.0]);
    }

    #[test]
    fn non_carrier_units_stay_random() {
        let map = Matrix::identity(2);
        let spec = mlp_spec(4, &MAP_HIDDEN, 2).unwrap();
        let net = exact_linear_network(spec, &map, 2, 1).unwrap();
        // rows past the carriers keep their random first-layer weights
        let spare = net.weights[0].row(5);
        assert!(spare.iter().any(|&v| v != 0.0));
        // but the final layer disconnects them
        assert!(net.weights.last().unwrap().row(0)[5] == 0.0);
    }
}
