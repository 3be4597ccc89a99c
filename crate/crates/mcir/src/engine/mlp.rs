//! Small fully connected head: two ReLU hidden layers and a linear output
//! whose channel pairs (2k, 2k+1) are the real/imaginary parts of contrast k.
//! Forward and reverse passes are written out explicitly so gradients are
//! exact and auditable.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Layer {
    /// Weight matrix, shape (out, in).
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpParams {
    /// Exactly three layers: input -> hidden, hidden -> hidden, hidden -> out.
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Kaiming-uniform weights, zero biases, deterministic in the seed.
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_in: usize, fan_out: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            Layer {
                w: Array2::from_shape_fn((fan_out, fan_in), |_| {
                    rng.random::<f64>() * 2.0 * bound - bound
                }),
                b: Array1::zeros(fan_out),
            }
        };
        MlpParams {
            layers: vec![
                layer(in_dim, hidden),
                layer(hidden, hidden),
                layer(hidden, out_dim),
            ],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.dim().1
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.dim().0
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// Activations cached by the forward pass for use in the backward pass.
#[derive(Debug)]
pub struct MlpCache {
    pub input: Array2<f64>,
    pub z1: Array2<f64>,
    pub a1: Array2<f64>,
    pub z2: Array2<f64>,
    pub a2: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrad>,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn relu_mask(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

fn affine(x: &Array2<f64>, layer: &Layer) -> Array2<f64> {
    x.dot(&layer.w.t()) + &layer.b
}

/// Batch forward pass: features (B, in) -> outputs (B, out) plus the cache.
pub fn mlp_forward(params: &MlpParams, features: &Array2<f64>) -> Result<(Array2<f64>, MlpCache)> {
    if features.dim().1 != params.in_dim() {
        return Err(Error::shape(
            format!("feature width {}", params.in_dim()),
            format!("{}", features.dim().1),
        ));
    }
    let z1 = affine(features, &params.layers[0]);
    let a1 = relu(&z1);
    let z2 = affine(&a1, &params.layers[1]);
    let a2 = relu(&z2);
    let out = affine(&a2, &params.layers[2]);
    Ok((
        out,
        MlpCache {
            input: features.clone(),
            z1,
            a1,
            z2,
            a2,
        },
    ))
}

/// Reverse pass. `upstream` is dL/d(output), shape (B, out); returns the
/// parameter gradients and dL/d(features), shape (B, in).
pub fn mlp_backward(
    params: &MlpParams,
    cache: &MlpCache,
    upstream: &Array2<f64>,
) -> Result<(MlpGrads, Array2<f64>)> {
    if upstream.dim() != (cache.input.dim().0, params.out_dim()) {
        return Err(Error::shape(
            format!("upstream ({}, {})", cache.input.dim().0, params.out_dim()),
            format!("{:?}", upstream.dim()),
        ));
    }
    let g_w3 = upstream.t().dot(&cache.a2);
    let g_b3 = upstream.sum_axis(Axis(0));
    let da2 = upstream.dot(&params.layers[2].w);
    let dz2 = &da2 * &relu_mask(&cache.z2);

    let g_w2 = dz2.t().dot(&cache.a1);
    let g_b2 = dz2.sum_axis(Axis(0));
    let da1 = dz2.dot(&params.layers[1].w);
    let dz1 = &da1 * &relu_mask(&cache.z1);

    let g_w1 = dz1.t().dot(&cache.input);
    let g_b1 = dz1.sum_axis(Axis(0));
    let dx = dz1.dot(&params.layers[0].w);

    Ok((
        MlpGrads {
            layers: vec![
                LayerGrad { w: g_w1, b: g_b1 },
                LayerGrad { w: g_w2, b: g_b2 },
                LayerGrad { w: g_w3, b: g_b3 },
            ],
        },
        dx,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(in_dim: usize, hidden: usize, out_dim: usize) -> MlpParams {
        let mut p = MlpParams::new(in_dim, hidden, out_dim, 0);
        for l in &mut p.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        p
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let p = zero_params(3, 4, 2);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i + j) as f64);
        let (out, _) = mlp_forward(&p, &x).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_neuron_matches_hand_computation() {
        // 1 -> 1 -> 1 -> 1 with hand-picked weights
        let mut p = zero_params(1, 1, 1);
        p.layers[0].w[[0, 0]] = 2.0;
        p.layers[0].b[0] = -1.0;
        p.layers[1].w[[0, 0]] = 3.0;
        p.layers[1].b[0] = 0.5;
        p.layers[2].w[[0, 0]] = -1.5;
        p.layers[2].b[0] = 0.25;
        let x = Array2::from_shape_vec((2, 1), vec![1.0, 0.2]).unwrap();
        let (out, _) = mlp_forward(&p, &x).unwrap();
        // x=1.0: z1 = 1, a1 = 1, z2 = 3.5, a2 = 3.5, out = -1.5*3.5 + 0.25
        assert!((out[[0, 0]] - (-1.5 * 3.5 + 0.25)).abs() < 1e-15);
        // x=0.2: z1 = -0.6 -> a1 = 0, z2 = 0.5, out = -1.5*0.5 + 0.25
        assert!((out[[1, 0]] - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn dead_relu_units_do_not_contribute() {
        let mut p = zero_params(1, 2, 1);
        // unit 0 always negative pre-activation, unit 1 passes through
        p.layers[0].w[[0, 0]] = 1.0;
        p.layers[0].b[0] = -100.0;
        p.layers[0].w[[1, 0]] = 1.0;
        p.layers[1].w[[0, 0]] = 5.0; // reads dead unit
        p.layers[1].w[[1, 1]] = 1.0;
        p.layers[2].w[[0, 1]] = 1.0;
        let x = Array2::from_shape_vec((1, 1), vec![2.0]).unwrap();
        let (out, _) = mlp_forward(&p, &x).unwrap();
        assert_eq!(out[[0, 0]], 2.0);
        // changing the weight into the dead unit changes nothing
        p.layers[1].w[[0, 0]] = -7.0;
        let (out2, _) = mlp_forward(&p, &x).unwrap();
        assert_eq!(out2[[0, 0]], 2.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut p = MlpParams::new(4, 4, 3, 9);
        // shift biases so some ReLUs are active and none sit on the kink
        for l in &mut p.layers {
            l.b.mapv_inplace(|_| 0.05);
        }
        let x = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 7 + j * 3) as f64).sin() * 0.8);
        // scalar loss: weighted sum of outputs so upstream is nontrivial
        let weights =
            Array2::from_shape_fn((6, 3), |(i, j)| 0.3 + (i as f64) * 0.1 - (j as f64) * 0.2);
        let loss = |p: &MlpParams| -> f64 {
            let (out, _) = mlp_forward(p, &x).unwrap();
            (&out * &weights).sum()
        };
        let (_, cache) = mlp_forward(&p, &x).unwrap();
        let (grads, _) = mlp_backward(&p, &cache, &weights).unwrap();

        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for li in 0..3 {
            let (rows, cols) = p.layers[li].w.dim();
            for r in 0..rows {
                for c in 0..cols {
                    let orig = p.layers[li].w[[r, c]];
                    p.layers[li].w[[r, c]] = orig + h;
                    let lp = loss(&p);
                    p.layers[li].w[[r, c]] = orig - h;
                    let lm = loss(&p);
                    p.layers[li].w[[r, c]] = orig;
                    let fd = (lp - lm) / (2.0 * h);
                    let an = grads.layers[li].w[[r, c]];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    max_rel = max_rel.max(rel);
                }
            }
            for r in 0..rows {
                let orig = p.layers[li].b[r];
                p.layers[li].b[r] = orig + h;
                let lp = loss(&p);
                p.layers[li].b[r] = orig - h;
                let lm = loss(&p);
                p.layers[li].b[r] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads.layers[li].b[r];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-6, "max relative error {max_rel}");
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = MlpParams::new(3, 4, 2, 1);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64) - (j as f64) * 0.5);
        let (_, cache) = mlp_forward(&p, &x).unwrap();
        let up = Array2::zeros((5, 2));
        let (grads, dx) = mlp_backward(&p, &cache, &up).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        for l in &grads.layers {
            assert!(l.w.iter().all(|&v| v == 0.0));
            assert!(l.b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_regime_matches_closed_form() {
        // all inputs and weights positive => every ReLU active => the net is
        // the affine map W3 W2 W1 x + ..., with gradient dL/dx = W1^T W2^T W3^T u
        let mut p = MlpParams::new(2, 3, 2, 4);
        for l in &mut p.layers {
            l.w.mapv_inplace(|v| v.abs() + 0.1);
            l.b.mapv_inplace(|_| 0.2);
        }
        let x = Array2::from_shape_vec((1, 2), vec![0.4, 0.9]).unwrap();
        let (_, cache) = mlp_forward(&p, &x).unwrap();
        let up = Array2::from_shape_vec((1, 2), vec![1.0, -2.0]).unwrap();
        let (_, dx) = mlp_backward(&p, &cache, &up).unwrap();
        let closed = up
            .dot(&p.layers[2].w)
            .dot(&p.layers[1].w)
            .dot(&p.layers[0].w);
        for (a, b) in dx.iter().zip(closed.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_width_mismatch_rejected() {
        let p = MlpParams::new(3, 4, 2, 1);
        let x = Array2::zeros((5, 7));
        assert!(mlp_forward(&p, &x).is_err());
    }
}
