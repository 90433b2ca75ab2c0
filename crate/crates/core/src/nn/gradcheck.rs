//! Central finite-difference oracle for layer gradients. It only ever calls
//! forward passes, so it stays independent of the backward code it checks.

use rand::Rng;

use super::layer::{Layer, LayerSpec, Mode};
use super::store::ParamStore;
use super::tensor::Tensor;
use crate::error::Result;
use crate::noise::RngSeed;

/// Denominator floor of [`relative_error`].
pub const REL_FLOOR: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradCheckReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.max_rel_error = self.max_rel_error.max(relative_error(analytic, numeric));
        self.checked += 1;
    }
}

/// Central difference `(f(x+h) − f(x−h)) / 2h` of a scalar function of one coordinate.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Random values with magnitude in `[0.05, 1]` so ReLU/max kinks are avoided.
pub fn kink_free(shape: &[usize], seed: RngSeed) -> Tensor {
    let mut rng = seed.rng();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Checks input and parameter gradients of one layer for the scalar loss
/// `Σ r ⊙ layer(x)` with a fixed random projection `r`.
pub fn check_layer(spec: LayerSpec, input_shape: &[usize], mode: Mode, seed: RngSeed, h: f64) -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let mut layer = Layer::new(spec, "layer", &mut store, seed.derive(1))?;
    // Perturb default parameters so BN affine terms and biases are non-trivial.
    let ids: Vec<_> = layer.param_ids().to_vec();
    let mut rng = seed.derive(2).rng();
    for &id in &ids {
        if store.param(id).trainable {
            for v in store.value_mut(id).data_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
    }
    let x = kink_free(input_shape, seed.derive(3));
    let dropout_seed = seed.derive(4);

    let loss = |layer: &mut Layer, store: &mut ParamStore, x: &Tensor, r: &Tensor| -> Result<f64> {
        layer.reseed(dropout_seed);
        let y = layer.forward(store, x, mode)?;
        Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
    };

    layer.reseed(dropout_seed);
    let y = layer.forward(&mut store, &x, mode)?;
    let r = kink_free(y.shape(), seed.derive(5));
    store.zero_grad();
    layer.reseed(dropout_seed);
    layer.forward(&mut store, &x, mode)?;
    let dx = layer.backward(&mut store, &r)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
    };
    for j in 0..x.len() {
        let mut xp = x.clone();
        let numeric = central_difference(
            |v| {
                xp.data_mut()[j] = v;
                loss(&mut layer, &mut store, &xp, &r).expect("forward")
            },
            x.data()[j],
            h,
        );
        report.record(dx.data()[j], numeric);
    }
    for &id in &ids {
        if !store.param(id).trainable {
            continue;
        }
        let analytic = store.grad(id).clone();
        let original = store.value(id).clone();
        for j in 0..original.len() {
            let base = original.data()[j];
            let numeric = central_difference(
                |v| {
                    store.value_mut(id).data_mut()[j] = v;
                    loss(&mut layer, &mut store, &x, &r).expect("forward")
                },
                base,
                h,
            );
            store.value_mut(id).data_mut()[j] = base;
            report.record(analytic.data()[j], numeric);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    fn assert_layer(spec: LayerSpec, shape: &[usize], mode: Mode) {
        let report = check_layer(spec, shape, mode, RngSeed(17), H).unwrap();
        assert!(report.checked > 0);
        assert!(
            report.max_rel_error < TOL,
            "{spec:?} {mode:?}: max rel error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn dense_8x8() {
        assert_layer(LayerSpec::Dense { inputs: 8, outputs: 8 }, &[8, 8], Mode::Train);
    }

    #[test]
    fn conv1d() {
        let spec = LayerSpec::Conv1d {
            in_channels: 3,
            filters: 4,
            kernel: 5,
            stride: 1,
        };
        assert_layer(spec, &[2, 3, 12], Mode::Train);
        let strided = LayerSpec::Conv1d {
            in_channels: 2,
            filters: 3,
            kernel: 3,
            stride: 2,
        };
        assert_layer(strided, &[2, 2, 11], Mode::Train);
    }

    #[test]
    fn batchnorm_both_modes() {
        assert_layer(LayerSpec::BatchNorm1d { features: 3 }, &[4, 3], Mode::Train);
        assert_layer(LayerSpec::BatchNorm1d { features: 3 }, &[2, 3, 5], Mode::Train);
        assert_layer(LayerSpec::BatchNorm1d { features: 3 }, &[2, 3, 5], Mode::Eval);
    }

    #[test]
    fn activations_and_pooling() {
        assert_layer(LayerSpec::Relu, &[3, 7], Mode::Train);
        assert_layer(LayerSpec::Tanh, &[3, 7], Mode::Train);
        assert_layer(LayerSpec::Softmax, &[3, 7], Mode::Train);
        assert_layer(LayerSpec::MaxPool1d { kernel: 3, stride: 2 }, &[2, 2, 11], Mode::Train);
        assert_layer(LayerSpec::Dropout { p: 0.3 }, &[4, 6], Mode::Train);
        assert_layer(LayerSpec::Flatten, &[2, 3, 4], Mode::Train);
    }
}
