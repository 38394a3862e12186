//! Central finite-difference gradient checking.
//!
//! The relative error of one coordinate is
//! `|analytic - numeric| / max(|analytic|, |numeric|, floor)` where `floor`
//! is `1e-3` times the largest gradient magnitude seen in the same check.
//! The floor stops coordinates whose true gradient is (near) zero from
//! reporting a huge ratio of two rounding errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layers::{Ctx, Layer, Mode};
use crate::models::{Model, ModelSpec};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
const FLOOR_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn merge(self, other: GradReport) -> GradReport {
        GradReport {
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            checked: self.checked + other.checked,
            tolerance: self.tolerance.min(other.tolerance),
        }
    }
}

/// Compares analytic and numeric gradient pairs.
pub fn compare(pairs: &[(f64, f64)], tolerance: f64) -> GradReport {
    let scale = pairs.iter().fold(0.0f64, |m, (a, n)| m.max(a.abs()).max(n.abs()));
    let floor = (FLOOR_FRACTION * scale).max(f64::MIN_POSITIVE);
    let max_rel_err = pairs
        .iter()
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max);
    GradReport {
        max_rel_err,
        checked: pairs.len(),
        tolerance,
    }
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_difference(x: &mut Tensor, i: usize, mut f: impl FnMut(&Tensor) -> f64) -> f64 {
    let orig = x.data()[i];
    x.data_mut()[i] = orig + FD_STEP;
    let up = f(x);
    x.data_mut()[i] = orig - FD_STEP;
    let down = f(x);
    x.data_mut()[i] = orig;
    (up - down) / (2.0 * FD_STEP)
}

/// Checks `analytic` against central differences of the scalar `f` at `x`.
pub fn check_function(x: &Tensor, analytic: &Tensor, tolerance: f64, mut f: impl FnMut(&Tensor) -> f64) -> GradReport {
    let mut probe = x.clone();
    let pairs: Vec<(f64, f64)> = (0..x.len())
        .map(|i| (analytic.data()[i], central_difference(&mut probe, i, &mut f)))
        .collect();
    compare(&pairs, tolerance)
}

/// Checks a layer's input and parameter gradients.
///
/// The scalar objective is `sum(r * layer(x))` for a random projection `r`.
/// Every forward pass re-seeds the context, so dropout masks are frozen
/// across perturbations. Use [`Mode::Deterministic`] or [`Mode::Train`];
/// batch statistics are recomputed for every perturbed input.
pub fn check_layer<L: Layer>(layer: &mut L, x: &Tensor, mode: Mode, seed: u64, tolerance: f64) -> Result<GradReport> {
    let objective = |layer: &L, x: &Tensor, r: &Tensor| -> f64 {
        let (y, _) = layer
            .forward(x, &mut Ctx::new(mode, seed))
            .expect("forward succeeds on a valid probe");
        y.dot(r)
    };

    let (y, cache) = layer.forward(x, &mut Ctx::new(mode, seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let r = Tensor::from_fn(y.shape(), |_| rng.gen_range(-1.0..1.0));
    let (dx, dparams) = layer.backward(&cache, &r, true);

    let mut pairs = Vec::new();
    let mut probe = x.clone();
    for i in 0..x.len() {
        let n = central_difference(&mut probe, i, |p| objective(layer, p, &r));
        pairs.push((dx.data()[i], n));
    }
    for (pi, grad) in dparams.iter().enumerate() {
        for i in 0..grad.len() {
            let orig = layer.params()[pi].value.data()[i];
            let eval = |layer: &mut L, v: f64| {
                layer.params_mut()[pi].value.data_mut()[i] = v;
                objective(layer, x, &r)
            };
            let up = eval(layer, orig + FD_STEP);
            let down = eval(layer, orig - FD_STEP);
            layer.params_mut()[pi].value.data_mut()[i] = orig;
            pairs.push((grad.data()[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    Ok(compare(&pairs, tolerance))
}

/// One row of [`layer_suite`]: the primitive checked and its worst report
/// over all trials.
#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub trials: usize,
    pub report: GradReport,
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values in `[-1, -margin] U [margin, 1]`, away from the ReLU kink.
fn off_kink(shape: &[usize], margin: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v = rng.gen_range(margin..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Finite-difference checks of every layer primitive on `trials` random
/// small tensors each.
pub fn layer_suite(trials: usize, seed: u64, tolerance: f64) -> Result<Vec<SuiteEntry>> {
    use crate::layers::{
        concat_width, cross_entropy, gap_time, gap_time_backward, softmax, softmax_cross_entropy_backward, split_width,
        BatchNorm, Conv2d, Dense, Dropout, Padding, Relu,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut run = |name: &'static str,
                   rng: &mut ChaCha8Rng,
                   one: &mut dyn FnMut(&mut ChaCha8Rng, u64) -> Result<GradReport>|
     -> Result<()> {
        let mut report: Option<GradReport> = None;
        for trial in 0..trials {
            let r = one(rng, trial as u64)?;
            report = Some(match report {
                Some(acc) => acc.merge(r),
                None => r,
            });
        }
        out.push(SuiteEntry {
            name,
            trials,
            report: report.unwrap_or(GradReport {
                max_rel_err: 0.0,
                checked: 0,
                tolerance,
            }),
        });
        Ok(())
    };

    run("conv2d (k x 1, per variable)", &mut rng, &mut |rng, s| {
        let (c, t, d) = (rng.gen_range(1..3), rng.gen_range(4..10), rng.gen_range(1..4));
        let k = rng.gen_range(1..=t);
        let mut conv = Conv2d::per_variable(c, 3, k, 1, Padding::Same, rng)?;
        let x = uniform(&[2, c, t, d], rng);
        check_layer(&mut conv, &x, Mode::Deterministic, s, tolerance)
    })?;
    run("conv1d (k x D, full width)", &mut rng, &mut |rng, s| {
        let (c, t, d) = (rng.gen_range(1..3), rng.gen_range(4..10), rng.gen_range(1..4));
        let k = rng.gen_range(1..=t);
        let mut conv = Conv2d::full_width(c, 3, k, d, 1, Padding::Same, rng)?;
        let x = uniform(&[2, c, t, d], rng);
        check_layer(&mut conv, &x, Mode::Deterministic, s, tolerance)
    })?;
    run("conv 1x1", &mut rng, &mut |rng, s| {
        let c = rng.gen_range(1..6);
        let mut conv = Conv2d::pointwise(c, rng)?;
        let x = uniform(&[2, c, rng.gen_range(2..8), rng.gen_range(1..4)], rng);
        check_layer(&mut conv, &x, Mode::Deterministic, s, tolerance)
    })?;
    run("conv strided", &mut rng, &mut |rng, s| {
        let (t, d) = (rng.gen_range(5..12), rng.gen_range(1..4));
        let kw = if rng.gen_bool(0.5) { 1 } else { d };
        let mut conv = Conv2d::new(2, 3, rng.gen_range(1..6), kw, 2, Padding::Same, rng)?;
        let x = uniform(&[2, 2, t, d], rng);
        check_layer(&mut conv, &x, Mode::Deterministic, s, tolerance)
    })?;
    run("batch norm", &mut rng, &mut |rng, s| {
        let c = rng.gen_range(1..4);
        let mut bn = BatchNorm::new(c);
        for p in bn.params_mut() {
            p.value = uniform(p.value.shape(), rng);
        }
        let x = uniform(&[rng.gen_range(2..4), c, rng.gen_range(2..6), rng.gen_range(1..3)], rng);
        check_layer(&mut bn, &x, Mode::Deterministic, s, tolerance)
    })?;
    run("relu", &mut rng, &mut |rng, s| {
        let x = off_kink(&[2, 2, rng.gen_range(2..6), 2], 0.01, rng);
        check_layer(&mut Relu, &x, Mode::Deterministic, s, tolerance)
    })?;
    run("dropout (fixed mask)", &mut rng, &mut |rng, s| {
        let mut drop = Dropout::new(rng.gen_range(0.1..0.6))?;
        let x = uniform(&[2, 2, rng.gen_range(2..6), 2], rng);
        check_layer(&mut drop, &x, Mode::Train, s, tolerance)
    })?;
    run("dense", &mut rng, &mut |rng, s| {
        let (i, o) = (rng.gen_range(1..6), rng.gen_range(1..5));
        let mut dense = Dense::new(i, o, rng)?;
        let x = uniform(&[3, i], rng);
        check_layer(&mut dense, &x, Mode::Deterministic, s, tolerance)
    })?;
    run("concat (width)", &mut rng, &mut |rng, _| {
        let (t, wa, wb) = (rng.gen_range(2..6), rng.gen_range(1..4), rng.gen_range(1..3));
        let a = uniform(&[2, 2, t, wa], rng);
        let b = uniform(&[2, 2, t, wb], rng);
        let r = uniform(&[2, 2, t, wa + wb], rng);
        let (ga, gb) = split_width(&r, wa)?;
        let ra = check_function(&a, &ga, tolerance, |p| {
            concat_width(p, &b).map(|y| y.dot(&r)).unwrap_or(f64::NAN)
        });
        let rb = check_function(&b, &gb, tolerance, |p| {
            concat_width(&a, p).map(|y| y.dot(&r)).unwrap_or(f64::NAN)
        });
        Ok(ra.merge(rb))
    })?;
    run("global average pooling", &mut rng, &mut |rng, _| {
        let (f, t) = (rng.gen_range(1..4), rng.gen_range(1..9));
        let x = uniform(&[2, f, t, 1], rng);
        let r = uniform(&[2, f], rng);
        let g = gap_time_backward(&r, t);
        Ok(check_function(&x, &g, tolerance, |p| {
            gap_time(p).map(|y| y.dot(&r)).unwrap_or(f64::NAN)
        }))
    })?;
    run("softmax + cross-entropy", &mut rng, &mut |rng, _| {
        let (b, c) = (rng.gen_range(1..5), rng.gen_range(2..6));
        let x = Tensor::from_fn(&[b, c], |_| rng.gen_range(-3.0..3.0));
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..c)).collect();
        let g = softmax_cross_entropy_backward(&softmax(&x)?, &labels)?;
        Ok(check_function(&x, &g, tolerance, |p| {
            softmax(p).and_then(|q| cross_entropy(&q, &labels)).unwrap_or(f64::NAN)
        }))
    })?;
    Ok(out)
}

/// Loss-gradient spot check on `n` random parameter coordinates of a fresh
/// model for `spec`, on a batch of three random inputs.
///
/// Parameters are jittered by U(-0.05, 0.05) first: zero-initialized biases
/// put some pre-activations exactly on the ReLU kink, where a finite
/// difference sees half the slope.
pub fn model_spot_check(spec: &ModelSpec, seed: u64, n: usize, tolerance: f64) -> Result<GradReport> {
    let mut model = Model::new(spec.clone(), seed)?;
    let mut jitter = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v += jitter.gen_range(-0.05..0.05);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let x = Tensor::from_fn(&[3, 1, spec.input_t, spec.input_d], |_| rng.gen_range(-1.0..1.0));
    let labels: Vec<usize> = (0..3).map(|i| i % spec.classes).collect();
    let ctx = || Ctx::new(Mode::Deterministic, 0);
    let (_, _, grads) = model.loss_and_grads(&x, &labels, &mut ctx())?;
    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut k = rng.gen_range(0..total);
        let mut pi = 0;
        while k >= sizes[pi] {
            k -= sizes[pi];
            pi += 1;
        }
        let orig = model.params()[pi].value.data()[k];
        model.params_mut()[pi].value.data_mut()[k] = orig + FD_STEP;
        let up = model.loss_and_grads(&x, &labels, &mut ctx())?.0;
        model.params_mut()[pi].value.data_mut()[k] = orig - FD_STEP;
        let down = model.loss_and_grads(&x, &labels, &mut ctx())?.0;
        model.params_mut()[pi].value.data_mut()[k] = orig;
        pairs.push((grads[pi].data()[k], (up - down) / (2.0 * FD_STEP)));
    }
    Ok(compare(&pairs, tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Conv2d, Dense, Padding};

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn conv_on_small_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = Conv2d::per_variable(1, 3, 3, 1, Padding::Same, &mut rng).unwrap();
        let x = random(&[1, 1, 8, 2], 2);
        let report = check_layer(&mut conv, &x, Mode::Deterministic, 0, 1e-4).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn linear_layer_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut dense = Dense::new(4, 3, &mut rng).unwrap();
        let x = random(&[2, 4], 4);
        let report = check_layer(&mut dense, &x, Mode::Deterministic, 0, 1e-7).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn every_primitive_passes() {
        for entry in layer_suite(20, 7, 1e-4).unwrap() {
            assert!(entry.report.passed(), "{}: {:?}", entry.name, entry.report);
            assert!(entry.report.checked > 0);
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let x = random(&[5], 9);
        let wrong = x.map(|v| 3.0 * v);
        let report = check_function(&x, &wrong, 1e-4, |t| t.dot(t));
        assert!(!report.passed());
    }
}
