//! Grad-CAM attribution maps.
//!
//! For a tap with feature maps `A^k` and class score `y_c` (the pre-softmax
//! logit), each map gets the weight `w_k = mean(dy_c / dA^k)` over its
//! spatial axes and the attribution is `ReLU(sum_k w_k A^k)`.
//!
//! XCM's taps keep the input's time extent, so its variables map is already
//! `T x D` and its time map only needs copying across the `D` columns.
//! Taps with a reduced extent go through bilinear interpolation.

mod export;
mod mask;

pub use export::{map_to_csv, map_to_ppm, write_map_csv, write_map_ppm};
pub use mask::{iou, threshold_mask, ExplanationMask, IouScope, DEFAULT_THRESHOLD};

use serde::{Deserialize, Serialize};

use crate::data::{argmax, to_time_major};
use crate::error::{Error, Result};
use crate::layers::Ctx;
use crate::models::{Model, Tap};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Variables,
    Time,
}

/// A `T x D` attribution map, row-major with time as the outer axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub kind: MapKind,
    pub values: Tensor,
    pub target_class: usize,
    pub normalized: bool,
}

impl AttributionMap {
    pub fn length(&self) -> usize {
        self.values.dim(0)
    }

    pub fn dims(&self) -> usize {
        self.values.dim(1)
    }

    pub fn at(&self, t: usize, d: usize) -> f64 {
        self.values.data()[t * self.dims() + d]
    }
}

/// Divides by the maximum so the largest value becomes exactly 1. A map that
/// is identically zero stays zero.
pub fn normalize(map: &AttributionMap) -> AttributionMap {
    let max = map.values.data().iter().copied().fold(0.0, f64::max);
    let values = if max > 0.0 {
        map.values.map(|v| v / max)
    } else {
        map.values.clone()
    };
    AttributionMap {
        values,
        normalized: true,
        ..map.clone()
    }
}

/// `ReLU(sum_k w_k A^k)` with `w_k` the spatial mean of the gradient of the
/// `k`-th map. Both inputs are `[F, H, W]` (a leading batch axis of 1 is
/// accepted); the result is `[H, W]`.
pub fn weighted_activation(activations: &Tensor, gradients: &Tensor) -> Result<Tensor> {
    if activations.shape() != gradients.shape() {
        return Err(Error::Shape(format!(
            "activations {:?} vs gradients {:?}",
            activations.shape(),
            gradients.shape()
        )));
    }
    let (_, h, w) = match activations.shape() {
        &[f, h, w] | &[1, f, h, w] => (f, h, w),
        s => return Err(Error::Shape(format!("tap must be [F, H, W], got {s:?}"))),
    };
    let area = h * w;
    let mut out = vec![0.0; area];
    for (a, g) in activations.data().chunks(area).zip(gradients.data().chunks(area)) {
        let weight = g.iter().sum::<f64>() / area as f64;
        for (o, &v) in out.iter_mut().zip(a) {
            *o += weight * v;
        }
    }
    for o in &mut out {
        *o = o.max(0.0);
    }
    Tensor::new(vec![h, w], out)
}

/// Bilinear resize of an `[H, W]` grid with half-pixel centres:
/// output index `i` samples source position `(i + 0.5) * H / out - 0.5`,
/// clamped to the grid.
pub fn bilinear_resize(grid: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let [h, w] = grid.dims2()?;
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!("cannot resize {h}x{w} to {out_h}x{out_w}")));
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let rows = axis(h, out_h);
    let cols = axis(w, out_w);
    let g = grid.data();
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let top = g[r0 * w + c0] * (1.0 - fc) + g[r0 * w + c1] * fc;
            let bottom = g[r1 * w + c0] * (1.0 - fc) + g[r1 * w + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Tensor::new(vec![out_h, out_w], out)
}

/// Tap activations and the gradient of the class logit with respect to them.
#[derive(Debug, Clone)]
pub struct TapGradients {
    pub activations: Tensor,
    pub gradients: Tensor,
    pub probs: Vec<f64>,
}

/// Inference-mode forward and backward for one `D x T` sample, seeding the
/// backward pass with `scale * onehot(class_c)` on the logits.
pub fn tap_gradients(model: &Model, sample: &Tensor, class_c: usize, tap: Tap, scale: f64) -> Result<TapGradients> {
    let spec = model.spec();
    if class_c >= spec.classes {
        return Err(Error::LabelOutOfRange {
            label: class_c,
            classes: spec.classes,
        });
    }
    if sample.shape() != [spec.input_d, spec.input_t] {
        return Err(Error::Shape(format!(
            "sample must be [{}, {}], got {:?}",
            spec.input_d,
            spec.input_t,
            sample.shape()
        )));
    }
    let x = Tensor::new(vec![1, 1, spec.input_t, spec.input_d], to_time_major(sample))?;
    let trace = model.forward(&x, &mut Ctx::inference())?;
    let mut dlogits = Tensor::zeros(&[1, spec.classes]);
    dlogits.data_mut()[class_c] = scale;
    let back = model.backward(&trace, &dlogits, false);
    Ok(TapGradients {
        activations: trace.tap(tap).clone(),
        gradients: back.tap(tap).clone(),
        probs: trace.probs.data().to_vec(),
    })
}

fn finish(kind: MapKind, values: Tensor, class_c: usize) -> AttributionMap {
    normalize(&AttributionMap {
        kind,
        values,
        target_class: class_c,
        normalized: false,
    })
}

/// Observed-variables map from the per-variable block. The tap must already
/// be `T x D`; no interpolation is performed.
pub fn gradcam_variables(model: &Model, sample: &Tensor, class_c: usize) -> Result<AttributionMap> {
    let g = tap_gradients(model, sample, class_c, Tap::VarsBlock, 1.0)?;
    let (t, d) = (model.spec().input_t, model.spec().input_d);
    let raw = weighted_activation(&g.activations, &g.gradients)?;
    if raw.shape() != [t, d] {
        return Err(Error::Shape(format!(
            "variables tap is {:?}, not {t}x{d}; use gradcam_generic",
            raw.shape()
        )));
    }
    Ok(finish(MapKind::Variables, raw, class_c))
}

/// Time map from the time block, copied across all `D` columns. The tap
/// must be `T x 1`.
pub fn gradcam_time(model: &Model, sample: &Tensor, class_c: usize) -> Result<AttributionMap> {
    let g = tap_gradients(model, sample, class_c, Tap::TimeBlock, 1.0)?;
    let (t, d) = (model.spec().input_t, model.spec().input_d);
    let raw = weighted_activation(&g.activations, &g.gradients)?;
    if raw.shape() != [t, 1] {
        return Err(Error::Shape(format!(
            "time tap is {:?}, not {t}x1; use gradcam_generic",
            raw.shape()
        )));
    }
    Ok(finish(MapKind::Time, replicate_columns(&raw, d), class_c))
}

fn replicate_columns(column: &Tensor, d: usize) -> Tensor {
    let t = column.dim(0);
    Tensor::from_fn(&[t, d], |i| column.data()[i / d])
}

/// Grad-CAM at any tap, bilinearly resized to `upsample_to = (T, D)`.
pub fn gradcam_generic(
    model: &Model,
    tap: Tap,
    sample: &Tensor,
    class_c: usize,
    upsample_to: (usize, usize),
) -> Result<AttributionMap> {
    let g = tap_gradients(model, sample, class_c, tap, 1.0)?;
    let raw = weighted_activation(&g.activations, &g.gradients)?;
    let resized = bilinear_resize(&raw, upsample_to.0, upsample_to.1)?;
    let kind = match tap {
        Tap::VarsBlock => MapKind::Variables,
        Tap::TimeBlock => MapKind::Time,
    };
    Ok(finish(kind, resized, class_c))
}

/// Both maps for one sample.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub variables: AttributionMap,
    pub time: AttributionMap,
    pub target_class: usize,
    pub predicted_class: usize,
    pub probs: Vec<f64>,
}

/// Explains `class_c`, or the predicted class when `None`. XCM models use
/// the exact-resolution paths; MTEX-CNN goes through interpolation.
pub fn explain(model: &Model, sample: &Tensor, class_c: Option<usize>) -> Result<Explanation> {
    let probe = tap_gradients(model, sample, 0, Tap::TimeBlock, 0.0)?;
    let predicted_class = argmax(&probe.probs);
    let target = class_c.unwrap_or(predicted_class);
    let spec = model.spec();
    let (variables, time) = match spec.architecture {
        crate::models::Architecture::MtexCnn => {
            let to = (spec.input_t, spec.input_d);
            (
                gradcam_generic(model, Tap::VarsBlock, sample, target, to)?,
                gradcam_generic(model, Tap::TimeBlock, sample, target, to)?,
            )
        }
        _ => (
            gradcam_variables(model, sample, target)?,
            gradcam_time(model, sample, target)?,
        ),
    };
    Ok(Explanation {
        variables,
        time,
        target_class: target,
        predicted_class,
        probs: probe.probs,
    })
}

#[cfg(test)]
mod tests;
