use rand::Rng;

use super::{Ctx, Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `max(0, x)`. The subgradient at exactly zero is taken as zero. NaN
/// passes through so a diverging run is detected downstream.
#[derive(Debug, Clone, Copy, Default)]
pub struct Relu;

impl Layer for Relu {
    type Cache = Tensor;

    fn forward(&self, x: &Tensor, _ctx: &mut Ctx) -> Result<(Tensor, Tensor)> {
        Ok((x.map(|v| if v < 0.0 { 0.0 } else { v }), x.clone()))
    }

    fn backward(&self, x: &Tensor, dy: &Tensor, _param_grads: bool) -> (Tensor, Vec<Tensor>) {
        let mut dx = dy.clone();
        for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v <= 0.0 {
                *g = 0.0;
            }
        }
        (dx, Vec::new())
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time,
/// so inference is the identity.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    rate: f64,
}

/// Scaled keep-mask; `None` when the layer acted as identity.
pub type DropoutCache = Option<Vec<f64>>;

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Layer for Dropout {
    type Cache = DropoutCache;

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<(Tensor, DropoutCache)> {
        if ctx.mode != Mode::Train || self.rate == 0.0 {
            return Ok((x.clone(), None));
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if ctx.rng.gen::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        let mut y = x.clone();
        for (v, m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        Ok((y, Some(mask)))
    }

    fn backward(&self, mask: &DropoutCache, dy: &Tensor, _param_grads: bool) -> (Tensor, Vec<Tensor>) {
        let mut dx = dy.clone();
        if let Some(mask) = mask {
            for (g, m) in dx.data_mut().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        (dx, Vec::new())
    }
}
