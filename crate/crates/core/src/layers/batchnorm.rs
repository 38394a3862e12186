use super::{Ctx, Layer, Mode, Param};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Per-channel batch normalization over `(batch, time, width)`.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    /// Batch mean and (biased) variance; `None` when running stats were used.
    batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Param::new(Tensor::full(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum: BN_MOMENTUM,
            eps: BN_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Folds the batch statistics of a training pass into the running stats.
    pub fn commit(&mut self, cache: &BatchNormCache) {
        let Some((mean, var)) = &cache.batch_stats else {
            return;
        };
        let m = self.momentum;
        for (r, b) in self.running_mean.data_mut().iter_mut().zip(mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, b) in self.running_var.data_mut().iter_mut().zip(var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}

impl Layer for BatchNorm {
    type Cache = BatchNormCache;

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<(Tensor, BatchNormCache)> {
        let [b, c, t, w] = x.dims4()?;
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batch norm over {} channels, got {c}",
                self.channels()
            )));
        }
        let inner = t * w;
        let n = (b * inner) as f64;
        let xd = x.data();
        let channel =
            |ci: usize| (0..b).flat_map(move |bi| xd[(bi * c + ci) * inner..(bi * c + ci + 1) * inner].iter());

        let (mean, var, batch_stats) = match ctx.mode {
            Mode::Train | Mode::Deterministic => {
                let mean: Vec<f64> = (0..c).map(|ci| channel(ci).sum::<f64>() / n).collect();
                let var: Vec<f64> = (0..c)
                    .map(|ci| channel(ci).map(|v| (v - mean[ci]).powi(2)).sum::<f64>() / n)
                    .collect();
                (mean.clone(), var.clone(), Some((mean, var)))
            }
            Mode::Inference => (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
                None,
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut xhat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        for bi in 0..b {
            for ci in 0..c {
                let range = (bi * c + ci) * inner..(bi * c + ci + 1) * inner;
                for ((h, o), &v) in xhat.data_mut()[range.clone()]
                    .iter_mut()
                    .zip(&mut out.data_mut()[range.clone()])
                    .zip(&xd[range])
                {
                    *h = (v - mean[ci]) * inv_std[ci];
                    *o = gamma[ci] * *h + beta[ci];
                }
            }
        }
        Ok((
            out,
            BatchNormCache {
                xhat,
                inv_std,
                batch_stats,
            },
        ))
    }

    fn backward(&self, cache: &BatchNormCache, dy: &Tensor, param_grads: bool) -> (Tensor, Vec<Tensor>) {
        let [b, c, t, w] = dy.dims4().expect("batch norm gradient is 4-d");
        let inner = t * w;
        let n = (b * inner) as f64;
        let gamma = self.gamma.value.data();
        let xh = cache.xhat.data();
        let dyd = dy.data();

        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let range = (bi * c + ci) * inner..(bi * c + ci + 1) * inner;
                for (&g, &h) in dyd[range.clone()].iter().zip(&xh[range]) {
                    dgamma[ci] += g * h;
                    dbeta[ci] += g;
                }
            }
        }

        let mut dx = Tensor::zeros(dy.shape());
        let batch = cache.batch_stats.is_some();
        for bi in 0..b {
            for ci in 0..c {
                let range = (bi * c + ci) * inner..(bi * c + ci + 1) * inner;
                let k = gamma[ci] * cache.inv_std[ci];
                for ((o, &g), &h) in dx.data_mut()[range.clone()]
                    .iter_mut()
                    .zip(&dyd[range.clone()])
                    .zip(&xh[range])
                {
                    *o = if batch {
                        k * (g - dbeta[ci] / n - h * dgamma[ci] / n)
                    } else {
                        k * g
                    };
                }
            }
        }
        if !param_grads {
            return (dx, Vec::new());
        }
        (
            dx,
            vec![
                Tensor::new(vec![c], dgamma).expect("channel vector"),
                Tensor::new(vec![c], dbeta).expect("channel vector"),
            ],
        )
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
