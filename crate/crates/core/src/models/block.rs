use crate::error::Result;
use crate::layers::{BatchNorm, BatchNormCache, Conv2d, Ctx, Dropout, DropoutCache, Layer, Param, Relu};
use crate::tensor::Tensor;

/// Convolution, optional batch norm, ReLU, optional dropout.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: Option<BatchNorm>,
    pub dropout: Option<Dropout>,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    conv: Tensor,
    bn: Option<BatchNormCache>,
    pre_relu: Tensor,
    dropout: DropoutCache,
    /// Post-ReLU activations (before dropout).
    pub activations: Tensor,
}

impl ConvBlock {
    pub fn new(conv: Conv2d, batch_norm: bool, dropout: Option<Dropout>) -> Self {
        let bn = batch_norm.then(|| BatchNorm::new(conv.filters()));
        ConvBlock { conv, bn, dropout }
    }

    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<(Tensor, BlockCache)> {
        let (mut h, conv) = self.conv.forward(x, ctx)?;
        let bn = match &self.bn {
            Some(bn) => {
                let (y, cache) = bn.forward(&h, ctx)?;
                h = y;
                Some(cache)
            }
            None => None,
        };
        let (activations, pre_relu) = Relu.forward(&h, ctx)?;
        let (out, dropout) = match &self.dropout {
            Some(d) => d.forward(&activations, ctx)?,
            None => (activations.clone(), None),
        };
        Ok((
            out,
            BlockCache {
                conv,
                bn,
                pre_relu,
                dropout,
                activations,
            },
        ))
    }

    /// Returns `(input gradient, parameter gradients, activation gradient)`.
    pub fn backward(&self, cache: &BlockCache, dy: &Tensor, param_grads: bool) -> (Tensor, Vec<Tensor>, Tensor) {
        let d_act = match &self.dropout {
            Some(d) => d.backward(&cache.dropout, dy, false).0,
            None => dy.clone(),
        };
        let (mut g, _) = Relu.backward(&cache.pre_relu, &d_act, false);
        let mut bn_grads = Vec::new();
        if let (Some(bn), Some(bc)) = (&self.bn, &cache.bn) {
            let (dg, pg) = bn.backward(bc, &g, param_grads);
            g = dg;
            bn_grads = pg;
        }
        let (dx, mut grads) = self.conv.backward(&cache.conv, &g, param_grads);
        grads.extend(bn_grads);
        (dx, grads, d_act)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.conv.params();
        if let Some(bn) = &self.bn {
            p.extend(bn.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.conv.params_mut();
        if let Some(bn) = &mut self.bn {
            p.extend(bn.params_mut());
        }
        p
    }

    pub fn commit(&mut self, cache: &BlockCache) {
        if let (Some(bn), Some(bc)) = (&mut self.bn, &cache.bn) {
            bn.commit(bc);
        }
    }

    /// Every persistent tensor: parameters plus batch-norm running stats.
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out = vec![
            ("conv.weight", &mut self.conv.weight.value),
            ("conv.bias", &mut self.conv.bias.value),
        ];
        if let Some(bn) = &mut self.bn {
            out.push(("bn.gamma", &mut bn.gamma.value));
            out.push(("bn.beta", &mut bn.beta.value));
            out.push(("bn.running_mean", &mut bn.running_mean));
            out.push(("bn.running_var", &mut bn.running_var));
        }
        out
    }
}
