use rand::Rng;

use super::{finish_trace, Backprop, ConvBlock, ModelSpec, Trace};
use crate::error::Result;
use crate::layers::{Conv2d, Ctx, Dense, Dropout, Layer, Padding, Param, Relu};
use crate::tensor::Tensor;

pub const MTEX_DROPOUT: f64 = 0.4;
pub const MTEX_HIDDEN: usize = 128;
pub const MTEX_L2: f64 = 0.2;

/// MTEX-CNN: two stride-2 per-variable convolutions, a 1x1 reduction, one
/// stride-2 time convolution, then a 128-unit dense layer and the classifier.
#[derive(Debug, Clone)]
pub(super) struct MtexNet {
    stage1a: ConvBlock,
    stage1b: ConvBlock,
    reduce: ConvBlock,
    stage2: ConvBlock,
    hidden: Dense,
    head: Dense,
    flat: usize,
    l2: f64,
}

const TAPS: (usize, usize) = (0, 3);

impl MtexNet {
    pub(super) fn new(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        let d = spec.input_d;
        let drop = || Dropout::new(MTEX_DROPOUT);
        let stage1a = ConvBlock::new(
            Conv2d::per_variable(1, 64, 8, 2, Padding::Same, rng)?,
            false,
            Some(drop()?),
        );
        let stage1b = ConvBlock::new(
            Conv2d::per_variable(64, 128, 6, 2, Padding::Same, rng)?,
            false,
            Some(drop()?),
        );
        let reduce = ConvBlock::new(Conv2d::pointwise(128, rng)?, false, None);
        let stage2 = ConvBlock::new(
            Conv2d::full_width(1, 128, 2, d, 2, Padding::Same, rng)?,
            false,
            Some(drop()?),
        );

        let (t1, _) = stage1a.conv.output_extent(spec.input_t, d)?;
        let (t2, _) = stage1b.conv.output_extent(t1, d)?;
        let (t3, _) = stage2.conv.output_extent(t2, d)?;
        let flat = stage2.conv.filters() * t3;
        Ok(MtexNet {
            stage1a,
            stage1b,
            reduce,
            stage2,
            hidden: Dense::new(flat, MTEX_HIDDEN, rng)?,
            head: Dense::new(MTEX_HIDDEN, spec.classes, rng)?,
            flat,
            l2: MTEX_L2,
        })
    }

    pub(super) fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Trace> {
        let b = x.dim(0);
        let (h1, c1) = self.stage1a.forward(x, ctx)?;
        let (h2, c2) = self.stage1b.forward(&h1, ctx)?;
        let (h3, c3) = self.reduce.forward(&h2, ctx)?;
        let (h4, c4) = self.stage2.forward(&h3, ctx)?;
        let flat = h4.reshape(&[b, self.flat])?;
        let (pre, c_hidden) = self.hidden.forward(&flat, ctx)?;
        let (hidden, _) = Relu.forward(&pre, ctx)?;
        let (logits, c_head) = self.head.forward(&hidden, ctx)?;
        finish_trace(logits, vec![c1, c2, c3, c4], vec![c_hidden, c_head], Some(pre), TAPS)
    }

    pub(super) fn backward(&self, trace: &Trace, dlogits: &Tensor, pg: bool) -> Backprop {
        let c = &trace.blocks;
        let pre = trace
            .hidden_pre_relu
            .as_ref()
            .expect("MTEX trace keeps the hidden pre-activation");
        let (d_hidden, g_head) = self.head.backward(&trace.dense_inputs[1], dlogits, pg);
        let (d_pre, _) = Relu.backward(pre, &d_hidden, false);
        let (d_flat, g_hidden) = self.hidden.backward(&trace.dense_inputs[0], &d_pre, pg);
        let shape4 = c[3].activations.shape().to_vec();
        let d_h4 = d_flat.reshape(&shape4).expect("flatten volume");
        let (d_h3, g4, time_tap) = self.stage2.backward(&c[3], &d_h4, pg);
        let (d_h2, g3, _) = self.reduce.backward(&c[2], &d_h3, pg);
        let (d_h1, g2, _) = self.stage1b.backward(&c[1], &d_h2, pg);
        let (_, g1, vars_tap) = self.stage1a.backward(&c[0], &d_h1, pg);
        Backprop {
            param_grads: [g1, g2, g3, g4, g_hidden, g_head].into_iter().flatten().collect(),
            vars_tap,
            time_tap,
        }
    }

    /// Adds the L2 penalty gradient on the hidden dense weights and returns
    /// the penalty value.
    pub(super) fn add_penalty_grads(&self, grads: &mut [Tensor]) -> f64 {
        let w = &self.hidden.weight.value;
        let idx = self.hidden_weight_index();
        for (g, &v) in grads[idx].data_mut().iter_mut().zip(w.data()) {
            *g += 2.0 * self.l2 * v;
        }
        self.l2 * w.dot(w)
    }

    fn hidden_weight_index(&self) -> usize {
        [&self.stage1a, &self.stage1b, &self.reduce, &self.stage2]
            .iter()
            .map(|b| b.params().len())
            .sum()
    }

    pub(super) fn params(&self) -> Vec<&Param> {
        let mut p = Vec::new();
        for b in [&self.stage1a, &self.stage1b, &self.reduce, &self.stage2] {
            p.extend(b.params());
        }
        p.extend(self.hidden.params());
        p.extend(self.head.params());
        p
    }

    pub(super) fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = Vec::new();
        for b in [&mut self.stage1a, &mut self.stage1b, &mut self.reduce, &mut self.stage2] {
            p.extend(b.params_mut());
        }
        p.extend(self.hidden.params_mut());
        p.extend(self.head.params_mut());
        p
    }

    pub(super) fn blocks_mut(&mut self) -> Vec<(&'static str, &mut ConvBlock)> {
        self.parts_mut().0
    }

    pub(super) fn parts_mut(&mut self) -> (Vec<(&'static str, &mut ConvBlock)>, Vec<(&'static str, &mut Dense)>) {
        let MtexNet {
            stage1a,
            stage1b,
            reduce,
            stage2,
            hidden,
            head,
            ..
        } = self;
        (
            vec![
                ("stage1a", stage1a),
                ("stage1b", stage1b),
                ("reduce", reduce),
                ("stage2", stage2),
            ],
            vec![("hidden", hidden), ("head", head)],
        )
    }
}
