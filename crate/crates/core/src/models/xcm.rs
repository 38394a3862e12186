use rand::Rng;

use super::{finish_trace, Backprop, ConvBlock, ModelSpec, Trace};
use crate::error::Result;
use crate::layers::{
    concat_width, gap_time, gap_time_backward, split_width, Conv2d, Ctx, Dense, Layer, Padding, Param,
};
use crate::tensor::Tensor;

/// XCM, or XCM-Seq when `sequential` is set.
///
/// Parallel wiring: the per-variable block and the time block both read the
/// input; their 1x1 reductions are concatenated along width into
/// `T x (D + 1)` before the fusion block. Sequential wiring feeds the
/// reduced per-variable map into the time block instead.
#[derive(Debug, Clone)]
pub(super) struct XcmNet {
    sequential: bool,
    dims: usize,
    length: usize,
    vars: ConvBlock,
    vars_reduce: ConvBlock,
    time: ConvBlock,
    time_reduce: ConvBlock,
    fusion: ConvBlock,
    head: Dense,
}

const TAPS: (usize, usize) = (0, 2);

impl XcmNet {
    pub(super) fn new(spec: &ModelSpec, sequential: bool, rng: &mut impl Rng) -> Result<Self> {
        let (f, w, d) = (spec.filters, spec.window_size(), spec.input_d);
        let fusion_width = if sequential { 1 } else { d + 1 };
        Ok(XcmNet {
            sequential,
            dims: d,
            length: spec.input_t,
            vars: ConvBlock::new(Conv2d::per_variable(1, f, w, 1, Padding::Same, rng)?, true, None),
            vars_reduce: ConvBlock::new(Conv2d::pointwise(f, rng)?, false, None),
            time: ConvBlock::new(Conv2d::full_width(1, f, w, d, 1, Padding::Same, rng)?, true, None),
            time_reduce: ConvBlock::new(Conv2d::pointwise(f, rng)?, false, None),
            fusion: ConvBlock::new(
                Conv2d::full_width(1, f, w, fusion_width, 1, Padding::Same, rng)?,
                true,
                None,
            ),
            head: Dense::new(f, spec.classes, rng)?,
        })
    }

    pub(super) fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Trace> {
        let (a, c_vars) = self.vars.forward(x, ctx)?;
        let (a1, c_vars_reduce) = self.vars_reduce.forward(&a, ctx)?;
        let time_in = if self.sequential { &a1 } else { x };
        let (m, c_time) = self.time.forward(time_in, ctx)?;
        let (m1, c_time_reduce) = self.time_reduce.forward(&m, ctx)?;
        let fusion_in = if self.sequential { m1 } else { concat_width(&a1, &m1)? };
        let (z, c_fusion) = self.fusion.forward(&fusion_in, ctx)?;
        let pooled = gap_time(&z)?;
        let (logits, c_head) = self.head.forward(&pooled, ctx)?;
        finish_trace(
            logits,
            vec![c_vars, c_vars_reduce, c_time, c_time_reduce, c_fusion],
            vec![c_head],
            None,
            TAPS,
        )
    }

    pub(super) fn backward(&self, trace: &Trace, dlogits: &Tensor, pg: bool) -> Backprop {
        let c = &trace.blocks;
        let (d_pooled, g_head) = self.head.backward(&trace.dense_inputs[0], dlogits, pg);
        let dz = gap_time_backward(&d_pooled, self.length);
        let (d_fusion_in, g_fusion, _) = self.fusion.backward(&c[4], &dz, pg);
        let (d_a1_parallel, d_m1) = if self.sequential {
            (None, d_fusion_in)
        } else {
            let (da1, dm1) = split_width(&d_fusion_in, self.dims).expect("fusion input width");
            (Some(da1), dm1)
        };
        let (dm, g_time_reduce, _) = self.time_reduce.backward(&c[3], &d_m1, pg);
        let (d_time_in, g_time, time_tap) = self.time.backward(&c[2], &dm, pg);
        let d_a1 = d_a1_parallel.unwrap_or(d_time_in);
        let (da, g_vars_reduce, _) = self.vars_reduce.backward(&c[1], &d_a1, pg);
        let (_, g_vars, vars_tap) = self.vars.backward(&c[0], &da, pg);

        let param_grads = [g_vars, g_vars_reduce, g_time, g_time_reduce, g_fusion, g_head]
            .into_iter()
            .flatten()
            .collect();
        Backprop {
            param_grads,
            vars_tap,
            time_tap,
        }
    }

    pub(super) fn params(&self) -> Vec<&Param> {
        let mut p = Vec::new();
        for b in [
            &self.vars,
            &self.vars_reduce,
            &self.time,
            &self.time_reduce,
            &self.fusion,
        ] {
            p.extend(b.params());
        }
        p.extend(self.head.params());
        p
    }

    pub(super) fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = Vec::new();
        for b in [
            &mut self.vars,
            &mut self.vars_reduce,
            &mut self.time,
            &mut self.time_reduce,
            &mut self.fusion,
        ] {
            p.extend(b.params_mut());
        }
        p.extend(self.head.params_mut());
        p
    }

    pub(super) fn blocks_mut(&mut self) -> Vec<(&'static str, &mut ConvBlock)> {
        vec![
            ("vars", &mut self.vars),
            ("vars_reduce", &mut self.vars_reduce),
            ("time", &mut self.time),
            ("time_reduce", &mut self.time_reduce),
            ("fusion", &mut self.fusion),
        ]
    }

    pub(super) fn parts_mut(&mut self) -> (Vec<(&'static str, &mut ConvBlock)>, Vec<(&'static str, &mut Dense)>) {
        let XcmNet {
            vars,
            vars_reduce,
            time,
            time_reduce,
            fusion,
            head,
            ..
        } = self;
        (
            vec![
                ("vars", vars),
                ("vars_reduce", vars_reduce),
                ("time", time),
                ("time_reduce", time_reduce),
                ("fusion", fusion),
            ],
            vec![("head", head)],
        )
    }
}
