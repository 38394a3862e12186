//! The three network architectures and their shared plumbing.
//!
//! Every model exposes two Grad-CAM tap points: `vars_block`, the post-ReLU
//! output of the first per-variable convolution block, and `time_block`, the
//! post-ReLU output of the first time convolution block.

mod block;
mod checkpoint;
mod mtex;
mod xcm;

pub use block::{BlockCache, ConvBlock};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{argmax, to_time_major};
use crate::error::{Error, Result};
use crate::layers::{cross_entropy, softmax, softmax_cross_entropy_backward, Ctx, Param};
use crate::tensor::Tensor;

use mtex::MtexNet;
use xcm::XcmNet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Xcm,
    XcmSeq,
    MtexCnn,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Xcm => "xcm",
            Architecture::XcmSeq => "xcm-seq",
            Architecture::MtexCnn => "mtex-cnn",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xcm" => Ok(Architecture::Xcm),
            "xcm-seq" | "xcmseq" => Ok(Architecture::XcmSeq),
            "mtex-cnn" | "mtexcnn" | "mtex" => Ok(Architecture::MtexCnn),
            other => Err(Error::InvalidArgument(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Grad-CAM tap points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tap {
    VarsBlock,
    TimeBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub input_t: usize,
    pub input_d: usize,
    pub classes: usize,
    pub filters: usize,
    pub window_pct: f64,
}

impl ModelSpec {
    pub const DEFAULT_FILTERS: usize = 128;

    pub fn new(architecture: Architecture, input_t: usize, input_d: usize, classes: usize) -> Self {
        ModelSpec {
            architecture,
            input_t,
            input_d,
            classes,
            filters: Self::DEFAULT_FILTERS,
            window_pct: 0.2,
        }
    }

    pub fn with_window(mut self, window_pct: f64) -> Self {
        self.window_pct = window_pct;
        self
    }

    pub fn with_filters(mut self, filters: usize) -> Self {
        self.filters = filters;
        self
    }

    /// Kernel length along time: `max(1, round(window_pct * T))`, at most `T`.
    pub fn window_size(&self) -> usize {
        ((self.window_pct * self.input_t as f64).round() as usize).clamp(1, self.input_t.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.input_t == 0 || self.input_d == 0 {
            return bad(format!(
                "input must be non-empty, got T={} D={}",
                self.input_t, self.input_d
            ));
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.filters == 0 {
            return bad("filter count must be positive".into());
        }
        if !(self.window_pct > 0.0 && self.window_pct <= 1.0) {
            return bad(format!("window_pct must lie in (0, 1], got {}", self.window_pct));
        }
        if self.architecture == Architecture::MtexCnn && self.input_t < 4 {
            return bad(format!("MTEX-CNN needs T >= 4, got {}", self.input_t));
        }
        Ok(())
    }
}

/// Everything recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub logits: Tensor,
    pub probs: Tensor,
    blocks: Vec<BlockCache>,
    dense_inputs: Vec<Tensor>,
    hidden_pre_relu: Option<Tensor>,
    taps: (usize, usize),
}

impl Trace {
    pub fn tap(&self, tap: Tap) -> &Tensor {
        match tap {
            Tap::VarsBlock => &self.blocks[self.taps.0].activations,
            Tap::TimeBlock => &self.blocks[self.taps.1].activations,
        }
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct Backprop {
    /// One entry per [`Model::params`] element; empty when not requested.
    pub param_grads: Vec<Tensor>,
    pub vars_tap: Tensor,
    pub time_tap: Tensor,
}

impl Backprop {
    pub fn tap(&self, tap: Tap) -> &Tensor {
        match tap {
            Tap::VarsBlock => &self.vars_tap,
            Tap::TimeBlock => &self.time_tap,
        }
    }
}

#[derive(Debug, Clone)]
enum Net {
    Xcm(XcmNet),
    Mtex(MtexNet),
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    net: Net,
}

impl Model {
    /// Builds a freshly initialized model; `seed` drives weight init.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = match spec.architecture {
            Architecture::Xcm => Net::Xcm(XcmNet::new(&spec, false, &mut rng)?),
            Architecture::XcmSeq => Net::Xcm(XcmNet::new(&spec, true, &mut rng)?),
            Architecture::MtexCnn => Net::Mtex(MtexNet::new(&spec, &mut rng)?),
        };
        Ok(Model { spec, net })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Forward pass on a `[B, 1, T, D]` batch.
    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Trace> {
        let [_, c, t, d] = x.dims4()?;
        if (c, t, d) != (1, self.spec.input_t, self.spec.input_d) {
            return Err(Error::Shape(format!(
                "model expects [B, 1, {}, {}], got {:?}",
                self.spec.input_t,
                self.spec.input_d,
                x.shape()
            )));
        }
        match &self.net {
            Net::Xcm(n) => n.forward(x, ctx),
            Net::Mtex(n) => n.forward(x, ctx),
        }
    }

    /// Backpropagates `dlogits` (gradient of the objective w.r.t. the
    /// pre-softmax logits). Regularization is not included here.
    pub fn backward(&self, trace: &Trace, dlogits: &Tensor, param_grads: bool) -> Backprop {
        match &self.net {
            Net::Xcm(n) => n.backward(trace, dlogits, param_grads),
            Net::Mtex(n) => n.backward(trace, dlogits, param_grads),
        }
    }

    /// Mean cross-entropy plus any weight penalty, with parameter gradients.
    pub fn loss_and_grads(&self, x: &Tensor, labels: &[usize], ctx: &mut Ctx) -> Result<(f64, Trace, Vec<Tensor>)> {
        let trace = self.forward(x, ctx)?;
        let mut loss = cross_entropy(&trace.probs, labels)?;
        let dlogits = softmax_cross_entropy_backward(&trace.probs, labels)?;
        let mut grads = self.backward(&trace, &dlogits, true).param_grads;
        if let Net::Mtex(n) = &self.net {
            loss += n.add_penalty_grads(&mut grads);
        }
        Ok((loss, trace, grads))
    }

    pub fn params(&self) -> Vec<&Param> {
        match &self.net {
            Net::Xcm(n) => n.params(),
            Net::Mtex(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.net {
            Net::Xcm(n) => n.params_mut(),
            Net::Mtex(n) => n.params_mut(),
        }
    }

    /// Exact number of trainable scalars (batch-norm running stats excluded).
    pub fn count_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn accumulate(&mut self, grads: &[Tensor]) {
        for (p, g) in self.params_mut().into_iter().zip(grads) {
            p.grad.add_assign(g);
        }
    }

    /// Folds the batch-norm statistics of a training pass into running stats.
    pub fn commit_running_stats(&mut self, trace: &Trace) {
        let blocks = match &mut self.net {
            Net::Xcm(n) => n.blocks_mut(),
            Net::Mtex(n) => n.blocks_mut(),
        };
        for ((_, b), c) in blocks.into_iter().zip(&trace.blocks) {
            b.commit(c);
        }
    }

    /// Named persistent tensors in a fixed order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let (blocks, denses) = match &mut self.net {
            Net::Xcm(n) => n.parts_mut(),
            Net::Mtex(n) => n.parts_mut(),
        };
        let mut out = Vec::new();
        for (name, b) in blocks {
            for (field, t) in b.tensors_mut() {
                out.push((format!("{name}.{field}"), t));
            }
        }
        for (name, d) in denses {
            out.push((format!("{name}.weight"), &mut d.weight.value));
            out.push((format!("{name}.bias"), &mut d.bias.value));
        }
        out
    }

    /// Inference-mode class probabilities for a `[B, D, T]` batch.
    pub fn predict(&self, batch: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let [b, d, t] = match batch.shape() {
            &[b, d, t] => [b, d, t],
            s => return Err(Error::Shape(format!("predict expects [B, D, T], got {s:?}"))),
        };
        if (d, t) != (self.spec.input_d, self.spec.input_t) {
            return Err(Error::Shape(format!(
                "model expects D={} T={}, got D={d} T={t}",
                self.spec.input_d, self.spec.input_t
            )));
        }
        let mut data = Vec::with_capacity(batch.len());
        for i in 0..b {
            data.extend(to_time_major(&batch.slice_outer(i, i + 1).reshape(&[d, t])?));
        }
        let x = Tensor::new(vec![b, 1, t, d], data)?;
        let trace = self.forward(&x, &mut Ctx::inference())?;
        let labels = trace.probs.data().chunks(self.spec.classes).map(argmax).collect();
        Ok((trace.probs, labels))
    }
}

fn finish_trace(
    logits: Tensor,
    blocks: Vec<BlockCache>,
    dense_inputs: Vec<Tensor>,
    hidden_pre_relu: Option<Tensor>,
    taps: (usize, usize),
) -> Result<Trace> {
    let probs = softmax(&logits)?;
    Ok(Trace {
        logits,
        probs,
        blocks,
        dense_inputs,
        hidden_pre_relu,
        taps,
    })
}
