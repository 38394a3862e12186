use rand::Rng;

use super::{he_uniform, Ctx, Layer, Param};
use crate::error::{Error, Result};
use crate::parallel::for_each_chunk_mut;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding so that the time extent becomes `ceil(T / stride)`.
    /// When the total padding is odd the extra zero goes at the end.
    Same,
    Valid,
}

/// Convolution over `[B, C, T, W]` activations with a `kernel_t × kernel_w`
/// kernel. Time is padded according to [`Padding`]; width is never padded,
/// so the output width is `W - kernel_w + 1`.
///
/// The three convolution flavours used by the networks are all instances:
/// per-variable (`kernel_w = 1`), full-width (`kernel_w = W`, output width 1)
/// and pointwise (`1 × 1`).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    in_channels: usize,
    filters: usize,
    kernel_t: usize,
    kernel_w: usize,
    stride_t: usize,
    padding: Padding,
}

struct Geometry {
    out_t: usize,
    out_w: usize,
    pad_begin: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        filters: usize,
        kernel_t: usize,
        kernel_w: usize,
        stride_t: usize,
        padding: Padding,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if filters == 0 {
            return Err(Error::InvalidArgument("filter count must be positive".into()));
        }
        if in_channels == 0 || kernel_t == 0 || kernel_w == 0 || stride_t == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv needs positive channels/kernel/stride, got c={in_channels} k={kernel_t}x{kernel_w} s={stride_t}"
            )));
        }
        let fan_in = in_channels * kernel_t * kernel_w;
        let weight = he_uniform(&[filters, in_channels, kernel_t, kernel_w], fan_in, rng);
        Ok(Conv2d {
            weight: Param::new(weight),
            bias: Param::new(Tensor::zeros(&[filters])),
            in_channels,
            filters,
            kernel_t,
            kernel_w,
            stride_t,
            padding,
        })
    }

    /// `kernel_t × 1` filters sliding over every variable independently.
    pub fn per_variable(
        in_channels: usize,
        filters: usize,
        kernel_t: usize,
        stride_t: usize,
        padding: Padding,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::new(in_channels, filters, kernel_t, 1, stride_t, padding, rng)
    }

    /// `kernel_t × width` filters that slide over time only.
    pub fn full_width(
        in_channels: usize,
        filters: usize,
        kernel_t: usize,
        width: usize,
        stride_t: usize,
        padding: Padding,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::new(in_channels, filters, kernel_t, width, stride_t, padding, rng)
    }

    /// `1 × 1` channel pooling down to a single map.
    pub fn pointwise(in_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::new(in_channels, 1, 1, 1, 1, Padding::Same, rng)
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.kernel_t, self.kernel_w)
    }

    /// Output `(time, width)` extent for an input of `(t, w)`.
    pub fn output_extent(&self, t: usize, w: usize) -> Result<(usize, usize)> {
        let g = self.geometry(t, w)?;
        Ok((g.out_t, g.out_w))
    }

    fn geometry(&self, t: usize, w: usize) -> Result<Geometry> {
        if self.kernel_w > w {
            return Err(Error::KernelExceedsInput {
                kernel: self.kernel_w,
                length: w,
            });
        }
        let out_w = w - self.kernel_w + 1;
        let s = self.stride_t;
        match self.padding {
            Padding::Same => {
                let out_t = t.div_ceil(s);
                let needed = (out_t - 1) * s + self.kernel_t;
                let total = needed.saturating_sub(t);
                Ok(Geometry {
                    out_t,
                    out_w,
                    pad_begin: total / 2,
                })
            }
            Padding::Valid => {
                if self.kernel_t > t {
                    return Err(Error::KernelExceedsInput {
                        kernel: self.kernel_t,
                        length: t,
                    });
                }
                Ok(Geometry {
                    out_t: (t - self.kernel_t) / s + 1,
                    out_w,
                    pad_begin: 0,
                })
            }
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<([usize; 4], Geometry)> {
        let dims = x.dims4()?;
        if dims[1] != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, dims[1]
            )));
        }
        let g = self.geometry(dims[2], dims[3])?;
        Ok((dims, g))
    }

    /// Output rows whose tap `u` reads inside the unpadded input, i.e. those
    /// `to` with `0 <= to * stride + u - pad_begin < t`.
    #[inline]
    fn valid_rows(&self, u: usize, g: &Geometry, t: usize) -> std::ops::Range<usize> {
        let s = self.stride_t;
        let lo = g.pad_begin.saturating_sub(u).div_ceil(s);
        let end = (t + g.pad_begin).saturating_sub(u).div_ceil(s);
        let end = end.min(g.out_t);
        lo.min(end)..end
    }

    /// Stride 1 with a `k x 1` kernel: every tap is one contiguous
    /// multiply-add over whole rows.
    #[inline]
    fn contiguous(&self) -> bool {
        self.stride_t == 1 && self.kernel_w == 1
    }
}

impl Layer for Conv2d {
    type Cache = Tensor;

    fn forward(&self, x: &Tensor, _ctx: &mut Ctx) -> Result<(Tensor, Tensor)> {
        let ([_, c, t, w], g) = self.check_input(x)?;
        let b = x.dim(0);
        let (f, kt, kw) = (self.filters, self.kernel_t, self.kernel_w);
        let (ot, ow) = (g.out_t, g.out_w);
        let weights = self.weight.value.data();
        let bias = self.bias.value.data();
        let xd = x.data();
        let mut out = Tensor::zeros(&[b, f, ot, ow]);
        for_each_chunk_mut(out.data_mut(), ot * ow, |idx, o| {
            let (bi, fi) = (idx / f, idx % f);
            o.fill(bias[fi]);
            for ci in 0..c {
                let xs = &xd[(bi * c + ci) * t * w..(bi * c + ci + 1) * t * w];
                for u in 0..kt {
                    let wk = &weights[((fi * c + ci) * kt + u) * kw..][..kw];
                    let rows = self.valid_rows(u, &g, t);
                    if rows.is_empty() {
                        continue;
                    }
                    if self.contiguous() {
                        let src = (rows.start + u - g.pad_begin) * w;
                        let n = rows.len() * w;
                        for (ov, xv) in o[rows.start * ow..][..n].iter_mut().zip(&xs[src..src + n]) {
                            *ov += wk[0] * xv;
                        }
                        continue;
                    }
                    if ow == 1 {
                        for to in rows {
                            let ti = to * self.stride_t + u - g.pad_begin;
                            o[to] += wk.iter().zip(&xs[ti * w..][..kw]).map(|(a, b)| a * b).sum::<f64>();
                        }
                        continue;
                    }
                    for to in rows {
                        let ti = to * self.stride_t + u - g.pad_begin;
                        let xrow = &xs[ti * w..(ti + 1) * w];
                        let orow = &mut o[to * ow..(to + 1) * ow];
                        for (v, &wt) in wk.iter().enumerate() {
                            for (ov, xv) in orow.iter_mut().zip(&xrow[v..]) {
                                *ov += wt * xv;
                            }
                        }
                    }
                }
            }
        });
        Ok((out, x.clone()))
    }

    fn backward(&self, x: &Tensor, dy: &Tensor, param_grads: bool) -> (Tensor, Vec<Tensor>) {
        let [b, c, t, w] = x.dims4().expect("cached conv input is 4-d");
        let g = self.geometry(t, w).expect("cached conv input matches layer");
        let (f, kt, kw) = (self.filters, self.kernel_t, self.kernel_w);
        let (ot, ow) = (g.out_t, g.out_w);
        assert_eq!(dy.shape(), &[b, f, ot, ow], "conv upstream gradient shape");
        let weights = self.weight.value.data();
        let xd = x.data();
        let dyd = dy.data();

        let mut dx = Tensor::zeros(&[b, c, t, w]);
        for_each_chunk_mut(dx.data_mut(), c * t * w, |bi, dxs| {
            for fi in 0..f {
                let dys = &dyd[(bi * f + fi) * ot * ow..(bi * f + fi + 1) * ot * ow];
                for ci in 0..c {
                    let dxc = &mut dxs[ci * t * w..(ci + 1) * t * w];
                    for u in 0..kt {
                        let wk = &weights[((fi * c + ci) * kt + u) * kw..][..kw];
                        let rows = self.valid_rows(u, &g, t);
                        if rows.is_empty() {
                            continue;
                        }
                        if self.contiguous() {
                            let dst = (rows.start + u - g.pad_begin) * w;
                            let n = rows.len() * w;
                            for (dxv, dyv) in dxc[dst..dst + n].iter_mut().zip(&dys[rows.start * ow..][..n]) {
                                *dxv += wk[0] * dyv;
                            }
                            continue;
                        }
                        if ow == 1 {
                            for to in rows {
                                let ti = to * self.stride_t + u - g.pad_begin;
                                let gy = dys[to];
                                for (dxv, &wt) in dxc[ti * w..][..kw].iter_mut().zip(wk) {
                                    *dxv += wt * gy;
                                }
                            }
                            continue;
                        }
                        for to in rows {
                            let ti = to * self.stride_t + u - g.pad_begin;
                            let dyrow = &dys[to * ow..(to + 1) * ow];
                            let dxrow = &mut dxc[ti * w..(ti + 1) * w];
                            for (v, &wt) in wk.iter().enumerate() {
                                for (dxv, dyv) in dxrow[v..].iter_mut().zip(dyrow) {
                                    *dxv += wt * dyv;
                                }
                            }
                        }
                    }
                }
            }
        });
        if !param_grads {
            return (dx, Vec::new());
        }

        let mut dw = Tensor::zeros(self.weight.value.shape());
        for_each_chunk_mut(dw.data_mut(), c * kt * kw, |fi, dwf| {
            for bi in 0..b {
                let dys = &dyd[(bi * f + fi) * ot * ow..(bi * f + fi + 1) * ot * ow];
                for ci in 0..c {
                    let xs = &xd[(bi * c + ci) * t * w..(bi * c + ci + 1) * t * w];
                    for u in 0..kt {
                        let dwk = &mut dwf[(ci * kt + u) * kw..][..kw];
                        let rows = self.valid_rows(u, &g, t);
                        if rows.is_empty() {
                            continue;
                        }
                        if self.contiguous() {
                            let src = (rows.start + u - g.pad_begin) * w;
                            let n = rows.len() * w;
                            dwk[0] += dys[rows.start * ow..][..n]
                                .iter()
                                .zip(&xs[src..src + n])
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                            continue;
                        }
                        if ow == 1 {
                            for to in rows {
                                let ti = to * self.stride_t + u - g.pad_begin;
                                let gy = dys[to];
                                for (dwv, &xv) in dwk.iter_mut().zip(&xs[ti * w..][..kw]) {
                                    *dwv += gy * xv;
                                }
                            }
                            continue;
                        }
                        for to in rows {
                            let ti = to * self.stride_t + u - g.pad_begin;
                            let dyrow = &dys[to * ow..(to + 1) * ow];
                            let xrow = &xs[ti * w..(ti + 1) * w];
                            for (v, dwv) in dwk.iter_mut().enumerate() {
                                *dwv += dyrow.iter().zip(&xrow[v..]).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                }
            }
        });
        let mut db = Tensor::zeros(&[f]);
        for (fi, dbv) in db.data_mut().iter_mut().enumerate() {
            for bi in 0..b {
                *dbv += dyd[(bi * f + fi) * ot * ow..(bi * f + fi + 1) * ot * ow]
                    .iter()
                    .sum::<f64>();
            }
        }
        (dx, vec![dw, db])
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn set(conv: &mut Conv2d, w: &[f64], b: &[f64]) {
        conv.weight.value.data_mut().copy_from_slice(w);
        conv.bias.value.data_mut().copy_from_slice(b);
    }

    fn run(conv: &Conv2d, x: &Tensor) -> Tensor {
        conv.forward(x, &mut Ctx::inference()).unwrap().0
    }

    #[test]
    fn per_variable_same_padding_preserves_extent() {
        let conv = Conv2d::per_variable(1, 128, 20, 1, Padding::Same, &mut rng()).unwrap();
        let x = Tensor::full(&[1, 1, 100, 2], 0.5);
        assert_eq!(run(&conv, &x).shape(), &[1, 128, 100, 2]);
    }

    #[test]
    fn hand_convolution_with_even_total_padding() {
        let mut conv = Conv2d::per_variable(1, 1, 3, 1, Padding::Same, &mut rng()).unwrap();
        set(&mut conv, &[1.0, 1.0, 1.0], &[0.0]);
        let x = Tensor::new(vec![1, 1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(run(&conv, &x).data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn odd_total_padding_goes_to_the_end() {
        // kernel 2 needs one pad element; it goes after the last row.
        let mut conv = Conv2d::per_variable(1, 1, 2, 1, Padding::Same, &mut rng()).unwrap();
        set(&mut conv, &[1.0, 10.0], &[0.0]);
        let x = Tensor::new(vec![1, 1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(run(&conv, &x).data(), &[21.0, 32.0, 3.0]);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let conv = Conv2d::per_variable(1, 4, 5, 1, Padding::Same, &mut rng()).unwrap();
        let x = Tensor::zeros(&[2, 1, 9, 3]);
        assert!(run(&conv, &x).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_width_collapses_width() {
        let conv = Conv2d::full_width(1, 128, 20, 2, 1, Padding::Same, &mut rng()).unwrap();
        let x = Tensor::full(&[1, 1, 100, 2], 1.0);
        assert_eq!(run(&conv, &x).shape(), &[1, 128, 100, 1]);
    }

    #[test]
    fn full_width_identity_and_dot_product() {
        let mut conv = Conv2d::full_width(1, 1, 1, 1, 1, Padding::Same, &mut rng()).unwrap();
        set(&mut conv, &[1.0], &[0.0]);
        let x = Tensor::new(vec![1, 1, 5, 1], vec![1.0, -2.0, 3.5, 0.0, 7.0]).unwrap();
        assert_eq!(run(&conv, &x).data(), x.data());

        let mut conv = Conv2d::full_width(1, 1, 1, 2, 1, Padding::Same, &mut rng()).unwrap();
        set(&mut conv, &[1.0, 1.0], &[0.0]);
        let x = Tensor::new(vec![1, 1, 4, 2], vec![1., 1., 2., 2., 3., 3., 4., 4.]).unwrap();
        assert_eq!(run(&conv, &x).data(), &[2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn pointwise_pools_channels() {
        let conv = Conv2d::pointwise(128, &mut rng()).unwrap();
        assert_eq!(conv.num_params(), 129);
        let x = Tensor::full(&[1, 128, 100, 2], 1.0);
        assert_eq!(run(&conv, &x).shape(), &[1, 1, 100, 2]);

        let mut conv = Conv2d::pointwise(2, &mut rng()).unwrap();
        set(&mut conv, &[1.0, -1.0], &[0.0]);
        let mut x = Tensor::zeros(&[1, 2, 3, 1]);
        x.data_mut()[..3].fill(3.0);
        x.data_mut()[3..].fill(5.0);
        assert_eq!(run(&conv, &x).data(), &[-2.0, -2.0, -2.0]);
    }

    #[test]
    fn stride_two_same_padding_halves_time() {
        let conv = Conv2d::per_variable(1, 64, 8, 2, Padding::Same, &mut rng()).unwrap();
        let x = Tensor::zeros(&[1, 1, 100, 2]);
        assert_eq!(run(&conv, &x).shape(), &[1, 64, 50, 2]);
        let x = Tensor::zeros(&[1, 1, 25, 2]);
        assert_eq!(run(&conv, &x).shape(), &[1, 64, 13, 2]);
    }

    #[test]
    fn valid_padding_rejects_long_kernel() {
        let conv = Conv2d::per_variable(1, 1, 6, 1, Padding::Valid, &mut rng()).unwrap();
        let err = conv.forward(&Tensor::zeros(&[1, 1, 5, 1]), &mut Ctx::inference());
        assert!(matches!(err, Err(Error::KernelExceedsInput { .. })));
        assert!(Conv2d::per_variable(1, 0, 3, 1, Padding::Same, &mut rng()).is_err());
    }

    #[test]
    fn window_equal_to_length_keeps_extent() {
        for t in [1, 2, 7, 100] {
            let conv = Conv2d::per_variable(1, 2, t, 1, Padding::Same, &mut rng()).unwrap();
            assert_eq!(conv.output_extent(t, 3).unwrap(), (t, 3));
        }
    }
}
