use rand::Rng;

use super::{he_uniform, Ctx, Layer, Param};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fully connected layer on `[B, in]` inputs; weight layout `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidArgument(format!(
                "dense layer needs positive extents, got {inputs} -> {outputs}"
            )));
        }
        Ok(Dense {
            weight: Param::new(he_uniform(&[outputs, inputs], inputs, rng)),
            bias: Param::new(Tensor::zeros(&[outputs])),
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.dim(0)
    }
}

impl Layer for Dense {
    type Cache = Tensor;

    fn forward(&self, x: &Tensor, _ctx: &mut Ctx) -> Result<(Tensor, Tensor)> {
        let [b, n] = x.dims2()?;
        if n != self.inputs() {
            return Err(Error::Shape(format!("dense expects {} inputs, got {n}", self.inputs())));
        }
        let m = self.outputs();
        let w = self.weight.value.data();
        let bias = self.bias.value.data();
        let mut out = Vec::with_capacity(b * m);
        for row in x.data().chunks(n) {
            for o in 0..m {
                let wr = &w[o * n..(o + 1) * n];
                out.push(bias[o] + wr.iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        Ok((Tensor::new(vec![b, m], out)?, x.clone()))
    }

    fn backward(&self, x: &Tensor, dy: &Tensor, param_grads: bool) -> (Tensor, Vec<Tensor>) {
        let [b, n] = x.dims2().expect("dense cache is 2-d");
        let m = self.outputs();
        let w = self.weight.value.data();
        let dyd = dy.data();
        let mut dx = vec![0.0; b * n];
        for bi in 0..b {
            let dxr = &mut dx[bi * n..(bi + 1) * n];
            for o in 0..m {
                let g = dyd[bi * m + o];
                for (d, wv) in dxr.iter_mut().zip(&w[o * n..(o + 1) * n]) {
                    *d += g * wv;
                }
            }
        }
        let dx = Tensor::new(vec![b, n], dx).expect("dense input gradient");
        if !param_grads {
            return (dx, Vec::new());
        }
        let mut dw = vec![0.0; m * n];
        let mut db = vec![0.0; m];
        for (bi, row) in x.data().chunks(n).enumerate() {
            for o in 0..m {
                let g = dyd[bi * m + o];
                db[o] += g;
                for (d, xv) in dw[o * n..(o + 1) * n].iter_mut().zip(row) {
                    *d += g * xv;
                }
            }
        }
        (
            dx,
            vec![
                Tensor::new(vec![m, n], dw).expect("dense weight gradient"),
                Tensor::new(vec![m], db).expect("dense bias gradient"),
            ],
        )
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

    #[test]
    fn parameter_count() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(Dense::new(128, 2, &mut rng).unwrap().num_params(), 258);
    }
}
