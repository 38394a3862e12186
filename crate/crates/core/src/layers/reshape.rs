use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Appends `b`'s width columns after `a`'s: `[B,C,T,Wa] ++ [B,C,T,Wb]`.
pub fn concat_width(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [ba, ca, ta, wa] = a.dims4()?;
    let [bb, cb, tb, wb] = b.dims4()?;
    if (ba, ca, ta) != (bb, cb, tb) {
        return Err(Error::Shape(format!(
            "concat_width: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let w = wa + wb;
    let mut out = Vec::with_capacity(ba * ca * ta * w);
    for (ra, rb) in a.data().chunks(wa).zip(b.data().chunks(wb)) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    Tensor::new(vec![ba, ca, ta, w], out)
}

/// Inverse of [`concat_width`]: splits off the first `wa` columns.
pub fn split_width(g: &Tensor, wa: usize) -> Result<(Tensor, Tensor)> {
    let [b, c, t, w] = g.dims4()?;
    if wa > w {
        return Err(Error::Shape(format!("cannot split {wa} columns from width {w}")));
    }
    let wb = w - wa;
    let mut da = Vec::with_capacity(b * c * t * wa);
    let mut db = Vec::with_capacity(b * c * t * wb);
    for row in g.data().chunks(w) {
        da.extend_from_slice(&row[..wa]);
        db.extend_from_slice(&row[wa..]);
    }
    Ok((Tensor::new(vec![b, c, t, wa], da)?, Tensor::new(vec![b, c, t, wb], db)?))
}

/// Global average pooling over time: `[B, F, T, 1] -> [B, F]`.
pub fn gap_time(x: &Tensor) -> Result<Tensor> {
    let [b, f, t, w] = x.dims4()?;
    if w != 1 {
        return Err(Error::Shape(format!("GAP expects width 1, got {w}")));
    }
    let data = x.data().chunks(t).map(|m| m.iter().sum::<f64>() / t as f64).collect();
    Tensor::new(vec![b, f], data)
}

pub fn gap_time_backward(dy: &Tensor, t: usize) -> Tensor {
    let [b, f] = dy.dims2().expect("GAP gradient is 2-d");
    let mut dx = Vec::with_capacity(b * f * t);
    for &g in dy.data() {
        dx.extend(std::iter::repeat_n(g / t as f64, t));
    }
    Tensor::new(vec![b, f, t, 1], dx).expect("GAP gradient volume")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_places_b_last() {
        let a = Tensor::from_fn(&[1, 1, 100, 2], |i| i as f64);
        let b = Tensor::from_fn(&[1, 1, 100, 1], |i| -(i as f64) - 1.0);
        let c = concat_width(&a, &b).unwrap();
        assert_eq!(c.shape(), &[1, 1, 100, 3]);
        for t in 0..100 {
            assert_eq!(c.data()[t * 3 + 2], b.data()[t]);
            assert_eq!(c.data()[t * 3], a.data()[t * 2]);
        }
        let (da, db) = split_width(&c, 2).unwrap();
        assert_eq!((da, db), (a, b));
    }

    #[test]
    fn concat_rejects_mismatched_time() {
        let a = Tensor::zeros(&[1, 1, 10, 2]);
        let b = Tensor::zeros(&[1, 1, 9, 1]);
        assert!(concat_width(&a, &b).is_err());
    }

    #[test]
    fn gap_means() {
        let x = Tensor::new(vec![1, 2, 4, 1], vec![1., 2., 3., 4., 7., 7., 7., 7.]).unwrap();
        assert_eq!(gap_time(&x).unwrap().data(), &[2.5, 7.0]);
        let g = gap_time_backward(&Tensor::new(vec![1, 2], vec![4.0, 8.0]).unwrap(), 4);
        assert_eq!(g.data(), &[1., 1., 1., 1., 2., 2., 2., 2.]);
        assert!(gap_time(&Tensor::zeros(&[1, 1, 4, 2])).is_err());
    }
}
