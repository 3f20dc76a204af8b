use crate::error::{Error, Result};
use crate::imaging::ImageF;
use crate::net::Tensor;

/// Mean squared error over all `m * n * 3` channel values.
pub fn mse_loss(pred: &ImageF, target: &ImageF) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(Error::DimensionMismatch {
            expected: target.dims(),
            got: pred.dims(),
        });
    }
    let sum: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.data().len() as f64)
}

/// Batch-mean MSE and its gradient w.r.t. `pred`. Every image has the same
/// size, so the mean of per-image MSEs equals the mean over all entries.
pub fn batch_mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} does not match target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let count = pred.data.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(p, t)| {
            let d = p - t;
            sum += d * d;
            2.0 * d / count
        })
        .collect();
    let [n, c, h, w] = pred.shape();
    Ok((sum / count, Tensor::from_vec(n, c, h, w, grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(h: usize, w: usize, f: impl Fn(usize) -> f64) -> ImageF {
        ImageF::new(h, w, (0..h * w * 3).map(f).collect()).unwrap()
    }

    #[test]
    fn identity_and_constant_offset() {
        let a = img(3, 3, |i| (i % 7) as f64 / 10.0);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let b = img(3, 3, |i| (i % 7) as f64 / 10.0 + 0.1);
        assert!((mse_loss(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        assert!(mse_loss(&a, &img(3, 2, |_| 0.0)).is_err());
    }

    #[test]
    fn matches_triple_loop() {
        let a = img(4, 4, |i| ((i * 37) % 101) as f64 / 101.0);
        let b = img(4, 4, |i| ((i * 53) % 97) as f64 / 97.0);
        let mut sum = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..3 {
                    sum += (a.get(i, j, k) - b.get(i, j, k)).powi(2);
                }
            }
        }
        assert!((mse_loss(&a, &b).unwrap() - sum / 48.0).abs() < 1e-12);
    }

    #[test]
    fn batch_gradient_is_scaled_difference() {
        let p = Tensor::from_vec(2, 3, 1, 1, vec![0.5, 0.5, 0.5, 1.0, 0.0, 0.25]).unwrap();
        let t = Tensor::from_vec(2, 3, 1, 1, vec![0.5, 0.0, 0.5, 0.0, 0.0, 0.25]).unwrap();
        let (loss, g) = batch_mse(&p, &t).unwrap();
        assert!((loss - (0.25 + 1.0) / 6.0).abs() < 1e-15);
        assert_eq!(g.data, vec![0.0, 1.0 / 6.0, 0.0, 2.0 / 6.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn nonnegative_and_symmetric(a in prop::collection::vec(0.0f64..=1.0, 12), b in prop::collection::vec(0.0f64..=1.0, 12)) {
            let x = ImageF::new(2, 2, a).unwrap();
            let y = ImageF::new(2, 2, b).unwrap();
            let l = mse_loss(&x, &y).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l, mse_loss(&y, &x).unwrap());
            prop_assert_eq!(l == 0.0, x == y);
        }
    }
}
