use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean squared error over all elements, accumulated in `f64`.
pub fn mse_loss<T: Scalar>(recon: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    if recon.shape() != target.shape() {
        return Err(Error::shape(target.shape(), recon.shape()));
    }
    let sum: f64 = recon
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| {
            let d = a.to_f64() - b.to_f64();
            d * d
        })
        .sum();
    Ok(sum / recon.len() as f64)
}

/// Gradient of `scale * mse_loss` with respect to `recon`.
pub fn mse_grad<T: Scalar>(recon: &Tensor<T>, target: &Tensor<T>, scale: f64) -> Result<Tensor<T>> {
    if recon.shape() != target.shape() {
        return Err(Error::shape(target.shape(), recon.shape()));
    }
    let c = T::from_f64(2.0 * scale / recon.len() as f64);
    let data = recon
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| c * (a - b))
        .collect();
    Tensor::new(recon.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn identical_is_zero() {
        let t = Tensor::<f32>::full(&[1, 28, 28], 0.3);
        assert_eq!(mse_loss(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn ones_vs_zeros_is_one() {
        let a = Tensor::<f32>::full(&[1, 28, 28], 1.0);
        let b = Tensor::<f32>::zeros(&[1, 28, 28]);
        assert_eq!(mse_loss(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f32> = (0..784).map(|_| rng.random()).collect();
        let b: Vec<f32> = (0..784).map(|_| rng.random()).collect();
        let mut acc = 0.0f64;
        for i in 0..784 {
            let d = a[i] as f64 - b[i] as f64;
            acc += d * d;
        }
        let oracle = acc / 784.0;
        let got = mse_loss(&Tensor::image(a).unwrap(), &Tensor::image(b).unwrap()).unwrap();
        assert!((got - oracle).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::<f32>::zeros(&[1, 2, 2]);
        let b = Tensor::<f32>::zeros(&[1, 2, 3]);
        assert!(mse_loss(&a, &b).is_err());
    }
}
