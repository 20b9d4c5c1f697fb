use rand::Rng;

use crate::tensor::{Scalar, Tensor};

/// Salt-and-pepper corruption: each pixel is replaced with probability `p`,
/// and a replaced pixel becomes 0 or 1 with equal odds.
pub fn salt_pepper<T: Scalar, R: Rng + ?Sized>(img: &Tensor<T>, p: f64, rng: &mut R) -> Tensor<T> {
    let mut out = img.clone();
    if p <= 0.0 {
        return out;
    }
    for v in out.data_mut() {
        if rng.random::<f64>() < p {
            *v = if rng.random::<bool>() { T::ONE } else { T::ZERO };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn gray(n: usize) -> Tensor<f32> {
        Tensor::new(vec![n], vec![0.5; n]).unwrap()
    }

    #[test]
    fn zero_probability_is_identity() {
        let img = Tensor::<f32>::new(vec![4], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(salt_pepper(&img, 0.0, &mut rng), img);
    }

    #[test]
    fn full_probability_binarizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = salt_pepper(&gray(784), 1.0, &mut rng);
        assert!(out.data().iter().all(|&v| v == 0.0 || v == 1.0));
        let ones = out.data().iter().filter(|&&v| v == 1.0).count();
        assert!(ones > 300 && ones < 484);
    }

    #[test]
    fn corrupted_fraction_concentrates() {
        // Binomial(1e5, 0.3) has sd ~ 0.00145 in the fraction; 0.01 is ~7 sd.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = salt_pepper(&gray(100_000), 0.3, &mut rng);
        let frac = out.data().iter().filter(|&&v| v != 0.5).count() as f64 / 1e5;
        assert!((frac - 0.3).abs() < 0.01, "{frac}");
    }

    #[test]
    fn deterministic_given_seed() {
        let a = salt_pepper(&gray(784), 0.4, &mut ChaCha8Rng::seed_from_u64(9));
        let b = salt_pepper(&gray(784), 0.4, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
