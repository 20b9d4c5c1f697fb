//! Elementwise activations and the two winner-take-all sparsifiers used in
//! the bottleneck.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    t.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

pub fn sigmoid<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    t.map(sigmoid_scalar)
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    // Split by sign so exp never overflows.
    if v >= T::ZERO {
        T::ONE / (T::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::ONE + e)
    }
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub(crate) fn relu_backward_inplace<T: Scalar>(grad: &mut Tensor<T>, output: &Tensor<T>) {
    for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
        if y <= T::ZERO {
            *g = T::ZERO;
        }
    }
}

/// Gradients that underflow to subnormal values come out as zero.
pub(crate) fn sigmoid_backward_inplace<T: Scalar>(grad: &mut Tensor<T>, output: &Tensor<T>) {
    for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
        *g *= y * (T::ONE - y);
    }
    flush_subnormals(grad.data_mut());
}

/// Replaces every value smaller in magnitude than the smallest normal number by zero.
pub(crate) fn flush_subnormals<T: Scalar>(data: &mut [T]) {
    for v in data {
        if *v < T::MIN_POSITIVE && -*v < T::MIN_POSITIVE {
            *v = T::ZERO;
        }
    }
}

/// Index of the first maximum of each map, in row-major order.
pub fn spatial_winners<T: Scalar>(t: &Tensor<T>) -> Result<Vec<usize>> {
    let (c, h, w) = t.dims3()?;
    let plane = h * w;
    Ok((0..c)
        .map(|m| {
            let map = &t.data()[m * plane..(m + 1) * plane];
            let mut best = 0;
            for (i, &v) in map.iter().enumerate().skip(1) {
                if v > map[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

/// Keeps only the entry at `winners[m]` in map `m`.
pub fn apply_spatial_winners<T: Scalar>(t: &Tensor<T>, winners: &[usize]) -> Result<Tensor<T>> {
    let (c, h, w) = t.dims3()?;
    let plane = h * w;
    if winners.len() != c || winners.iter().any(|&i| i >= plane) {
        return Err(Error::Invalid(format!(
            "winner list {winners:?} does not fit tensor {:?}",
            t.shape()
        )));
    }
    let mut out = Tensor::zeros(t.shape());
    for (m, &i) in winners.iter().enumerate() {
        out.data_mut()[m * plane + i] = t.data()[m * plane + i];
    }
    Ok(out)
}

/// Spatial winner-take-all: each map keeps only its first row-major maximum.
pub fn spatial_wta<T: Scalar>(t: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let winners = spatial_winners(t)?;
    let out = apply_spatial_winners(t, &winners)?;
    Ok((out, winners))
}

/// Number of maps zeroed by channel WTA: `floor(rho * maps)`.
///
/// The product is nudged by 1e-9 before flooring so rates such as 0.7 whose
/// binary expansion lands a hair below an integer multiple still floor to it.
pub fn channel_drop_count(rho: f64, maps: usize) -> usize {
    ((rho * maps as f64) + 1e-9).floor().max(0.0) as usize
}

/// Survivor flags for channel WTA at rate `rho`.
///
/// Maps are ranked by their maximum; the `floor(rho * C)` lowest are dropped,
/// and among equal maxima the higher map index is dropped first.
pub fn channel_survivors<T: Scalar>(t: &Tensor<T>, rho: f64) -> Result<Vec<bool>> {
    let (c, h, w) = t.dims3()?;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Invalid(format!("channel WTA rate {rho} outside [0, 1)")));
    }
    let plane = h * w;
    let maxima: Vec<T> = (0..c)
        .map(|m| {
            t.data()[m * plane..(m + 1) * plane]
                .iter()
                .copied()
                .fold(None, |acc: Option<T>, v| match acc {
                    Some(a) if a >= v => Some(a),
                    _ => Some(v),
                })
                .unwrap_or(T::ZERO)
        })
        .collect();
    let drop = channel_drop_count(rho, c);
    let mut order: Vec<usize> = (0..c).collect();
    // ascending by maximum, higher index first among ties
    order.sort_by(|&a, &b| {
        maxima[a]
            .partial_cmp(&maxima[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.cmp(&a))
    });
    let mut survivors = vec![true; c];
    for &m in &order[..drop] {
        survivors[m] = false;
    }
    Ok(survivors)
}

pub fn apply_channel_survivors<T: Scalar>(t: &Tensor<T>, survivors: &[bool]) -> Result<Tensor<T>> {
    let (c, h, w) = t.dims3()?;
    if survivors.len() != c {
        return Err(Error::Invalid(format!(
            "{} survivor flags for {c} maps",
            survivors.len()
        )));
    }
    let plane = h * w;
    let mut out = t.clone();
    for (m, &keep) in survivors.iter().enumerate() {
        if !keep {
            out.data_mut()[m * plane..(m + 1) * plane].fill(T::ZERO);
        }
    }
    Ok(out)
}

/// Channel winner-take-all at sparsity rate `rho`; `rho = 0` is the identity.
pub fn channel_wta<T: Scalar>(t: &Tensor<T>, rho: f64) -> Result<(Tensor<T>, Vec<bool>)> {
    let survivors = channel_survivors(t, rho)?;
    let out = apply_channel_survivors(t, &survivors)?;
    Ok((out, survivors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(c: usize, h: usize, w: usize, data: Vec<f32>) -> Tensor<f32> {
        Tensor::new(vec![c, h, w], data).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let t = Tensor::<f32>::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn subnormal_gradients_are_flushed() {
        let y = t3(1, 1, 3, vec![1e-30, 0.5, 1.0 - 1e-7]);
        let mut g = t3(1, 1, 3, vec![1e-10, 2.0, -3.0]);
        sigmoid_backward_inplace(&mut g, &y);
        assert_eq!(g.data()[0], 0.0);
        assert_eq!(g.data()[1], 0.5);
        assert!(g.data()[2].is_normal());
        let mut d = vec![f32::MIN_POSITIVE / 2.0, -f32::MIN_POSITIVE / 4.0, f32::MIN_POSITIVE, -1.0];
        flush_subnormals(&mut d);
        assert_eq!(d, vec![0.0, 0.0, f32::MIN_POSITIVE, -1.0]);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        assert_eq!(sigmoid_scalar(0.0f32), 0.5);
        for x in [-30.0f64, -3.3, -0.1, 0.7, 12.0, 800.0] {
            let s = sigmoid_scalar(x) + sigmoid_scalar(-x);
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(sigmoid_scalar(-1000.0f32).is_finite());
    }

    #[test]
    fn spatial_tie_keeps_first_in_row_major() {
        let t = t3(1, 2, 2, vec![0.2, 0.5, 0.5, 0.1]);
        let (out, winners) = spatial_wta(&t).unwrap();
        assert_eq!(out.data(), &[0.0, 0.5, 0.0, 0.0]);
        assert_eq!(winners, vec![1]);
    }

    #[test]
    fn spatial_all_zero_map_keeps_origin() {
        let t = t3(1, 3, 3, vec![0.0; 9]);
        let (out, winners) = spatial_wta(&t).unwrap();
        assert_eq!(winners, vec![0]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spatial_keeps_negative_maximum() {
        let t = t3(1, 1, 3, vec![-3.0, -1.0, -2.0]);
        let (out, _) = spatial_wta(&t).unwrap();
        assert_eq!(out.data(), &[0.0, -1.0, 0.0]);
    }

    #[test]
    fn channel_drops_lowest_maxima() {
        let t = t3(4, 1, 1, vec![0.3, 0.1, 0.2, 0.5]);
        let (out, survivors) = channel_wta(&t, 0.5).unwrap();
        assert_eq!(survivors, vec![true, false, false, true]);
        assert_eq!(out.data(), &[0.3, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn channel_floor_rule() {
        let t = t3(4, 1, 1, vec![0.3, 0.1, 0.2, 0.5]);
        let (_, survivors) = channel_wta(&t, 0.9).unwrap();
        assert_eq!(survivors.iter().filter(|&&s| s).count(), 1);
        assert!(survivors[3]);
        assert_eq!(channel_drop_count(0.9, 128), 115);
        assert_eq!(channel_drop_count(0.7, 10), 7);
        assert_eq!(channel_drop_count(0.1, 2), 0);
    }

    #[test]
    fn channel_ties_drop_higher_index_first() {
        let t = t3(4, 1, 1, vec![0.2, 0.2, 0.2, 0.2]);
        let (_, survivors) = channel_wta(&t, 0.5).unwrap();
        assert_eq!(survivors, vec![true, true, false, false]);
    }

    #[test]
    fn channel_rate_zero_is_identity() {
        let t = t3(3, 2, 1, vec![0.1, -0.3, 0.0, 0.9, 0.4, 0.4]);
        let (out, survivors) = channel_wta(&t, 0.0).unwrap();
        assert_eq!(out, t);
        assert!(survivors.iter().all(|&s| s));
    }

    #[test]
    fn channel_rejects_rate_one() {
        let t = t3(2, 1, 1, vec![0.1, 0.2]);
        assert!(channel_wta(&t, 1.0).is_err());
    }
}
