//! Stride-1 2-D cross-correlation in `valid` and `full` modes, lowered to
//! GEMM through an im2col buffer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::flush_subnormals;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMode {
    /// No padding; each spatial side shrinks by `k - 1`.
    Valid,
    /// Input zero-padded by `k - 1` on every border; each side grows by `k - 1`.
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T = f32> {
    /// `out_maps x in_maps x k x k`
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub mode: ConvMode,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Vec<T>, mode: ConvMode) -> Result<Self> {
        let [out_maps, _, k, k2] = weights.shape()[..] else {
            return Err(Error::Invalid(format!(
                "conv weights must be out x in x k x k, got {:?}",
                weights.shape()
            )));
        };
        if k != k2 {
            return Err(Error::Invalid(format!("non-square kernel {k}x{k2}")));
        }
        if bias.len() != out_maps {
            return Err(Error::Invalid(format!(
                "bias has {} entries for {out_maps} output maps",
                bias.len()
            )));
        }
        Ok(ConvLayer {
            weights,
            bias,
            mode,
        })
    }

    pub fn zeros(out_maps: usize, in_maps: usize, k: usize, mode: ConvMode) -> Self {
        ConvLayer {
            weights: Tensor::zeros(&[out_maps, in_maps, k, k]),
            bias: vec![T::ZERO; out_maps],
            mode,
        }
    }

    /// Uniform initialization on `[-bound, bound]` with `bound = sqrt(gain / fan_in)`.
    /// `gain = 6` is the He scaling for ReLU layers.
    pub fn init_uniform<R: Rng + ?Sized>(
        out_maps: usize,
        in_maps: usize,
        k: usize,
        mode: ConvMode,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_maps * k * k) as f64;
        let bound = (gain / fan_in).sqrt();
        let data = (0..out_maps * in_maps * k * k)
            .map(|_| T::from_f64(rng.random_range(-bound..bound)))
            .collect();
        ConvLayer {
            weights: Tensor::new(vec![out_maps, in_maps, k, k], data)
                .expect("shape matches data length"),
            bias: vec![T::ZERO; out_maps],
            mode,
        }
    }

    pub fn out_maps(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_maps(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[2]
    }

    /// Output side for a square input of side `in_side`, if nonempty.
    pub fn output_side(&self, in_side: usize) -> Option<usize> {
        let k = self.kernel();
        match self.mode {
            ConvMode::Valid => in_side.checked_sub(k - 1).filter(|&s| s > 0),
            ConvMode::Full => Some(in_side + k - 1),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn cast<U: Scalar>(&self) -> ConvLayer<U> {
        ConvLayer {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            mode: self.mode,
        }
    }
}

/// Intermediates of one convolution needed by its backward pass.
#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    /// im2col matrix of the (padded) input, `(in * k * k) x (oh * ow)`.
    cols: Vec<T>,
    in_shape: (usize, usize, usize),
    out_side: (usize, usize),
}

fn pad<T: Scalar>(data: &[T], (c, h, w): (usize, usize, usize), p: usize) -> Vec<T> {
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut out = vec![T::ZERO; c * ph * pw];
    for ch in 0..c {
        for y in 0..h {
            let src = &data[(ch * h + y) * w..(ch * h + y + 1) * w];
            let dst = (ch * ph + y + p) * pw + p;
            out[dst..dst + w].copy_from_slice(src);
        }
    }
    out
}

fn im2col<T: Scalar>(data: &[T], (c, h, w): (usize, usize, usize), k: usize) -> Vec<T> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let plane = oh * ow;
    let mut cols = vec![T::ZERO; c * k * k * plane];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for y in 0..oh {
                    let src = (ch * h + y + ky) * w + kx;
                    dst[y * ow..(y + 1) * ow].copy_from_slice(&data[src..src + ow]);
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], (c, h, w): (usize, usize, usize), k: usize) -> Vec<T> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let plane = oh * ow;
    let mut out = vec![T::ZERO; c * h * w];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for y in 0..oh {
                    let dst = (ch * h + y + ky) * w + kx;
                    for (o, &v) in out[dst..dst + ow].iter_mut().zip(&src[y * ow..(y + 1) * ow]) {
                        *o += v;
                    }
                }
            }
        }
    }
    out
}

/// Cross-correlation plus per-map bias.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    conv2d_forward(input, layer).map(|(out, _)| out)
}

/// Forward pass that also returns the cache for [`conv2d_backward`].
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
) -> Result<(Tensor<T>, ConvCache<T>)> {
    let (c, h, w) = input.dims3()?;
    let k = layer.kernel();
    if c != layer.in_maps() {
        return Err(Error::Shape {
            expected: vec![layer.in_maps(), h, w],
            actual: input.shape().to_vec(),
        });
    }
    let (data, in_shape) = match layer.mode {
        ConvMode::Valid => {
            if h < k || w < k {
                return Err(Error::Invalid(format!(
                    "input {:?} is smaller than the {k}x{k} kernel {:?}",
                    input.shape(),
                    layer.weights.shape()
                )));
            }
            (None, (c, h, w))
        }
        ConvMode::Full => {
            let p = k - 1;
            (Some(pad(input.data(), (c, h, w), p)), (c, h + 2 * p, w + 2 * p))
        }
    };
    let src = data.as_deref().unwrap_or(input.data());
    let cols = im2col(src, in_shape, k);
    let (oh, ow) = (in_shape.1 - k + 1, in_shape.2 - k + 1);
    let plane = oh * ow;
    let out_maps = layer.out_maps();
    let depth = c * k * k;

    let mut out = vec![T::ZERO; out_maps * plane];
    for (o, row) in out.chunks_exact_mut(plane).enumerate() {
        row.fill(layer.bias[o]);
    }
    T::gemm(
        out_maps,
        depth,
        plane,
        T::ONE,
        layer.weights.data(),
        (depth as isize, 1),
        &cols,
        (plane as isize, 1),
        T::ONE,
        &mut out,
        (plane as isize, 1),
    );
    let out = Tensor::new(vec![out_maps, oh, ow], out)?;
    Ok((
        out,
        ConvCache {
            cols,
            in_shape,
            out_side: (oh, ow),
        },
    ))
}

/// Adds the weight and bias gradients into `grad_weights` / `grad_bias`
/// (laid out like the layer's own parameters) and returns the gradient with
/// respect to the layer input when `want_input` is set.
pub fn conv2d_backward<T: Scalar>(
    cache: &ConvCache<T>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
    grad_weights: &mut [T],
    grad_bias: &mut [T],
    want_input: bool,
) -> Result<Option<Tensor<T>>> {
    let (oh, ow) = cache.out_side;
    let out_maps = layer.out_maps();
    if grad_out.shape() != [out_maps, oh, ow] {
        return Err(Error::shape(&[out_maps, oh, ow], grad_out.shape()));
    }
    if grad_weights.len() != layer.weights.len() || grad_bias.len() != layer.bias.len() {
        return Err(Error::Invalid(format!(
            "gradient buffers of {}/{} entries for layer {:?}",
            grad_weights.len(),
            grad_bias.len(),
            layer.weights.shape()
        )));
    }
    let k = layer.kernel();
    let (c, ph, pw) = cache.in_shape;
    let plane = oh * ow;
    let depth = c * k * k;
    let g = grad_out.data();

    for (o, row) in g.chunks_exact(plane).enumerate() {
        let mut s = T::ZERO;
        for &v in row {
            s += v;
        }
        grad_bias[o] += s;
    }
    // dW (out x depth) += dOut (out x plane) * cols^T (plane x depth)
    T::gemm(
        out_maps,
        plane,
        depth,
        T::ONE,
        g,
        (plane as isize, 1),
        &cache.cols,
        (1, plane as isize),
        T::ONE,
        grad_weights,
        (depth as isize, 1),
    );
    if !want_input {
        return Ok(None);
    }
    // dCols (depth x plane) = W^T (depth x out) * dOut (out x plane)
    let mut dcols = vec![T::ZERO; depth * plane];
    T::gemm(
        depth,
        out_maps,
        plane,
        T::ONE,
        layer.weights.data(),
        (1, depth as isize),
        g,
        (plane as isize, 1),
        T::ZERO,
        &mut dcols,
        (plane as isize, 1),
    );
    let dpadded = col2im(&dcols, (c, ph, pw), k);
    let dinput = match layer.mode {
        ConvMode::Valid => dpadded,
        ConvMode::Full => {
            let p = k - 1;
            let (h, w) = (ph - 2 * p, pw - 2 * p);
            let mut d = Vec::with_capacity(c * h * w);
            for ch in 0..c {
                for y in 0..h {
                    let start = (ch * ph + y + p) * pw + p;
                    d.extend_from_slice(&dpadded[start..start + w]);
                }
            }
            d
        }
    };
    let mut dinput = dinput;
    flush_subnormals(&mut dinput);
    let (ih, iw) = match layer.mode {
        ConvMode::Valid => (ph, pw),
        ConvMode::Full => (ph - 2 * (k - 1), pw - 2 * (k - 1)),
    };
    Ok(Some(Tensor::new(vec![c, ih, iw], dinput)?))
}

/// A nonzero unit of an otherwise all-zero `maps x h x w` input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseUnit<T> {
    pub map: usize,
    pub y: usize,
    pub x: usize,
    pub value: T,
}

fn check_sparse<T: Scalar>(units: &[SparseUnit<T>], (h, w): (usize, usize), layer: &ConvLayer<T>) -> Result<()> {
    if layer.mode != ConvMode::Full {
        return Err(Error::Invalid("sparse convolution is only defined for full mode".into()));
    }
    if let Some(u) = units.iter().find(|u| u.map >= layer.in_maps() || u.y >= h || u.x >= w) {
        return Err(Error::Invalid(format!(
            "unit at map {} ({}, {}) outside a {}x{h}x{w} input",
            u.map,
            u.y,
            u.x,
            layer.in_maps()
        )));
    }
    Ok(())
}

/// [`conv2d`] in full mode for an `in_maps x h x w` input whose only nonzero
/// entries are `units`. Each unit stamps its flipped kernel into the output.
pub fn sparse_full_conv<T: Scalar>(
    units: &[SparseUnit<T>],
    (h, w): (usize, usize),
    layer: &ConvLayer<T>,
) -> Result<Tensor<T>> {
    check_sparse(units, (h, w), layer)?;
    let k = layer.kernel();
    let (c, p) = (layer.in_maps(), k - 1);
    let (oh, ow) = (h + p, w + p);
    let wt = layer.weights.data();
    let mut out = vec![T::ZERO; layer.out_maps() * oh * ow];
    for (o, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
        plane.fill(layer.bias[o]);
        for u in units {
            let kernel = &wt[(o * c + u.map) * k * k..(o * c + u.map + 1) * k * k];
            for dy in 0..k {
                let row = &mut plane[(u.y + dy) * ow + u.x..(u.y + dy) * ow + u.x + k];
                let krow = &kernel[(p - dy) * k..(p - dy + 1) * k];
                for (dx, o) in row.iter_mut().enumerate() {
                    *o += krow[p - dx] * u.value;
                }
            }
        }
    }
    Tensor::new(vec![layer.out_maps(), oh, ow], out)
}

/// Backward pass of [`sparse_full_conv`]: accumulates parameter gradients
/// and returns the input gradient at each unit.
pub fn sparse_full_conv_backward<T: Scalar>(
    units: &[SparseUnit<T>],
    (h, w): (usize, usize),
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
    grad_weights: &mut [T],
    grad_bias: &mut [T],
) -> Result<Vec<T>> {
    check_sparse(units, (h, w), layer)?;
    let k = layer.kernel();
    let (c, p) = (layer.in_maps(), k - 1);
    let (oh, ow) = (h + p, w + p);
    let out_maps = layer.out_maps();
    if grad_out.shape() != [out_maps, oh, ow] {
        return Err(Error::shape(&[out_maps, oh, ow], grad_out.shape()));
    }
    if grad_weights.len() != layer.weights.len() || grad_bias.len() != out_maps {
        return Err(Error::Invalid(format!(
            "gradient buffers of {}/{} entries for layer {:?}",
            grad_weights.len(),
            grad_bias.len(),
            layer.weights.shape()
        )));
    }
    let wt = layer.weights.data();
    let mut grad_units = vec![T::ZERO; units.len()];
    for (o, plane) in grad_out.data().chunks_exact(oh * ow).enumerate() {
        let mut s = T::ZERO;
        for &v in plane {
            s += v;
        }
        grad_bias[o] += s;
        for (u, gu) in units.iter().zip(&mut grad_units) {
            let base = (o * c + u.map) * k * k;
            for dy in 0..k {
                let row = &plane[(u.y + dy) * ow + u.x..(u.y + dy) * ow + u.x + k];
                for (dx, &g) in row.iter().enumerate() {
                    let wi = base + (p - dy) * k + p - dx;
                    grad_weights[wi] += g * u.value;
                    *gu += g * wt[wi];
                }
            }
        }
    }
    Ok(grad_units)
}
