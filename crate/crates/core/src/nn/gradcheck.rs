//! Central finite-difference verification of the hand-written backward pass.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::loss::{mse_grad, mse_loss};
use super::model::{Autoencoder, AutoencoderParams, BottleneckSelection, ModelConfig};
use super::noise::salt_pepper;
use super::train::seeded;
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Minimum number of sampled parameters, spread over all tensors.
    pub samples: usize,
    /// Denominator floor of the relative error, so parameters whose true
    /// gradient is ~0 are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
    /// Leave out parameters whose perturbation crosses a ReLU kink.
    pub skip_kinks: bool,
}

impl GradCheckOptions {
    pub fn single_precision() -> Self {
        GradCheckOptions {
            step: 1e-3,
            samples: 400,
            floor: 1e-3,
            seed: 0,
            skip_kinks: true,
        }
    }

    pub fn double_precision() -> Self {
        GradCheckOptions {
            step: 1e-4,
            samples: 400,
            floor: 1e-6,
            seed: 0,
            skip_kinks: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameters compared.
    pub checked: usize,
    /// Sampled parameters whose perturbation would move a WTA winner, left
    /// out of the comparison.
    pub excluded: usize,
    /// Sampled parameters whose perturbation moved a hidden ReLU across zero.
    pub kink_crossings: usize,
    /// Tensor name and flat index of the worst parameter.
    pub worst: Option<(String, usize)>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central difference `(f(x + h e_i) - f(x - h e_i)) / 2h` of a scalar
/// function of a flat parameter vector.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let plus = f(&p);
    p[i] = x[i] - h;
    let minus = f(&p);
    (plus - minus) / (2.0 * h)
}

/// Spreads `total` samples over tensors of the given sizes as evenly as
/// their sizes allow; small tensors are taken whole.
fn allocate_samples(lens: &[usize], total: usize) -> Vec<usize> {
    let mut quotas = vec![0; lens.len()];
    let mut budget = total.min(lens.iter().sum());
    loop {
        let open: Vec<usize> = (0..lens.len()).filter(|&t| quotas[t] < lens[t]).collect();
        if budget == 0 || open.is_empty() {
            return quotas;
        }
        let share = budget.div_ceil(open.len());
        for t in open {
            let add = share.min(lens[t] - quotas[t]).min(budget);
            quotas[t] += add;
            budget -= add;
        }
    }
}

fn param_mut<T: Scalar>(params: &mut AutoencoderParams<T>, tensor: usize) -> &mut [T] {
    params
        .tensors_mut()
        .into_iter()
        .nth(tensor)
        .expect("tensor index in range")
}

/// Compares the analytic MSE gradient of `model` at (`input`, `target`) with
/// central differences on a random sample of parameters.
///
/// The bottleneck selection of the unperturbed pass is frozen while
/// perturbing, so the loss stays differentiable at the test point. A sampled
/// parameter whose perturbation would flip a winner under free selection is
/// counted in `excluded` instead of being compared.
pub fn grad_check<T: Scalar>(
    model: &Autoencoder<T>,
    input: &Tensor<T>,
    target: &Tensor<T>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let base = model.forward(input, None)?;
    let mut grads = AutoencoderParams::zeros(&model.config);
    let g = mse_grad(&base.output, target, 1.0)?;
    model.backward(&base, &g, &mut grads)?;

    let frozen = base.selection.clone();
    let names: Vec<(String, usize)> = model
        .params
        .tensors()
        .iter()
        .map(|(n, _, d)| (n.clone(), d.len()))
        .collect();
    let analytic: Vec<Vec<f64>> = grads
        .tensors()
        .iter()
        .map(|(_, _, d)| d.iter().map(|v| v.to_f64()).collect())
        .collect();

    let lens: Vec<usize> = names.iter().map(|(_, n)| *n).collect();
    let quotas = allocate_samples(&lens, opts.samples);
    let mut rng = seeded(opts.seed, 7);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        excluded: 0,
        kink_crossings: 0,
        worst: None,
    };
    let mut probe = model.clone();
    for (t, (name, len)) in names.iter().enumerate() {
        let picks = sample(&mut rng, *len, quotas[t]);
        for i in picks.iter() {
            let original = param_mut(&mut probe.params, t)[i];
            let h = T::from_f64(opts.step);
            let eval = |probe: &mut Autoencoder<T>, v: T| -> Result<(f64, BottleneckSelection, Vec<bool>)> {
                param_mut(&mut probe.params, t)[i] = v;
                let fwd = probe.forward(input, Some(&frozen))?;
                let loss = mse_loss(&fwd.output, target)?;
                let free = probe.forward(input, None)?.selection;
                Ok((loss, free, fwd.relu_pattern()))
            };
            let (plus, sel_plus, relu_plus) = eval(&mut probe, original + h)?;
            let (minus, sel_minus, relu_minus) = eval(&mut probe, original - h)?;
            // the actual step after rounding to T
            let step = (original + h).to_f64() - (original - h).to_f64();
            param_mut(&mut probe.params, t)[i] = original;
            if sel_plus != frozen || sel_minus != frozen {
                report.excluded += 1;
                continue;
            }
            if relu_plus != relu_minus {
                report.kink_crossings += 1;
                if opts.skip_kinks {
                    continue;
                }
            }
            let numeric = (plus - minus) / step;
            let err = relative_error(analytic[t][i], numeric, opts.floor);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

/// One row of the standard gradient-check suite.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckCase {
    pub precision: &'static str,
    pub rho: f64,
    pub p_corruption: f64,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.report.checked > 0 && self.report.max_relative_error < self.tolerance
    }
}

/// Tiny model used by the suite: two layers per side, four hidden maps,
/// two bottleneck maps.
pub fn tiny_config(rho: f64, p_corruption: f64, seed: u64) -> ModelConfig {
    ModelConfig::new(2, 2, rho, p_corruption, seed).with_hidden_maps(4)
}

/// Tiny model with biases drawn from `[-0.1, 0.1]`. Freshly initialized
/// biases are exactly zero, and with a sparse code most decoder
/// pre-activations then sit exactly on the ReLU kink, where central
/// differences measure half a one-sided slope.
pub fn tiny_model<T: Scalar>(rho: f64, p_corruption: f64, seed: u64) -> Result<Autoencoder<T>> {
    let mut rng = seeded(seed, 0);
    let mut model = Autoencoder::<f64>::init(tiny_config(rho, p_corruption, seed), &mut rng)?;
    for layer in model.params.encoder.iter_mut().chain(model.params.decoder.iter_mut()) {
        for b in &mut layer.bias {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    Ok(model.cast())
}

/// A smooth blob-like target image so the loss surface is not degenerate.
pub fn blob_image(seed: u64) -> Tensor<f64> {
    let mut rng = seeded(seed, 3);
    let (cx, cy) = (rng.random_range(9.0..19.0), rng.random_range(9.0..19.0));
    let r: f64 = rng.random_range(4.0..8.0);
    let data = (0..784)
        .map(|p| {
            let (y, x) = ((p / 28) as f64, (p % 28) as f64);
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            (1.0 - (d - r).abs() / 2.0).clamp(0.0, 1.0)
        })
        .collect();
    Tensor::image(data).expect("784 pixels")
}

/// Runs the tiny model over rho in {0, 0.5} and p_corruption in {0, 0.3},
/// in both 32-bit (tolerance 1e-2) and 64-bit (tolerance 1e-5) arithmetic.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradCheckCase>> {
    let mut cases = Vec::new();
    for &rho in &[0.0, 0.5] {
        for &p in &[0.0, 0.3] {
            let model64 = tiny_model::<f64>(rho, p, seed)?;
            let target = blob_image(seed);
            let input = salt_pepper(&target, p, &mut seeded(seed, 5));

            let r64 = grad_check(&model64, &input, &target, &GradCheckOptions::double_precision())?;
            cases.push(GradCheckCase {
                precision: "f64",
                rho,
                p_corruption: p,
                tolerance: 1e-5,
                report: r64,
            });

            let model32 = model64.cast::<f32>();
            let r32 = grad_check(
                &model32,
                &input.cast(),
                &target.cast(),
                &GradCheckOptions::single_precision(),
            )?;
            cases.push(GradCheckCase {
                precision: "f32",
                rho,
                p_corruption: p,
                tolerance: 1e-2,
                report: r32,
            });
        }
    }
    Ok(cases)
}
