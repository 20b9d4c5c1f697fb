use super::classifier::{ProbabilisticClassifier, DIGIT_CLASS};
use super::oracle::{Membership, Reconstruct, ReconstructionOracle};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LOG_FLOOR: f64 = 1e-12;

/// `exp(mean_i KL(p_i ‖ p̄))` where `p̄` is the mean prediction.
///
/// Ranges from 1 (all predictions equal) to the number of classes
/// (confident predictions spread evenly over every class).
pub fn objectness(predictions: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() < 2 {
        return Err(Error::Invalid(format!(
            "objectness needs at least two predictions, got {}",
            predictions.len()
        )));
    }
    let k = predictions[0].len();
    for (i, p) in predictions.iter().enumerate() {
        let sum: f64 = p.iter().sum();
        if p.len() != k || p.iter().any(|&v| v.is_nan() || v < 0.0) || (sum - 1.0).abs() > 1e-5 {
            return Err(Error::Invalid(format!("prediction {i} is not a distribution over {k} classes")));
        }
    }
    let n = predictions.len() as f64;
    let mut mean = vec![0.0; k];
    for p in predictions {
        for (m, &v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let kl_sum: f64 = predictions
        .iter()
        .map(|p| {
            p.iter()
                .zip(&mean)
                .map(|(&pi, &mi)| pi * (pi.max(LOG_FLOOR).ln() - mi.max(LOG_FLOOR).ln()))
                .sum::<f64>()
        })
        .sum();
    Ok((kl_sum / n).exp())
}

/// Objectness of `images` under `classifier`.
pub fn objectness_of(images: &[Tensor<f32>], classifier: &impl ProbabilisticClassifier) -> Result<f64> {
    let preds = images
        .iter()
        .map(|x| classifier.predict(x))
        .collect::<Result<Vec<_>>>()?;
    objectness(&preds)
}

/// Among the symbols the oracle accepts, the fraction whose reconstruction
/// the digit-vs-symbol classifier calls a digit. `None` when no symbol is
/// accepted.
pub fn symbol_as_digit_rate<M: Reconstruct>(
    oracle: &ReconstructionOracle<M>,
    symbols: &[Tensor<f32>],
    membership: &Membership,
    classifier: &impl ProbabilisticClassifier,
) -> Result<Option<f64>> {
    if classifier.classes() != 2 {
        return Err(Error::Invalid(format!(
            "symbol-as-digit rate needs a two-class discriminator, got {} classes",
            classifier.classes()
        )));
    }
    if membership.len() != symbols.len() {
        return Err(Error::Invalid(format!(
            "membership covers {} items, symbol set has {}",
            membership.len(),
            symbols.len()
        )));
    }
    if membership.members.is_empty() {
        return Ok(None);
    }
    let mut digits = 0usize;
    for &i in &membership.members {
        let recon = oracle.model.reconstruct(&symbols[i])?;
        if classifier.predict(&recon)?[DIGIT_CLASS] > 0.5 {
            digits += 1;
        }
    }
    Ok(Some(digits as f64 / membership.members.len() as f64))
}
