//! Small convolutional classifier: two 3×3 convolutions with ReLU, 2×2 max
//! pooling and a softmax dense head. One architecture backs both the
//! digit-vs-symbol discriminator and the 10-way digit classifier.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledImageSet;
use crate::error::{Error, Result};
use crate::nn::activation::relu_backward_inplace;
use crate::nn::conv::{conv2d_backward, conv2d_forward, ConvCache};
use crate::nn::{relu, ConvLayer, ConvMode, Optimizer, OptimizerKind};
use crate::tensor::{Scalar, Tensor, IMAGE_SIDE};

/// Label of the digit class under [`ClassifierHead::DigitVsSymbol`].
pub const DIGIT_CLASS: usize = 1;
/// Label of the symbol class under [`ClassifierHead::DigitVsSymbol`].
pub const SYMBOL_CLASS: usize = 0;

const KERNEL: usize = 3;
const POOL: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierHead {
    DigitVsSymbol,
    Digit,
}

impl ClassifierHead {
    pub fn classes(self) -> usize {
        match self {
            ClassifierHead::DigitVsSymbol => 2,
            ClassifierHead::Digit => 10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassifierHead::DigitVsSymbol => "digit_vs_symbol",
            ClassifierHead::Digit => "digit",
        }
    }
}

/// A model producing a probability vector per image.
pub trait ProbabilisticClassifier: Sync {
    fn classes(&self) -> usize;
    fn predict(&self, x: &Tensor<f32>) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Feature maps of the two convolutions.
    pub widths: (usize, usize),
}

impl Default for ClassifierHyper {
    fn default() -> Self {
        ClassifierHyper {
            epochs: 2,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            widths: (32, 64),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<T = f32> {
    pub head: ClassifierHead,
    pub conv1: ConvLayer<T>,
    pub conv2: ConvLayer<T>,
    /// `classes x features`
    pub dense: Tensor<T>,
    pub dense_bias: Vec<T>,
}

/// Intermediates of one forward pass.
struct Trace<T> {
    cache1: ConvCache<T>,
    act1: Tensor<T>,
    cache2: ConvCache<T>,
    act2: Tensor<T>,
    /// Flat index into `act2` of each pooled maximum.
    pool_src: Vec<usize>,
    pooled: Vec<T>,
    probs: Vec<f64>,
}

fn pooled_side() -> usize {
    (IMAGE_SIDE - 2 * (KERNEL - 1)) / POOL
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl<T: Scalar> Classifier<T> {
    pub fn init<R: Rng + ?Sized>(head: ClassifierHead, widths: (usize, usize), rng: &mut R) -> Self {
        let (c1, c2) = widths;
        let conv1 = ConvLayer::init_uniform(c1, 1, KERNEL, ConvMode::Valid, 6.0, rng);
        let conv2 = ConvLayer::init_uniform(c2, c1, KERNEL, ConvMode::Valid, 6.0, rng);
        let features = c2 * pooled_side() * pooled_side();
        let bound = (3.0 / features as f64).sqrt();
        let classes = head.classes();
        let dense = (0..classes * features)
            .map(|_| T::from_f64(rng.random_range(-bound..bound)))
            .collect();
        Classifier {
            head,
            conv1,
            conv2,
            dense: Tensor::new(vec![classes, features], dense).expect("dense shape"),
            dense_bias: vec![T::ZERO; classes],
        }
    }

    fn zeros_like(&self) -> Self {
        Classifier {
            head: self.head,
            conv1: ConvLayer::zeros(self.conv1.out_maps(), 1, KERNEL, ConvMode::Valid),
            conv2: ConvLayer::zeros(self.conv2.out_maps(), self.conv1.out_maps(), KERNEL, ConvMode::Valid),
            dense: Tensor::zeros(self.dense.shape()),
            dense_bias: vec![T::ZERO; self.dense_bias.len()],
        }
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        vec![
            ("conv1.weight".into(), self.conv1.weights.shape().to_vec(), self.conv1.weights.data()),
            ("conv1.bias".into(), vec![self.conv1.bias.len()], &self.conv1.bias),
            ("conv2.weight".into(), self.conv2.weights.shape().to_vec(), self.conv2.weights.data()),
            ("conv2.bias".into(), vec![self.conv2.bias.len()], &self.conv2.bias),
            ("dense.weight".into(), self.dense.shape().to_vec(), self.dense.data()),
            ("dense.bias".into(), vec![self.dense_bias.len()], &self.dense_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.conv1.weights.data_mut(),
            &mut self.conv1.bias,
            self.conv2.weights.data_mut(),
            &mut self.conv2.bias,
            self.dense.data_mut(),
            &mut self.dense_bias,
        ]
    }

    /// Rebuilds a classifier from tensors in [`Classifier::tensors`] order.
    pub fn from_tensors(head: ClassifierHead, tensors: Vec<(Vec<usize>, Vec<T>)>) -> Result<Self> {
        let [w1, b1, w2, b2, wd, bd]: [(Vec<usize>, Vec<T>); 6] = tensors
            .try_into()
            .map_err(|t: Vec<_>| Error::Checkpoint(format!("classifier needs 6 tensors, got {}", t.len())))?;
        let conv1 = ConvLayer::new(Tensor::new(w1.0, w1.1)?, b1.1, ConvMode::Valid)?;
        let conv2 = ConvLayer::new(Tensor::new(w2.0, w2.1)?, b2.1, ConvMode::Valid)?;
        let dense = Tensor::new(wd.0, wd.1)?;
        let features = conv2.out_maps() * pooled_side() * pooled_side();
        if conv1.in_maps() != 1
            || conv2.in_maps() != conv1.out_maps()
            || dense.shape() != [head.classes(), features]
            || bd.1.len() != head.classes()
        {
            return Err(Error::Checkpoint(format!(
                "classifier tensors do not fit the {} head",
                head.name()
            )));
        }
        Ok(Classifier {
            head,
            conv1,
            conv2,
            dense,
            dense_bias: bd.1,
        })
    }

    fn trace(&self, x: &Tensor<T>) -> Result<Trace<T>> {
        if x.shape() != [1, IMAGE_SIDE, IMAGE_SIDE] {
            return Err(Error::shape(&[1, IMAGE_SIDE, IMAGE_SIDE], x.shape()));
        }
        let (z1, cache1) = conv2d_forward(x, &self.conv1)?;
        let act1 = relu(&z1);
        let (z2, cache2) = conv2d_forward(&act1, &self.conv2)?;
        let act2 = relu(&z2);
        let (maps, side, _) = act2.dims3()?;
        let ps = side / POOL;
        let a = act2.data();
        let mut pool_src = Vec::with_capacity(maps * ps * ps);
        for m in 0..maps {
            for py in 0..ps {
                for px in 0..ps {
                    let mut best = (m * side + py * POOL) * side + px * POOL;
                    for dy in 0..POOL {
                        for dx in 0..POOL {
                            let i = (m * side + py * POOL + dy) * side + px * POOL + dx;
                            if a[i] > a[best] {
                                best = i;
                            }
                        }
                    }
                    pool_src.push(best);
                }
            }
        }
        let pooled: Vec<T> = pool_src.iter().map(|&i| a[i]).collect();
        let features = pooled.len();
        let logits: Vec<f64> = self
            .dense
            .data()
            .chunks_exact(features)
            .zip(&self.dense_bias)
            .map(|(row, &b)| {
                row.iter().zip(&pooled).map(|(&w, &h)| w.to_f64() * h.to_f64()).sum::<f64>() + b.to_f64()
            })
            .collect();
        Ok(Trace {
            cache1,
            act1,
            cache2,
            act2,
            pool_src,
            pooled,
            probs: softmax(&logits),
        })
    }

    pub fn predict_probs(&self, x: &Tensor<T>) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.probs)
    }

    /// Adds `scale` times the cross-entropy gradient for `label` into
    /// `grads`; returns the cross-entropy.
    fn accumulate(&self, x: &Tensor<T>, label: usize, scale: f64, grads: &mut Classifier<T>) -> Result<f64> {
        let tr = self.trace(x)?;
        let features = tr.pooled.len();
        let dlogits: Vec<T> = tr
            .probs
            .iter()
            .enumerate()
            .map(|(c, &p)| T::from_f64(scale * (p - if c == label { 1.0 } else { 0.0 })))
            .collect();
        let mut dpooled = vec![T::ZERO; features];
        let w = self.dense.data();
        let gw = grads.dense.data_mut();
        for (c, &d) in dlogits.iter().enumerate() {
            grads.dense_bias[c] += d;
            let row = &w[c * features..(c + 1) * features];
            let grow = &mut gw[c * features..(c + 1) * features];
            for j in 0..features {
                grow[j] += d * tr.pooled[j];
                dpooled[j] += d * row[j];
            }
        }
        let mut dact2 = Tensor::zeros(tr.act2.shape());
        for (&src, &g) in tr.pool_src.iter().zip(&dpooled) {
            dact2.data_mut()[src] += g;
        }
        relu_backward_inplace(&mut dact2, &tr.act2);
        let mut dact1 = conv2d_backward(
            &tr.cache2,
            &self.conv2,
            &dact2,
            grads.conv2.weights.data_mut(),
            &mut grads.conv2.bias,
            true,
        )?
        .expect("input gradient requested");
        relu_backward_inplace(&mut dact1, &tr.act1);
        conv2d_backward(
            &tr.cache1,
            &self.conv1,
            &dact1,
            grads.conv1.weights.data_mut(),
            &mut grads.conv1.bias,
            false,
        )?;
        Ok(-tr.probs[label].max(1e-12).ln())
    }
}

impl ProbabilisticClassifier for Classifier<f32> {
    fn classes(&self) -> usize {
        self.head.classes()
    }

    fn predict(&self, x: &Tensor<f32>) -> Result<Vec<f64>> {
        self.predict_probs(x)
    }
}

/// Held-out quality of a trained classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub head: ClassifierHead,
    pub train_size: usize,
    pub test_size: usize,
    pub test_error: f64,
    /// Error of always predicting the most frequent training class.
    pub majority_error: f64,
    pub beats_majority: bool,
    pub epoch_losses: Vec<f64>,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn class_histogram(labels: &[u32], classes: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        let slot = counts
            .get_mut(l as usize)
            .ok_or_else(|| Error::Dataset(format!("label {l} outside 0..{classes}")))?;
        *slot += 1;
    }
    Ok(counts)
}

/// Fraction of `set` that `clf` labels incorrectly.
pub fn error_rate(clf: &impl ProbabilisticClassifier, set: &LabeledImageSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Dataset("cannot score a classifier on an empty set".into()));
    }
    let mut wrong = 0usize;
    for (x, &l) in set.images.iter().zip(&set.labels) {
        if argmax(&clf.predict(x)?) != l as usize {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / set.len() as f64)
}

/// Trains a classifier with Adam and cross-entropy, then scores it on `test`.
pub fn train_classifier(
    head: ClassifierHead,
    train: &LabeledImageSet,
    test: &LabeledImageSet,
    hyper: &ClassifierHyper,
    mut progress: impl FnMut(usize, f64),
) -> Result<(Classifier, ClassifierReport)> {
    let classes = head.classes();
    let hist = class_histogram(&train.labels, classes)?;
    class_histogram(&test.labels, classes)?;
    if hist.iter().filter(|&&n| n > 0).count() < 2 {
        return Err(Error::Dataset(format!(
            "{} head needs at least two populated classes, training histogram is {hist:?}",
            head.name()
        )));
    }
    if hyper.batch_size == 0 || hyper.epochs == 0 {
        return Err(Error::Invalid("classifier training needs positive epochs and batch size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut clf = Classifier::<f32>::init(head, hyper.widths, &mut rng);
    let sizes: Vec<usize> = clf.tensors().iter().map(|(_, _, d)| d.len()).collect();
    let mut opt = Optimizer::new(OptimizerKind::adam(hyper.learning_rate), &sizes);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            let mut grads = clf.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += clf.accumulate(&train.images[i], train.labels[i] as usize, scale, &mut grads)?;
            }
            let g: Vec<&[f32]> = grads.tensors().into_iter().map(|(_, _, d)| d).collect();
            opt.step(clf.tensors_mut(), g)?;
        }
        let mean = total / train.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("classifier loss {mean} in epoch {epoch}")));
        }
        epoch_losses.push(mean);
        progress(epoch, mean);
    }
    let majority = argmax(&hist.iter().map(|&n| n as f64).collect::<Vec<_>>());
    let majority_error = if test.is_empty() {
        f64::NAN
    } else {
        test.labels.iter().filter(|&&l| l as usize != majority).count() as f64 / test.len() as f64
    };
    let test_error = error_rate(&clf, test)?;
    let report = ClassifierReport {
        head,
        train_size: train.len(),
        test_size: test.len(),
        test_error,
        majority_error,
        beats_majority: test_error < majority_error,
        epoch_losses,
    };
    if !report.beats_majority {
        log::warn!(
            "{} classifier error {:.4} does not beat the majority baseline {:.4}",
            head.name(),
            test_error,
            majority_error
        );
    }
    Ok((clf, report))
}

/// Digits labelled [`DIGIT_CLASS`] followed by symbols labelled
/// [`SYMBOL_CLASS`].
pub fn digit_vs_symbol_set(name: &str, digits: &[Tensor<f32>], symbols: &[Tensor<f32>]) -> LabeledImageSet {
    let images: Vec<Tensor<f32>> = digits.iter().chain(symbols).cloned().collect();
    let labels = std::iter::repeat_n(DIGIT_CLASS as u32, digits.len())
        .chain(std::iter::repeat_n(SYMBOL_CLASS as u32, symbols.len()))
        .collect();
    LabeledImageSet {
        name: name.to_string(),
        images,
        labels,
        class_names: vec!["symbol".into(), "digit".into()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{blob_image, relative_error};

    fn loss_of(clf: &Classifier<f64>, x: &Tensor<f64>, label: usize) -> f64 {
        -clf.predict_probs(x).unwrap()[label].ln()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clf = Classifier::<f32>::init(ClassifierHead::Digit, (4, 6), &mut rng);
        let p = clf.predict(&blob_image(2).cast()).unwrap();
        assert_eq!(p.len(), 10);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut clf = Classifier::<f64>::init(ClassifierHead::Digit, (3, 4), &mut rng);
        for b in clf.conv1.bias.iter_mut().chain(clf.conv2.bias.iter_mut()) {
            *b = rng.random_range(0.05..0.1);
        }
        let x = blob_image(4);
        let label = 7;
        let mut grads = clf.zeros_like();
        clf.accumulate(&x, label, 1.0, &mut grads).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|(_, _, d)| d.to_vec()).collect();
        let mut worst = 0.0f64;
        for (t, g) in analytic.iter().enumerate() {
            for i in (0..g.len()).step_by((g.len() / 15).max(1)) {
                let orig = clf.tensors()[t].2[i];
                // Flat background regions tie in the max pool; a small step
                // keeps the perturbation inside one linear piece.
                let h = 1e-6;
                clf.tensors_mut()[t][i] = orig + h;
                let plus = loss_of(&clf, &x, label);
                clf.tensors_mut()[t][i] = orig - h;
                let minus = loss_of(&clf, &x, label);
                clf.tensors_mut()[t][i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let e = relative_error(g[i], numeric, 1e-6);
                worst = worst.max(e);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn single_class_training_rejected() {
        let imgs: Vec<Tensor<f32>> = (0..4).map(|i| blob_image(i).cast()).collect();
        let set = LabeledImageSet::new("one", imgs, vec![3; 4]).unwrap();
        let err = train_classifier(ClassifierHead::Digit, &set, &set, &ClassifierHyper::default(), |_, _| {});
        assert!(matches!(err, Err(Error::Dataset(_))));
    }

    #[test]
    fn separable_toy_problem_is_learned() {
        let mut imgs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40u64 {
            let mut px = vec![0.0f32; 784];
            let lit = if i % 2 == 0 { 0..392 } else { 392..784 };
            for p in lit {
                px[p] = 0.8;
            }
            imgs.push(Tensor::image(px).unwrap());
            labels.push((i % 2) as u32);
        }
        let set = LabeledImageSet::new("halves", imgs, labels).unwrap();
        let hyper = ClassifierHyper {
            epochs: 3,
            batch_size: 8,
            widths: (4, 4),
            ..ClassifierHyper::default()
        };
        let (_, report) = train_classifier(ClassifierHead::DigitVsSymbol, &set, &set, &hyper, |_, _| {}).unwrap();
        assert_eq!(report.test_error, 0.0, "{report:?}");
        assert!(report.beats_majority);
    }

    #[test]
    fn tensors_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clf = Classifier::<f32>::init(ClassifierHead::DigitVsSymbol, (2, 3), &mut rng);
        let t = clf.tensors().into_iter().map(|(_, s, d)| (s, d.to_vec())).collect();
        assert_eq!(Classifier::from_tensors(ClassifierHead::DigitVsSymbol, t).unwrap(), clf);
    }
}
