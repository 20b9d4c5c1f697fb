//! The sparse convolutional autoencoder family: `L` valid convolutions down to
//! a winner-take-all bottleneck, then `L` full convolutions back up to a
//! sigmoid image.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::activation::{
    apply_channel_survivors, apply_spatial_winners, channel_survivors, relu_backward_inplace,
    sigmoid_backward_inplace, sigmoid_scalar, spatial_winners,
};
use super::conv::{
    conv2d_backward, conv2d_forward, sparse_full_conv, sparse_full_conv_backward, ConvCache, ConvLayer,
    ConvMode, SparseUnit,
};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor, IMAGE_SIDE};

/// Hidden maps used by every non-bottleneck layer of the published family.
pub const PAPER_HIDDEN_MAPS: usize = 128;
/// Filter size of every layer.
pub const PAPER_KERNEL: usize = 5;

fn default_kernel() -> usize {
    PAPER_KERNEL
}

/// One point of the hyperparameter grid. All convolutions use stride 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Convolutional layers per side.
    pub layers: usize,
    pub hidden_maps: usize,
    pub bottleneck_maps: usize,
    /// Channel-WTA sparsity rate.
    pub rho: f64,
    /// Salt-and-pepper probability used during training.
    pub p_corruption: f64,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(layers: usize, bottleneck_maps: usize, rho: f64, p_corruption: f64, seed: u64) -> Self {
        ModelConfig {
            layers,
            hidden_maps: PAPER_HIDDEN_MAPS,
            bottleneck_maps,
            rho,
            p_corruption,
            kernel: PAPER_KERNEL,
            seed,
        }
    }

    pub fn with_hidden_maps(mut self, hidden_maps: usize) -> Self {
        self.hidden_maps = hidden_maps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.layers == 0 {
            return bad("at least one layer per side is required".into());
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return bad(format!("kernel size {} must be odd", self.kernel));
        }
        if self.hidden_maps == 0 || self.bottleneck_maps == 0 {
            return bad("feature map counts must be positive".into());
        }
        if IMAGE_SIDE <= (self.kernel - 1) * self.layers {
            return bad(format!(
                "{} layers of {}x{} valid convolutions leave no spatial extent",
                self.layers, self.kernel, self.kernel
            ));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho {} outside [0, 1)", self.rho));
        }
        if !(0.0..1.0).contains(&self.p_corruption) {
            return bad(format!("p_corruption {} outside [0, 1)", self.p_corruption));
        }
        Ok(())
    }

    /// Spatial side of the bottleneck code.
    pub fn bottleneck_side(&self) -> usize {
        IMAGE_SIDE - (self.kernel - 1) * self.layers
    }

    /// `(out_maps, in_maps)` of encoder layer `i`.
    pub fn encoder_maps(&self, i: usize) -> (usize, usize) {
        let input = if i == 0 { 1 } else { self.hidden_maps };
        let output = if i + 1 == self.layers {
            self.bottleneck_maps
        } else {
            self.hidden_maps
        };
        (output, input)
    }

    /// `(out_maps, in_maps)` of decoder layer `i`.
    pub fn decoder_maps(&self, i: usize) -> (usize, usize) {
        let input = if i == 0 {
            self.bottleneck_maps
        } else {
            self.hidden_maps
        };
        let output = if i + 1 == self.layers { 1 } else { self.hidden_maps };
        (output, input)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&json)
    }

    /// Short identifier such as `L2-b8-r0.5-p0.3-h16-1a2b3c4d`.
    pub fn model_id(&self) -> String {
        format!(
            "L{}-b{}-r{}-p{}-h{}-{}",
            self.layers,
            self.bottleneck_maps,
            self.rho,
            self.p_corruption,
            self.hidden_maps,
            &self.hash_hex()[..8]
        )
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// All learned weights and biases of one model. Also used as the gradient
/// container, since gradients share the parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderParams<T = f32> {
    pub encoder: Vec<ConvLayer<T>>,
    pub decoder: Vec<ConvLayer<T>>,
}

impl<T: Scalar> AutoencoderParams<T> {
    /// He-uniform for ReLU layers, LeCun-uniform for the sigmoid output, zero biases.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.kernel;
        let encoder = (0..cfg.layers)
            .map(|i| {
                let (o, n) = cfg.encoder_maps(i);
                ConvLayer::init_uniform(o, n, k, ConvMode::Valid, 6.0, rng)
            })
            .collect();
        let decoder = (0..cfg.layers)
            .map(|i| {
                let (o, n) = cfg.decoder_maps(i);
                let gain = if i + 1 == cfg.layers { 3.0 } else { 6.0 };
                ConvLayer::init_uniform(o, n, k, ConvMode::Full, gain, rng)
            })
            .collect();
        Ok(AutoencoderParams { encoder, decoder })
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let k = cfg.kernel;
        AutoencoderParams {
            encoder: (0..cfg.layers)
                .map(|i| {
                    let (o, n) = cfg.encoder_maps(i);
                    ConvLayer::zeros(o, n, k, ConvMode::Valid)
                })
                .collect(),
            decoder: (0..cfg.layers)
                .map(|i| {
                    let (o, n) = cfg.decoder_maps(i);
                    ConvLayer::zeros(o, n, k, ConvMode::Full)
                })
                .collect(),
        }
    }

    /// Checks every layer against the shapes `cfg` implies.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = AutoencoderParams::<T>::zeros(cfg);
        if self.encoder.len() != cfg.layers || self.decoder.len() != cfg.layers {
            return Err(Error::Config(format!(
                "expected {} layers per side, found {} encoder / {} decoder",
                cfg.layers,
                self.encoder.len(),
                self.decoder.len()
            )));
        }
        for ((name, got), (_, want)) in self.named_layers().zip(expected.named_layers()) {
            if got.weights.shape() != want.weights.shape() || got.mode != want.mode {
                return Err(Error::Layer {
                    layer: name,
                    message: format!(
                        "weights {:?} ({:?}), expected {:?} ({:?})",
                        got.weights.shape(),
                        got.mode,
                        want.weights.shape(),
                        want.mode
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn named_layers(&self) -> impl Iterator<Item = (String, &ConvLayer<T>)> {
        let enc = self
            .encoder
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("encoder.{i}"), l));
        let dec = self
            .decoder
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("decoder.{i}"), l));
        enc.chain(dec)
    }

    /// Parameter slices in canonical order: per layer, weights then bias;
    /// encoder layers first, then decoder layers.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        self.named_layers()
            .flat_map(|(name, l)| {
                [
                    (
                        format!("{name}.weight"),
                        l.weights.shape().to_vec(),
                        l.weights.data(),
                    ),
                    (format!("{name}.bias"), vec![l.bias.len()], &l.bias[..]),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [l.weights.data_mut(), &mut l.bias[..]])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .map(ConvLayer::param_count)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> AutoencoderParams<U> {
        AutoencoderParams {
            encoder: self.encoder.iter().map(ConvLayer::cast).collect(),
            decoder: self.decoder.iter().map(ConvLayer::cast).collect(),
        }
    }
}

/// Which bottleneck units survived both WTA stages for one input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BottleneckSelection {
    /// Row-major index of the kept position in each bottleneck map.
    pub winners: Vec<usize>,
    /// Whether each map survived channel WTA.
    pub survivors: Vec<bool>,
}

impl BottleneckSelection {
    pub fn surviving_maps(&self) -> usize {
        self.survivors.iter().filter(|&&s| s).count()
    }
}

/// Output of a forward pass plus everything the backward pass needs.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    pub output: Tensor<T>,
    /// Sparse bottleneck code after both WTA stages.
    pub code: Tensor<T>,
    pub selection: BottleneckSelection,
    /// Nonzero code units: the spatial winner of every surviving map.
    units: Vec<SparseUnit<T>>,
    enc_caches: Vec<ConvCache<T>>,
    /// Post-ReLU encoder activations (the last one is pre-WTA).
    enc_acts: Vec<Tensor<T>>,
    /// Caches of decoder layers 1.. (layer 0 reads the sparse code directly).
    dec_caches: Vec<ConvCache<T>>,
    /// Post-activation decoder outputs; the last is the sigmoid image.
    dec_acts: Vec<Tensor<T>>,
}

impl<T: Scalar> Forward<T> {
    /// Nonzero pattern of every hidden ReLU, used to detect kink crossings.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let n = self.dec_acts.len();
        self.enc_acts
            .iter()
            .chain(&self.dec_acts[..n.saturating_sub(1)])
            .flat_map(|t| t.data().iter().map(|&v| v > T::ZERO))
            .collect()
    }
}

/// A model configuration together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder<T = f32> {
    pub config: ModelConfig,
    pub params: AutoencoderParams<T>,
}

impl<T: Scalar> Autoencoder<T> {
    pub fn new(config: ModelConfig, params: AutoencoderParams<T>) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Autoencoder { config, params })
    }

    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let params = AutoencoderParams::init(&config, rng)?;
        Ok(Autoencoder { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Autoencoder<U> {
        Autoencoder {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// `M(x)`: the reconstruction of a clean `1 x 28 x 28` image.
    pub fn reconstruct(&self, img: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(img, None)?.output)
    }

    /// Full forward pass. With `frozen`, the bottleneck keeps exactly the
    /// given units instead of recomputing the winners.
    pub fn forward(&self, img: &Tensor<T>, frozen: Option<&BottleneckSelection>) -> Result<Forward<T>> {
        if img.shape() != [1, IMAGE_SIDE, IMAGE_SIDE] {
            return Err(Error::Layer {
                layer: "input".into(),
                message: format!("expected [1, 28, 28], got {:?}", img.shape()),
            });
        }
        let cfg = &self.config;
        let mut enc_caches = Vec::with_capacity(cfg.layers);
        let mut enc_acts: Vec<Tensor<T>> = Vec::with_capacity(cfg.layers);
        for (i, layer) in self.params.encoder.iter().enumerate() {
            let x = enc_acts.last().unwrap_or(img);
            let (mut z, cache) = conv2d_forward(x, layer).map_err(|e| layer_err("encoder", i, e))?;
            relu_inplace(&mut z);
            enc_caches.push(cache);
            enc_acts.push(z);
        }
        let pre = enc_acts.last().expect("at least one layer");
        let selection = match frozen {
            Some(sel) => sel.clone(),
            None => {
                let winners = spatial_winners(pre)?;
                let spatial = apply_spatial_winners(pre, &winners)?;
                let survivors = channel_survivors(&spatial, cfg.rho)?;
                BottleneckSelection { winners, survivors }
            }
        };
        let code = apply_channel_survivors(
            &apply_spatial_winners(pre, &selection.winners).map_err(|e| layer_err("bottleneck", 0, e))?,
            &selection.survivors,
        )
        .map_err(|e| layer_err("bottleneck", 0, e))?;

        let side = cfg.bottleneck_side();
        let units: Vec<SparseUnit<T>> = (0..code.shape()[0])
            .filter(|&m| selection.survivors[m])
            .map(|m| {
                let w = selection.winners[m];
                SparseUnit {
                    map: m,
                    y: w / side,
                    x: w % side,
                    value: code.data()[m * side * side + w],
                }
            })
            .collect();

        let mut dec_caches = Vec::with_capacity(cfg.layers - 1);
        let mut dec_acts: Vec<Tensor<T>> = Vec::with_capacity(cfg.layers);
        let last = cfg.layers - 1;
        for (i, layer) in self.params.decoder.iter().enumerate() {
            let mut z = match dec_acts.last() {
                None => sparse_full_conv(&units, (side, side), layer),
                Some(x) => conv2d_forward(x, layer).map(|(z, cache)| {
                    dec_caches.push(cache);
                    z
                }),
            }
            .map_err(|e| layer_err("decoder", i, e))?;
            if i == last {
                for v in z.data_mut() {
                    *v = sigmoid_scalar(*v);
                }
            } else {
                relu_inplace(&mut z);
            }
            dec_acts.push(z);
        }
        let output = dec_acts.last().expect("at least one layer").clone();
        if output.shape() != [1, IMAGE_SIDE, IMAGE_SIDE] {
            return Err(Error::Layer {
                layer: format!("decoder.{last}"),
                message: format!("produced {:?} instead of [1, 28, 28]", output.shape()),
            });
        }
        Ok(Forward {
            output,
            code,
            selection,
            units,
            enc_caches,
            enc_acts,
            dec_caches,
            dec_acts,
        })
    }

    /// Backpropagates `grad_output` (d loss / d reconstruction) and adds the
    /// parameter gradients into `grads`. Gradient reaches the encoder only
    /// through the bottleneck units that survived both WTA stages.
    pub fn backward(
        &self,
        fwd: &Forward<T>,
        grad_output: &Tensor<T>,
        grads: &mut AutoencoderParams<T>,
    ) -> Result<()> {
        let cfg = &self.config;
        let last = cfg.layers - 1;
        let mut g = grad_output.clone();
        for i in (1..cfg.layers).rev() {
            if i == last {
                sigmoid_backward_inplace(&mut g, &fwd.dec_acts[i]);
            } else {
                relu_backward_inplace(&mut g, &fwd.dec_acts[i]);
            }
            let gl = &mut grads.decoder[i];
            g = conv2d_backward(
                &fwd.dec_caches[i - 1],
                &self.params.decoder[i],
                &g,
                gl.weights.data_mut(),
                &mut gl.bias,
                true,
            )
            .map_err(|e| layer_err("decoder", i, e))?
            .expect("input gradient requested");
        }
        if last == 0 {
            sigmoid_backward_inplace(&mut g, &fwd.dec_acts[0]);
        } else {
            relu_backward_inplace(&mut g, &fwd.dec_acts[0]);
        }
        let side = cfg.bottleneck_side();
        let gl = &mut grads.decoder[0];
        let grad_units = sparse_full_conv_backward(
            &fwd.units,
            (side, side),
            &self.params.decoder[0],
            &g,
            gl.weights.data_mut(),
            &mut gl.bias,
        )
        .map_err(|e| layer_err("decoder", 0, e))?;
        let mut g = Tensor::zeros(fwd.code.shape());
        for (u, &d) in fwd.units.iter().zip(&grad_units) {
            g.data_mut()[(u.map * side + u.y) * side + u.x] = d;
        }
        for i in (0..cfg.layers).rev() {
            relu_backward_inplace(&mut g, &fwd.enc_acts[i]);
            let gl = &mut grads.encoder[i];
            let res = conv2d_backward(
                &fwd.enc_caches[i],
                &self.params.encoder[i],
                &g,
                gl.weights.data_mut(),
                &mut gl.bias,
                i > 0,
            );
            if let Some(next) = res.map_err(|e| layer_err("encoder", i, e))? {
                g = next;
            }
        }
        Ok(())
    }
}

fn relu_inplace<T: Scalar>(t: &mut Tensor<T>) {
    for v in t.data_mut() {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

fn layer_err(side: &str, i: usize, e: Error) -> Error {
    Error::Layer {
        layer: format!("{side}.{i}"),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_image(rng: &mut ChaCha8Rng) -> Tensor<f32> {
        Tensor::image((0..784).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    fn small(layers: usize, bottleneck: usize, rho: f64) -> ModelConfig {
        ModelConfig::new(layers, bottleneck, rho, 0.0, 1).with_hidden_maps(4)
    }

    #[test]
    fn single_layer_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Autoencoder::<f32>::init(small(1, 8, 0.0), &mut rng).unwrap();
        let fwd = model.forward(&random_image(&mut rng), None).unwrap();
        assert_eq!(fwd.code.shape(), &[8, 24, 24]);
        assert_eq!(fwd.output.shape(), &[1, 28, 28]);
    }

    #[test]
    fn six_layer_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = Autoencoder::<f32>::init(small(6, 3, 0.0), &mut rng).unwrap();
        let fwd = model.forward(&random_image(&mut rng), None).unwrap();
        assert_eq!(fwd.code.shape(), &[3, 4, 4]);
        assert_eq!(fwd.output.shape(), &[1, 28, 28]);
    }

    #[test]
    fn seven_layers_rejected() {
        assert!(small(7, 2, 0.0).validate().is_err());
        assert!(small(6, 2, 0.0).validate().is_ok());
        assert!(small(2, 2, 1.0).validate().is_err());
    }

    #[test]
    fn heavy_channel_sparsity_bounds_active_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = ModelConfig::new(1, 128, 0.9, 0.0, 3);
        let model = Autoencoder::<f32>::init(cfg, &mut rng).unwrap();
        for _ in 0..3 {
            let fwd = model.forward(&random_image(&mut rng), None).unwrap();
            let nonzero = fwd.code.data().iter().filter(|&&v| v != 0.0).count();
            assert!(nonzero <= 13, "{nonzero}");
            assert_eq!(fwd.selection.surviving_maps(), 13);
        }
    }

    #[test]
    fn output_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = Autoencoder::<f32>::init(small(3, 4, 0.5), &mut rng).unwrap();
        let out = model.reconstruct(&random_image(&mut rng)).unwrap();
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn wrong_input_shape_names_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = Autoencoder::<f32>::init(small(1, 2, 0.0), &mut rng).unwrap();
        let err = model.forward(&Tensor::zeros(&[2, 28, 28]), None).unwrap_err();
        assert!(err.to_string().contains("input"));
    }

    #[test]
    fn params_shapes_follow_config() {
        let cfg = small(3, 5, 0.0);
        let p = AutoencoderParams::<f32>::zeros(&cfg);
        assert_eq!(p.encoder[0].weights.shape(), &[4, 1, 5, 5]);
        assert_eq!(p.encoder[2].weights.shape(), &[5, 4, 5, 5]);
        assert_eq!(p.decoder[0].weights.shape(), &[4, 5, 5, 5]);
        assert_eq!(p.decoder[2].weights.shape(), &[1, 4, 5, 5]);
        assert!(p.check_shapes(&cfg).is_ok());
        assert!(p.check_shapes(&small(3, 6, 0.0)).is_err());
    }

    #[test]
    fn model_id_is_stable_and_distinct() {
        let a = small(2, 4, 0.5);
        let mut b = a.clone();
        assert_eq!(a.model_id(), b.model_id());
        b.seed += 1;
        assert_ne!(a.model_id(), b.model_id());
        assert!(a.model_id().starts_with("L2-b4-r0.5-p0-h4-"));
    }
}
