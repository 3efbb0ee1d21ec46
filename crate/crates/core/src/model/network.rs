use super::{Backbone, MlpEmbed, ModelConfig, Projection};
use crate::error::{Error, Result};
use crate::nn::{Kind, Mode, Param, Visit};
use crate::raster::GrayImage;
use crate::seed::{self, streams};
use crate::tensor::Tensor;

/// Input intensity normalisation: `(v / 255 − INPUT_MEAN) / INPUT_STD`.
pub const INPUT_MEAN: f64 = 0.5;
pub const INPUT_STD: f64 = 0.25;

/// Backbone plus the contrastive head (projection and MLP embedding).
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    backbone: Backbone,
    projection: Projection,
    mlp: MlpEmbed,
}

impl Network {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(seed, streams::INIT, 0));
        let backbone = Backbone::new(&config, &mut rng);
        let projection = Projection::new(config.enc_channels, config.embed_dim, &mut rng);
        let mlp = MlpEmbed::new(config.embed_dim, config.dropout, &mut rng);
        Ok(Network { config, backbone, projection, mlp })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Full-resolution class logits and stride-`s` encoder features.
    pub fn forward(&mut self, images: &Tensor, mode: Mode) -> Result<(Tensor, Tensor)> {
        const OP: &str = "model::forward";
        let [_, h, w, c] = images.shape();
        let s = self.config.stride;
        if h % s != 0 || w % s != 0 || h == 0 || w == 0 {
            return Err(Error::shape(
                OP,
                format!("input {h}x{w} must be a non-zero multiple of {s} in both dimensions"),
            ));
        }
        if c != self.config.in_channels {
            return Err(Error::shape(OP, format!("input has {c} channels, expected {}", self.config.in_channels)));
        }
        Ok(self.backbone.forward(images, mode))
    }

    /// Projection module: encoder features → non-negative embedding `x3`.
    pub fn project(&mut self, encoder: &Tensor, mode: Mode) -> Result<Tensor> {
        if encoder.channels() != self.config.enc_channels {
            return Err(Error::shape(
                "model::project",
                format!("features have {} channels, expected {}", encoder.channels(), self.config.enc_channels),
            ));
        }
        Ok(self.projection.forward(encoder, mode))
    }

    /// MLP module: `x3` → pre-normalisation embedding field.
    pub fn mlp_embed(&mut self, x3: &Tensor, mode: Mode, dropout_seed: u64) -> Result<Tensor> {
        if x3.channels() != self.config.embed_dim {
            return Err(Error::shape(
                "model::mlp_embed",
                format!("input has {} channels, expected {}", x3.channels(), self.config.embed_dim),
            ));
        }
        Ok(self.mlp.forward(x3, mode, dropout_seed))
    }

    /// Accumulates parameter gradients for the last training-mode forward.
    /// `grad_embedding` is the gradient at the output of [`Network::mlp_embed`]
    /// (pre-normalisation); when given, the head's backward is run too.
    pub fn backward(&mut self, grad_logits: &Tensor, grad_embedding: Option<&Tensor>) {
        let grad_encoder = grad_embedding.map(|g| {
            let g = self.mlp.backward(g);
            self.projection.backward(&g)
        });
        self.backbone.backward(grad_logits, grad_encoder.as_ref());
    }

    pub fn zero_grad(&mut self) {
        self.visit("", &mut |_, p, _| p.zero_grad());
    }

    /// Names, in traversal order, of every persisted tensor.
    pub fn tensor_names(&mut self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit("", &mut |n, _, _| names.push(n.to_string()));
        names
    }

    pub fn parameter_count(&mut self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p, k| {
            if k == Kind::Learnable {
                n += p.value.len();
            }
        });
        n
    }
}

impl Visit for Network {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind)) {
        self.backbone.visit(&crate::nn::join(prefix, "backbone"), f);
        self.projection.visit(&crate::nn::join(prefix, "projection"), f);
        self.mlp.visit(&crate::nn::join(prefix, "mlp"), f);
    }
}

/// Stacks grayscale images into an `(n, h, w, channels)` input tensor,
/// replicating the gray channel.
pub fn input_tensor(images: &[&GrayImage], channels: usize) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::invalid("model::input_tensor", "empty batch"))?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(images.len() * h * w * channels);
    for img in images {
        if img.dims() != (h, w) {
            return Err(Error::shape("model::input_tensor", "images in a batch differ in size"));
        }
        for &v in img.data() {
            let x = (f64::from(v) / 255.0 - INPUT_MEAN) / INPUT_STD;
            data.extend(std::iter::repeat(x).take(channels));
        }
    }
    Tensor::from_vec([images.len(), h, w, channels], data)
}
