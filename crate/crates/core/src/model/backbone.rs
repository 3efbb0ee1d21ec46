use rand::Rng;

use super::ModelConfig;
use crate::nn::{join, Conv2d, ConvBnRelu, GlobalPool, Kind, Mode, Param, Relu, Upsample, Visit};
use crate::tensor::Tensor;

/// Atrous spatial pyramid: a 1×1 branch, one dilated 3×3 branch per rate and
/// an image-level pooling branch, concatenated and projected.
#[derive(Debug, Clone)]
pub struct Aspp {
    branches: Vec<ConvBnRelu>,
    pool: GlobalPool,
    pool_conv: Conv2d,
    pool_relu: Relu,
    project: ConvBnRelu,
    width: usize,
}

impl Aspp {
    fn new(cin: usize, width: usize, rates: &[usize], rng: &mut impl Rng) -> Self {
        let mut branches = vec![ConvBnRelu::new(cin, width, 1, 1, 1, rng)];
        for &r in rates {
            branches.push(ConvBnRelu::new(cin, width, 3, 1, r, rng));
        }
        let concat = width * (branches.len() + 1);
        Aspp {
            branches,
            pool: GlobalPool::default(),
            pool_conv: Conv2d::new(cin, width, 1, 1, 1, true, rng),
            pool_relu: Relu::default(),
            project: ConvBnRelu::new(concat, width, 1, 1, 1, rng),
            width,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let (h, w) = (x.height(), x.width());
        let mut cat: Option<Tensor> = None;
        for b in &mut self.branches {
            let y = b.forward(x, mode);
            cat = Some(match cat {
                None => y,
                Some(c) => Tensor::concat_channels(&c, &y),
            });
        }
        let p = self.pool.pool(x, mode);
        let p = self.pool_conv.forward(&p, mode);
        let p = self.pool_relu.forward(&p, mode);
        let cat = Tensor::concat_channels(&cat.expect("at least one branch"), &GlobalPool::broadcast(&p, h, w));
        self.project.forward(&cat, mode)
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let g = self.project.backward(dy);
        let nb = self.branches.len();
        let (g_branches, g_pool) = g.split_channels(self.width * nb);
        let g = GlobalPool::broadcast_backward(&g_pool);
        let g = self.pool_relu.backward(&g);
        let g = self.pool_conv.backward(&g);
        let mut dx = self.pool.pool_backward(&g);
        let mut rest = g_branches;
        for b in self.branches.iter_mut() {
            let (mine, tail) = rest.split_channels(self.width);
            dx.add_assign(&b.backward(&mine));
            rest = tail;
        }
        dx
    }
}

impl Visit for Aspp {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind)) {
        for (i, b) in self.branches.iter_mut().enumerate() {
            b.visit(&join(prefix, &format!("branch{i}")), f);
        }
        self.pool_conv.visit(&join(prefix, "pool_conv"), f);
        self.project.visit(&join(prefix, "project"), f);
    }
}

#[derive(Debug, Clone)]
struct Stage {
    down: ConvBnRelu,
    refine: ConvBnRelu,
}

/// DeepLab-style encoder–decoder.
///
/// A stride-2 stem and stride-2 stages bring the input to the configured
/// output stride; an ASPP context block follows; the decoder upsamples the
/// context to stride 4, fuses it with the projected stride-4 encoder
/// features, classifies and bilinearly upsamples to the input size.
#[derive(Debug, Clone)]
pub struct Backbone {
    stem: ConvBnRelu,
    stages: Vec<Stage>,
    aspp: Aspp,
    context_up: Upsample,
    low_proj: ConvBnRelu,
    fuse: ConvBnRelu,
    classifier: Conv2d,
    final_up: Upsample,
    aspp_channels: usize,
}

impl Backbone {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let stem = ConvBnRelu::new(cfg.in_channels, cfg.base_width, 3, 2, 1, rng);
        let mut stages = Vec::new();
        let mut cin = cfg.base_width;
        for i in 0..cfg.stages() {
            let cout = cfg.stage_width(i);
            stages.push(Stage {
                down: ConvBnRelu::new(cin, cout, 3, 2, 1, rng),
                refine: ConvBnRelu::new(cout, cout, 3, 1, 1, rng),
            });
            cin = cout;
        }
        let low_channels = cfg.stage_width(0);
        Backbone {
            stem,
            stages,
            aspp: Aspp::new(cfg.enc_channels, cfg.aspp_channels, &cfg.aspp_rates, rng),
            context_up: Upsample::new(cfg.stride / 4),
            low_proj: ConvBnRelu::new(low_channels, cfg.low_level_channels, 1, 1, 1, rng),
            fuse: ConvBnRelu::new(cfg.aspp_channels + cfg.low_level_channels, cfg.aspp_channels, 3, 1, 1, rng),
            classifier: Conv2d::new(cfg.aspp_channels, cfg.num_classes, 1, 1, 1, true, rng),
            final_up: Upsample::new(4),
            aspp_channels: cfg.aspp_channels,
        }
    }

    /// Returns `(logits at input resolution, encoder features at the output stride)`.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> (Tensor, Tensor) {
        let mut h = self.stem.forward(x, mode);
        let mut low = None;
        for (i, stage) in self.stages.iter_mut().enumerate() {
            h = stage.down.forward(&h, mode);
            h = stage.refine.forward(&h, mode);
            if i == 0 {
                low = Some(h.clone());
            }
        }
        let encoder = h;
        let context = self.aspp.forward(&encoder, mode);
        let context = self.context_up.forward(&context, mode);
        let low = self.low_proj.forward(&low.expect("at least one stage"), mode);
        let fused = self.fuse.forward(&Tensor::concat_channels(&context, &low), mode);
        let logits = self.classifier.forward(&fused, mode);
        (self.final_up.forward(&logits, mode), encoder)
    }

    /// Back-propagates the logit gradient plus any extra gradient arriving
    /// at the encoder features (from the contrastive head).
    pub fn backward(&mut self, grad_logits: &Tensor, grad_encoder: Option<&Tensor>) {
        let g = self.final_up.backward(grad_logits);
        let g = self.classifier.backward(&g);
        let g = self.fuse.backward(&g);
        let (g_context, g_low) = g.split_channels(self.aspp_channels);
        let g_low = self.low_proj.backward(&g_low);
        let g_context = self.context_up.backward(&g_context);
        let mut g = self.aspp.backward(&g_context);
        if let Some(extra) = grad_encoder {
            g.add_assign(extra);
        }
        for i in (0..self.stages.len()).rev() {
            if i == 0 {
                g.add_assign(&g_low);
            }
            g = self.stages[i].refine.backward(&g);
            g = self.stages[i].down.backward(&g);
        }
        self.stem.backward(&g);
    }
}

impl Visit for Backbone {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind)) {
        self.stem.visit(&join(prefix, "stem"), f);
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.down.visit(&join(prefix, &format!("stage{i}.down")), f);
            s.refine.visit(&join(prefix, &format!("stage{i}.refine")), f);
        }
        self.aspp.visit(&join(prefix, "aspp"), f);
        self.low_proj.visit(&join(prefix, "low_proj"), f);
        self.fuse.visit(&join(prefix, "fuse"), f);
        self.classifier.visit(&join(prefix, "classifier"), f);
    }
}
