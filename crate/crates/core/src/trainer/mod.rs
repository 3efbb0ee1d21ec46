//! Training loop, prediction and evaluation.

mod config;
mod log;
mod sgd;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

pub use self::config::{ImbalanceConfig, LrSchedule, TrainConfig};
pub use self::log::{EpochRecord, TrainLog, LOG_HEADER};
pub use self::sgd::Sgd;
use crate::datagen::{DatasetManifest, Sample, Split};
use crate::error::{Error, Result};
use crate::losses::{ce_loss, dice_loss_logits, flat_labels, total_loss, ImbalanceSchedule};
use crate::metrics::{self, confusion, EvalOptions, MetricsReport};
use crate::model::{input_tensor, l2_normalize, l2_normalize_backward, Checkpoint, Network};
use crate::nn::Mode;
use crate::raster::{write_mask_png, GrayImage, LabelMask, NUM_CLASSES};
use crate::seed::{self, streams};
use crate::tensor::Tensor;
use crate::vqcl::{batch_labels, init_centers, vqcl_loss, ClassCenters, FeatureQueue};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.csv";

pub struct TrainOutcome {
    pub network: Network,
    pub centers: ClassCenters,
    pub log: TrainLog,
    pub checkpoint: Checkpoint,
}

/// Loss values of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub ce: f64,
    pub dice: f64,
    pub vqcl: f64,
    pub total: f64,
}

/// Mutable state owned by the optimisation loop.
pub struct Trainer {
    pub config: TrainConfig,
    pub network: Network,
    pub centers: ClassCenters,
    pub queue: FeatureQueue,
    pub schedule: ImbalanceSchedule,
    optimizer: Sgd,
    iteration: u64,
}

impl Trainer {
    /// Fresh network, centres and queue for `config`, with imbalance
    /// weights from the training-split pixel counts.
    pub fn new(config: TrainConfig, class_counts: &[u64]) -> Result<Self> {
        config.validate()?;
        let network = Network::new(config.model.clone(), config.seed)?;
        let centers = init_centers(
            config.model.num_classes,
            config.model.embed_dim,
            seed::derive(config.seed, streams::CENTERS, 0),
        )?;
        let queue = FeatureQueue::new(config.model.num_classes, config.vqcl.queue_capacity);
        let mut schedule = ImbalanceSchedule::new(
            config.imbalance.mode,
            config.imbalance.e_min,
            config.imbalance.e_max,
            class_counts.to_vec(),
        )?;
        schedule.e_switch = config.imbalance.e_switch;
        let optimizer = Sgd::new(config.momentum, config.weight_decay);
        Ok(Trainer { config, network, centers, queue, schedule, optimizer, iteration: 0 })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// One forward/backward/update on a batch.
    pub fn step(&mut self, batch: &[&Sample], epoch: usize) -> Result<StepLosses> {
        const OP: &str = "trainer::train";
        self.iteration += 1;
        let it = self.iteration;
        let cfg = &self.config;
        let images: Vec<&GrayImage> = batch.iter().map(|s| &s.image).collect();
        let masks: Vec<&LabelMask> = batch.iter().map(|s| &s.mask).collect();
        let x = input_tensor(&images, cfg.model.in_channels)?;

        let (logits, encoder) = self.network.forward(&x, Mode::Train)?;
        let x3 = self.network.project(&encoder, Mode::Train)?;
        let raw = self.network.mlp_embed(&x3, Mode::Train, seed::derive(cfg.seed, streams::DROPOUT, it))?;
        let (f, norms) = l2_normalize(&raw);
        let low = batch_labels(&masks, cfg.model.stride)?;
        self.centers.update(&f, &low, cfg.vqcl.alpha)?;
        self.queue.enqueue(&f, &low, cfg.vqcl.samples_per_class, seed::derive(cfg.seed, streams::ENQUEUE, it), it)?;

        let labels = flat_labels(&masks);
        let weights = self.schedule.weights(epoch)?;
        let ce = ce_loss(&logits, &labels, &weights)?;
        let dice = dice_loss_logits(&logits, &labels)?;
        let vq = vqcl_loss(&self.centers, &self.queue, cfg.vqcl.tau)?;
        for (component, value) in [("ce", ce.value), ("dice", dice.value), ("vqcl", vq.total)] {
            if !value.is_finite() {
                return Err(Error::NonFinite { op: OP, component, value, epoch, iteration: it });
            }
        }
        let total = total_loss(ce.value, dice.value, vq.total)?;

        let mut grad_logits = ce.grad;
        grad_logits.add_assign(&dice.grad);
        let grad_f = vq.feature_gradient(&self.queue, f.shape())?;
        let grad_raw = l2_normalize_backward(&f, &norms, &grad_f);
        self.network.zero_grad();
        self.network.backward(&grad_logits, Some(&grad_raw));
        let lr = self.config.lr_at(epoch);
        self.optimizer.step(&mut self.network, lr);
        Ok(StepLosses { ce: ce.value, dice: dice.value, vqcl: vq.total, total })
    }

    /// One pass over `samples` in a seeded order; returns the epoch record
    /// (batch-mean losses) without validation.
    pub fn epoch(&mut self, samples: &[Sample], epoch: usize) -> Result<EpochRecord> {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(self.config.seed, streams::SHUFFLE, epoch as u64)));
        let mut sums = [0.0; 4];
        let mut batches = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let l = self.step(&batch, epoch)?;
            for (s, v) in sums.iter_mut().zip([l.ce, l.dice, l.vqcl, l.total]) {
                *s += v;
            }
            batches += 1;
        }
        let w = self.schedule.weights(epoch)?;
        let n = batches as f64;
        Ok(EpochRecord {
            epoch,
            ce: sums[0] / n,
            dice: sums[1] / n,
            vqcl: sums[2] / n,
            total: sums[3] / n,
            beta: w.beta(),
            omega0: w.omega()[0],
            omega1: w.omega()[1],
            omega2: w.omega()[2],
            val_dice: None,
        })
    }

    pub fn checkpoint(&mut self, epoch: usize) -> Checkpoint {
        Checkpoint::capture(&mut self.network, &self.centers, epoch, self.config.to_json())
    }
}

/// Trains on the manifest's training split. With `out_dir`, writes the
/// per-epoch log, periodic checkpoints and the final `model.ckpt` there.
/// The queue and centres start fresh.
pub fn train(config: &TrainConfig, manifest: &DatasetManifest, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    const OP: &str = "trainer::train";
    let samples = manifest.load_samples(Split::Train)?;
    if samples.is_empty() {
        return Err(Error::invalid(OP, "training split is empty"));
    }
    let val = if config.val_every > 0 { manifest.load_samples(Split::Test)? } else { Vec::new() };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(OP, dir, e))?;
    }
    let mut trainer = Trainer::new(config.clone(), &manifest.class_counts())?;
    let mut log = TrainLog::default();
    for epoch in 1..=config.epochs {
        let mut rec = trainer.epoch(&samples, epoch)?;
        if !val.is_empty() && (epoch % config.val_every == 0 || epoch == config.epochs) {
            rec.val_dice = Some(macro_dice(&mut trainer.network, &val)?);
        }
        ::log::info!(
            "epoch {epoch}/{}: ce {:.4} dice {:.4} vqcl {:.4} total {:.4} beta {:.3}{}",
            config.epochs,
            rec.ce,
            rec.dice,
            rec.vqcl,
            rec.total,
            rec.beta,
            rec.val_dice.map(|v| format!(" val_dice {v:.4}")).unwrap_or_default()
        );
        log.records.push(rec);
        if let Some(dir) = out_dir {
            log.write_csv(&dir.join(LOG_FILE))?;
            if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && epoch < config.epochs {
                trainer.checkpoint(epoch).save(&dir.join(format!("epoch_{epoch:04}.ckpt")))?;
            }
        }
    }
    let checkpoint = trainer.checkpoint(config.epochs);
    if let Some(dir) = out_dir {
        checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(TrainOutcome { network: trainer.network, centers: trainer.centers, log, checkpoint })
}

/// Per-pixel argmax of one batch item's logits; ties go to the lowest class.
pub fn argmax_mask(logits: &Tensor, item: usize) -> LabelMask {
    let [_, h, w, _] = logits.shape();
    let mut out = LabelMask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            let base = logits.index(item, y, x, 0);
            let row = &logits.data()[base..base + logits.channels()];
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            out.set(y, x, best as u8);
        }
    }
    out
}

/// Eval-mode segmentation of one image.
pub fn predict(network: &mut Network, image: &GrayImage) -> Result<LabelMask> {
    let x = input_tensor(&[image], network.config().in_channels)?;
    let (logits, _) = network.forward(&x, Mode::Eval)?;
    Ok(argmax_mask(&logits, 0))
}

/// Mean over samples of the class-averaged hard Dice.
pub fn macro_dice(network: &mut Network, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let pred = predict(network, &s.image)?;
        let mut d = 0.0;
        for k in 0..NUM_CLASSES {
            d += metrics::dice(&confusion(&pred, &s.mask, k as u8)?);
        }
        total += d / NUM_CLASSES as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// In-memory evaluation over labelled samples.
pub fn evaluate_samples(network: &mut Network, samples: &[Sample], opts: &EvalOptions) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::invalid("trainer::evaluate", "no samples to evaluate"));
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    for s in samples {
        let pred = predict(network, &s.image)?;
        per_sample.push(metrics::sample_metrics(&s.meta.id, &pred, &s.mask, opts)?);
    }
    Ok(MetricsReport::from_samples(per_sample, opts.hd95_variant))
}

/// Predicts every test image into `pred_dir/{id}.png`; returns the paths.
pub fn predict_split(
    network: &mut Network,
    manifest: &DatasetManifest,
    split: Split,
    pred_dir: &Path,
) -> Result<Vec<PathBuf>> {
    const OP: &str = "trainer::predict";
    std::fs::create_dir_all(pred_dir).map_err(|e| Error::io(OP, pred_dir, e))?;
    let mut out = Vec::new();
    for rec in manifest.split(split) {
        let mask = predict(network, &manifest.load_image(rec)?)?;
        let path = pred_dir.join(format!("{}.png", rec.id));
        write_mask_png(&path, &mask)?;
        out.push(path);
    }
    Ok(out)
}

/// Predicts the test split into `pred_dir` and scores it.
pub fn evaluate(
    checkpoint: &Checkpoint,
    manifest: &DatasetManifest,
    pred_dir: &Path,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if manifest.split(Split::Test).next().is_none() {
        return Err(Error::invalid("trainer::evaluate", "test split is empty"));
    }
    let mut network = checkpoint.network()?;
    predict_split(&mut network, manifest, Split::Test, pred_dir)?;
    metrics::evaluate_dataset(pred_dir, manifest, opts)
}
