use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::infer::{accuracy, evaluate_with};
use super::losses::{objective, LabeledSample, UnlabeledSample};
use super::{ExperimentConfig, NetPair, TrainMode};
use crate::augment::{random_clip, temporal_views};
use crate::error::{Error, Result};
use crate::netcore::{sgd_step, OptimizerConfig, ParamStore};
use crate::par::{self, Exec};
use crate::pseudolabel::PseudoLabelDecision;
use crate::synthdata::{stream_rng, SplitResult, Video};

const LABELED_STREAM: u64 = 11;
const UNLABELED_STREAM: u64 = 12;

pub struct TrainData<'a> {
    pub videos: &'a [Video],
    pub split: &'a SplitResult,
    pub validation: &'a [Video],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate at the epoch's first step.
    pub lr: f64,
    pub loss_sup_f: f64,
    pub loss_sup_a: f64,
    pub loss_unsup_f: f64,
    pub loss_unsup_a: f64,
    /// Confident decisions for the primary network during the epoch.
    pub n_confident: usize,
    /// Of those, how many match the true class.
    pub n_correct: usize,
    /// `n_correct` over the unlabeled pool size.
    pub pl_ratio: f64,
    pub val_acc_f: f64,
    /// NaN when the auxiliary network is not trained.
    pub val_acc_a: f64,
}

/// Predictions over the whole unlabeled pool at one epoch, in pool order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubsetSnapshot {
    pub epoch: usize,
    pub truth: Vec<usize>,
    pub primary_pred: Vec<usize>,
    /// Empty when the auxiliary network is not trained.
    pub aux_pred: Vec<usize>,
    pub aux_confident: Vec<bool>,
}

/// Pseudo-label decisions for one unlabeled video in the final epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub video_id: usize,
    pub truth: usize,
    pub for_f: PseudoLabelDecision,
    pub for_a: PseudoLabelDecision,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub epochs: Vec<EpochRecord>,
    pub snapshots: Vec<SubsetSnapshot>,
    pub final_decisions: Vec<DecisionRecord>,
    pub num_unlabeled: usize,
    pub steps_per_epoch: usize,
}

impl MetricsLog {
    pub fn epoch(&self, epoch: usize) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == epoch)
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub pair: NetPair,
    pub log: MetricsLog,
}

pub fn train(config: &ExperimentConfig, data: &TrainData<'_>) -> Result<TrainOutcome> {
    train_with(config, data, Exec::default(), &mut |_| {})
}

struct Prepared {
    labeled: Vec<LabeledSample>,
    unlabeled: Vec<UnlabeledSample>,
}

fn check_data(config: &ExperimentConfig, data: &TrainData<'_>) -> Result<(usize, usize)> {
    let first = data.videos.first().ok_or_else(|| Error::config("empty dataset"))?;
    let num_classes = data.videos.iter().map(|v| v.class_id).max().unwrap_or(0) + 1;
    let raw_length = first.raw_length();
    config.temporal.validate(raw_length)?;
    if data.split.labeled.is_empty() {
        return Err(Error::config("split has no labeled videos"));
    }
    let n = data.videos.len();
    if data.split.labeled.iter().chain(&data.split.unlabeled).any(|&i| i >= n) {
        return Err(Error::config("split refers to videos outside the dataset"));
    }
    if config.mode != TrainMode::Supervised && data.split.unlabeled.len() < config.unlabeled_batch() {
        return Err(Error::config(format!(
            "unlabeled pool of {} is smaller than the unlabeled batch {}",
            data.split.unlabeled.len(),
            config.unlabeled_batch()
        )));
    }
    if data
        .videos
        .iter()
        .chain(data.validation)
        .any(|v| v.raw_length() != raw_length || v.spatial_dim() != first.spatial_dim())
    {
        return Err(Error::config("videos disagree on raw length or spatial dimension"));
    }
    if data.validation.iter().any(|v| v.class_id >= num_classes) {
        return Err(Error::config("validation video has a class unseen in training data"));
    }
    Ok((num_classes, first.spatial_dim()))
}

fn prepare(
    config: &ExperimentConfig,
    videos: &[Video],
    labeled: &[(usize, u64)],
    unlabeled: &[(usize, u64)],
    exec: Exec,
) -> Result<Prepared> {
    let t = &config.temporal;
    let labeled = par::try_map_indexed(exec, labeled.len(), |i| -> Result<LabeledSample> {
        let (idx, seed) = labeled[i];
        let video = &videos[idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clip_f = random_clip(video, t.primary_frames, t.primary_stride, &mut rng)?;
        let clip_f = config.standard.apply(&clip_f, &mut rng);
        let clip_a = random_clip(video, t.aux_frames, t.aux_stride, &mut rng)?;
        let clip_a = config.standard.apply(&clip_a, &mut rng);
        Ok(LabeledSample { clip_f, clip_a, label: video.class_id })
    })?;
    let unlabeled = par::try_map_indexed(exec, unlabeled.len(), |i| -> Result<UnlabeledSample> {
        let (idx, seed) = unlabeled[i];
        let video = &videos[idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (clip_f, clip_a) = temporal_views(video, t, &mut rng)?;
        let weak_f = config.weak.apply(&clip_f, &mut rng);
        let weak_a = config.weak.apply(&clip_a, &mut rng);
        let (src_f, src_a) = if config.shared_clip { (clip_f, clip_a) } else { temporal_views(video, t, &mut rng)? };
        let strong_f = config.strong.apply(&src_f, &mut rng);
        let strong_a = config.strong.apply(&src_a, &mut rng);
        Ok(UnlabeledSample { weak_f, weak_a, strong_f, strong_a })
    })?;
    Ok(Prepared { labeled, unlabeled })
}

fn apply_gradients(
    params: &mut ParamStore,
    grads: &crate::netcore::Gradients,
    opt: &OptimizerConfig,
    step: usize,
) -> Result<()> {
    params.zero_grads();
    params.accumulate(grads, 1.0)?;
    sgd_step(params, opt, step)
}

fn snapshot(
    config: &ExperimentConfig,
    pair: &NetPair,
    videos: &[Video],
    pool: &[usize],
    epoch: usize,
    exec: Exec,
) -> Result<SubsetSnapshot> {
    let pool_videos: Vec<Video> = pool.iter().map(|&i| videos[i].clone()).collect();
    let t = &config.temporal;
    let primary = evaluate_with(&pair.primary, &pool_videos, config.num_clips, t.primary_stride, exec)?;
    let (aux_pred, aux_confident) = if config.mode.trains_auxiliary() {
        let aux = evaluate_with(&pair.auxiliary, &pool_videos, config.num_clips, t.aux_stride, exec)?;
        (aux.iter().map(|p| p.argmax()).collect(), aux.iter().map(|p| p.max() >= config.tau).collect())
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(SubsetSnapshot {
        epoch,
        truth: pool_videos.iter().map(|v| v.class_id).collect(),
        primary_pred: primary.iter().map(|p| p.argmax()).collect(),
        aux_pred,
        aux_confident,
    })
}

/// Full training run. `on_epoch` sees every record as soon as it is logged.
pub fn train_with(
    config: &ExperimentConfig,
    data: &TrainData<'_>,
    exec: Exec,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let (num_classes, spatial_dim) = check_data(config, data)?;
    let mut pair = NetPair::build(
        config.primary_config(num_classes, spatial_dim),
        config.auxiliary_config(num_classes, spatial_dim),
        config.seed,
    )?;
    let b_l = config.labeled_batch;
    let b_u = config.unlabeled_batch();
    let n_u = data.split.unlabeled.len();
    let steps_per_epoch = (n_u / b_u).max(1);
    let total_steps = config.epochs * steps_per_epoch;
    let opt = OptimizerConfig { total_steps: total_steps.max(1), ..config.optimizer.clone() };
    let mut log = MetricsLog { num_unlabeled: n_u, steps_per_epoch, ..MetricsLog::default() };

    let use_unlabeled = config.mode != TrainMode::Supervised;
    let with_aux = config.mode.trains_auxiliary();
    let lambda = if use_unlabeled { config.lambda } else { 0.0 };
    let mut rng_l = stream_rng(config.seed, LABELED_STREAM);
    let mut rng_u = stream_rng(config.seed, UNLABELED_STREAM);
    let mut labeled_order = data.split.labeled.clone();
    labeled_order.shuffle(&mut rng_l);
    let mut labeled_pos = 0;

    for epoch in 1..=config.epochs {
        let mut unlabeled_order = data.split.unlabeled.clone();
        if use_unlabeled {
            unlabeled_order.shuffle(&mut rng_u);
        }
        let mut sums = [0.0f64; 4];
        let (mut n_confident, mut n_correct) = (0usize, 0usize);
        let mut final_decisions = Vec::new();
        let first_lr = opt.lr((epoch - 1) * steps_per_epoch)?;

        for b in 0..steps_per_epoch {
            let step = (epoch - 1) * steps_per_epoch + b;
            let mut labeled_draw = Vec::with_capacity(b_l);
            for _ in 0..b_l {
                if labeled_pos == labeled_order.len() {
                    labeled_order.shuffle(&mut rng_l);
                    labeled_pos = 0;
                }
                labeled_draw.push((labeled_order[labeled_pos], rng_l.next_u64()));
                labeled_pos += 1;
            }
            let unlabeled_draw: Vec<(usize, u64)> = if use_unlabeled {
                unlabeled_order[b * b_u..(b + 1) * b_u].iter().map(|&i| (i, rng_u.next_u64())).collect()
            } else {
                Vec::new()
            };
            let batch = prepare(config, data.videos, &labeled_draw, &unlabeled_draw, exec)?;
            let obj = objective(
                &pair,
                &batch.labeled,
                &batch.unlabeled,
                config.scheme,
                config.tau,
                lambda,
                with_aux,
                exec,
            )?;
            if !obj.total.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}, step {step}")));
            }
            for (&(idx, _), (d_f, d_a)) in unlabeled_draw.iter().zip(&obj.decisions) {
                let truth = data.videos[idx].class_id;
                if d_f.confident {
                    n_confident += 1;
                    if d_f.target_class == truth {
                        n_correct += 1;
                    }
                }
                if epoch == config.epochs {
                    final_decisions.push(DecisionRecord { video_id: idx, truth, for_f: *d_f, for_a: *d_a });
                }
            }
            sums[0] += obj.loss_sup_f;
            sums[1] += obj.loss_sup_a;
            sums[2] += obj.loss_unsup_f;
            sums[3] += obj.loss_unsup_a;
            apply_gradients(&mut pair.primary.params, &obj.grads_f, &opt, step)?;
            if let Some(g) = &obj.grads_a {
                apply_gradients(&mut pair.auxiliary.params, g, &opt, step)?;
            }
        }

        let t = &config.temporal;
        let val_f = evaluate_with(&pair.primary, data.validation, config.num_clips, t.primary_stride, exec)?;
        let val_acc_a = if with_aux {
            let val_a = evaluate_with(&pair.auxiliary, data.validation, config.num_clips, t.aux_stride, exec)?;
            accuracy(&val_a, data.validation)
        } else {
            f64::NAN
        };
        let steps = steps_per_epoch as f64;
        let record = EpochRecord {
            epoch,
            lr: first_lr,
            loss_sup_f: sums[0] / steps,
            loss_sup_a: sums[1] / steps,
            loss_unsup_f: sums[2] / steps,
            loss_unsup_a: sums[3] / steps,
            n_confident,
            n_correct,
            pl_ratio: if n_u == 0 { 0.0 } else { n_correct as f64 / n_u as f64 },
            val_acc_f: accuracy(&val_f, data.validation),
            val_acc_a,
        };
        on_epoch(&record);
        log.epochs.push(record);
        if config.snapshot_interval > 0 && epoch % config.snapshot_interval == 0 && n_u > 0 {
            log.snapshots.push(snapshot(config, &pair, data.videos, &data.split.unlabeled, epoch, exec)?);
        }
        if epoch == config.epochs {
            log.final_decisions = final_decisions;
        }
    }
    Ok(TrainOutcome { pair, log })
}
