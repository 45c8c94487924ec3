//! Diagnostics computed from predictions and training logs. Every table can
//! be rendered as a CSV block with a one-line header.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::netcore::{forward_one, softmax};
use crate::par::{self, Exec};
use crate::pseudolabel::{Prediction, PseudoLabelDecision};
use crate::synthdata::{max_offset, sample_clip, ClassKind, Clip, Video};
use crate::trainer::{inference_offsets, MetricsLog, Network, SubsetSnapshot};

/// Per-class correct counts and totals.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracyTable {
    pub correct: Vec<usize>,
    pub totals: Vec<usize>,
}

impl ClassAccuracyTable {
    pub fn from_predictions(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::precondition(format!(
                "{} predictions for {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        let mut table = ClassAccuracyTable { correct: vec![0; num_classes], totals: vec![0; num_classes] };
        for (&p, &t) in predicted.iter().zip(truth) {
            if t >= num_classes {
                return Err(Error::precondition(format!("label {t} outside {num_classes} classes")));
            }
            table.totals[t] += 1;
            if p == t {
                table.correct[t] += 1;
            }
        }
        Ok(table)
    }

    pub fn num_classes(&self) -> usize {
        self.totals.len()
    }

    /// Accuracy per class; NaN for classes with no samples.
    pub fn accuracy(&self) -> Vec<f64> {
        self.correct
            .iter()
            .zip(&self.totals)
            .map(|(&c, &n)| if n == 0 { f64::NAN } else { c as f64 / n as f64 })
            .collect()
    }

    /// Pooled accuracy over the classes of one kind.
    pub fn kind_accuracy(&self, kinds: &[ClassKind], kind: ClassKind) -> f64 {
        let (mut c, mut n) = (0, 0);
        for (k, (&ci, &ni)) in kinds.iter().zip(self.correct.iter().zip(&self.totals)) {
            if *k == kind {
                c += ci;
                n += ni;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            c as f64 / n as f64
        }
    }

    pub fn overall(&self) -> f64 {
        let n: usize = self.totals.iter().sum();
        if n == 0 {
            return f64::NAN;
        }
        self.correct.iter().sum::<usize>() as f64 / n as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,correct,total,accuracy\n");
        for (c, acc) in self.accuracy().iter().enumerate() {
            let _ = writeln!(out, "{c},{},{},{acc}", self.correct[c], self.totals[c]);
        }
        out
    }
}

/// Confident-and-correct decisions over the number of unlabeled samples.
pub fn pseudo_label_ratio(decisions: &[PseudoLabelDecision], truth: &[usize]) -> Result<f64> {
    if decisions.len() != truth.len() {
        return Err(Error::precondition(format!(
            "{} decisions for {} labels",
            decisions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let hits = decisions.iter().zip(truth).filter(|(d, &t)| d.confident && d.target_class == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassGap {
    pub class: usize,
    pub acc_small: f64,
    pub acc_large: f64,
    /// `acc_small - acc_large`
    pub gap: f64,
}

/// Small-minus-large accuracy per class, ordered by the large network's
/// accuracy (ascending, ties by class id).
pub fn per_class_gap(small: &ClassAccuracyTable, large: &ClassAccuracyTable) -> Result<Vec<ClassGap>> {
    if small.num_classes() != large.num_classes() {
        return Err(Error::precondition("class counts differ"));
    }
    let mut gaps: Vec<ClassGap> = small
        .accuracy()
        .into_iter()
        .zip(large.accuracy())
        .enumerate()
        .map(|(class, (s, l))| ClassGap { class, acc_small: s, acc_large: l, gap: s - l })
        .collect();
    gaps.sort_by(|a, b| a.acc_large.total_cmp(&b.acc_large).then(a.class.cmp(&b.class)));
    Ok(gaps)
}

pub fn gaps_to_csv(gaps: &[ClassGap]) -> String {
    let mut out = String::from("class,acc_small,acc_large,gap\n");
    for g in gaps {
        let _ = writeln!(out, "{},{},{},{}", g.class, g.acc_small, g.acc_large, g.gap);
    }
    out
}

/// Keeps every `stride`-th frame and repeats each one `stride` times, so the
/// clip keeps its length but loses temporal detail.
pub fn resample_repeat(clip: &Clip, stride: usize) -> Result<Clip> {
    let t = clip.num_frames();
    if stride == 0 || !t.is_multiple_of(stride) {
        return Err(Error::precondition(format!("stride {stride} does not divide {t} frames")));
    }
    let d = clip.spatial_dim();
    let mut data = Vec::with_capacity(t * d);
    for i in 0..t {
        data.extend_from_slice(clip.frame(i / stride * stride));
    }
    let mut out = Clip::from_frames(clip.source_video_id, t, d, data)?;
    out.stride = clip.stride;
    out.offset = clip.offset;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrideDrop {
    pub stride: usize,
    pub accuracy: f64,
    /// `1 - accuracy / accuracy(stride 1)`, 0 when stride-1 accuracy is 0.
    pub drop: f64,
}

/// Accuracy when the network's clips are re-sampled with each stride and
/// extended back to full length, relative to stride 1. Clips are taken at
/// the inference offsets for the network's own `clip_stride`.
pub fn stride_degradation(
    net: &Network,
    videos: &[Video],
    strides: &[usize],
    num_clips: usize,
    clip_stride: usize,
    exec: Exec,
) -> Result<Vec<StrideDrop>> {
    let t = net.config.input_frames;
    if let Some(&bad) = strides.iter().find(|&&s| s == 0 || !t.is_multiple_of(s)) {
        return Err(Error::precondition(format!("stride {bad} does not divide {t} frames")));
    }
    if num_clips == 0 {
        return Err(Error::precondition("num_clips must be at least 1"));
    }
    let accuracy_at = |stride: usize| -> Result<f64> {
        let preds = par::try_map_indexed(exec, videos.len(), |i| -> Result<Prediction> {
            let v = &videos[i];
            let max = max_offset(v.raw_length(), t, clip_stride)
                .ok_or_else(|| Error::config(format!("{t}x{clip_stride} clip does not fit the video")))?;
            let probs = inference_offsets(max, num_clips)
                .into_iter()
                .map(|o| {
                    let clip = resample_repeat(&sample_clip(v, t, clip_stride, o)?, stride)?;
                    softmax(&forward_one(&net.config, &net.params, &clip)?)
                })
                .collect::<Result<Vec<_>>>()?;
            Prediction::mean(&probs)
        })?;
        if videos.is_empty() {
            return Ok(0.0);
        }
        let hits = preds.iter().zip(videos).filter(|(p, v)| p.argmax() == v.class_id).count();
        Ok(hits as f64 / videos.len() as f64)
    };
    let base = accuracy_at(1)?;
    strides
        .iter()
        .map(|&s| {
            let accuracy = if s == 1 { base } else { accuracy_at(s)? };
            let drop = if base == 0.0 { 0.0 } else { 1.0 - accuracy / base };
            Ok(StrideDrop { stride: s, accuracy, drop })
        })
        .collect()
}

pub fn stride_to_csv(rows: &[StrideDrop]) -> String {
    let mut out = String::from("stride,accuracy,drop\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.stride, r.accuracy, r.drop);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainBin {
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_gain: f64,
}

/// Groups classes by `floor(aux_acc / bin_width)` and averages the primary
/// gain inside each non-empty bin.
pub fn gain_vs_aux_bins(primary_gain: &[f64], aux_acc: &[f64], bin_width: f64) -> Result<Vec<GainBin>> {
    if primary_gain.len() != aux_acc.len() {
        return Err(Error::precondition("gain and accuracy vectors differ in length"));
    }
    if !(bin_width > 0.0) {
        return Err(Error::precondition("bin_width must be positive"));
    }
    let mut bins: std::collections::BTreeMap<usize, (usize, f64)> = Default::default();
    for (&g, &a) in primary_gain.iter().zip(aux_acc) {
        // The small tolerance keeps exact multiples such as 0.15 / 0.05 in their own bin.
        let b = (a / bin_width + 1e-9).floor().max(0.0) as usize;
        let e = bins.entry(b).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += g;
    }
    Ok(bins
        .into_iter()
        .map(|(bin, (count, sum))| GainBin {
            bin,
            lower: bin as f64 * bin_width,
            upper: (bin + 1) as f64 * bin_width,
            count,
            mean_gain: sum / count as f64,
        })
        .collect())
}

pub fn bins_to_csv(bins: &[GainBin]) -> String {
    let mut out = String::from("bin,lower,upper,count,mean_gain\n");
    for b in bins {
        let _ = writeln!(out, "{},{},{},{},{}", b.bin, b.lower, b.upper, b.count, b.mean_gain);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPoint {
    pub epoch: usize,
    pub subset_size: usize,
    pub acc_primary: f64,
    pub acc_aux: f64,
    /// Primary of the paired reference run, when one is given.
    pub acc_reference: Option<f64>,
}

fn subset_accuracy(pred: &[usize], truth: &[usize], mask: &[bool]) -> f64 {
    let (mut hits, mut n) = (0usize, 0usize);
    for ((p, t), &m) in pred.iter().zip(truth).zip(mask) {
        if m {
            n += 1;
            hits += usize::from(p == t);
        }
    }
    hits as f64 / n as f64
}

/// Accuracy on the unlabeled samples the auxiliary network labels
/// confidently, at every snapshot of `log`. The subset is re-selected at each
/// snapshot; epochs where it is empty are omitted. `reference` (a paired
/// single-network run) must have snapshots at the same epochs over the same
/// pool.
pub fn subset_accuracy_curve(log: &MetricsLog, reference: Option<&MetricsLog>) -> Result<Vec<SubsetPoint>> {
    if log.snapshots.is_empty() {
        return Err(Error::Report("training log has no subset snapshots".into()));
    }
    let mut points = Vec::new();
    for snap in &log.snapshots {
        if snap.aux_confident.len() != snap.truth.len() {
            return Err(Error::Report(format!("snapshot at epoch {} has no auxiliary predictions", snap.epoch)));
        }
        let subset_size = snap.aux_confident.iter().filter(|&&c| c).count();
        if subset_size == 0 {
            continue;
        }
        let acc_reference = match reference {
            None => None,
            Some(r) => {
                let other: &SubsetSnapshot = r
                    .snapshots
                    .iter()
                    .find(|s| s.epoch == snap.epoch)
                    .ok_or_else(|| Error::Report(format!("reference run has no snapshot at epoch {}", snap.epoch)))?;
                if other.truth != snap.truth {
                    return Err(Error::Report("reference run used a different unlabeled pool".into()));
                }
                Some(subset_accuracy(&other.primary_pred, &snap.truth, &snap.aux_confident))
            }
        };
        points.push(SubsetPoint {
            epoch: snap.epoch,
            subset_size,
            acc_primary: subset_accuracy(&snap.primary_pred, &snap.truth, &snap.aux_confident),
            acc_aux: subset_accuracy(&snap.aux_pred, &snap.truth, &snap.aux_confident),
            acc_reference,
        });
    }
    Ok(points)
}

pub fn curve_to_csv(points: &[SubsetPoint]) -> String {
    let mut out = String::from("epoch,subset_size,acc_primary,acc_aux,acc_reference\n");
    for p in points {
        let reference = p.acc_reference.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{reference}", p.epoch, p.subset_size, p.acc_primary, p.acc_aux);
    }
    out
}
