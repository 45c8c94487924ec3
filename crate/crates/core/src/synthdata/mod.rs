//! Synthetic spatiotemporal benchmark.
//!
//! Every video is a stack of `raw_length` frames, each a `spatial_dim`
//! feature vector. Spatial-kind classes are told apart by a static template
//! and show no motion. Temporal-kind classes all share one template and
//! differ only in the frequency of a sinusoidal amplitude modulation, with a
//! random phase per video, so the frame average carries no class signal.

mod io;

pub use io::{read_dataset, read_manifest, write_dataset, DatasetManifest};

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

pub const DEFAULT_RAW_LENGTH: usize = 64;
pub const DEFAULT_SPATIAL_DIM: usize = 64;

/// Which kind of signal separates a class from its siblings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassKind {
    Spatial,
    Temporal,
}

impl ClassKind {
    pub fn code(self) -> char {
        match self {
            ClassKind::Spatial => 'S',
            ClassKind::Temporal => 'T',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'S' => Some(ClassKind::Spatial),
            'T' => Some(ClassKind::Temporal),
            _ => None,
        }
    }
}

/// A raw synthetic video. Frames are stored frame-major as `f32` so the
/// on-disk form round-trips exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: usize,
    pub class_id: usize,
    pub kind: ClassKind,
    raw_length: usize,
    spatial_dim: usize,
    frames: Vec<f32>,
}

impl Video {
    pub fn new(
        id: usize,
        class_id: usize,
        kind: ClassKind,
        raw_length: usize,
        spatial_dim: usize,
        frames: Vec<f32>,
    ) -> Result<Self> {
        if raw_length == 0 || spatial_dim == 0 {
            return Err(Error::precondition("video dimensions must be positive"));
        }
        if frames.len() != raw_length * spatial_dim {
            return Err(Error::precondition(format!(
                "video {id}: expected {} values, got {}",
                raw_length * spatial_dim,
                frames.len()
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("video {id} has non-finite frame values")));
        }
        Ok(Video { id, class_id, kind, raw_length, spatial_dim, frames })
    }

    pub fn raw_length(&self) -> usize {
        self.raw_length
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.frames[t * self.spatial_dim..(t + 1) * self.spatial_dim]
    }

    pub fn frames(&self) -> &[f32] {
        &self.frames
    }
}

/// A sparse sample of `num_frames` frames from one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub source_video_id: usize,
    pub stride: usize,
    pub offset: usize,
    num_frames: usize,
    spatial_dim: usize,
    frames: Vec<f64>,
}

impl Clip {
    /// Builds a clip from explicit frame data (frame-major).
    pub fn from_frames(
        source_video_id: usize,
        num_frames: usize,
        spatial_dim: usize,
        frames: Vec<f64>,
    ) -> Result<Self> {
        if num_frames == 0 || spatial_dim == 0 || frames.len() != num_frames * spatial_dim {
            return Err(Error::precondition(format!(
                "clip shape {num_frames}x{spatial_dim} does not match {} values",
                frames.len()
            )));
        }
        Ok(Clip { source_video_id, stride: 1, offset: 0, num_frames, spatial_dim, frames })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.spatial_dim..(t + 1) * self.spatial_dim]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.frames[t * self.spatial_dim..(t + 1) * self.spatial_dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.frames
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.frames
    }
}

/// Parameters of the generated benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub spatial_class_count: usize,
    pub temporal_class_count: usize,
    pub videos_per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub raw_length: usize,
    pub spatial_dim: usize,
    /// Relative amplitude of the temporal-class modulation.
    pub modulation_depth: f64,
    /// Frequency of the first temporal class, in cycles per `raw_length` frames.
    pub base_frequency: f64,
    /// Frequency increment between consecutive temporal classes.
    pub frequency_step: f64,
    /// Weight of the class-specific part of each spatial template relative to
    /// the part shared by all classes. Smaller means spatial classes are harder
    /// to tell apart. The temporal template always uses weight 1, so the
    /// temporal family stays distinct from the spatial ones.
    pub template_separation: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            num_classes: 10,
            spatial_class_count: 5,
            temporal_class_count: 5,
            videos_per_class: 200,
            noise_sigma: 0.1,
            seed: 0,
            raw_length: DEFAULT_RAW_LENGTH,
            spatial_dim: DEFAULT_SPATIAL_DIM,
            modulation_depth: 0.5,
            base_frequency: 1.0,
            frequency_step: 0.5,
            template_separation: 1.0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::config("num_classes must be positive"));
        }
        if self.spatial_class_count + self.temporal_class_count != self.num_classes {
            return Err(Error::config(format!(
                "spatial ({}) + temporal ({}) class counts must equal num_classes ({})",
                self.spatial_class_count, self.temporal_class_count, self.num_classes
            )));
        }
        if self.videos_per_class == 0 {
            return Err(Error::config("videos_per_class must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma must be finite and non-negative"));
        }
        if self.raw_length == 0 || self.spatial_dim == 0 {
            return Err(Error::config("raw_length and spatial_dim must be positive"));
        }
        for (name, v) in [
            ("modulation_depth", self.modulation_depth),
            ("base_frequency", self.base_frequency),
            ("frequency_step", self.frequency_step),
            ("template_separation", self.template_separation),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// Class kinds: spatial classes occupy ids `0..spatial_class_count`.
    pub fn kind_of(&self, class_id: usize) -> ClassKind {
        if class_id < self.spatial_class_count {
            ClassKind::Spatial
        } else {
            ClassKind::Temporal
        }
    }

    pub fn kinds(&self) -> Vec<ClassKind> {
        (0..self.num_classes).map(|c| self.kind_of(c)).collect()
    }

    /// Modulation frequency of a temporal class, `None` for spatial ones.
    pub fn frequency_of(&self, class_id: usize) -> Option<f64> {
        match self.kind_of(class_id) {
            ClassKind::Spatial => None,
            ClassKind::Temporal => {
                let rank = class_id - self.spatial_class_count;
                Some(self.base_frequency + rank as f64 * self.frequency_step)
            }
        }
    }

    /// Static template for every class. Temporal classes share one.
    pub fn templates(&self) -> Vec<Vec<f64>> {
        let mut shared_rng = stream_rng(self.seed, TEMPLATE_STREAM);
        let common = smooth_vector(&mut shared_rng, self.spatial_dim);
        let temporal_specific = smooth_vector(&mut shared_rng, self.spatial_dim);
        let temporal = mix(&common, &temporal_specific, 1.0);
        (0..self.num_classes)
            .map(|c| match self.kind_of(c) {
                ClassKind::Spatial => {
                    let mut rng = stream_rng(self.seed, TEMPLATE_STREAM + 1 + c as u64);
                    let specific = smooth_vector(&mut rng, self.spatial_dim);
                    mix(&common, &specific, self.template_separation)
                }
                ClassKind::Temporal => temporal.clone(),
            })
            .collect()
    }
}

const TEMPLATE_STREAM: u64 = 1 << 40;

/// Independent deterministic RNG stream derived from a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Smooth unit-RMS vector: a sum of a few low-frequency sinusoids over the
/// spatial axis. Smoothness keeps the blur and local-permutation strong
/// augmentations label-preserving.
fn smooth_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for _ in 0..4 {
        let freq = rng.random_range(1..=6) as f64;
        let phase = rng.random_range(0.0..2.0 * PI);
        let amp: f64 = rng.random_range(0.5..1.0);
        for (d, x) in v.iter_mut().enumerate() {
            *x += amp * (2.0 * PI * freq * d as f64 / dim as f64 + phase).sin();
        }
    }
    normalize_rms(&mut v);
    v
}

fn mix(common: &[f64], specific: &[f64], separation: f64) -> Vec<f64> {
    let mut v: Vec<f64> = common.iter().zip(specific).map(|(c, s)| c + separation * s).collect();
    normalize_rms(&mut v);
    v
}

fn normalize_rms(v: &mut [f64]) {
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    if rms > 0.0 {
        v.iter_mut().for_each(|x| *x /= rms);
    }
}

/// Generates `num_classes * videos_per_class` videos, class-major.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<Video>> {
    generate_dataset_with(spec, Exec::default())
}

pub fn generate_dataset_with(spec: &DatasetSpec, exec: Exec) -> Result<Vec<Video>> {
    spec.validate()?;
    render_range(spec, 0, spec.videos_per_class, exec)
}

/// Extra videos from the same classes and templates, `per_class` per class.
/// Their ids continue after the main dataset, so their noise and phases are
/// independent of it.
pub fn generate_heldout(spec: &DatasetSpec, per_class: usize, exec: Exec) -> Result<Vec<Video>> {
    spec.validate()?;
    render_range(spec, spec.num_classes * spec.videos_per_class, per_class, exec)
}

fn render_range(spec: &DatasetSpec, first_id: usize, per_class: usize, exec: Exec) -> Result<Vec<Video>> {
    let templates = spec.templates();
    par::try_map_indexed(exec, spec.num_classes * per_class, |i| {
        let class_id = i / per_class;
        let id = first_id + i;
        let frames = render_video(spec, &templates[class_id], class_id, id);
        Video::new(id, class_id, spec.kind_of(class_id), spec.raw_length, spec.spatial_dim, frames)
    })
}

fn render_video(spec: &DatasetSpec, template: &[f64], class_id: usize, id: usize) -> Vec<f32> {
    let mut rng = stream_rng(spec.seed, id as u64);
    let phase = rng.random_range(0.0..2.0 * PI);
    let freq = spec.frequency_of(class_id);
    let mut frames = Vec::with_capacity(spec.raw_length * spec.spatial_dim);
    for t in 0..spec.raw_length {
        let gain = match freq {
            None => 1.0,
            Some(f) => {
                let angle = 2.0 * PI * f * t as f64 / spec.raw_length as f64 + phase;
                1.0 + spec.modulation_depth * angle.sin()
            }
        };
        for &base in template {
            let mut x = gain * base;
            if spec.noise_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                x += spec.noise_sigma * z;
            }
            frames.push(x as f32);
        }
    }
    frames
}

/// How labeled videos are drawn from each class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitScheme {
    /// Equal labeled count in every class.
    Uniform,
    /// Per-class counts proportional to class size.
    CategoryWise,
}

/// Partition of a dataset into labeled and unlabeled pools, as indices into
/// the video list.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub scheme: SplitScheme,
}

fn class_members(videos: &[Video]) -> Vec<Vec<usize>> {
    let k = videos.iter().map(|v| v.class_id + 1).max().unwrap_or(0);
    let mut members = vec![Vec::new(); k];
    for (i, v) in videos.iter().enumerate() {
        members[v.class_id].push(i);
    }
    members
}

pub fn split_labeled(
    videos: &[Video],
    labeled_fraction: f64,
    scheme: SplitScheme,
    seed: u64,
) -> Result<SplitResult> {
    if !(labeled_fraction > 0.0 && labeled_fraction < 1.0) {
        return Err(Error::config(format!(
            "labeled fraction must lie in (0, 1), got {labeled_fraction}"
        )));
    }
    let members = class_members(videos);
    let present: Vec<usize> = (0..members.len()).filter(|&c| !members[c].is_empty()).collect();
    if present.is_empty() {
        return Err(Error::config("cannot split an empty dataset"));
    }
    let counts: Vec<usize> = match scheme {
        SplitScheme::Uniform => {
            let mean = videos.len() as f64 / present.len() as f64;
            let n = (labeled_fraction * mean).round() as usize;
            if n == 0 {
                return Err(Error::config(format!(
                    "labeled fraction {labeled_fraction} yields no labeled videos per class"
                )));
            }
            members
                .iter()
                .enumerate()
                .map(|(c, m)| {
                    if m.is_empty() {
                        Ok(0)
                    } else if m.len() <= n {
                        Err(Error::config(format!(
                            "class {c} has {} videos, too few for {n} labeled plus unlabeled",
                            m.len()
                        )))
                    } else {
                        Ok(n)
                    }
                })
                .collect::<Result<_>>()?
        }
        SplitScheme::CategoryWise => members
            .iter()
            .enumerate()
            .map(|(c, m)| {
                if m.is_empty() {
                    return Ok(0);
                }
                let n = (labeled_fraction * m.len() as f64).round() as usize;
                if n == 0 {
                    Err(Error::config(format!(
                        "labeled fraction {labeled_fraction} yields no labeled videos in class {c}"
                    )))
                } else {
                    Ok(n.min(m.len()))
                }
            })
            .collect::<Result<_>>()?,
    };

    let mut rng = stream_rng(seed, 0x5_0117);
    let mut is_labeled = vec![false; videos.len()];
    for (m, &n) in members.iter().zip(&counts) {
        let mut order = m.clone();
        order.shuffle(&mut rng);
        for &i in &order[..n] {
            is_labeled[i] = true;
        }
    }
    let (labeled, unlabeled): (Vec<usize>, Vec<usize>) =
        (0..videos.len()).partition(|&i| is_labeled[i]);
    Ok(SplitResult { labeled, unlabeled, scheme })
}

/// Largest legal start offset for a `num_frames` x `stride` clip.
pub fn max_offset(raw_length: usize, num_frames: usize, stride: usize) -> Option<usize> {
    raw_length.checked_sub(num_frames.checked_mul(stride)?)
}

/// Frames `offset, offset + stride, ..., offset + (num_frames - 1) * stride`.
pub fn sample_clip(video: &Video, num_frames: usize, stride: usize, offset: usize) -> Result<Clip> {
    if num_frames == 0 || stride == 0 {
        return Err(Error::precondition("clip frame count and stride must be positive"));
    }
    match max_offset(video.raw_length, num_frames, stride) {
        Some(max) if offset <= max => {}
        _ => {
            return Err(Error::precondition(format!(
                "clip {num_frames}x{stride} at offset {offset} exceeds {} raw frames",
                video.raw_length
            )))
        }
    }
    let dim = video.spatial_dim;
    let mut frames = Vec::with_capacity(num_frames * dim);
    for t in 0..num_frames {
        frames.extend(video.frame(offset + t * stride).iter().map(|&x| x as f64));
    }
    Ok(Clip { source_video_id: video.id, stride, offset, num_frames, spatial_dim: dim, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> DatasetSpec {
        DatasetSpec {
            num_classes: 4,
            spatial_class_count: 2,
            temporal_class_count: 2,
            videos_per_class: 6,
            seed: 3,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn zero_noise_spatial_frames_equal_template() {
        let spec = DatasetSpec { noise_sigma: 0.0, ..small_spec() };
        let videos = generate_dataset(&spec).unwrap();
        let templates = spec.templates();
        for v in videos.iter().filter(|v| v.class_id == 0) {
            for t in 0..v.raw_length() {
                let expected: Vec<f32> = templates[0].iter().map(|&x| x as f32).collect();
                assert_eq!(v.frame(t), &expected[..]);
            }
        }
    }

    #[test]
    fn counts_per_class() {
        let spec = DatasetSpec { videos_per_class: 200, ..DatasetSpec::default() };
        let videos = generate_dataset(&spec).unwrap();
        assert_eq!(videos.len(), 2000);
        for c in 0..10 {
            assert_eq!(videos.iter().filter(|v| v.class_id == c).count(), 200);
        }
    }

    #[test]
    fn invalid_spec_is_config_error() {
        let spec = DatasetSpec { spatial_class_count: 3, ..small_spec() };
        assert!(matches!(generate_dataset(&spec), Err(Error::Config(_))));
        let spec = DatasetSpec { videos_per_class: 0, ..small_spec() };
        assert!(matches!(generate_dataset(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn generation_is_independent_of_execution_mode() {
        let spec = small_spec();
        let a = generate_dataset_with(&spec, Exec::Sequential).unwrap();
        let b = generate_dataset_with(&spec, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_noise_temporal_frames_are_modulated_template() {
        let spec = DatasetSpec { noise_sigma: 0.0, ..small_spec() };
        let videos = generate_dataset(&spec).unwrap();
        let template = &spec.templates()[3];
        let omega = 2.0 * PI * spec.frequency_of(3).unwrap() / spec.raw_length as f64;
        for v in videos.iter().filter(|v| v.class_id == 3) {
            // Each frame is a scalar multiple of the shared template.
            let s: Vec<f64> = (0..v.raw_length())
                .map(|t| {
                    let gain = v.frame(t)[0] as f64 / template[0];
                    for d in 0..spec.spatial_dim {
                        assert!((v.frame(t)[d] as f64 - gain * template[d]).abs() < 1e-4);
                    }
                    (gain - 1.0) / spec.modulation_depth
                })
                .collect();
            // A pure sinusoid obeys s(t+1) + s(t-1) = 2 cos(omega) s(t).
            for t in 1..s.len() - 1 {
                assert!((s[t + 1] + s[t - 1] - 2.0 * omega.cos() * s[t]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn uniform_split_arithmetic() {
        let spec = DatasetSpec { videos_per_class: 200, ..DatasetSpec::default() };
        let videos = generate_dataset(&spec).unwrap();
        let s = split_labeled(&videos, 0.01, SplitScheme::Uniform, 1).unwrap();
        assert_eq!(s.labeled.len(), 20);
        let s = split_labeled(&videos, 0.10, SplitScheme::Uniform, 1).unwrap();
        assert_eq!(s.labeled.len(), 200);
        for c in 0..10 {
            assert_eq!(s.labeled.iter().filter(|&&i| videos[i].class_id == c).count(), 20);
        }
        assert_eq!(s.labeled.len() + s.unlabeled.len(), videos.len());
    }

    #[test]
    fn category_wise_is_proportional() {
        let frames = vec![0.0f32; 64 * 64];
        let videos: Vec<Video> = (0..400)
            .map(|i| {
                let class = usize::from(i >= 300);
                Video::new(i, class, ClassKind::Spatial, 64, 64, frames.clone()).unwrap()
            })
            .collect();
        let s = split_labeled(&videos, 0.1, SplitScheme::CategoryWise, 9).unwrap();
        let c0 = s.labeled.iter().filter(|&&i| videos[i].class_id == 0).count();
        let c1 = s.labeled.iter().filter(|&&i| videos[i].class_id == 1).count();
        assert_eq!((c0, c1), (30, 10));
    }

    #[test]
    fn split_rejects_empty_classes() {
        let videos = generate_dataset(&small_spec()).unwrap();
        let err = split_labeled(&videos, 0.01, SplitScheme::Uniform, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = split_labeled(&videos, 0.01, SplitScheme::CategoryWise, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn clip_indices() {
        let spec = DatasetSpec { videos_per_class: 1, ..DatasetSpec::default() };
        let videos = generate_dataset(&spec).unwrap();
        let v = &videos[7];
        let c = sample_clip(v, 8, 8, 0).unwrap();
        for t in 0..8 {
            let expected: Vec<f64> = v.frame(8 * t).iter().map(|&x| x as f64).collect();
            assert_eq!(c.frame(t), &expected[..]);
        }
        let c = sample_clip(v, 16, 4, 0).unwrap();
        assert_eq!(c.num_frames(), 16);
        let expected: Vec<f64> = v.frame(60).iter().map(|&x| x as f64).collect();
        assert_eq!(c.frame(15), &expected[..]);
        let c = sample_clip(v, 64, 1, 0).unwrap();
        let all: Vec<f64> = v.frames().iter().map(|&x| x as f64).collect();
        assert_eq!(c.data(), &all[..]);
        assert!(matches!(sample_clip(v, 8, 8, 1), Err(Error::Precondition(_))));
        assert!(matches!(sample_clip(v, 0, 8, 0), Err(Error::Precondition(_))));
    }
}
