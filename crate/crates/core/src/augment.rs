//! Clip augmentations.
//!
//! Spatial transforms act on the feature axis and are drawn once per clip,
//! then applied identically to every frame. Temporal augmentation comes from
//! where (offset) and how densely (stride) each network's clip is sampled.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::synthdata::{max_offset, sample_clip, Clip, Video};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentKind {
    Standard,
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    pub kind: AugmentKind,
    pub jitter_sigma: f64,
    pub cutout_fraction: f64,
    pub transform_count: usize,
}

/// Spatial block size used by the local-permutation transform.
const PERMUTE_BLOCK: usize = 4;

impl AugmentationSpec {
    pub fn standard() -> Self {
        AugmentationSpec { kind: AugmentKind::Standard, jitter_sigma: 0.01, cutout_fraction: 0.0, transform_count: 0 }
    }

    pub fn weak() -> Self {
        AugmentationSpec { kind: AugmentKind::Weak, jitter_sigma: 0.01, cutout_fraction: 0.0, transform_count: 0 }
    }

    pub fn strong() -> Self {
        AugmentationSpec { kind: AugmentKind::Strong, jitter_sigma: 0.0, cutout_fraction: 0.25, transform_count: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::config("jitter_sigma must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.cutout_fraction) {
            return Err(Error::config("cutout_fraction must lie in [0, 1)"));
        }
        if self.kind == AugmentKind::Weak && (self.transform_count != 0 || self.cutout_fraction != 0.0) {
            return Err(Error::config("weak augmentation takes no transforms and no cutout"));
        }
        Ok(())
    }

    /// Applies this augmentation according to its kind.
    pub fn apply<R: Rng + ?Sized>(&self, clip: &Clip, rng: &mut R) -> Clip {
        match self.kind {
            AugmentKind::Standard | AugmentKind::Weak => weak_augment(clip, self, rng),
            AugmentKind::Strong => strong_augment(clip, self, rng),
        }
    }
}

/// Adds one jitter vector of scale `jitter_sigma` to every frame.
pub fn weak_augment<R: Rng + ?Sized>(clip: &Clip, spec: &AugmentationSpec, rng: &mut R) -> Clip {
    let mut out = clip.clone();
    if spec.jitter_sigma > 0.0 {
        let field: Vec<f64> = (0..clip.spatial_dim())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                spec.jitter_sigma * z
            })
            .collect();
        for t in 0..out.num_frames() {
            for (x, j) in out.frame_mut(t).iter_mut().zip(&field) {
                *x += j;
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
enum SpatialTransform {
    Scale(f64),
    Bias(f64),
    Permute(Vec<usize>),
    Blur,
}

impl SpatialTransform {
    fn draw<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        match rng.random_range(0..4) {
            0 => SpatialTransform::Scale(rng.random_range(0.7..1.3)),
            1 => SpatialTransform::Bias(rng.random_range(-0.5..0.5)),
            2 => {
                let mut perm: Vec<usize> = (0..dim).collect();
                for block in perm.chunks_mut(PERMUTE_BLOCK) {
                    block.shuffle(rng);
                }
                SpatialTransform::Permute(perm)
            }
            _ => SpatialTransform::Blur,
        }
    }

    fn apply(&self, frame: &mut [f64]) {
        match self {
            SpatialTransform::Scale(s) => frame.iter_mut().for_each(|x| *x *= s),
            SpatialTransform::Bias(b) => frame.iter_mut().for_each(|x| *x += b),
            SpatialTransform::Permute(perm) => {
                let src = frame.to_vec();
                for (x, &p) in frame.iter_mut().zip(perm) {
                    *x = src[p];
                }
            }
            SpatialTransform::Blur => {
                let src = frame.to_vec();
                let n = src.len();
                for (i, x) in frame.iter_mut().enumerate() {
                    let left = src[i.saturating_sub(1)];
                    let right = src[(i + 1).min(n - 1)];
                    *x = 0.25 * left + 0.5 * src[i] + 0.25 * right;
                }
            }
        }
    }
}

/// Spatial positions zeroed by a cutout of `fraction * dim` starting at `start`.
pub fn cutout_len(dim: usize, fraction: f64) -> usize {
    ((fraction * dim as f64).round() as usize).min(dim)
}

/// Random transforms followed by a contiguous spatial cutout, identical on
/// every frame.
pub fn strong_augment<R: Rng + ?Sized>(clip: &Clip, spec: &AugmentationSpec, rng: &mut R) -> Clip {
    let mut out = weak_augment(clip, spec, rng);
    let dim = clip.spatial_dim();
    let transforms: Vec<SpatialTransform> =
        (0..spec.transform_count).map(|_| SpatialTransform::draw(dim, rng)).collect();
    let len = cutout_len(dim, spec.cutout_fraction);
    let start = if len > 0 { rng.random_range(0..=dim - len) } else { 0 };
    for t in 0..out.num_frames() {
        let frame = out.frame_mut(t);
        for tr in &transforms {
            tr.apply(frame);
        }
        frame[start..start + len].fill(0.0);
    }
    out
}

/// Frame counts and strides for the two networks plus the offset between
/// their clips, in raw frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalViewSpec {
    pub primary_frames: usize,
    pub primary_stride: usize,
    pub aux_frames: usize,
    pub aux_stride: usize,
    pub time_offset: usize,
}

impl Default for TemporalViewSpec {
    fn default() -> Self {
        TemporalViewSpec { primary_frames: 8, primary_stride: 8, aux_frames: 16, aux_stride: 4, time_offset: 0 }
    }
}

impl TemporalViewSpec {
    pub fn validate(&self, raw_length: usize) -> Result<()> {
        if self.primary_frames == 0 || self.primary_stride == 0 || self.aux_frames == 0 || self.aux_stride == 0 {
            return Err(Error::config("view frame counts and strides must be positive"));
        }
        if max_offset(raw_length, self.primary_frames, self.primary_stride).is_none()
            || max_offset(raw_length, self.aux_frames, self.aux_stride).is_none()
        {
            return Err(Error::config(format!(
                "views {}x{} / {}x{} do not fit in {raw_length} raw frames",
                self.primary_frames, self.primary_stride, self.aux_frames, self.aux_stride
            )));
        }
        Ok(())
    }
}

/// Clip at a uniformly random legal offset.
pub fn random_clip<R: Rng + ?Sized>(video: &Video, frames: usize, stride: usize, rng: &mut R) -> Result<Clip> {
    let max = max_offset(video.raw_length(), frames, stride)
        .ok_or_else(|| Error::config(format!("{frames}x{stride} clip does not fit the video")))?;
    sample_clip(video, frames, stride, rng.random_range(0..=max))
}

/// Primary and auxiliary clips of one video. The auxiliary clip starts
/// `min(time_offset, aux legal max)` raw frames after the primary one; the
/// shared base offset is drawn uniformly from the range where that shift is
/// legal for both views.
pub fn temporal_views<R: Rng + ?Sized>(
    video: &Video,
    spec: &TemporalViewSpec,
    rng: &mut R,
) -> Result<(Clip, Clip)> {
    spec.validate(video.raw_length())?;
    let max_f = max_offset(video.raw_length(), spec.primary_frames, spec.primary_stride).unwrap_or(0);
    let max_a = max_offset(video.raw_length(), spec.aux_frames, spec.aux_stride).unwrap_or(0);
    let shift = spec.time_offset.min(max_a);
    let base = rng.random_range(0..=max_f.min(max_a - shift));
    let clip_f = sample_clip(video, spec.primary_frames, spec.primary_stride, base)?;
    let clip_a = sample_clip(video, spec.aux_frames, spec.aux_stride, base + shift)?;
    Ok((clip_f, clip_a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate_dataset, stream_rng, DatasetSpec};

    fn video(raw_length: usize) -> Video {
        let spec = DatasetSpec { videos_per_class: 1, raw_length, ..DatasetSpec::default() };
        generate_dataset(&spec).unwrap().swap_remove(6)
    }

    #[test]
    fn weak_with_zero_jitter_is_identity() {
        let clip = sample_clip(&video(64), 8, 8, 0).unwrap();
        let spec = AugmentationSpec { jitter_sigma: 0.0, ..AugmentationSpec::weak() };
        let out = weak_augment(&clip, &spec, &mut stream_rng(1, 1));
        assert_eq!(out, clip);
    }

    #[test]
    fn weak_is_deterministic_and_temporally_consistent() {
        let clip = sample_clip(&video(64), 8, 8, 0).unwrap();
        let spec = AugmentationSpec::weak();
        let a = weak_augment(&clip, &spec, &mut stream_rng(4, 2));
        let b = weak_augment(&clip, &spec, &mut stream_rng(4, 2));
        assert_eq!(a, b);
        assert_eq!(a.num_frames(), 8);
        let delta0: Vec<f64> = a.frame(0).iter().zip(clip.frame(0)).map(|(x, y)| x - y).collect();
        let delta7: Vec<f64> = a.frame(7).iter().zip(clip.frame(7)).map(|(x, y)| x - y).collect();
        for (u, v) in delta0.iter().zip(&delta7) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_identity_case() {
        let clip = sample_clip(&video(64), 8, 8, 0).unwrap();
        let spec = AugmentationSpec { transform_count: 0, cutout_fraction: 0.0, ..AugmentationSpec::strong() };
        assert_eq!(strong_augment(&clip, &spec, &mut stream_rng(2, 2)), clip);
    }

    #[test]
    fn cutout_mask_is_shared_across_frames() {
        let clip = sample_clip(&video(64), 8, 8, 0).unwrap();
        let spec = AugmentationSpec { transform_count: 0, ..AugmentationSpec::strong() };
        for seed in 0..20 {
            let out = strong_augment(&clip, &spec, &mut stream_rng(seed, 3));
            let zeros = |t: usize| -> Vec<usize> {
                (0..64).filter(|&d| out.frame(t)[d] == 0.0).collect()
            };
            let z0 = zeros(0);
            assert_eq!(z0.len(), 16);
            assert!(z0.windows(2).all(|w| w[1] == w[0] + 1));
            assert_eq!(z0, zeros(7));
        }
    }

    #[test]
    fn views_identical_without_offset_or_rate_change() {
        let v = video(80);
        let spec = TemporalViewSpec { aux_frames: 8, aux_stride: 8, ..TemporalViewSpec::default() };
        let (f, a) = temporal_views(&v, &spec, &mut stream_rng(3, 3)).unwrap();
        assert_eq!(f, a);
    }

    #[test]
    fn dense_view_covers_sparse_view() {
        let v = video(64);
        let (f, a) = temporal_views(&v, &TemporalViewSpec::default(), &mut stream_rng(0, 0)).unwrap();
        assert_eq!((f.offset, a.offset), (0, 0));
        for t in 0..8 {
            assert_eq!(f.frame(t), a.frame(2 * t));
        }
    }

    #[test]
    fn offsets_differ_by_clamped_shift() {
        let v = video(80);
        for ts in [3, 10, 16, 40] {
            let spec = TemporalViewSpec { time_offset: ts, ..TemporalViewSpec::default() };
            for seed in 0..10 {
                let (f, a) = temporal_views(&v, &spec, &mut stream_rng(seed, 9)).unwrap();
                assert_eq!(a.offset - f.offset, ts.min(16));
            }
        }
    }

    #[test]
    fn infeasible_views() {
        let v = video(64);
        let spec = TemporalViewSpec { aux_frames: 32, ..TemporalViewSpec::default() };
        assert!(matches!(temporal_views(&v, &spec, &mut stream_rng(0, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn weak_spec_invariant() {
        let bad = AugmentationSpec { transform_count: 1, ..AugmentationSpec::weak() };
        assert!(bad.validate().is_err());
        assert!(AugmentationSpec::strong().validate().is_ok());
    }
}
