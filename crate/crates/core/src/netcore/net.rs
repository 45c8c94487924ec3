use rand::Rng;

use super::autodiff::{Matrix, NodeId, Tape};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::synthdata::{stream_rng, Clip};

/// Architecture of one member of the scalable network family:
/// per-frame linear embedding, `depth_blocks` residual temporal convolutions
/// (`h + softplus(conv3(h))`), mean pooling over time, linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalableNetConfig {
    pub depth_blocks: usize,
    pub width_factor: f64,
    pub base_channels: usize,
    pub num_classes: usize,
    pub input_frames: usize,
    pub spatial_dim: usize,
}

impl ScalableNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth_blocks == 0 {
            return Err(Error::config("depth_blocks must be positive"));
        }
        if !(self.width_factor > 0.0 && self.width_factor <= 1.0) {
            return Err(Error::config(format!(
                "width_factor must lie in (0, 1], got {}",
                self.width_factor
            )));
        }
        if self.base_channels == 0 || self.num_classes == 0 {
            return Err(Error::config("base_channels and num_classes must be positive"));
        }
        if self.input_frames == 0 || self.spatial_dim == 0 {
            return Err(Error::config("input_frames and spatial_dim must be positive"));
        }
        Ok(())
    }

    /// Channels in every block: `max(1, round(base_channels * width_factor))`.
    pub fn channels(&self) -> usize {
        ((self.base_channels as f64 * self.width_factor).round() as usize).max(1)
    }

    pub fn param_count(&self) -> usize {
        let c = self.channels();
        (self.spatial_dim + 1) * c + self.depth_blocks * (3 * c + 1) * c + (c + 1) * self.num_classes
    }
}

pub fn block_weight(i: usize) -> String {
    format!("block{i}.weight")
}

pub fn block_bias(i: usize) -> String {
    format!("block{i}.bias")
}

/// Fresh parameters with fan-in scaled uniform weights and zero biases.
pub fn build_net(config: &ScalableNetConfig, seed: u64) -> Result<ParamStore> {
    config.validate()?;
    let c = config.channels();
    let mut rng = stream_rng(seed, 0xBEEF);
    let mut uniform = |rows: usize, cols: usize, fan_in: usize| -> Vec<f64> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect()
    };
    let mut p = ParamStore::default();
    p.insert("embed.weight", config.spatial_dim, c, uniform(config.spatial_dim, c, config.spatial_dim))?;
    p.insert("embed.bias", 1, c, vec![0.0; c])?;
    for i in 0..config.depth_blocks {
        p.insert(&block_weight(i), 3 * c, c, uniform(3 * c, c, 3 * c))?;
        p.insert(&block_bias(i), 1, c, vec![0.0; c])?;
    }
    p.insert("head.weight", c, config.num_classes, uniform(c, config.num_classes, c))?;
    p.insert("head.bias", 1, config.num_classes, vec![0.0; config.num_classes])?;
    Ok(p)
}

fn check_clip(config: &ScalableNetConfig, clip: &Clip) -> Result<()> {
    if clip.num_frames() != config.input_frames || clip.spatial_dim() != config.spatial_dim {
        return Err(Error::precondition(format!(
            "clip is {}x{}, network expects {}x{}",
            clip.num_frames(),
            clip.spatial_dim(),
            config.input_frames,
            config.spatial_dim
        )));
    }
    Ok(())
}

/// Records the forward pass of one clip; returns the `1 x K` logits node.
pub fn record_forward(tape: &mut Tape<'_>, config: &ScalableNetConfig, clip: &Clip) -> Result<NodeId> {
    check_clip(config, clip)?;
    let x = tape.input(Matrix::new(clip.num_frames(), clip.spatial_dim(), clip.data().to_vec())?);
    let (w, b) = (tape.param("embed.weight")?, tape.param("embed.bias")?);
    let mut h = tape.linear(x, w, b)?;
    for i in 0..config.depth_blocks {
        let (w, b) = (tape.param(&block_weight(i))?, tape.param(&block_bias(i))?);
        let c = tape.conv3(h, w, b)?;
        let a = tape.softplus(c)?;
        h = tape.add(h, a)?;
    }
    let pooled = tape.mean_rows(h)?;
    let (w, b) = (tape.param("head.weight")?, tape.param("head.bias")?);
    tape.linear(pooled, w, b)
}

/// Logits for a single clip.
pub fn forward_one(config: &ScalableNetConfig, params: &ParamStore, clip: &Clip) -> Result<Vec<f64>> {
    let mut tape = Tape::new(params);
    let logits = record_forward(&mut tape, config, clip)?;
    let out = tape.value(logits)?.to_vec();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("network produced non-finite logits".into()));
    }
    Ok(out)
}

/// Batch logits, one row per clip.
pub fn forward(config: &ScalableNetConfig, params: &ParamStore, clips: &[Clip]) -> Result<Vec<Vec<f64>>> {
    forward_with(config, params, clips, Exec::default())
}

pub fn forward_with(
    config: &ScalableNetConfig,
    params: &ParamStore,
    clips: &[Clip],
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    par::try_map_indexed(exec, clips.len(), |i| forward_one(config, params, &clips[i]))
}
