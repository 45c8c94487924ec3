use super::Network;
use crate::error::{Error, Result};
use crate::netcore::{forward_one, softmax};
use crate::par::{self, Exec};
use crate::pseudolabel::Prediction;
use crate::synthdata::{max_offset, sample_clip, Video};

/// `num_clips` offsets spread evenly over `[0, max]`; a single clip sits in
/// the middle.
pub fn inference_offsets(max: usize, num_clips: usize) -> Vec<usize> {
    match num_clips {
        0 => Vec::new(),
        1 => vec![max / 2],
        n => (0..n).map(|i| (2 * i * max + (n - 1)) / (2 * (n - 1))).collect(),
    }
}

/// Mean softmax over `num_clips` evenly spaced clips of the video.
pub fn infer(net: &Network, video: &Video, num_clips: usize, frames: usize, stride: usize) -> Result<Prediction> {
    if num_clips == 0 {
        return Err(Error::precondition("num_clips must be at least 1"));
    }
    let max = max_offset(video.raw_length(), frames, stride).ok_or_else(|| {
        Error::config(format!("{frames}x{stride} clip does not fit {} raw frames", video.raw_length()))
    })?;
    let preds = inference_offsets(max, num_clips)
        .into_iter()
        .map(|offset| {
            let clip = sample_clip(video, frames, stride, offset)?;
            softmax(&forward_one(&net.config, &net.params, &clip)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Prediction::mean(&preds)
}

/// Predicted class per video, clips sampled at the network's input length.
pub fn evaluate(net: &Network, videos: &[Video], num_clips: usize, stride: usize) -> Result<Vec<Prediction>> {
    evaluate_with(net, videos, num_clips, stride, Exec::default())
}

pub fn evaluate_with(
    net: &Network,
    videos: &[Video],
    num_clips: usize,
    stride: usize,
    exec: Exec,
) -> Result<Vec<Prediction>> {
    par::try_map_indexed(exec, videos.len(), |i| {
        infer(net, &videos[i], num_clips, net.config.input_frames, stride)
    })
}

/// Fraction of predictions whose argmax equals the video's class.
pub fn accuracy(preds: &[Prediction], videos: &[Video]) -> f64 {
    if videos.is_empty() {
        return 0.0;
    }
    let correct = preds.iter().zip(videos).filter(|(p, v)| p.argmax() == v.class_id).count();
    correct as f64 / videos.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::ScalableNetConfig;
    use crate::synthdata::{generate_dataset, DatasetSpec};

    fn net() -> Network {
        let config = ScalableNetConfig {
            depth_blocks: 1,
            width_factor: 1.0,
            base_channels: 4,
            num_classes: 4,
            input_frames: 8,
            spatial_dim: 16,
        };
        Network::build(config, 5).unwrap()
    }

    fn video() -> Video {
        let spec = DatasetSpec {
            num_classes: 4,
            spatial_class_count: 2,
            temporal_class_count: 2,
            videos_per_class: 1,
            raw_length: 40,
            spatial_dim: 16,
            ..DatasetSpec::default()
        };
        generate_dataset(&spec).unwrap().swap_remove(3)
    }

    #[test]
    fn offsets() {
        assert_eq!(inference_offsets(24, 3), vec![0, 12, 24]);
        assert_eq!(inference_offsets(0, 3), vec![0, 0, 0]);
        assert_eq!(inference_offsets(10, 1), vec![5]);
        assert_eq!(inference_offsets(7, 2), vec![0, 7]);
    }

    #[test]
    fn three_clips_average_single_clip_calls() {
        let (n, v) = (net(), video());
        let combined = infer(&n, &v, 3, 8, 4).unwrap();
        let singles: Vec<Prediction> = [0, 4, 8]
            .iter()
            .map(|&o| softmax(&forward_one(&n.config, &n.params, &sample_clip(&v, 8, 4, o).unwrap()).unwrap()).unwrap())
            .collect();
        let mean = Prediction::mean(&singles).unwrap();
        for (a, b) in combined.probs().iter().zip(mean.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_network_is_uniform() {
        let mut n = net();
        n.params.values_mut().iter_mut().for_each(|v| v.fill(0.0));
        for clips in [1, 2, 5] {
            assert_eq!(infer(&n, &video(), clips, 8, 4).unwrap().probs(), &[0.25; 4]);
        }
    }

    #[test]
    fn infeasible_clip_spec() {
        assert!(matches!(infer(&net(), &video(), 3, 8, 8), Err(Error::Config(_))));
        assert!(matches!(infer(&net(), &video(), 0, 8, 4), Err(Error::Precondition(_))));
    }
}
