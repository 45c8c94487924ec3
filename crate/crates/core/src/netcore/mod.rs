//! Differentiable network family, loss functions and the SGD optimizer.

mod autodiff;
mod checkpoint;
mod net;
mod optim;
mod params;

pub use autodiff::{Gradients, Matrix, NodeId, Tape};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use net::{build_net, forward, forward_one, forward_with, record_forward, ScalableNetConfig};
pub use optim::{cosine_lr, sgd_step, OptimizerConfig, Schedule};
pub use params::ParamStore;

use crate::error::{Error, Result};
use crate::pseudolabel::Prediction;

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Result<Prediction> {
    if logits.is_empty() {
        return Err(Error::precondition("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("softmax input is not finite".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(Prediction::from_normalized(exps.into_iter().map(|e| e / total).collect()))
}

/// `logsumexp(z) - z[target]`, i.e. `-ln softmax(z)[target]`.
pub fn cross_entropy_from_logits(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::precondition(format!("target {target} outside 0..{}", logits.len())));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("cross-entropy input is not finite".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[target])
}

/// `-ln p[target]` for an explicit probability vector.
pub fn cross_entropy(prediction: &Prediction, target: usize) -> Result<f64> {
    let p = prediction
        .probs()
        .get(target)
        .ok_or_else(|| Error::precondition(format!("target {target} outside 0..{}", prediction.len())))?;
    Ok(-p.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap().probs(), &[0.5, 0.5]);
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!((p.probs()[0] - 1.0).abs() < 1e-12 && p.probs()[1] < 1e-300);
        let p = softmax(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert!((p.probs()[0] - 0.25).abs() < 1e-12);
        assert!((p.probs()[1] - 0.75).abs() < 1e-12);
        assert!(matches!(softmax(&[f64::NAN, 0.0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = softmax(&[0.0; 4]).unwrap();
        assert!((cross_entropy(&uniform, 2).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((cross_entropy_from_logits(&[0.0; 4], 1).unwrap() - 1.3862943611198906).abs() < 1e-12);
        let certain = Prediction::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(cross_entropy(&certain, 1).unwrap(), 0.0);
        assert!(matches!(cross_entropy_from_logits(&[0.0; 3], 3), Err(Error::Precondition(_))));
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        // -ln(e^2 / (e^2 + e^-1 + e^0)) computed term by term.
        let direct = -(2f64.exp() / (2f64.exp() + (-1f64).exp() + 1.0)).ln();
        let got = cross_entropy_from_logits(&[2.0, -1.0, 0.0], 0).unwrap();
        assert!((got - direct).abs() < 1e-10);
    }
}
