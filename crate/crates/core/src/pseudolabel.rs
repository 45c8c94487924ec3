//! Pseudo-label fusion between a primary and an auxiliary network.
//!
//! Each scheme picks, per network, the distribution `q` that supervises it
//! on an unlabeled sample. The decision is confident when `max(q) >= tau`,
//! and its target is `argmax(q)` (lowest index on ties). Inputs are plain
//! probability vectors, so nothing computed here can carry a gradient.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A class-probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    probs: Vec<f64>,
}

impl Prediction {
    /// Validates entries are finite, non-negative and sum to 1 within 1e-6.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::precondition("empty probability vector"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::precondition("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::precondition(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Prediction { probs })
    }

    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        Prediction { probs }
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Self {
        Prediction { probs: vec![1.0 / k as f64; k] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Element-wise arithmetic mean of several predictions.
    pub fn mean(preds: &[Prediction]) -> Result<Prediction> {
        let first = preds.first().ok_or_else(|| Error::precondition("mean of no predictions"))?;
        let k = first.len();
        if preds.iter().any(|p| p.len() != k) {
            return Err(Error::precondition("predictions disagree on class count"));
        }
        let mut acc = vec![0.0; k];
        for p in preds {
            for (a, v) in acc.iter_mut().zip(&p.probs) {
                *a += v;
            }
        }
        let n = preds.len() as f64;
        Ok(Prediction { probs: acc.into_iter().map(|a| a / n).collect() })
    }
}

/// Label-fusion scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeId {
    /// Each network is supervised by the other one.
    Cross,
    /// Own prediction when confident, otherwise the sibling's.
    SelfFirst,
    /// Sibling's prediction when confident, otherwise its own.
    OppositeFirst,
    /// Both follow whichever prediction has the larger top probability.
    Maximum,
    /// Both follow the mean of the two predictions.
    Average,
    /// Each network supervises itself (single-model baseline).
    FixMatchSingle,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::Cross,
        SchemeId::SelfFirst,
        SchemeId::OppositeFirst,
        SchemeId::Maximum,
        SchemeId::Average,
        SchemeId::FixMatchSingle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Cross => "cross",
            SchemeId::SelfFirst => "self_first",
            SchemeId::OppositeFirst => "opposite_first",
            SchemeId::Maximum => "maximum",
            SchemeId::Average => "average",
            SchemeId::FixMatchSingle => "fixmatch",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown pseudo-label scheme '{s}'")))
    }
}

/// Where a supervising distribution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Primary,
    Auxiliary,
    Fused,
}

/// Outcome of pseudo-labeling one unlabeled sample for one network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabelDecision {
    pub confident: bool,
    /// Meaningful only when `confident`.
    pub target_class: usize,
    pub source: LabelSource,
    pub confidence: f64,
}

impl PseudoLabelDecision {
    fn from_distribution(q: &Prediction, source: LabelSource, tau: f64) -> Self {
        let confidence = q.max();
        PseudoLabelDecision { confident: confidence >= tau, target_class: q.argmax(), source, confidence }
    }

    /// Same outcome ignoring where the label came from.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.confident == other.confident
            && self.target_class == other.target_class
            && self.confidence == other.confidence
    }
}

fn check_inputs(p_f: &Prediction, p_a: &Prediction, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::precondition(format!("tau must lie in (0, 1], got {tau}")));
    }
    if p_f.len() != p_a.len() {
        return Err(Error::precondition("predictions disagree on class count"));
    }
    Prediction::new(p_f.probs.clone())?;
    Prediction::new(p_a.probs.clone())?;
    Ok(())
}

/// Decisions for the primary and the auxiliary network, in that order.
pub fn decide(
    scheme: SchemeId,
    p_f: &Prediction,
    p_a: &Prediction,
    tau: f64,
) -> Result<(PseudoLabelDecision, PseudoLabelDecision)> {
    use LabelSource::{Auxiliary, Fused, Primary};
    check_inputs(p_f, p_a, tau)?;
    let make = PseudoLabelDecision::from_distribution;
    let f_conf = p_f.max() >= tau;
    let a_conf = p_a.max() >= tau;
    Ok(match scheme {
        SchemeId::Cross => (make(p_a, Auxiliary, tau), make(p_f, Primary, tau)),
        SchemeId::SelfFirst => (
            if f_conf { make(p_f, Primary, tau) } else { make(p_a, Auxiliary, tau) },
            if a_conf { make(p_a, Auxiliary, tau) } else { make(p_f, Primary, tau) },
        ),
        SchemeId::OppositeFirst => (
            if a_conf { make(p_a, Auxiliary, tau) } else { make(p_f, Primary, tau) },
            if f_conf { make(p_f, Primary, tau) } else { make(p_a, Auxiliary, tau) },
        ),
        SchemeId::Maximum => {
            let d = if p_f.max() >= p_a.max() { make(p_f, Primary, tau) } else { make(p_a, Auxiliary, tau) };
            (d, d)
        }
        SchemeId::Average => {
            let mean = Prediction::mean(&[p_f.clone(), p_a.clone()])?;
            let d = make(&mean, Fused, tau);
            (d, d)
        }
        SchemeId::FixMatchSingle => (make(p_f, Primary, tau), make(p_a, Auxiliary, tau)),
    })
}

/// Element-wise [`decide`] over aligned batches.
pub fn batch_decide(
    scheme: SchemeId,
    preds_f: &[Prediction],
    preds_a: &[Prediction],
    tau: f64,
) -> Result<Vec<(PseudoLabelDecision, PseudoLabelDecision)>> {
    if preds_f.len() != preds_a.len() {
        return Err(Error::precondition(format!(
            "batch lengths differ: {} vs {}",
            preds_f.len(),
            preds_a.len()
        )));
    }
    preds_f.iter().zip(preds_a).map(|(f, a)| decide(scheme, f, a, tau)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> Prediction {
        Prediction::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cross_example() {
        let (f, a) = decide(SchemeId::Cross, &p(&[0.6, 0.4]), &p(&[0.95, 0.05]), 0.9).unwrap();
        assert!(f.confident && f.target_class == 0 && f.source == LabelSource::Auxiliary);
        assert!(!a.confident);
    }

    #[test]
    fn average_example() {
        let (f, a) = decide(SchemeId::Average, &p(&[0.8, 0.2]), &p(&[0.6, 0.4]), 0.9).unwrap();
        assert!(!f.confident && !a.confident);
        assert!((f.confidence - 0.7).abs() < 1e-12);
        assert_eq!(f, a);
    }

    #[test]
    fn maximum_example() {
        let (f, a) = decide(SchemeId::Maximum, &p(&[0.92, 0.08]), &p(&[0.05, 0.95]), 0.9).unwrap();
        assert!(f.confident && f.target_class == 1 && f.source == LabelSource::Auxiliary);
        assert_eq!(f, a);
        // Ties prefer the primary.
        let (f, _) = decide(SchemeId::Maximum, &p(&[0.95, 0.05]), &p(&[0.05, 0.95]), 0.9).unwrap();
        assert_eq!((f.target_class, f.source), (0, LabelSource::Primary));
    }

    #[test]
    fn self_first_example() {
        let (f, a) = decide(SchemeId::SelfFirst, &p(&[0.95, 0.05]), &p(&[0.3, 0.7]), 0.9).unwrap();
        assert!(f.confident && f.target_class == 0 && f.source == LabelSource::Primary);
        assert!(a.confident && a.target_class == 0 && a.source == LabelSource::Primary);
    }

    #[test]
    fn argmax_tie_takes_lowest_index() {
        assert_eq!(p(&[0.4, 0.4, 0.2]).argmax(), 0);
        assert_eq!(p(&[0.2, 0.4, 0.4]).argmax(), 1);
    }

    #[test]
    fn threshold_is_inclusive() {
        let (f, _) = decide(SchemeId::Cross, &p(&[0.5, 0.5]), &p(&[0.75, 0.25]), 0.75).unwrap();
        assert!(f.confident);
    }

    #[test]
    fn invalid_inputs() {
        let bad = Prediction::from_normalized(vec![0.7, 0.7]);
        assert!(decide(SchemeId::Cross, &bad, &p(&[0.5, 0.5]), 0.9).is_err());
        assert!(decide(SchemeId::Cross, &p(&[0.5, 0.5]), &p(&[0.5, 0.5]), 0.0).is_err());
        assert!(decide(SchemeId::Cross, &p(&[0.5, 0.5]), &p(&[1.0, 0.0, 0.0]), 0.9).is_err());
        assert!(Prediction::new(vec![0.5, 0.6]).is_err());
        assert!(Prediction::new(vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn batch_cases() {
        assert!(batch_decide(SchemeId::Cross, &[], &[], 0.9).unwrap().is_empty());
        let fs = [p(&[0.6, 0.4]), p(&[0.99, 0.01]), p(&[0.1, 0.9])];
        let as_ = [p(&[0.95, 0.05]), p(&[0.5, 0.5]), p(&[0.3, 0.7])];
        let batch = batch_decide(SchemeId::OppositeFirst, &fs, &as_, 0.9).unwrap();
        for i in 0..3 {
            assert_eq!(batch[i], decide(SchemeId::OppositeFirst, &fs[i], &as_[i], 0.9).unwrap());
        }
        let low = [p(&[0.6, 0.4]), p(&[0.5, 0.5])];
        let none = batch_decide(SchemeId::Maximum, &low, &low, 0.9).unwrap();
        assert!(none.iter().all(|(f, a)| !f.confident && !a.confident));
        assert!(batch_decide(SchemeId::Cross, &fs, &as_[..2], 0.9).is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in SchemeId::ALL {
            assert_eq!(s.as_str().parse::<SchemeId>().unwrap(), s);
        }
        assert!("bogus".parse::<SchemeId>().is_err());
    }

    fn distribution(k: usize) -> impl Strategy<Value = Prediction> {
        proptest::collection::vec(0.001f64..1.0, k).prop_map(|w| {
            let total: f64 = w.iter().sum();
            Prediction::new(w.iter().map(|x| x / total).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn cross_swaps_under_exchange(a in distribution(4), b in distribution(4), tau in 0.3f64..1.0) {
            let (f1, a1) = decide(SchemeId::Cross, &a, &b, tau).unwrap();
            let (f2, a2) = decide(SchemeId::Cross, &b, &a, tau).unwrap();
            prop_assert!(f1.same_outcome(&a2));
            prop_assert!(a1.same_outcome(&f2));
        }

        #[test]
        fn fused_schemes_agree(a in distribution(3), b in distribution(3), tau in 0.3f64..1.0) {
            for s in [SchemeId::Average, SchemeId::Maximum] {
                let (f, x) = decide(s, &a, &b, tau).unwrap();
                prop_assert_eq!(f, x);
            }
        }

        #[test]
        fn self_and_opposite_coincide_when_one_is_confident(
            a in distribution(3), b in distribution(3), tau in 0.34f64..0.6
        ) {
            prop_assume!((a.max() >= tau) != (b.max() >= tau));
            let s = decide(SchemeId::SelfFirst, &a, &b, tau).unwrap();
            let o = decide(SchemeId::OppositeFirst, &a, &b, tau).unwrap();
            prop_assert_eq!(s, o);
        }

        #[test]
        fn raising_tau_never_adds_confidence(
            a in distribution(3), b in distribution(3), t1 in 0.3f64..1.0, t2 in 0.3f64..1.0
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            for s in SchemeId::ALL {
                let (fl, al) = decide(s, &a, &b, lo).unwrap();
                let (fh, ah) = decide(s, &a, &b, hi).unwrap();
                prop_assert!(!fh.confident || fl.confident);
                prop_assert!(!ah.confident || al.confident);
            }
        }

        #[test]
        fn fixmatch_equals_cross_on_identical_inputs(a in distribution(5), tau in 0.3f64..1.0) {
            let (f1, a1) = decide(SchemeId::FixMatchSingle, &a, &a, tau).unwrap();
            let (f2, a2) = decide(SchemeId::Cross, &a, &a, tau).unwrap();
            prop_assert!(f1.same_outcome(&f2) && a1.same_outcome(&a2));
        }
    }
}
