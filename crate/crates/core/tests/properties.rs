use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmpl_core::config::Config;
use cmpl_core::metrics::{pseudo_label_ratio, resample_repeat, subset_accuracy_curve};
use cmpl_core::pseudolabel::{LabelSource, PseudoLabelDecision, SchemeId};
use cmpl_core::synthdata::Clip;
use cmpl_core::trainer::{
    objective, unsupervised_losses, LabeledSample, MetricsLog, NetPair, NetShape, SubsetSnapshot, UnlabeledSample,
};
use cmpl_core::Exec;

const K: usize = 3;
const FRAMES: usize = 4;
const DIM: usize = 5;

fn clip(rng: &mut ChaCha8Rng, scale: f64) -> Clip {
    Clip::from_frames(0, FRAMES, DIM, (0..FRAMES * DIM).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn pair(seed: u64, scale: f64) -> NetPair {
    let shape = |w| NetShape { depth_blocks: 1, width_factor: w, base_channels: 4 };
    let mut p = NetPair::build(shape(1.0).to_config(K, FRAMES, DIM), shape(0.5).to_config(K, FRAMES, DIM), seed).unwrap();
    for net in [&mut p.primary, &mut p.auxiliary] {
        for v in net.params.values_mut() {
            v.iter_mut().for_each(|x| *x *= scale);
        }
    }
    p
}

fn batches(seed: u64, b_l: usize, b_u: usize) -> (Vec<LabeledSample>, Vec<UnlabeledSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labeled = (0..b_l)
        .map(|i| LabeledSample { clip_f: clip(&mut rng, 1.0), clip_a: clip(&mut rng, 1.0), label: i % K })
        .collect();
    let unlabeled = (0..b_u)
        .map(|_| UnlabeledSample {
            weak_f: clip(&mut rng, 2.0),
            weak_a: clip(&mut rng, 2.0),
            strong_f: clip(&mut rng, 1.0),
            strong_a: clip(&mut rng, 1.0),
        })
        .collect();
    (labeled, unlabeled)
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn objective_is_identical_in_both_execution_modes(seed in 0u64..1000, b_u in 1usize..8, tau in 0.34f64..0.9) {
        let p = pair(seed, 4.0);
        let (l, u) = batches(seed, 2, b_u);
        let seq = objective(&p, &l, &u, SchemeId::Cross, tau, 5.0, true, Exec::Sequential).unwrap();
        let par = objective(&p, &l, &u, SchemeId::Cross, tau, 5.0, true, Exec::Parallel).unwrap();
        prop_assert_eq!(seq.total.to_bits(), par.total.to_bits());
        prop_assert_eq!(bits(&seq.grads_f.flat()), bits(&par.grads_f.flat()));
        prop_assert_eq!(bits(&seq.grads_a.unwrap().flat()), bits(&par.grads_a.unwrap().flat()));
    }

    // The primary's own weak view only feeds the auxiliary's pseudo-label, so
    // changing it leaves the primary's unsupervised loss untouched.
    #[test]
    fn own_weak_view_does_not_reach_own_loss(seed in 0u64..1000, b_u in 1usize..6, tau in 0.34f64..0.9) {
        let p = pair(seed, 4.0);
        let (_, u) = batches(seed, 1, b_u);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xff);
        let mut moved = u.clone();
        for s in &mut moved {
            s.weak_f = clip(&mut rng, 2.0);
        }
        let a = unsupervised_losses(&p, &u, SchemeId::Cross, tau).unwrap();
        let b = unsupervised_losses(&p, &moved, SchemeId::Cross, tau).unwrap();
        prop_assert_eq!(a.loss_f.to_bits(), b.loss_f.to_bits());
    }

    // Unconfident samples add nothing but still count in the 1/B_u normalization.
    #[test]
    fn masked_samples_only_dilute(seed in 0u64..1000, b_u in 1usize..6, tau in 0.34f64..0.9) {
        let p = pair(seed, 4.0);
        let (_, u) = batches(seed, 1, b_u);
        let full = unsupervised_losses(&p, &u, SchemeId::Cross, tau).unwrap();
        let kept: Vec<UnlabeledSample> =
            u.iter().zip(&full.decisions).filter(|(_, (f, _))| f.confident).map(|(s, _)| s.clone()).collect();
        if kept.is_empty() {
            prop_assert_eq!(full.loss_f, 0.0);
        } else {
            let sub = unsupervised_losses(&p, &kept, SchemeId::Cross, tau).unwrap();
            let recon = sub.loss_f * kept.len() as f64 / b_u as f64;
            prop_assert!((recon - full.loss_f).abs() < 1e-12);
        }
    }

    #[test]
    fn repeat_resampling_matches_index_oracle(
        data in prop::collection::vec(-1.0f64..1.0, 8 * 3),
        stride in prop::sample::select(vec![1usize, 2, 4, 8]),
    ) {
        let c = Clip::from_frames(0, 8, 3, data).unwrap();
        let r = resample_repeat(&c, stride).unwrap();
        for t in 0..8 {
            prop_assert_eq!(r.frame(t), c.frame(t - t % stride));
        }
    }

    #[test]
    fn pseudo_label_ratio_recount(rows in prop::collection::vec((any::<bool>(), 0usize..4, 0usize..4), 1..40)) {
        let decisions: Vec<PseudoLabelDecision> = rows
            .iter()
            .map(|&(confident, target_class, _)| PseudoLabelDecision {
                confident,
                target_class,
                source: LabelSource::Auxiliary,
                confidence: 0.9,
            })
            .collect();
        let truth: Vec<usize> = rows.iter().map(|r| r.2).collect();
        let hits = rows.iter().filter(|r| r.0 && r.1 == r.2).count();
        let got = pseudo_label_ratio(&decisions, &truth).unwrap();
        prop_assert_eq!(got, hits as f64 / rows.len() as f64);
    }

    #[test]
    fn subset_curve_recount(
        rows in prop::collection::vec((0usize..3, 0usize..3, 0usize..3, 0usize..3, any::<bool>()), 1..30),
    ) {
        let truth: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let snap = SubsetSnapshot {
            epoch: 10,
            truth: truth.clone(),
            primary_pred: rows.iter().map(|r| r.1).collect(),
            aux_pred: rows.iter().map(|r| r.2).collect(),
            aux_confident: rows.iter().map(|r| r.4).collect(),
        };
        let reference = SubsetSnapshot {
            primary_pred: rows.iter().map(|r| r.3).collect(),
            aux_pred: Vec::new(),
            aux_confident: Vec::new(),
            ..snap.clone()
        };
        let log = MetricsLog { snapshots: vec![snap], ..MetricsLog::default() };
        let ref_log = MetricsLog { snapshots: vec![reference], ..MetricsLog::default() };
        let curve = subset_accuracy_curve(&log, Some(&ref_log)).unwrap();
        let chosen: Vec<_> = rows.iter().filter(|r| r.4).collect();
        if chosen.is_empty() {
            prop_assert!(curve.is_empty());
        } else {
            let n = chosen.len() as f64;
            let acc = |f: &dyn Fn(&(usize, usize, usize, usize, bool)) -> usize| {
                chosen.iter().filter(|r| f(r) == r.0).count() as f64 / n
            };
            prop_assert_eq!(curve.len(), 1);
            prop_assert_eq!(curve[0].subset_size, chosen.len());
            prop_assert_eq!(curve[0].acc_primary, acc(&|r| r.1));
            prop_assert_eq!(curve[0].acc_aux, acc(&|r| r.2));
            prop_assert_eq!(curve[0].acc_reference, Some(acc(&|r| r.3)));
        }
    }

    #[test]
    fn canonical_text_round_trips(tau in 0.05f64..1.0, epochs in 1usize..100, lambda in 0.0f64..10.0) {
        let mut c = Config::default();
        c.apply_overrides(&[format!("tau={tau}"), format!("epochs={epochs}"), format!("lambda={lambda}")]).unwrap();
        let back = Config::parse(&c.canonical_text()).unwrap();
        prop_assert_eq!(back.hash(), c.hash());
        prop_assert_eq!(back.experiment(0).unwrap(), c.experiment(0).unwrap());
    }
}
