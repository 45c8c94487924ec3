use super::{NetPair, Network};
use crate::error::{Error, Result};
use crate::netcore::{cross_entropy_from_logits, forward_one, record_forward, softmax, Gradients, Tape};
use crate::par::{self, Exec};
use crate::pseudolabel::{decide, Prediction, PseudoLabelDecision, SchemeId};
use crate::synthdata::Clip;

/// A labeled video after standard augmentation, one clip per network.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub clip_f: Clip,
    pub clip_a: Clip,
    pub label: usize,
}

/// An unlabeled video as seen by both networks, weakly and strongly augmented.
#[derive(Debug, Clone)]
pub struct UnlabeledSample {
    pub weak_f: Clip,
    pub weak_a: Clip,
    pub strong_f: Clip,
    pub strong_a: Clip,
}

#[derive(Debug, Clone)]
pub struct UnsupervisedOutcome {
    pub loss_f: f64,
    pub loss_a: f64,
    /// `(decision_for_F, decision_for_A)` per sample.
    pub decisions: Vec<(PseudoLabelDecision, PseudoLabelDecision)>,
}

/// Value and gradients of the joint objective for one step.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss_sup_f: f64,
    pub loss_sup_a: f64,
    pub loss_unsup_f: f64,
    pub loss_unsup_a: f64,
    pub total: f64,
    pub grads_f: Gradients,
    /// `None` when the auxiliary network is not trained.
    pub grads_a: Option<Gradients>,
    pub decisions: Vec<(PseudoLabelDecision, PseudoLabelDecision)>,
}

pub fn total_loss(loss_sup_f: f64, loss_sup_a: f64, loss_unsup_f: f64, loss_unsup_a: f64, lambda: f64) -> f64 {
    (loss_sup_f + loss_sup_a) + lambda * (loss_unsup_f + loss_unsup_a)
}

fn predict(net: &Network, clip: &Clip) -> Result<Prediction> {
    softmax(&forward_one(&net.config, &net.params, clip)?)
}

fn loss_only(net: &Network, clip: &Clip, target: usize) -> Result<f64> {
    cross_entropy_from_logits(&forward_one(&net.config, &net.params, clip)?, target)
}

fn loss_and_grad(net: &Network, clip: &Clip, target: usize) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new(&net.params);
    let logits = record_forward(&mut tape, &net.config, clip)?;
    let loss = tape.softmax_xent(logits, target)?;
    Ok((tape.scalar(loss)?, tape.backward(loss)?))
}

fn non_empty<T>(batch: &[T], what: &str) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::precondition(format!("empty {what} batch")));
    }
    Ok(())
}

/// Mean cross-entropy of each network on its own clip of every labeled sample.
pub fn supervised_losses(pair: &NetPair, batch: &[LabeledSample]) -> Result<(f64, f64)> {
    non_empty(batch, "labeled")?;
    let mut sum_f = 0.0;
    let mut sum_a = 0.0;
    for s in batch {
        sum_f += loss_only(&pair.primary, &s.clip_f, s.label)?;
        sum_a += loss_only(&pair.auxiliary, &s.clip_a, s.label)?;
    }
    let n = batch.len() as f64;
    Ok((sum_f / n, sum_a / n))
}

/// Weak-view predictions; these are plain forward passes, so no gradient can
/// reach the parameters through them.
fn weak_predictions(
    pair: &NetPair,
    batch: &[UnlabeledSample],
    with_auxiliary: bool,
    exec: Exec,
) -> Result<Vec<(Prediction, Option<Prediction>)>> {
    par::try_map_indexed(exec, batch.len(), |i| {
        let p_f = predict(&pair.primary, &batch[i].weak_f)?;
        let p_a = if with_auxiliary { Some(predict(&pair.auxiliary, &batch[i].weak_a)?) } else { None };
        Ok((p_f, p_a))
    })
}

fn decisions_for(
    preds: &[(Prediction, Option<Prediction>)],
    scheme: SchemeId,
    tau: f64,
) -> Result<Vec<(PseudoLabelDecision, PseudoLabelDecision)>> {
    preds
        .iter()
        .map(|(p_f, p_a)| decide(scheme, p_f, p_a.as_ref().unwrap_or(p_f), tau))
        .collect()
}

/// Cross unsupervised losses, normalized by the batch size (not by the
/// number of confident samples).
pub fn unsupervised_losses(
    pair: &NetPair,
    batch: &[UnlabeledSample],
    scheme: SchemeId,
    tau: f64,
) -> Result<UnsupervisedOutcome> {
    non_empty(batch, "unlabeled")?;
    let preds = weak_predictions(pair, batch, true, Exec::Sequential)?;
    let decisions = decisions_for(&preds, scheme, tau)?;
    let mut sum_f = 0.0;
    let mut sum_a = 0.0;
    for (s, (d_f, d_a)) in batch.iter().zip(&decisions) {
        if d_f.confident {
            sum_f += loss_only(&pair.primary, &s.strong_f, d_f.target_class)?;
        }
        if d_a.confident {
            sum_a += loss_only(&pair.auxiliary, &s.strong_a, d_a.target_class)?;
        }
    }
    let n = batch.len() as f64;
    Ok(UnsupervisedOutcome { loss_f: sum_f / n, loss_a: sum_a / n, decisions })
}

#[derive(Clone, Copy)]
enum Job {
    SupF(usize),
    SupA(usize),
    UnsupF(usize, usize),
    UnsupA(usize, usize),
}

/// Loss terms and gradients for one step. An empty `unlabeled` batch gives
/// the supervised objective alone. With `with_auxiliary` false only the
/// primary network is evaluated and the auxiliary terms are zero.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    pair: &NetPair,
    labeled: &[LabeledSample],
    unlabeled: &[UnlabeledSample],
    scheme: SchemeId,
    tau: f64,
    lambda: f64,
    with_auxiliary: bool,
    exec: Exec,
) -> Result<Objective> {
    non_empty(labeled, "labeled")?;
    if !(lambda >= 0.0) {
        return Err(Error::precondition(format!("lambda must be non-negative, got {lambda}")));
    }
    let preds = weak_predictions(pair, unlabeled, with_auxiliary, exec)?;
    let decisions = decisions_for(&preds, scheme, tau)?;

    let mut jobs = Vec::new();
    for i in 0..labeled.len() {
        jobs.push(Job::SupF(i));
        if with_auxiliary {
            jobs.push(Job::SupA(i));
        }
    }
    for (i, (d_f, d_a)) in decisions.iter().enumerate() {
        if d_f.confident {
            jobs.push(Job::UnsupF(i, d_f.target_class));
        }
        if with_auxiliary && d_a.confident {
            jobs.push(Job::UnsupA(i, d_a.target_class));
        }
    }
    let unsup_grads = lambda > 0.0;
    let results = par::try_map_indexed(exec, jobs.len(), |j| -> Result<(f64, Option<Gradients>)> {
        let (net, clip, target, grads) = match jobs[j] {
            Job::SupF(i) => (&pair.primary, &labeled[i].clip_f, labeled[i].label, true),
            Job::SupA(i) => (&pair.auxiliary, &labeled[i].clip_a, labeled[i].label, true),
            Job::UnsupF(i, t) => (&pair.primary, &unlabeled[i].strong_f, t, unsup_grads),
            Job::UnsupA(i, t) => (&pair.auxiliary, &unlabeled[i].strong_a, t, unsup_grads),
        };
        if grads {
            let (l, g) = loss_and_grad(net, clip, target)?;
            Ok((l, Some(g)))
        } else {
            Ok((loss_only(net, clip, target)?, None))
        }
    })?;

    let w_sup = 1.0 / labeled.len() as f64;
    let w_unsup = if unlabeled.is_empty() { 0.0 } else { lambda / unlabeled.len() as f64 };
    let mut grads_f = Gradients::zeros_like(&pair.primary.params);
    let mut grads_a = Gradients::zeros_like(&pair.auxiliary.params);
    let (mut sup_f, mut sup_a, mut uns_f, mut uns_a) = (0.0, 0.0, 0.0, 0.0);
    for (job, (loss, g)) in jobs.iter().zip(&results) {
        match job {
            Job::SupF(_) => {
                sup_f += loss;
                grads_f.add_scaled(g.as_ref().expect("supervised gradient"), w_sup);
            }
            Job::SupA(_) => {
                sup_a += loss;
                grads_a.add_scaled(g.as_ref().expect("supervised gradient"), w_sup);
            }
            Job::UnsupF(..) => {
                uns_f += loss;
                if let Some(g) = g {
                    grads_f.add_scaled(g, w_unsup);
                }
            }
            Job::UnsupA(..) => {
                uns_a += loss;
                if let Some(g) = g {
                    grads_a.add_scaled(g, w_unsup);
                }
            }
        }
    }
    let loss_sup_f = sup_f * w_sup;
    let loss_sup_a = sup_a * w_sup;
    let (loss_unsup_f, loss_unsup_a) = if unlabeled.is_empty() {
        (0.0, 0.0)
    } else {
        let n = unlabeled.len() as f64;
        (uns_f / n, uns_a / n)
    };
    Ok(Objective {
        loss_sup_f,
        loss_sup_a,
        loss_unsup_f,
        loss_unsup_a,
        total: total_loss(loss_sup_f, loss_sup_a, loss_unsup_f, loss_unsup_a, lambda),
        grads_f,
        grads_a: with_auxiliary.then_some(grads_a),
        decisions,
    })
}
