use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::data::{Example, Target};
use super::kendall::kendall_tau;
use super::loss::{sigmoid, LossKind};
use super::model::{output_loss, Trainable};
use crate::error::{ensure, Error, Result};
use crate::wsdata::{GroupTag, NeuronPermutation};

/// Worker threads for per-example gradients, from `NFKIT_THREADS` (default 1).
pub fn thread_count() -> usize {
    std::env::var("NFKIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn per_example<M: Trainable>(
    model: &M,
    batch: &[Example],
    loss: LossKind,
    threads: usize,
) -> Vec<Result<(f64, Vec<Vec<f64>>)>> {
    let one = |ex: &Example| {
        let mut g = model.zero_grads();
        model.loss_grad(ex, loss, &mut g).map(|l| (l, g))
    };
    if threads <= 1 || batch.len() <= 1 {
        return batch.iter().map(one).collect();
    }
    let chunk = batch.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = batch
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(one).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("gradient worker panicked"))
            .collect()
    })
}

/// Batch-mean loss and gradient. Per-example gradients are summed in batch
/// order, so the result does not depend on the thread count.
pub fn forward_backward<M: Trainable>(
    model: &M,
    batch: &[Example],
    loss: LossKind,
) -> Result<(f64, Vec<Vec<f64>>)> {
    ensure!(!batch.is_empty(), "empty batch");
    model.check_loss(loss)?;
    let mut total = 0.0;
    let mut grads = model.zero_grads();
    for r in per_example(model, batch, loss, thread_count()) {
        let (l, g) = r?;
        total += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            for (a, v) in acc.iter_mut().zip(gi) {
                *a += v;
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    grads.iter_mut().flatten().for_each(|g| *g *= inv);
    Ok((total * inv, grads))
}

/// Batch-mean loss without gradients.
pub fn batch_loss<M: Trainable>(model: &M, batch: &[Example], loss: LossKind) -> Result<f64> {
    ensure!(!batch.is_empty(), "empty batch");
    let mut total = 0.0;
    for ex in batch {
        total += model.loss(ex, loss)?;
    }
    Ok(total / batch.len() as f64)
}

pub type Metrics = BTreeMap<String, f64>;

/// Loss plus the task metric: accuracy for labels, Kendall's tau for scalar
/// targets (omitted when undefined), and nothing extra for dense targets.
pub fn evaluate<M: Trainable>(model: &M, data: &[Example], loss: LossKind) -> Result<Metrics> {
    ensure!(!data.is_empty(), "cannot evaluate on an empty set");
    let mut m = Metrics::new();
    let mut total = 0.0;
    let mut correct = 0usize;
    let mut labelled = 0usize;
    let (mut scores, mut targets) = (Vec::new(), Vec::new());
    for ex in data {
        let out = model.predict(&ex.input)?;
        total += output_loss(loss, &out, &ex.target)?.0;
        match &ex.target {
            Target::Label(l) => {
                labelled += 1;
                let pred = if out.len() == 1 {
                    usize::from(out[0] > 0.0)
                } else {
                    argmax(&out)
                };
                correct += usize::from(pred == *l);
            }
            Target::Scalar(t) if out.len() == 1 => {
                let s = if loss == LossKind::Bce {
                    sigmoid(out[0])
                } else {
                    out[0]
                };
                scores.push(s);
                targets.push(*t);
            }
            _ => {}
        }
    }
    m.insert("loss".into(), total / data.len() as f64);
    if labelled > 0 {
        m.insert("accuracy".into(), correct as f64 / labelled as f64);
    }
    if scores.len() >= 2 {
        if let Ok(t) = kendall_tau(&scores, &targets) {
            m.insert("kendall_tau".into(), t);
        }
    }
    Ok(m)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |b, (i, &x)| if x > b.1 { (i, x) } else { b },
        )
        .0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub loss: LossKind,
    /// Re-permute every batch input with a fresh random element of this group.
    #[serde(default)]
    pub augment: Option<GroupTag>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 8,
            steps: 1000,
            seed: 0,
            eval_every: 100,
            loss: LossKind::Bce,
            augment: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub step: usize,
    /// Mean training-batch loss since the previous record (absent at step 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_loss: Option<f64>,
    pub train: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub records: Vec<ReportRecord>,
    pub final_metrics: ReportRecord,
    pub best_metrics: ReportRecord,
}

impl TrainingReport {
    /// One JSON object per record.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// Higher is better: accuracy, else tau, else negative loss.
fn score(m: &Metrics) -> f64 {
    m.get("accuracy")
        .or_else(|| m.get("kendall_tau"))
        .copied()
        .unwrap_or_else(|| -m.get("loss").copied().unwrap_or(f64::INFINITY))
}

fn augment(batch: &mut [Example], group: GroupTag, rng: &mut ChaCha8Rng) -> Result<()> {
    for ex in batch {
        let perm = NeuronPermutation::random(ex.input.spec(), group, rng.gen());
        ex.input = perm.apply(&ex.input)?;
    }
    Ok(())
}

/// Adam on shuffled mini-batches; evaluates at step 0, every `eval_every`
/// steps, and at the end. On a non-finite loss the parameters are rolled back
/// to the last evaluated state and a numeric error is returned.
pub fn train_loop<M: Trainable>(
    model: &mut M,
    train: &[Example],
    test: Option<&[Example]>,
    cfg: &TrainConfig,
) -> Result<TrainingReport> {
    ensure!(!train.is_empty(), "empty training set");
    ensure!(cfg.batch_size >= 1, "batch_size must be positive");
    ensure!(
        cfg.lr.is_finite() && cfg.lr > 0.0,
        "learning rate must be positive"
    );
    model.check_loss(cfg.loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params(), cfg.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();

    let record = |model: &M, step: usize, batch_loss: Option<f64>| -> Result<ReportRecord> {
        Ok(ReportRecord {
            step,
            batch_loss,
            train: evaluate(model, train, cfg.loss)?,
            test: test.map(|t| evaluate(model, t, cfg.loss)).transpose()?,
        })
    };
    let mut records = vec![record(model, 0, None)?];
    let mut snapshot: Vec<Vec<f64>> = model.params().iter().map(|p| p.to_vec()).collect();
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);

    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(train[order[cursor]].clone());
            cursor += 1;
        }
        if let Some(g) = cfg.augment {
            augment(&mut batch, g, &mut rng)?;
        }
        let (loss, grads) = forward_backward(model, &batch, cfg.loss)?;
        let grad_ok = grads.iter().flatten().all(|g| g.is_finite());
        if !loss.is_finite() || !grad_ok {
            for (dst, src) in model.params_mut().into_iter().zip(&snapshot) {
                dst.copy_from_slice(src);
            }
            return Err(Error::Numeric(format!(
                "non-finite {} at step {step} (batch loss {loss}); parameters restored to step {}",
                if grad_ok { "loss" } else { "gradient" },
                records.last().map_or(0, |r| r.step)
            )));
        }
        loss_sum += loss;
        loss_n += 1;
        adam_step(model.params_mut(), &grads, &mut adam)?;
        if (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps {
            records.push(record(model, step, Some(loss_sum / loss_n as f64))?);
            snapshot = model.params().iter().map(|p| p.to_vec()).collect();
            loss_sum = 0.0;
            loss_n = 0;
        }
    }
    let final_metrics = records.last().unwrap().clone();
    let best_metrics = records
        .iter()
        .max_by(|a, b| {
            let sa = score(a.test.as_ref().unwrap_or(&a.train));
            let sb = score(b.test.as_ref().unwrap_or(&b.train));
            // Ties keep the earliest record.
            sa.total_cmp(&sb).then(b.step.cmp(&a.step))
        })
        .unwrap()
        .clone();
    Ok(TrainingReport {
        records,
        final_metrics,
        best_metrics,
    })
}
