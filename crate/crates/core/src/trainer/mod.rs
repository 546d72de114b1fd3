//! Margin-ranking training with Bernoulli negative sampling, two-group SGD,
//! validation-driven model selection and early stopping.

mod sampling;

use std::sync::Arc;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::Rng;

pub use sampling::{CorruptedSlot, NegativeSample, NegativeSampler, MAX_RESAMPLE};

use crate::dataset::{Dataset, Triple};
use crate::diffmath::{check_gradients, Checkpoint, GradCheckReport, ParameterStore};
use crate::error::{Error, Result};
use crate::eval::link_prediction_eval;
use crate::model::{parse_num, JointModel, ModelConfig, ModelLayout};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Probability of corrupting the relation instead of an entity.
    pub p_rel: f64,
    pub seed: u64,
    /// Evaluation rounds without improvement tolerated before stopping.
    pub patience: usize,
    pub eval_every: usize,
    /// Evaluate on at most this many validation triples (all when `None`).
    pub valid_limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            epochs: 500,
            p_rel: 0.0,
            seed: 0,
            patience: 5,
            eval_every: 10,
            valid_limit: None,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 7] = [
        "batch_size",
        "epochs",
        "p_rel",
        "seed",
        "patience",
        "eval_every",
        "valid_limit",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_rel) {
            return Err(Error::Config(format!("p_rel must lie in [0, 1], got {}", self.p_rel)));
        }
        Ok(())
    }

    /// Applies one `key=value` setting; `false` for keys owned elsewhere.
    /// `valid_limit=0` means no limit.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "p_rel" => self.p_rel = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "eval_every" => self.eval_every = parse_num(key, value)?,
            "valid_limit" => {
                let n: usize = parse_num(key, value)?;
                self.valid_limit = (n > 0).then_some(n);
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("batch_size".into(), self.batch_size.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("p_rel".into(), format!("{:?}", self.p_rel)),
            ("seed".into(), self.seed.to_string()),
            ("patience".into(), self.patience.to_string()),
            ("eval_every".into(), self.eval_every.to_string()),
            ("valid_limit".into(), self.valid_limit.unwrap_or(0).to_string()),
        ]
    }
}

/// `max(0, γ − f(pos) + f(neg))`, accumulating its gradient when positive.
/// Returns the loss and whether the hinge was active.
pub fn triple_loss<T: Scalar>(
    layout: &ModelLayout,
    store: &mut ParameterStore<T>,
    pos: Triple,
    neg: Triple,
    margin: T,
) -> (T, bool) {
    let p = layout.forward(store, pos);
    let n = layout.forward(store, neg);
    let loss = margin - (p.score - n.score);
    if loss > T::zero() {
        layout.backward(store, &p, -T::one());
        layout.backward(store, &n, T::one());
        (loss, true)
    } else if loss.is_nan() {
        (loss, false)
    } else {
        (T::zero(), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Fraction of pairs with a positive hinge.
    pub active_rate: f64,
}

/// One shuffled pass over the training triples: one negative per positive,
/// an SGD step per minibatch, then touched entity structure rows are
/// projected back to unit norm.
pub fn train_epoch<T: Scalar, R: Rng + ?Sized>(
    model: &mut JointModel<T>,
    sampler: &NegativeSampler<'_>,
    batch_size: usize,
    epoch: usize,
    rng: &mut R,
) -> Result<EpochStats> {
    let ds = Arc::clone(model.dataset());
    let cfg = model.config().clone();
    let (margin, lr_s, lr_t, l2) = (
        T::from_f64_lossy(cfg.margin),
        T::from_f64_lossy(cfg.lr_structure),
        T::from_f64_lossy(cfg.lr_text),
        T::from_f64_lossy(cfg.l2),
    );
    let mut order: Vec<usize> = (0..ds.train.len()).collect();
    order.shuffle(rng);
    let (layout, store) = model.split_mut();
    let entity = layout.entity_slot();
    let (mut total, mut active) = (0.0f64, 0usize);
    for (batch, chunk) in order.chunks(batch_size.max(1)).enumerate() {
        store.zero_grad();
        let mut batch_loss = T::zero();
        for &i in chunk {
            let pos = ds.train[i];
            let neg = sampler.sample(pos, rng);
            let (loss, on) = triple_loss(layout, store, pos, neg.triple, margin);
            batch_loss += loss;
            active += usize::from(on);
        }
        if !batch_loss.is_finite() {
            store.zero_grad();
            return Err(Error::NonFiniteLoss {
                epoch,
                batch,
                partial: total,
            });
        }
        total += batch_loss.to_f64_lossless();
        let rows = store.touched_rows(entity).to_vec();
        store.sgd_step(lr_s, lr_t, l2)?;
        store.renormalize_rows(entity, rows);
    }
    let n = ds.train.len().max(1) as f64;
    Ok(EpochStats {
        epoch,
        mean_loss: total / n,
        active_rate: active as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidMetrics {
    /// Filtered mean rank over head and tail queries.
    pub mean_rank: f64,
    /// Filtered Hits@10, percent.
    pub hits10: f64,
}

pub fn validate<T: Scalar>(model: &JointModel<T>, limit: Option<usize>) -> ValidMetrics {
    let valid = &model.dataset().valid;
    let n = limit.map_or(valid.len(), |l| l.min(valid.len()));
    let report = link_prediction_eval(model, &valid[..n]);
    ValidMetrics {
        mean_rank: report.overall.mean_rank_filtered(),
        hits10: report.overall.hits_filtered(),
    }
}

pub const PROGRESS_HEADER: &str = "epoch,mean_loss,active_rate,valid_MR,valid_Hits10";

/// One progress-log line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressRecord {
    pub stats: EpochStats,
    pub valid: Option<ValidMetrics>,
}

impl ProgressRecord {
    pub fn csv_line(&self) -> String {
        let s = &self.stats;
        match self.valid {
            Some(v) => format!(
                "{},{:.6},{:.4},{:.2},{:.2}",
                s.epoch, s.mean_loss, s.active_rate, v.mean_rank, v.hits10
            ),
            None => format!("{},{:.6},{:.4},,", s.epoch, s.mean_loss, s.active_rate),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<ProgressRecord>,
    /// Epoch of the selected parameters; `None` without validation data.
    pub best_epoch: Option<usize>,
    pub best_valid: Option<ValidMetrics>,
    pub evaluations: usize,
}

/// Trains for up to `config.epochs` epochs, evaluating filtered validation
/// mean rank every `eval_every` epochs and after the last one. On return the
/// model holds the parameters of the best evaluation (the final parameters
/// when there is no validation split). Training stops once `patience`
/// consecutive evaluations fail to improve, so `patience = 0` evaluates once.
pub fn train<T: Scalar, R: Rng + ?Sized>(
    model: &mut JointModel<T>,
    config: &TrainConfig,
    rng: &mut R,
    mut on_epoch: impl FnMut(&ProgressRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let ds = Arc::clone(model.dataset());
    let sampler = NegativeSampler::new(&ds.stats, &ds.train, ds.entity_count(), ds.relation_count(), config.p_rel)?;
    let can_validate = !ds.valid.is_empty();
    let mut history = Vec::new();
    let mut best: Option<(usize, ValidMetrics, ParameterStore<T>)> = None;
    let mut evaluations = 0;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let stats = train_epoch(model, &sampler, config.batch_size, epoch, rng)?;
        let due = epoch % config.eval_every == 0 || epoch == config.epochs;
        let valid = (can_validate && due).then(|| validate(model, config.valid_limit));
        let record = ProgressRecord { stats, valid };
        debug!("{}", record.csv_line());
        on_epoch(&record);
        history.push(record);
        let Some(v) = valid else { continue };
        evaluations += 1;
        let improved = best.as_ref().is_none_or(|(_, b, _)| v.mean_rank < b.mean_rank);
        if improved {
            info!("epoch {epoch}: validation MR {:.2}, Hits@10 {:.2}", v.mean_rank, v.hits10);
            best = Some((epoch, v, model.params().clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            info!("stopping after epoch {epoch}: {stale} evaluation(s) without improvement");
            break;
        }
    }
    let (best_epoch, best_valid) = match best {
        Some((epoch, v, params)) => {
            *model.params_mut() = params;
            (Some(epoch), Some(v))
        }
        None => (None, None),
    };
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_valid,
        evaluations,
    })
}

/// Builds a model with the standard initialisation: random structure, then
/// optionally pretrained structure rows, then word vectors averaged from the
/// structure embeddings of the entities that mention them.
pub fn initialize_model<T: Scalar, R: Rng + ?Sized>(
    config: ModelConfig,
    dataset: Arc<Dataset>,
    pretrained: Option<&Checkpoint>,
    rng: &mut R,
) -> Result<JointModel<T>> {
    let mut model = JointModel::new(config, dataset, rng)?;
    if let Some(ckpt) = pretrained {
        model.init_structure_from_pretrained(ckpt)?;
    }
    model.init_word_embeddings(rng);
    Ok(model)
}

/// Finite-difference check of a weighted sum of hinge losses over `pairs` of
/// (positive, negative) triples. Each pair gets the margin that makes its
/// hinge active with loss one, so every path through the model is exercised.
/// Pair `i` is weighted `2^-i`. With equal weights, contributions of pairs
/// sharing entities can cancel exactly, leaving zero gradients whose finite
/// differences are pure rounding noise; no signed sum of distinct powers of
/// two vanishes.
pub fn check_hinge_gradients<T: Scalar>(model: &mut JointModel<T>, pairs: &[(Triple, Triple)], eps: f64) -> GradCheckReport {
    let margins: Vec<T> = pairs
        .iter()
        .map(|&(p, n)| T::one() + model.score_joint(p) - model.score_joint(n))
        .collect();
    let (layout, store) = model.split_mut();
    check_gradients(
        store,
        |s| {
            pairs
                .iter()
                .zip(&margins)
                .enumerate()
                .map(|(i, (&(p, n), &m))| {
                    let w = T::half().powi(i as i32);
                    let pos = layout.forward(s, p);
                    let neg = layout.forward(s, n);
                    let loss = m - (pos.score - neg.score);
                    if loss > T::zero() {
                        layout.backward(s, &pos, -w);
                        layout.backward(s, &neg, w);
                    }
                    w * loss.max(T::zero())
                })
                .sum()
        },
        eps,
    )
}
