//! Pairwise ranking training: negative sampling, the BPR loss, analytic
//! gradients, Adam and the epoch loop with early stopping.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate_item_pairs, ItemEvalOptions, ItemScorer};
use crate::linalg::{axpy, sigmoid, softplus};
use crate::model::{Dims, GradientSet, ItemVisual, JifrParams, Model, ModelConfig, ParamId};
use crate::seed;

/// User `user` prefers `pos` (a training positive) over `neg` (not a training positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrainTriple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossReduction {
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Sampled negatives per training positive.
    pub neg_ratio: usize,
    /// Epochs without a validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub loss_reduction: LossReduction,
    /// Sampled negatives per validation positive.
    pub valid_negatives: usize,
    pub seed: u64,
}

impl Default for OptimizerHyper {
    fn default() -> Self {
        OptimizerHyper {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 512,
            epochs: 50,
            neg_ratio: 10,
            early_stop_patience: 10,
            loss_reduction: LossReduction::Mean,
            valid_negatives: 100,
            seed: 0,
        }
    }
}

impl OptimizerHyper {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v >= 0.0;
        if !pos(self.learning_rate) || !pos(self.epsilon) || self.epsilon == 0.0 {
            return Err(Error::Config(
                "learning_rate must be >= 0 and epsilon > 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.neg_ratio == 0 || self.valid_negatives == 0 {
            return Err(Error::Config(
                "batch_size, neg_ratio and valid_negatives must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Draws `neg_ratio` negatives for every training positive, uniformly (with
/// replacement) from the items the user has no training positive for, then
/// shuffles the epoch.
pub fn sample_epoch(
    train: &[(usize, usize)],
    train_by_user: &[Vec<usize>],
    num_items: usize,
    neg_ratio: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrainTriple>> {
    // Dense users sample from an explicit complement; sparse ones by rejection.
    let mut complements: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut triples = Vec::with_capacity(train.len() * neg_ratio);
    for &(user, pos) in train {
        let rated = &train_by_user[user];
        if rated.len() >= num_items {
            return Err(Error::Sampling { user });
        }
        if 2 * rated.len() > num_items {
            let pool = complements.entry(user).or_insert_with(|| {
                (0..num_items)
                    .filter(|i| rated.binary_search(i).is_err())
                    .collect()
            });
            for _ in 0..neg_ratio {
                let neg = pool[rng.random_range(0..pool.len())];
                triples.push(TrainTriple { user, pos, neg });
            }
        } else {
            for _ in 0..neg_ratio {
                let neg = loop {
                    let j = rng.random_range(0..num_items);
                    if rated.binary_search(&j).is_err() {
                        break j;
                    }
                };
                triples.push(TrainTriple { user, pos, neg });
            }
        }
    }
    triples.shuffle(rng);
    Ok(triples)
}

/// `-ln σ(pos - neg)`, evaluated as `softplus(neg - pos)`.
pub fn bpr_pair_loss(score_pos: f64, score_neg: f64) -> f64 {
    softplus(score_neg - score_pos)
}

fn reduction_scale(batch: &[TrainTriple], reduction: LossReduction) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    Ok(match reduction {
        LossReduction::Mean => 1.0 / batch.len() as f64,
        LossReduction::Sum => 1.0,
    })
}

/// Users and items a batch touches; the penalty gradient is restricted to them.
fn touched(batch: &[TrainTriple]) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let users = batch.iter().map(|t| t.user).collect();
    let items = batch.iter().flat_map(|t| [t.pos, t.neg]).collect();
    (users, items)
}

fn regularized_ids(cfg: &ModelConfig) -> Vec<ParamId> {
    ParamId::ALL
        .into_iter()
        .filter(|id| id.is_regularized() && id.is_active(cfg))
        .collect()
}

fn batch_visuals(
    model: &Model,
    data: &Dataset,
    batch: &[TrainTriple],
) -> Result<BTreeMap<usize, ItemVisual>> {
    let mut out = BTreeMap::new();
    if !model.config.visual_enabled() {
        return Ok(out);
    }
    for t in batch {
        for item in [t.pos, t.neg] {
            if let std::collections::btree_map::Entry::Vacant(e) = out.entry(item) {
                let v = model.item_visual(item, data)?.expect("visual pathway on");
                e.insert(v);
            }
        }
    }
    Ok(out)
}

/// Pairwise term of the objective (mean or sum of the pair losses).
fn pairwise_term(
    model: &Model,
    data: &Dataset,
    batch: &[TrainTriple],
    reduction: LossReduction,
) -> Result<f64> {
    let scale = reduction_scale(batch, reduction)?;
    let visuals = batch_visuals(model, data, batch)?;
    let x = |i: usize| visuals.get(&i).map(|v| v.x.as_slice());
    let total: f64 = batch
        .iter()
        .map(|t| {
            bpr_pair_loss(
                model.score_with_visual(t.user, t.pos, x(t.pos)),
                model.score_with_visual(t.user, t.neg, x(t.neg)),
            )
        })
        .sum();
    Ok(scale * total)
}

/// The function the gradients differentiate: pairwise term plus λ1 times the
/// squared norm of the `U`, `V`, `W` rows the batch touches.
pub fn batch_objective(
    model: &Model,
    data: &Dataset,
    batch: &[TrainTriple],
    reduction: LossReduction,
) -> Result<f64> {
    let pair = pairwise_term(model, data, batch, reduction)?;
    let (users, items) = touched(batch);
    let mut penalty = 0.0;
    for id in regularized_ids(&model.config) {
        let rows = if id == ParamId::ItemFactors {
            &items
        } else {
            &users
        };
        let m = model.params.get(id);
        penalty += rows
            .iter()
            .map(|&r| m.row(r).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>();
    }
    Ok(pair + model.config.lambda1 * penalty)
}

/// Reported loss: pairwise term plus λ1 (‖U‖² + ‖V‖² + ‖W‖²) over the full tensors.
pub fn batch_loss(
    model: &Model,
    data: &Dataset,
    batch: &[TrainTriple],
    reduction: LossReduction,
) -> Result<f64> {
    Ok(pairwise_term(model, data, batch, reduction)? + full_penalty(model))
}

fn full_penalty(model: &Model) -> f64 {
    let norm: f64 = regularized_ids(&model.config)
        .into_iter()
        .map(|id| model.params.get(id).frobenius_sq())
        .sum();
    model.config.lambda1 * norm
}

/// Analytic gradient of [`batch_objective`]. Returns the objective's pairwise
/// term alongside the gradients. Inactive tensors get zero gradient.
pub fn batch_gradients(
    model: &Model,
    data: &Dataset,
    batch: &[TrainTriple],
    reduction: LossReduction,
) -> Result<(f64, GradientSet)> {
    let scale = reduction_scale(batch, reduction)?;
    let visuals = batch_visuals(model, data, batch)?;
    let mut g_visual: BTreeMap<usize, Vec<f64>> = visuals
        .keys()
        .map(|&i| (i, vec![0.0; model.config.d2]))
        .collect();
    let mut grads = model.params.zeros_like();
    let x = |i: usize| visuals.get(&i).map(|v| v.x.as_slice());

    let mut total = 0.0;
    for t in batch {
        let pos = model.score_trace(t.user, t.pos, x(t.pos));
        let neg = model.score_trace(t.user, t.neg, x(t.neg));
        let diff = pos.score - neg.score;
        total += softplus(-diff);
        // d/d(diff) of softplus(-diff) = -σ(-diff).
        let g = -sigmoid(-diff) * scale;
        if let Some(gx) = model.backward_score(&pos, x(t.pos), g, &mut grads) {
            axpy(1.0, &gx, g_visual.get_mut(&t.pos).expect("visual cached"));
        }
        if let Some(gx) = model.backward_score(&neg, x(t.neg), -g, &mut grads) {
            axpy(1.0, &gx, g_visual.get_mut(&t.neg).expect("visual cached"));
        }
    }
    for (item, visual) in &visuals {
        model.backward_visual(visual, &g_visual[item], data, &mut grads);
    }

    let lambda = model.config.lambda1;
    if lambda != 0.0 {
        let (users, items) = touched(batch);
        for id in regularized_ids(&model.config) {
            let rows = if id == ParamId::ItemFactors {
                &items
            } else {
                &users
            };
            let src = model.params.get(id);
            let dst = grads.get_mut(id);
            for &r in rows {
                axpy(2.0 * lambda, src.row(r), dst.row_mut(r));
            }
        }
    }
    for id in ParamId::ALL {
        if !id.is_active(&model.config) {
            grads.get_mut(id).fill(0.0);
        }
    }
    Ok((scale * total, grads))
}

/// First and second moment estimates for every tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: JifrParams,
    pub second: JifrParams,
    /// Steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &JifrParams) -> Self {
        AdamState {
            first: params.zeros_like(),
            second: params.zeros_like(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update of the `active` tensors.
    pub fn step(
        &mut self,
        params: &mut JifrParams,
        grads: &GradientSet,
        active: &[ParamId],
        hyper: &OptimizerHyper,
    ) {
        self.t += 1;
        adam_step(params, grads, self, hyper, self.t, active);
    }
}

/// Adam update at step index `t` (1-based).
pub fn adam_step(
    params: &mut JifrParams,
    grads: &GradientSet,
    state: &mut AdamState,
    hyper: &OptimizerHyper,
    t: u64,
    active: &[ParamId],
) {
    debug_assert!(t >= 1);
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(exp);
    let c2 = 1.0 - b2.powi(exp);
    for &id in active {
        let g = grads.get(id).as_slice();
        let m = state.first.get_mut(id).as_mut_slice();
        let v = state.second.get_mut(id).as_mut_slice();
        let p = params.get_mut(id).as_mut_slice();
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_hr10: Option<f64>,
    pub valid_ndcg10: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean batch loss of the initial parameters over one sampled epoch.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (0 = initial parameters).
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub checkpoint: Option<String>,
}

impl TrainLog {
    /// One JSON record per epoch.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain data") + "\n")
            .collect()
    }
}

/// Trains a model and returns the parameters of the best validation epoch.
pub fn fit(
    splits: &SplitDataset,
    cfg: &ModelConfig,
    hyper: &OptimizerHyper,
) -> Result<(Model, TrainLog)> {
    fit_with(splits, cfg, hyper, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with<F>(
    splits: &SplitDataset,
    cfg: &ModelConfig,
    hyper: &OptimizerHyper,
    mut on_epoch: F,
) -> Result<(Model, TrainLog)>
where
    F: FnMut(&EpochRecord),
{
    hyper.validate()?;
    if splits.train.is_empty() {
        return Err(Error::EmptyDataset("training split has no ratings".into()));
    }
    let data = &splits.base;
    let dims = Dims {
        num_users: data.num_users(),
        num_items: data.num_items(),
        feature_dim: data.feature_dim(),
    };
    let mut model = Model::new(cfg.clone(), dims)?;
    let active: Vec<ParamId> = ParamId::ALL
        .into_iter()
        .filter(|id| id.is_active(cfg))
        .collect();
    let train_by_user = splits.train_by_user();
    let rated_by_user = splits.rated_by_user();
    let n_items = data.num_items();

    let batch_readout = |model: &Model, triples: &[TrainTriple]| -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for batch in triples.chunks(hyper.batch_size) {
            sum += batch_loss(model, data, batch, hyper.loss_reduction)?;
            n += 1;
        }
        Ok(sum / n.max(1) as f64)
    };
    let mut probe_rng = seed::rng(seed::derive(hyper.seed, "initial-loss"));
    let probe = sample_epoch(
        &splits.train,
        &train_by_user,
        n_items,
        hyper.neg_ratio,
        &mut probe_rng,
    )?;
    let initial_loss = batch_readout(&model, &probe)?;

    let valid_opts = ItemEvalOptions {
        ks: vec![10],
        negatives: hyper.valid_negatives,
        repeats: 1,
        seed: seed::derive(hyper.seed, "validation"),
    };
    let mut rng = seed::rng(seed::derive(hyper.seed, "sampling"));
    let mut adam = AdamState::new(&model.params);
    let mut best = (f64::NEG_INFINITY, model.params.clone(), 0usize);
    let mut stale = 0usize;
    let mut log = TrainLog {
        initial_loss,
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        checkpoint: None,
    };

    for epoch in 1..=hyper.epochs {
        let started = Instant::now();
        let triples = sample_epoch(
            &splits.train,
            &train_by_user,
            n_items,
            hyper.neg_ratio,
            &mut rng,
        )?;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in triples.chunks(hyper.batch_size) {
            let penalty = full_penalty(&model);
            let (pair, grads) = batch_gradients(&model, data, batch, hyper.loss_reduction)?;
            loss_sum += pair + penalty;
            batches += 1;
            adam.step(&mut model.params, &grads, &active, hyper);
        }
        if !model.params.is_finite() {
            return Err(Error::Config(format!(
                "parameters diverged to non-finite values in epoch {epoch}; lower the learning rate"
            )));
        }
        let (valid_hr10, valid_ndcg10) = if splits.valid.is_empty() {
            (None, None)
        } else {
            let scorer = ItemScorer::new(&model, data)?;
            let report = evaluate_item_pairs(
                |a, i| scorer.score(a, i),
                &splits.valid,
                &rated_by_user,
                n_items,
                &valid_opts,
            )?;
            let m = report.at(10).expect("K = 10 requested");
            (Some(m.hr), Some(m.ndcg))
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            valid_hr10,
            valid_ndcg10,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.epochs.push(record);

        // Without a validation split the latest epoch is the best one.
        let score = valid_hr10.unwrap_or(epoch as f64);
        if score > best.0 {
            best = (score, model.params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if hyper.early_stop_patience > 0 && stale >= hyper.early_stop_patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    model.params = best.1;
    log.best_epoch = best.2;
    Ok((model, log))
}
