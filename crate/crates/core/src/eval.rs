//! HR@K and NDCG@K under the two ranking protocols.
//!
//! - Items: each held-out `(user, item)` is ranked against sampled items the
//!   user never rated, repeated with fresh negatives.
//! - Frames: each liked `(user, frame)` is ranked against every frame of its
//!   parent item.
//!
//! One positive per candidate set: rank = 1 + #candidates scoring at least as
//! high as the positive (ties count against the positive), hit = rank ≤ K,
//! NDCG = 1 / log2(rank + 1) on a hit.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitDataset};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Item,
    Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub hr_std: f64,
    pub ndcg_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub metrics: Vec<KMetrics>,
    pub repeats: usize,
    /// Sampled negatives per positive (item task only).
    pub negatives_per_positive: Option<usize>,
    pub seed: Option<u64>,
    /// Candidate sets evaluated per repeat.
    pub pairs: usize,
    /// Frame pairs whose item has a single frame (always a hit).
    pub singleton_pairs: usize,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn at(&self, k: usize) -> Option<&KMetrics> {
        self.metrics.iter().find(|m| m.k == k)
    }

    /// One JSON record per K.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            task: Task,
            k: usize,
            hr: f64,
            ndcg: f64,
            hr_std: f64,
            ndcg_std: f64,
            repeats: usize,
            negatives: Option<usize>,
            pairs: usize,
            singleton_pairs: usize,
            seed: Option<u64>,
            warnings: &'a [String],
        }
        let mut out = String::new();
        for m in &self.metrics {
            let line = Line {
                task: self.task,
                k: m.k,
                hr: m.hr,
                ndcg: m.ndcg,
                hr_std: m.hr_std,
                ndcg_std: m.ndcg_std,
                repeats: self.repeats,
                negatives: self.negatives_per_positive,
                pairs: self.pairs,
                singleton_pairs: self.singleton_pairs,
                seed: self.seed,
                warnings: &self.warnings,
            };
            out.push_str(&serde_json::to_string(&line).expect("plain data"));
            out.push('\n');
        }
        out
    }

    /// `K  HR  NDCG  HR_std  NDCG_std`, tab separated.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("K\tHR\tNDCG\tHR_std\tNDCG_std\n");
        for m in &self.metrics {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                m.k, m.hr, m.ndcg, m.hr_std, m.ndcg_std
            ));
        }
        out
    }
}

/// 1-based pessimistic rank of `positive` within `scores`.
pub fn rank_of(scores: &[f64], positive: usize) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Argument("no candidates to rank".into()));
    }
    let Some(&p) = scores.get(positive) else {
        return Err(Error::Argument(format!(
            "positive index {positive} out of {} candidates",
            scores.len()
        )));
    };
    // Incomparable (NaN) candidates also count as ahead of the positive.
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| j != positive && s.partial_cmp(&p) != Some(std::cmp::Ordering::Less))
        .count();
    Ok(1 + ahead)
}

fn metrics_at(rank: usize, k: usize) -> (bool, f64) {
    if rank <= k {
        (true, 1.0 / ((rank + 1) as f64).log2())
    } else {
        (false, 0.0)
    }
}

/// Hit and NDCG of a single-positive candidate list at cut-off `k`.
pub fn rank_metrics(scores: &[f64], positive: usize, k: usize) -> Result<(bool, f64)> {
    Ok(metrics_at(rank_of(scores, positive)?, k))
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Argument(
            "K values must be a non-empty list of positive integers".into(),
        ));
    }
    Ok(())
}

/// Per-K averages over one list of ranks.
fn average(ranks: &[usize], ks: &[usize]) -> Vec<(f64, f64)> {
    ks.iter()
        .map(|&k| {
            let (mut hr, mut ndcg) = (0.0, 0.0);
            for &r in ranks {
                let (hit, g) = metrics_at(r, k);
                hr += f64::from(u8::from(hit));
                ndcg += g;
            }
            let n = ranks.len().max(1) as f64;
            (hr / n, ndcg / n)
        })
        .collect()
}

/// Mean and population standard deviation across repeats.
fn summarize(per_repeat: &[Vec<(f64, f64)>], ks: &[usize]) -> Vec<KMetrics> {
    let r = per_repeat.len().max(1) as f64;
    ks.iter()
        .enumerate()
        .map(|(idx, &k)| {
            let hr: Vec<f64> = per_repeat.iter().map(|rep| rep[idx].0).collect();
            let ndcg: Vec<f64> = per_repeat.iter().map(|rep| rep[idx].1).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / r;
            let std =
                |v: &[f64], m: f64| (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / r).sqrt();
            let (hm, nm) = (mean(&hr), mean(&ndcg));
            KMetrics {
                k,
                hr: hm,
                ndcg: nm,
                hr_std: std(&hr, hm),
                ndcg_std: std(&ndcg, nm),
            }
        })
        .collect()
}

/// Item scorer with every item's visual embedding computed once.
pub struct ItemScorer<'a> {
    model: &'a Model,
    visuals: Vec<Option<Vec<f64>>>,
    missing: Vec<bool>,
}

impl<'a> ItemScorer<'a> {
    pub fn new(model: &'a Model, data: &Dataset) -> Result<Self> {
        model.check_dataset(data)?;
        let computed: Vec<Result<Option<Vec<f64>>>> = (0..data.num_items())
            .into_par_iter()
            .map(|i| {
                if model.config.visual_enabled() && data.frames_of(i).is_empty() {
                    return Ok(None);
                }
                Ok(model.item_visual(i, data)?.map(|v| v.x))
            })
            .collect();
        let mut visuals = Vec::with_capacity(computed.len());
        let mut missing = Vec::with_capacity(computed.len());
        for (i, c) in computed.into_iter().enumerate() {
            let v = c?;
            missing.push(model.config.visual_enabled() && data.frames_of(i).is_empty());
            visuals.push(v);
        }
        Ok(ItemScorer {
            model,
            visuals,
            missing,
        })
    }

    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        if self.missing[item] {
            return Err(Error::MissingFrames { item });
        }
        Ok(self
            .model
            .score_with_visual(user, item, self.visuals[item].as_deref()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemEvalOptions {
    pub ks: Vec<usize>,
    pub negatives: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ItemEvalOptions {
    fn default() -> Self {
        ItemEvalOptions {
            ks: vec![5, 10, 15],
            negatives: 1000,
            repeats: 10,
            seed: 0,
        }
    }
}

/// Sampled-negative protocol on the test split.
pub fn evaluate_item_rec(
    model: &Model,
    splits: &SplitDataset,
    opts: &ItemEvalOptions,
) -> Result<EvalReport> {
    if splits.test.is_empty() {
        return Err(Error::Argument("test split is empty".into()));
    }
    let scorer = ItemScorer::new(model, &splits.base)?;
    evaluate_item_pairs(
        |a, i| scorer.score(a, i),
        &splits.test,
        &splits.rated_by_user(),
        splits.base.num_items(),
        opts,
    )
}

/// Ranks each `(user, item)` in `pairs` against up to `opts.negatives` items
/// the user never rated (per `rated_by_user`, sorted lists).
pub fn evaluate_item_pairs<F>(
    score: F,
    pairs: &[(usize, usize)],
    rated_by_user: &[Vec<usize>],
    num_items: usize,
    opts: &ItemEvalOptions,
) -> Result<EvalReport>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    check_ks(&opts.ks)?;
    if opts.repeats == 0 || opts.negatives == 0 {
        return Err(Error::Argument(
            "repeats and negatives must be at least 1".into(),
        ));
    }
    let unrated = |a: usize| -> Vec<usize> {
        let rated = &rated_by_user[a];
        (0..num_items)
            .filter(|i| rated.binary_search(i).is_err())
            .collect()
    };
    let users: BTreeSet<usize> = pairs.iter().map(|&(a, _)| a).collect();
    let pool: Vec<Option<Vec<usize>>> = (0..rated_by_user.len())
        .map(|a| users.contains(&a).then(|| unrated(a)))
        .collect();
    let mut warnings = Vec::new();
    for &a in &users {
        let available = pool[a].as_ref().map_or(0, Vec::len);
        if available < opts.negatives {
            warnings.push(format!(
                "user {a}: only {available} unrated items for {} requested negatives",
                opts.negatives
            ));
        }
    }

    let mut per_repeat = Vec::with_capacity(opts.repeats);
    for rep in 0..opts.repeats {
        let rep_seed = seed::derive_index(opts.seed, rep as u64);
        let ranks: Vec<usize> = pairs
            .par_iter()
            .enumerate()
            .map(|(p, &(a, i))| -> Result<usize> {
                let candidates = pool[a].as_deref().unwrap_or(&[]);
                let mut rng = seed::rng(seed::derive_index(rep_seed, p as u64));
                let take = opts.negatives.min(candidates.len());
                let mut scores = Vec::with_capacity(take + 1);
                scores.push(score(a, i)?);
                for idx in index::sample(&mut rng, candidates.len(), take) {
                    scores.push(score(a, candidates[idx])?);
                }
                rank_of(&scores, 0)
            })
            .collect::<Result<_>>()?;
        per_repeat.push(average(&ranks, &opts.ks));
    }
    Ok(EvalReport {
        task: Task::Item,
        metrics: summarize(&per_repeat, &opts.ks),
        repeats: opts.repeats,
        negatives_per_positive: Some(opts.negatives),
        seed: Some(opts.seed),
        pairs: pairs.len(),
        singleton_pairs: 0,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEvalOptions {
    pub ks: Vec<usize>,
    /// Drop pairs whose item has a single frame.
    pub exclude_singletons: bool,
}

impl Default for FrameEvalOptions {
    fn default() -> Self {
        FrameEvalOptions {
            ks: vec![1, 2, 3],
            exclude_singletons: false,
        }
    }
}

/// Ranks each liked frame among its item's frames with `score(pair_index, user, frame)`.
fn evaluate_frames_with<F>(
    splits: &SplitDataset,
    opts: &FrameEvalOptions,
    seed: Option<u64>,
    score: F,
) -> Result<EvalReport>
where
    F: Fn(usize, usize, usize) -> Result<f64> + Sync,
{
    check_ks(&opts.ks)?;
    if splits.frame_test.is_empty() {
        return Err(Error::Argument("no frame-level test interactions".into()));
    }
    let d = &splits.base;
    let singleton_pairs = splits
        .frame_test
        .iter()
        .filter(|&&(_, k)| d.frames_of(d.item_of_frame(k)).len() == 1)
        .count();
    let pairs: Vec<(usize, usize)> = splits
        .frame_test
        .iter()
        .copied()
        .filter(|&(_, k)| !(opts.exclude_singletons && d.frames_of(d.item_of_frame(k)).len() == 1))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Argument(
            "every frame-level test pair was excluded".into(),
        ));
    }
    let ranks: Vec<usize> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &(a, k))| -> Result<usize> {
            let frames = d.frames_of(d.item_of_frame(k));
            let scores = frames
                .iter()
                .map(|&c| score(p, a, c))
                .collect::<Result<Vec<f64>>>()?;
            let pos = frames
                .iter()
                .position(|&c| c == k)
                .expect("frame in its item");
            rank_of(&scores, pos)
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    if singleton_pairs > 0 {
        warnings.push(format!(
            "{singleton_pairs} frame pairs belong to single-frame items{}",
            if opts.exclude_singletons {
                " (excluded)"
            } else {
                " (counted as hits)"
            }
        ));
    }
    Ok(EvalReport {
        task: Task::Frame,
        metrics: summarize(&[average(&ranks, &opts.ks)], &opts.ks),
        repeats: 1,
        negatives_per_positive: None,
        seed,
        pairs: pairs.len(),
        singleton_pairs,
        warnings,
    })
}

/// Within-item frame ranking by `w_a · P c_k`.
pub fn evaluate_frame_rec(
    model: &Model,
    splits: &SplitDataset,
    opts: &FrameEvalOptions,
) -> Result<EvalReport> {
    if !model.config.visual_enabled() {
        return Err(Error::Unsupported(
            "frame recommendation needs a visual pathway".into(),
        ));
    }
    model.check_dataset(&splits.base)?;
    evaluate_frames_with(splits, opts, None, |_, a, k| {
        model.predict_frame_score(a, k, &splits.base)
    })
}

/// The same protocol with uniformly random scores.
pub fn random_frame_baseline(
    splits: &SplitDataset,
    opts: &FrameEvalOptions,
    seed: u64,
) -> Result<EvalReport> {
    let stream = seed::derive(seed, "random-frames");
    evaluate_frames_with(splits, opts, Some(seed), |p, _, k| {
        let mut rng = seed::rng(seed::derive_index(
            seed::derive_index(stream, p as u64),
            k as u64,
        ));
        Ok(rng.random::<f64>())
    })
}
