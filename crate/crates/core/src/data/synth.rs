//! Planted-model synthetic data.
//!
//! A ground-truth model with frame attention and hybrid rating attention
//! generates the ratings, so recovery and ranking tests have a known answer.
//! Each item owns a random minority of "salient" frames drawn from a shifted
//! feature cluster; the planted frame attention keys on that shift, so frame
//! importance is heterogeneous and the attention is identifiable.

use serde::{Deserialize, Serialize};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, IdMap};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::{Activation, Dims, FusionMode, JifrParams, Model, ModelConfig, VisualMode};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub frames_per_item: usize,
    pub feature_dim: usize,
    /// Latent dimension of the planted model.
    pub planted_dim: usize,
    pub ratings_per_user: usize,
    /// Liked frames per rated pair (the top frames under the planted frame score).
    pub frame_likes_per_pair: usize,
    /// Distance of the salient cluster centre from the origin.
    pub salient_strength: f64,
    /// Output weight of the planted frame attention.
    pub attention_sharpness: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_users: 200,
            num_items: 300,
            frames_per_item: 5,
            feature_dim: 16,
            planted_dim: 4,
            ratings_per_user: 20,
            frame_likes_per_pair: 1,
            salient_strength: 3.0,
            attention_sharpness: 2.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_users", self.num_users),
            ("num_items", self.num_items),
            ("frames_per_item", self.frames_per_item),
            ("feature_dim", self.feature_dim),
            ("planted_dim", self.planted_dim),
            ("ratings_per_user", self.ratings_per_user),
            ("frame_likes_per_pair", self.frame_likes_per_pair),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Argument(format!("{name} must be at least 1")));
        }
        if self.ratings_per_user > self.num_items {
            return Err(Error::Argument(format!(
                "ratings_per_user ({}) exceeds num_items ({})",
                self.ratings_per_user, self.num_items
            )));
        }
        if self.frame_likes_per_pair > self.frames_per_item {
            return Err(Error::Argument(format!(
                "frame_likes_per_pair ({}) exceeds frames_per_item ({})",
                self.frame_likes_per_pair, self.frames_per_item
            )));
        }
        if !(self.salient_strength.is_finite() && self.attention_sharpness.is_finite()) {
            return Err(Error::Argument(
                "salient_strength and attention_sharpness must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// The ground truth behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedParams {
    pub model: Model,
    /// Per frame: drawn from the salient cluster.
    pub salient: Vec<bool>,
}

fn ids(prefix: char, n: usize) -> IdMap {
    let width = n.saturating_sub(1).to_string().len();
    IdMap::from_ids((0..n).map(|k| format!("{prefix}{k:0width$}")))
}

fn standard_normal<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

/// Indices of the `k` largest scores; ties go to the smaller index.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Dataset, PlantedParams)> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(cfg.seed, "synth"));
    let (m, n, per, f, d) = (
        cfg.num_users,
        cfg.num_items,
        cfg.frames_per_item,
        cfg.feature_dim,
        cfg.planted_dim,
    );
    let l = n * per;

    // Salient cluster direction (unit norm).
    let mut centre: Vec<f64> = (0..f).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dot(&centre, &centre).sqrt().max(f64::MIN_POSITIVE);
    centre.iter_mut().for_each(|v| *v /= norm);

    let max_salient = ((per - 1) / 2).max(1);
    let mut salient = vec![false; l];
    for i in 0..n {
        let count = rng.random_range(1..=max_salient);
        for j in index::sample(&mut rng, per, count) {
            salient[i * per + j] = true;
        }
    }
    let mut features = standard_normal(l, f, 1.0, &mut rng);
    for (k, &s) in salient.iter().enumerate() {
        if s {
            for (c, mu) in features.row_mut(k).iter_mut().zip(&centre) {
                *c += cfg.salient_strength * mu;
            }
        }
    }

    let config = ModelConfig {
        d1: d,
        d2: d,
        attn_hidden_visual: 1,
        attn_hidden_rating: d,
        reduced_visual_dim: 1,
        visual_mode: VisualMode::Att,
        fusion_mode: FusionMode::Att,
        activation: Activation::Relu,
        lambda1: 0.0,
        init_scale: 0.0,
        share_visual_projection: false,
        attention_bias: false,
        seed: cfg.seed,
    };
    let dims = Dims {
        num_users: m,
        num_items: n,
        feature_dim: f,
    };
    let mut params = JifrParams::zeros(&config, dims);
    params.user_factors = standard_normal(m, d, 1.0, &mut rng);
    params.item_factors = standard_normal(n, d, 1.0, &mut rng);
    params.user_visual = standard_normal(m, d, 1.0, &mut rng);
    params.visual_projection = standard_normal(d, f, 1.0 / (f as f64).sqrt(), &mut rng);
    // Attention key = projection on the salient direction; a single hidden
    // unit passes it through, so logit_j = sharpness · relu(centre · c_j).
    params.attn_key_projection = Matrix::from_vec(1, f, centre).expect("1 × F");
    params.frame_attn_hidden.set(0, d, 1.0);
    params.frame_attn_out.set(0, 0, cfg.attention_sharpness);
    params.rating_attn_hidden = standard_normal(d, 2 * d, 1.0 / ((2 * d) as f64).sqrt(), &mut rng);
    params.rating_attn_out = standard_normal(1, d, 1.0 / (d as f64).sqrt(), &mut rng);
    let model = Model::from_parts(config, params)?;

    let users = ids('u', m);
    let items = ids('i', n);
    let frames = ids('f', l);
    let frame_item: Vec<usize> = (0..l).map(|k| k / per).collect();
    let base = Dataset::new(
        users.clone(),
        items.clone(),
        frames.clone(),
        vec![],
        frame_item.clone(),
        features.clone(),
        vec![],
    )?;

    let visuals: Vec<Vec<f64>> = (0..n)
        .map(|i| model.item_visual_att(i, &base))
        .collect::<Result<_>>()?;
    let mut ratings = Vec::with_capacity(m * cfg.ratings_per_user);
    let mut likes = Vec::new();
    for a in 0..m {
        let scores: Vec<f64> = (0..n)
            .map(|i| model.score_with_visual(a, i, Some(&visuals[i])))
            .collect();
        for i in top_k(&scores, cfg.ratings_per_user) {
            ratings.push((a, i));
            let frame_scores: Vec<f64> = base
                .frames_of(i)
                .iter()
                .map(|&k| model.predict_frame_score(a, k, &base))
                .collect::<Result<_>>()?;
            for j in top_k(&frame_scores, cfg.frame_likes_per_pair) {
                likes.push((a, base.frames_of(i)[j]));
            }
        }
    }

    let dataset = Dataset::new(users, items, frames, ratings, frame_item, features, likes)?;
    Ok((dataset, PlantedParams { model, salient }))
}
