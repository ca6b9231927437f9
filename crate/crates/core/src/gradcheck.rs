//! Central finite-difference check of the analytic gradients.
//!
//! The oracle only evaluates [`batch_objective`]; it shares no code with the
//! backward pass it checks.

use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use crate::data::{Dataset, IdMap};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Dims, FusionMode, Model, ModelConfig, ParamId, VisualMode};
use crate::seed;
use crate::training::{batch_gradients, batch_objective, LossReduction, TrainTriple};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Options for [`finite_diff_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiff {
    pub step: f64,
    /// Above this many active coordinates a random subset of this size is checked.
    pub max_coordinates: usize,
    pub seed: u64,
    pub reduction: LossReduction,
}

impl Default for FiniteDiff {
    fn default() -> Self {
        FiniteDiff {
            step: 1e-4,
            max_coordinates: 5000,
            seed: 0,
            reduction: LossReduction::Mean,
        }
    }
}

/// Relative error with a `1e-8` floor on the denominator.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Compares `(f(θ+h) - f(θ-h)) / 2h` with the analytic gradient on every
/// active coordinate (or a random subset of at least 200).
pub fn finite_diff_check(
    model: &Model,
    data: &Dataset,
    batch: &[TrainTriple],
    opts: FiniteDiff,
) -> Result<GradCheckReport> {
    if !(opts.step.is_finite() && opts.step > 0.0) {
        return Err(Error::Argument(format!(
            "finite-difference step must be > 0, got {}",
            opts.step
        )));
    }
    let (_, analytic) = batch_gradients(model, data, batch, opts.reduction)?;
    let mut coords: Vec<(ParamId, usize)> = ParamId::ALL
        .into_iter()
        .filter(|id| id.is_active(&model.config))
        .flat_map(|id| (0..model.params.get(id).len()).map(move |k| (id, k)))
        .collect();
    let keep = opts.max_coordinates.max(200);
    if coords.len() > keep {
        let mut rng = seed::rng(opts.seed);
        let mut picked: Vec<usize> = index::sample(&mut rng, coords.len(), keep).into_vec();
        picked.sort_unstable();
        coords = picked.into_iter().map(|i| coords[i]).collect();
    }

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: coords.len(),
    };
    for (id, k) in coords {
        let original = probe.params.get(id).as_slice()[k];
        probe.params.get_mut(id).as_mut_slice()[k] = original + opts.step;
        let plus = batch_objective(&probe, data, batch, opts.reduction)?;
        probe.params.get_mut(id).as_mut_slice()[k] = original - opts.step;
        let minus = batch_objective(&probe, data, batch, opts.reduction)?;
        probe.params.get_mut(id).as_mut_slice()[k] = original;

        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic.get(id).as_slice()[k];
        let err = relative_error(a, numeric);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = err;
            report.worst = Some((id.name().to_string(), k));
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// Random check instance: M = 5, N = 8, L = 20, F = 6, d1 = d2 = 4.
pub fn random_instance(
    visual: VisualMode,
    fusion: FusionMode,
    seed_value: u64,
) -> (Model, Dataset, Vec<TrainTriple>) {
    let (m, n, l, f, d) = (5, 8, 20, 6, 4);
    let mut rng = seed::rng(seed::derive(seed_value, "gradcheck"));
    // Every item gets one frame, the rest are spread at random.
    let mut frame_item: Vec<usize> = (0..n).collect();
    frame_item.extend((n..l).map(|_| rng.random_range(0..n)));
    frame_item.sort_unstable();
    let features = Matrix::normal(l, f, 1.0, &mut rng);
    let data = Dataset::new(
        IdMap::from_ids((0..m).map(|a| format!("u{a}"))),
        IdMap::from_ids((0..n).map(|i| format!("i{i}"))),
        IdMap::from_ids((0..l).map(|k| format!("f{k:02}"))),
        vec![],
        frame_item,
        features,
        vec![],
    )
    .expect("valid random instance");

    let cfg = ModelConfig {
        d1: d,
        d2: d,
        attn_hidden_visual: d,
        attn_hidden_rating: d,
        reduced_visual_dim: d,
        lambda1: 0.01,
        init_scale: 0.5,
        seed: seed_value,
        ..ModelConfig::default()
    }
    .with_modes(visual, fusion);
    let model = Model::new(
        cfg,
        Dims {
            num_users: m,
            num_items: n,
            feature_dim: f,
        },
    )
    .expect("valid config");

    let batch = (0..12)
        .map(|_| {
            let user = rng.random_range(0..m);
            let pos = rng.random_range(0..n);
            let neg = (pos + rng.random_range(1..n)) % n;
            TrainTriple { user, pos, neg }
        })
        .collect();
    (model, data, batch)
}

pub const ALL_MODES: [(VisualMode, FusionMode); 6] = [
    (VisualMode::Off, FusionMode::Sum),
    (VisualMode::Off, FusionMode::Att),
    (VisualMode::Avg, FusionMode::Sum),
    (VisualMode::Avg, FusionMode::Att),
    (VisualMode::Att, FusionMode::Sum),
    (VisualMode::Att, FusionMode::Att),
];
