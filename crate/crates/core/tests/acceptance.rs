//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use jifr::checkpoint::Checkpoint;
use jifr::data::{
    generate_synthetic, split_ratings, Dataset, SplitDataset, SplitOptions, SynthConfig,
};
use jifr::eval::{
    evaluate_frame_rec, evaluate_item_pairs, evaluate_item_rec, random_frame_baseline,
    FrameEvalOptions, ItemEvalOptions,
};
use jifr::gradcheck::{finite_diff_check, random_instance, FiniteDiff, ALL_MODES};
use jifr::linalg::softmax;
use jifr::model::{Dims, FusionMode, Model, ModelConfig, ParamId, VisualMode};
use jifr::seed;
use jifr::training::{fit, OptimizerHyper};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn dims_of(d: &Dataset) -> Dims {
    Dims {
        num_users: d.num_users(),
        num_items: d.num_items(),
        feature_dim: d.feature_dim(),
    }
}

fn small_config(d: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        d1: d,
        d2: d,
        attn_hidden_visual: d,
        attn_hidden_rating: d,
        reduced_visual_dim: d,
        init_scale: 0.5,
        seed,
        ..ModelConfig::default()
    }
}

fn synth(users: usize, items: usize, ratings_per_user: usize, seed: u64) -> Dataset {
    let cfg = SynthConfig {
        num_users: users,
        num_items: items,
        ratings_per_user,
        seed,
        ..SynthConfig::default()
    };
    generate_synthetic(&cfg)
        .map_err(|e| e.to_string())
        .unwrap()
        .0
}

fn gradient_oracle() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for (v, f) in ALL_MODES {
        let (model, data, batch) = random_instance(v, f, 11);
        let r = finite_diff_check(&model, &data, &batch, FiniteDiff::default())
            .map_err(|e| e.to_string())?;
        let tol = if (v, f) == (VisualMode::Off, FusionMode::Sum) {
            1e-6
        } else {
            1e-4
        };
        ensure(
            r.max_rel_error < tol,
            format!(
                "{v}/{f}: max relative error {:.3e} >= {tol:e} at {:?}",
                r.max_rel_error, r.worst
            ),
        )?;
        worst = worst.max(r.max_rel_error);
    }
    let elapsed = started.elapsed();
    ensure(
        elapsed < Duration::from_secs(30),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "6 modes, worst relative error {worst:.2e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn normalization_invariants() -> Outcome {
    let data = synth(60, 120, 10, 21);
    let model = Model::new(small_config(8, 21), dims_of(&data)).map_err(|e| e.to_string())?;
    let mut rng = seed::rng(21);
    let (mut frame_dev, mut beta_dev, mut shift_dev) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let item = rng.random_range(0..data.num_items());
        let user = rng.random_range(0..data.num_users());
        let w = model
            .frame_attention_weights(item, &data)
            .map_err(|e| e.to_string())?;
        frame_dev = frame_dev.max((w.iter().sum::<f64>() - 1.0).abs());
        let x = model
            .item_visual_att(item, &data)
            .map_err(|e| e.to_string())?;
        let (b1, b2) = model
            .rating_attention(user, item, &x)
            .map_err(|e| e.to_string())?;
        beta_dev = beta_dev.max((b1 + b2 - 1.0).abs());

        let n = rng.random_range(1..=8);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..20.0)).collect();
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        for (a, b) in softmax(&logits).iter().zip(softmax(&shifted)) {
            shift_dev = shift_dev.max((a - b).abs());
        }
    }
    ensure(
        frame_dev <= 1e-9,
        format!("frame weights deviate by {frame_dev:e}"),
    )?;
    ensure(
        beta_dev <= 1e-12,
        format!("beta1 + beta2 deviates by {beta_dev:e}"),
    )?;
    ensure(
        shift_dev <= 1e-9,
        format!("softmax shift changes weights by {shift_dev:e}"),
    )?;
    Ok(format!(
        "max deviations: frame sum {frame_dev:.1e}, beta sum {beta_dev:.1e}, shift {shift_dev:.1e}"
    ))
}

fn vbpr_reference(model: &Model, data: &Dataset, user: usize, item: usize) -> f64 {
    let p = &model.params;
    let u = p.get(ParamId::UserFactors).row(user);
    let v = p.get(ParamId::ItemFactors).row(item);
    let w = p.get(ParamId::UserVisual).row(user);
    let proj = p.get(ParamId::VisualProjection);
    let frames = data.frames_of(item);
    let mut x = vec![0.0; proj.rows()];
    for &k in frames {
        let c = data.features(k);
        for (r, xr) in x.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, cj) in c.iter().enumerate() {
                s += proj.get(r, j) * cj;
            }
            *xr += s;
        }
    }
    let n = frames.len() as f64;
    let mut score = 0.0;
    for (a, b) in u.iter().zip(v) {
        score += a * b;
    }
    let mut visual = 0.0;
    for (a, b) in w.iter().zip(&x) {
        visual += a * (b / n);
    }
    score + visual
}

fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn degeneracy() -> Outcome {
    let data = synth(50, 100, 10, 31);
    let avg_sum = Model::new(
        small_config(8, 31).with_modes(VisualMode::Avg, FusionMode::Sum),
        dims_of(&data),
    )
    .map_err(|e| e.to_string())?;
    let mut checked = 0usize;
    for a in 0..data.num_users() {
        for i in 0..data.num_items() {
            let got = avg_sum
                .predict_item_score(a, i, &data)
                .map_err(|e| e.to_string())?;
            let want = vbpr_reference(&avg_sum, &data, a, i);
            ensure(got == want, format!("({a}, {i}): {got} != VBPR {want}"))?;
            checked += 1;
        }
    }

    let mut rankings = 0usize;
    for visual in [VisualMode::Avg, VisualMode::Att] {
        let mut uniform = Model::new(
            small_config(8, 32).with_modes(visual, FusionMode::Att),
            dims_of(&data),
        )
        .map_err(|e| e.to_string())?;
        uniform.params.get_mut(ParamId::RatingAttnOut).fill(0.0);
        let summed = Model::from_parts(
            uniform.config.clone().with_modes(visual, FusionMode::Sum),
            uniform.params.clone(),
        )
        .map_err(|e| e.to_string())?;
        for a in 0..data.num_users() {
            let score_all = |m: &Model| -> Result<Vec<f64>, String> {
                (0..data.num_items())
                    .map(|i| m.predict_item_score(a, i, &data).map_err(|e| e.to_string()))
                    .collect()
            };
            let (ua, sa) = (score_all(&uniform)?, score_all(&summed)?);
            ensure(
                ranking(&ua) == ranking(&sa),
                format!("{visual}: user {a} ranking differs"),
            )?;
            rankings += 1;
        }
    }
    Ok(format!(
        "{checked} AVG/SUM scores equal the VBPR formula; {rankings} user rankings identical with uniform fusion"
    ))
}

fn brute_force(scores: &[f64], k: usize) -> (f64, f64) {
    // Stable sort on descending score with the positive (index 0) placed after ties.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then_with(|| (a == 0).cmp(&(b == 0)))
    });
    let rank = order.iter().position(|&c| c == 0).unwrap() + 1;
    let hit = rank <= k;
    (
        f64::from(u8::from(hit)),
        if hit {
            1.0 / ((rank + 1) as f64).log2()
        } else {
            0.0
        },
    )
}

fn check_against_oracle<F>(
    score: F,
    pairs: &[(usize, usize)],
    rated: &[Vec<usize>],
    num_items: usize,
    trial: u64,
) -> Result<(), String>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let ks = vec![1, 2, 3, 5, 10];
    let opts = ItemEvalOptions {
        ks: ks.clone(),
        negatives: num_items,
        repeats: 1,
        seed: trial,
    };
    let report = evaluate_item_pairs(|a, i| Ok(score(a, i)), pairs, rated, num_items, &opts)
        .map_err(|e| e.to_string())?;
    for &k in &ks {
        let (mut hr, mut ndcg) = (0.0, 0.0);
        for &(a, i) in pairs {
            let mut scores = vec![score(a, i)];
            scores.extend(
                (0..num_items)
                    .filter(|j| rated[a].binary_search(j).is_err())
                    .map(|j| score(a, j)),
            );
            ensure(scores.len() <= 10, "instance too large to enumerate")?;
            let (h, g) = brute_force(&scores, k);
            hr += h;
            ndcg += g;
        }
        let n = pairs.len() as f64;
        let m = report.at(k).unwrap();
        ensure(
            m.hr == hr / n && m.ndcg == ndcg / n,
            format!(
                "trial {trial} K={k}: got ({}, {}), oracle ({}, {})",
                m.hr,
                m.ndcg,
                hr / n,
                ndcg / n
            ),
        )?;
    }
    Ok(())
}

fn metric_oracle() -> Outcome {
    for trial in 0..100u64 {
        let data = synth(8, 10, 3, 400 + trial);
        let splits = split_ratings(
            &data,
            SplitOptions {
                seed: trial,
                ..SplitOptions::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let rated = splits.rated_by_user();
        if trial % 2 == 0 {
            let model =
                Model::new(small_config(4, trial), dims_of(&data)).map_err(|e| e.to_string())?;
            let report_model = evaluate_item_rec(
                &model,
                &splits,
                &ItemEvalOptions {
                    ks: vec![1, 5],
                    negatives: 10,
                    repeats: 1,
                    seed: trial,
                },
            )
            .map_err(|e| e.to_string())?;
            let score = |a: usize, i: usize| model.predict_item_score(a, i, &data).unwrap();
            check_against_oracle(score, &splits.test, &rated, data.num_items(), trial)?;
            let via_pairs = evaluate_item_pairs(
                |a, i| Ok(score(a, i)),
                &splits.test,
                &rated,
                data.num_items(),
                &ItemEvalOptions {
                    ks: vec![1, 5],
                    negatives: 10,
                    repeats: 1,
                    seed: trial,
                },
            )
            .map_err(|e| e.to_string())?;
            ensure(
                report_model.metrics == via_pairs.metrics,
                format!("trial {trial}: model path differs"),
            )?;
        } else {
            // Coarse integer scores force ties.
            let mut rng = seed::rng(trial);
            let table: Vec<Vec<f64>> = (0..data.num_users())
                .map(|_| {
                    (0..data.num_items())
                        .map(|_| f64::from(rng.random_range(0..3u8)))
                        .collect()
                })
                .collect();
            check_against_oracle(
                |a, i| table[a][i],
                &splits.test,
                &rated,
                data.num_items(),
                trial,
            )?;
        }
    }
    Ok("100 trials (50 model scores, 50 tied integer scores) match the full-ranking oracle exactly".into())
}

fn random_baseline() -> Outcome {
    let data = synth(600, 300, 20, 51);
    let splits = split_ratings(
        &data,
        SplitOptions {
            seed: 51,
            ..SplitOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(
        (0..data.num_items()).all(|i| data.frames_of(i).len() == 5),
        "items do not all have 5 frames",
    )?;
    let pairs = splits.frame_test.len();
    ensure(pairs >= 2000, format!("only {pairs} frame test pairs"))?;
    let opts = FrameEvalOptions {
        ks: vec![1],
        exclude_singletons: false,
    };
    let hr1 = random_frame_baseline(&splits, &opts, 51)
        .map_err(|e| e.to_string())?
        .at(1)
        .unwrap()
        .hr;
    ensure((hr1 - 0.2).abs() <= 0.03, format!("HR@1 = {hr1:.4}"))?;
    Ok(format!("HR@1 = {hr1:.4} over {pairs} pairs"))
}

struct Trained {
    item_ndcg15: f64,
    frame: Option<(f64, f64)>,
    seconds: f64,
}

fn train_and_eval(
    splits: &SplitDataset,
    visual: VisualMode,
    fusion: FusionMode,
) -> Result<Trained, String> {
    let cfg = ModelConfig {
        seed: 7,
        ..ModelConfig::default()
    }
    .with_modes(visual, fusion);
    let hyper = OptimizerHyper {
        epochs: 50,
        seed: 7,
        ..OptimizerHyper::default()
    };
    let started = Instant::now();
    let (model, log) = fit(splits, &cfg, &hyper).map_err(|e| e.to_string())?;
    let seconds = started.elapsed().as_secs_f64();
    ensure(
        log.epochs.len() >= 5,
        format!(
            "{visual}/{fusion}: stopped after {} epochs",
            log.epochs.len()
        ),
    )?;
    let loss5 = log.epochs[4].train_loss;
    ensure(
        loss5 < log.initial_loss,
        format!(
            "{visual}/{fusion}: loss after 5 epochs {loss5} >= initial {}",
            log.initial_loss
        ),
    )?;
    let items = evaluate_item_rec(
        &model,
        splits,
        &ItemEvalOptions {
            ks: vec![15],
            repeats: 1,
            seed: 7,
            ..ItemEvalOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let frame_opts = FrameEvalOptions {
        ks: vec![3],
        exclude_singletons: false,
    };
    let frame = match evaluate_frame_rec(&model, splits, &frame_opts) {
        Ok(r) => Some((r.at(3).unwrap().hr, r.at(3).unwrap().ndcg)),
        Err(jifr::Error::Unsupported(_)) => None,
        Err(e) => return Err(e.to_string()),
    };
    Ok(Trained {
        item_ndcg15: items.at(15).unwrap().ndcg,
        frame,
        seconds,
    })
}

fn planted_recovery() -> Outcome {
    let started = Instant::now();
    let (data, _) = generate_synthetic(&SynthConfig {
        seed: 7,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let splits = split_ratings(
        &data,
        SplitOptions {
            seed: 7,
            ..SplitOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let frame_opts = FrameEvalOptions {
        ks: vec![3],
        exclude_singletons: false,
    };
    let rnd = random_frame_baseline(&splits, &frame_opts, 7)
        .map_err(|e| e.to_string())?
        .at(3)
        .unwrap()
        .hr;

    let off = train_and_eval(&splits, VisualMode::Off, FusionMode::Sum)?;
    let avg = train_and_eval(&splits, VisualMode::Avg, FusionMode::Sum)?;
    let full = train_and_eval(&splits, VisualMode::Att, FusionMode::Att)?;

    let (full_hr3, full_ndcg3) = full.frame.ok_or("ATT/ATT cannot score frames")?;
    ensure(
        full_hr3 >= 1.5 * rnd,
        format!("(a) frame HR@3 {full_hr3:.4} < 1.5 x random {rnd:.4}"),
    )?;
    ensure(off.frame.is_none(), "(b) OFF scored frames")?;
    let (_, avg_ndcg3) = avg.frame.ok_or("(b) AVG/SUM cannot score frames")?;
    ensure(
        full_ndcg3 >= avg_ndcg3,
        format!("(b) ATT/ATT frame NDCG@3 {full_ndcg3:.4} < AVG/SUM {avg_ndcg3:.4}"),
    )?;
    ensure(
        full.item_ndcg15 >= off.item_ndcg15,
        format!(
            "(c) ATT/ATT item NDCG@15 {:.4} < OFF {:.4}",
            full.item_ndcg15, off.item_ndcg15
        ),
    )?;
    let elapsed = started.elapsed();
    ensure(
        elapsed < Duration::from_secs(600),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "frame HR@3 {full_hr3:.3} vs random {rnd:.3}; frame NDCG@3 ATT/ATT {full_ndcg3:.3} vs AVG/SUM {avg_ndcg3:.3}; \
         item NDCG@15 ATT/ATT {:.3} vs OFF {:.3}; train {:.0}s/{:.0}s/{:.0}s, total {:.0}s",
        full.item_ndcg15,
        off.item_ndcg15,
        off.seconds,
        avg.seconds,
        full.seconds,
        elapsed.as_secs_f64()
    ))
}

fn jifr(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_jifr"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!(
            "jifr {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ),
    )
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let d = dir.path();
        jifr(
            d,
            &[
                "synth",
                "--users",
                "40",
                "--items",
                "60",
                "--ratings-per-user",
                "8",
                "--seed",
                "3",
                "--out",
                "data",
            ],
        )?;
        jifr(
            d,
            &[
                "train",
                "--data",
                "data",
                "--d",
                "8",
                "--epochs",
                "3",
                "--batch-size",
                "64",
                "--seed",
                "5",
                "--out",
                "run",
            ],
        )?;
        jifr(
            d,
            &[
                "eval-items",
                "--data",
                "data",
                "--split",
                "run/split",
                "--checkpoint",
                "run/model.ckpt.json",
                "--negatives",
                "30",
                "--repeats",
                "3",
                "--seed",
                "5",
                "--out",
                "eval",
            ],
        )?;
    }
    let files = [
        "run/run.json",
        "run/model.ckpt.json",
        "eval/run.json",
        "eval/item_eval.jsonl",
        "eval/item_eval.tsv",
    ];
    for f in files {
        let a = std::fs::read(dirs[0].path().join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, format!("{f} differs between runs"))?;
    }
    Ok(format!(
        "{} artifacts byte-identical across two runs",
        files.len()
    ))
}

fn round_trip() -> Outcome {
    let data = synth(40, 60, 8, 81);
    let splits = split_ratings(
        &data,
        SplitOptions {
            seed: 81,
            ..SplitOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let hyper = OptimizerHyper {
        epochs: 2,
        batch_size: 64,
        seed: 81,
        ..OptimizerHyper::default()
    };
    let (model, _) = fit(&splits, &small_config(8, 81), &hyper).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt.json");
    Checkpoint::new(model.clone(), &data)
        .save(&path)
        .map_err(|e| e.to_string())?;
    let loaded = Checkpoint::load(&path).map_err(|e| e.to_string())?;
    loaded.check_dataset(&data).map_err(|e| e.to_string())?;
    let restored = loaded.model;
    let mut rng = seed::rng(81);
    for _ in 0..1000 {
        let a = rng.random_range(0..data.num_users());
        let i = rng.random_range(0..data.num_items());
        let k = rng.random_range(0..data.num_frames());
        let before = model
            .predict_item_score(a, i, &data)
            .map_err(|e| e.to_string())?;
        let after = restored
            .predict_item_score(a, i, &data)
            .map_err(|e| e.to_string())?;
        ensure(
            before.to_bits() == after.to_bits(),
            format!("item ({a}, {i}): {before} != {after}"),
        )?;
        let before = model
            .predict_frame_score(a, k, &data)
            .map_err(|e| e.to_string())?;
        let after = restored
            .predict_frame_score(a, k, &data)
            .map_err(|e| e.to_string())?;
        ensure(
            before.to_bits() == after.to_bits(),
            format!("frame ({a}, {k}): {before} != {after}"),
        )?;
    }
    Ok("1000 item and 1000 frame queries bit-identical after save/load".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient oracle", gradient_oracle),
        ("normalization invariants", normalization_invariants),
        ("degeneracy equivalence", degeneracy),
        ("metric oracle", metric_oracle),
        ("random-baseline calibration", random_baseline),
        ("planted-model recovery", planted_recovery),
        ("determinism", determinism),
        ("checkpoint round-trip", round_trip),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("acceptance {} {name}: PASS ({secs:.1}s) {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("acceptance {} {name}: FAIL ({secs:.1}s) {why}", n + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
