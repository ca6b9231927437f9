//! Command-line surface: `synth`, `split`, `train`, `eval-items`,
//! `eval-frames`, `gradcheck` and `ablate`.
//!
//! Every run writes `run.json` with the resolved flags and derived seeds.
//! Failures print one JSON line `{"error": kind, "message": ...}` on stderr;
//! flag problems exit with 2, data problems with 1.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::data::{
    generate_synthetic, load_dataset, load_split, prune_dataset, split_ratings, write_dataset,
    write_split, write_text_file, Dataset, SplitDataset, SplitOptions, SynthConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_frame_rec, evaluate_item_rec, random_frame_baseline, EvalReport, FrameEvalOptions,
    ItemEvalOptions,
};
use crate::gradcheck::{finite_diff_check, random_instance, FiniteDiff, ALL_MODES};
use crate::model::{Activation, FusionMode, Model, ModelConfig, VisualMode};
use crate::seed;
use crate::training::{fit_with, LossReduction, OptimizerHyper};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "jifr",
    version,
    about = "Joint multimedia item and key-frame recommendation"
)]
struct Cli {
    /// Cap on evaluation worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Floating-point precision. Only f64 is built.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Precision {
    F32,
    F64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Generate a planted-model synthetic dataset.
    Synth(SynthArgs),
    /// Split a dataset's ratings into train / validation / test.
    Split(SplitCmd),
    /// Train a model and write its checkpoint.
    Train(TrainCmd),
    /// Item recommendation: rank test items against sampled unrated items.
    EvalItems(EvalItemsCmd),
    /// Key-frame recommendation: rank each liked frame among its item's frames.
    EvalFrames(EvalFramesCmd),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckCmd),
    /// Train the AVG/ATT visual × SUM/ATT fusion grid and compare.
    Ablate(AblateCmd),
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 300)]
    items: usize,
    #[arg(long, default_value_t = 5)]
    frames_per_item: usize,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    /// Latent dimension of the planted model.
    #[arg(long, default_value_t = 4)]
    planted_dim: usize,
    #[arg(long, default_value_t = 20)]
    ratings_per_user: usize,
    /// Liked frames generated per rated pair.
    #[arg(long, default_value_t = 1)]
    frame_likes: usize,
    #[arg(long, default_value_t = 3.0)]
    salient_strength: f64,
    #[arg(long, default_value_t = 2.0)]
    attention_sharpness: f64,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// Directory with ratings.tsv, frames.tsv, features.tsv and optionally frame_likes.tsv.
    #[arg(long)]
    data: PathBuf,
    /// Drop users and items with fewer ratings (0 keeps everything).
    #[arg(long, default_value_t = 0)]
    min_count: usize,
}

#[derive(Debug, Args, Serialize)]
struct SplitArgs {
    /// Directory with train.tsv, valid.tsv, test.tsv and frame_test.tsv; when
    /// absent the split is drawn from the master seed.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    valid_frac: f64,
    /// Split each user's ratings separately.
    #[arg(long)]
    per_user_split: bool,
}

#[derive(Debug, Args, Serialize)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = VisualArg::Att)]
    visual: VisualArg,
    #[arg(long, value_enum, default_value_t = FusionArg::Att)]
    fusion: FusionArg,
    /// Sets both latent dimensions.
    #[arg(long, default_value_t = 32)]
    d: usize,
    /// Collaborative dimension (overrides --d).
    #[arg(long)]
    d1: Option<usize>,
    /// Visual dimension (overrides --d).
    #[arg(long)]
    d2: Option<usize>,
    #[arg(long, default_value_t = 32)]
    attn_hidden_visual: usize,
    #[arg(long, default_value_t = 32)]
    attn_hidden_rating: usize,
    #[arg(long, default_value_t = 32)]
    reduced_visual_dim: usize,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    activation: ActivationArg,
    #[arg(long, default_value_t = 0.001)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    /// Use the value projection as the attention key projection.
    #[arg(long)]
    share_visual_projection: bool,
    /// Hidden-layer biases in both attention networks.
    #[arg(long)]
    attention_bias: bool,
}

#[derive(Debug, Args, Serialize)]
struct OptimArgs {
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 512)]
    batch_size: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    neg_ratio: usize,
    /// Epochs without validation improvement before stopping (0 disables).
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, value_enum, default_value_t = ReductionArg::Mean)]
    loss_reduction: ReductionArg,
    #[arg(long, default_value_t = 100)]
    valid_negatives: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum VisualArg {
    Off,
    Avg,
    Att,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FusionArg {
    Sum,
    Att,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ActivationArg {
    Relu,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ReductionArg {
    Mean,
    Sum,
}

#[derive(Debug, Args, Serialize)]
struct SplitCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalItemsCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15])]
    k: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    negatives: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalFramesCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
    k: Vec<usize>,
    /// Skip pairs whose item has a single frame.
    #[arg(long)]
    exclude_singletons: bool,
    /// Also report the random-frame baseline.
    #[arg(long)]
    random_baseline: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckCmd {
    /// `all` or a comma list of visual-fusion pairs such as `off-sum,att-att`.
    #[arg(long, default_value = "all")]
    modes: String,
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    /// Pass threshold on the max relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AblateCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long, default_value_t = 15)]
    item_k: usize,
    #[arg(long, default_value_t = 3)]
    frame_k: usize,
    #[arg(long, default_value_t = 1000)]
    negatives: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

impl From<VisualArg> for VisualMode {
    fn from(v: VisualArg) -> Self {
        match v {
            VisualArg::Off => VisualMode::Off,
            VisualArg::Avg => VisualMode::Avg,
            VisualArg::Att => VisualMode::Att,
        }
    }
}

impl From<FusionArg> for FusionMode {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Sum => FusionMode::Sum,
            FusionArg::Att => FusionMode::Att,
        }
    }
}

/// Seeds of every module, derived from the master seed.
#[derive(Debug, Clone, Copy, Serialize)]
struct Seeds {
    master: u64,
    synth: u64,
    split: u64,
    init: u64,
    train: u64,
    eval: u64,
}

impl Seeds {
    fn from_master(master: u64) -> Self {
        Seeds {
            master,
            synth: seed::derive(master, "synth"),
            split: seed::derive(master, "split"),
            init: seed::derive(master, "init"),
            train: seed::derive(master, "train"),
            eval: seed::derive(master, "eval"),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    config: &'a Cli,
    seeds: Seeds,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_config: Option<&'a ModelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimizer: Option<&'a OptimizerHyper>,
}

fn write_manifest(
    out: &Path,
    cli: &Cli,
    seeds: Seeds,
    model: Option<&ModelConfig>,
    optim: Option<&OptimizerHyper>,
) -> Result<()> {
    let manifest = Manifest {
        program: "jifr",
        version: env!("CARGO_PKG_VERSION"),
        config: cli,
        seeds,
        model_config: model,
        optimizer: optim,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("plain data") + "\n";
    write_text_file(&out.join("run.json"), &text)
}

fn model_config(args: &ModelArgs, seed: u64) -> ModelConfig {
    ModelConfig {
        d1: args.d1.unwrap_or(args.d),
        d2: args.d2.unwrap_or(args.d),
        attn_hidden_visual: args.attn_hidden_visual,
        attn_hidden_rating: args.attn_hidden_rating,
        reduced_visual_dim: args.reduced_visual_dim,
        visual_mode: args.visual.into(),
        fusion_mode: args.fusion.into(),
        activation: match args.activation {
            ActivationArg::Relu => Activation::Relu,
        },
        lambda1: args.lambda1,
        init_scale: args.init_scale,
        share_visual_projection: args.share_visual_projection,
        attention_bias: args.attention_bias,
        seed,
    }
}

fn optimizer(args: &OptimArgs, seed: u64) -> OptimizerHyper {
    OptimizerHyper {
        learning_rate: args.lr,
        beta1: args.beta1,
        beta2: args.beta2,
        epsilon: args.epsilon,
        batch_size: args.batch_size,
        epochs: args.epochs,
        neg_ratio: args.neg_ratio,
        early_stop_patience: args.patience,
        loss_reduction: match args.loss_reduction {
            ReductionArg::Mean => LossReduction::Mean,
            ReductionArg::Sum => LossReduction::Sum,
        },
        valid_negatives: args.valid_negatives,
        seed,
    }
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    let dir = &args.data;
    let likes = dir.join("frame_likes.tsv");
    let d = load_dataset(
        &dir.join("ratings.tsv"),
        &dir.join("frames.tsv"),
        &dir.join("features.tsv"),
        likes.exists().then_some(likes.as_path()),
    )?;
    if args.min_count > 0 {
        prune_dataset(&d, args.min_count)
    } else {
        Ok(d)
    }
}

fn resolve_split(data: Dataset, args: &SplitArgs, seeds: Seeds) -> Result<SplitDataset> {
    let s = match &args.split {
        Some(dir) => load_split(dir, data)?,
        None => split_ratings(
            &data,
            SplitOptions {
                train_frac: args.train_frac,
                valid_frac: args.valid_frac,
                seed: seeds.split,
                per_user: args.per_user_split,
            },
        )?,
    };
    for w in s.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(s)
}

fn load_checkpoint(path: &Path, data: &Dataset) -> Result<Model> {
    let ck = Checkpoint::load(path)?;
    ck.check_dataset(data)?;
    Ok(ck.model)
}

fn write_report(out: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    write_text_file(&out.join(format!("{stem}.jsonl")), &report.to_jsonl())?;
    write_text_file(&out.join(format!("{stem}.tsv")), &report.to_tsv())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn print_report(label: &str, report: &EvalReport) {
    for m in &report.metrics {
        println!(
            "{label}\tK={}\tHR={:.4}\tNDCG={:.4}\tHR_std={:.4}\tNDCG_std={:.4}",
            m.k, m.hr, m.ndcg, m.hr_std, m.ndcg_std
        );
    }
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let seeds = Seeds::from_master(a.seed);
    let cfg = SynthConfig {
        num_users: a.users,
        num_items: a.items,
        frames_per_item: a.frames_per_item,
        feature_dim: a.feature_dim,
        planted_dim: a.planted_dim,
        ratings_per_user: a.ratings_per_user,
        frame_likes_per_pair: a.frame_likes,
        salient_strength: a.salient_strength,
        attention_sharpness: a.attention_sharpness,
        seed: seeds.synth,
    };
    let (data, planted) = generate_synthetic(&cfg)?;
    write_dataset(&a.out, &data)?;
    let mut salient = String::new();
    for (k, s) in planted.salient.iter().enumerate() {
        salient.push_str(&format!(
            "{}\t{}\n",
            data.frames().original(k),
            u8::from(*s)
        ));
    }
    write_text_file(&a.out.join("salient.tsv"), &salient)?;
    Checkpoint::new(planted.model, &data).save(&a.out.join("planted.ckpt.json"))?;
    write_manifest(&a.out, cli, seeds, None, None)?;
    println!(
        "synth\tusers={}\titems={}\tframes={}\tratings={}\tframe_likes={}",
        data.num_users(),
        data.num_items(),
        data.num_frames(),
        data.ratings().len(),
        data.frame_likes().len()
    );
    Ok(())
}

fn cmd_split(cli: &Cli, a: &SplitCmd) -> Result<()> {
    let seeds = Seeds::from_master(a.seed);
    let s = resolve_split(load_data(&a.data)?, &a.split, seeds)?;
    write_split(&a.out, &s)?;
    write_manifest(&a.out, cli, seeds, None, None)?;
    println!(
        "split\ttrain={}\tvalid={}\ttest={}\tframe_test={}",
        s.train.len(),
        s.valid.len(),
        s.test.len(),
        s.frame_test.len()
    );
    Ok(())
}

fn train_one(
    splits: &SplitDataset,
    cfg: &ModelConfig,
    hyper: &OptimizerHyper,
    label: &str,
) -> Result<(Model, crate::training::TrainLog)> {
    fit_with(splits, cfg, hyper, |r| {
        eprintln!(
            "{label}epoch {:>3}  loss {:.5}  valid HR@10 {}  ({:.1}s)",
            r.epoch,
            r.train_loss,
            r.valid_hr10.map_or("-".into(), |v| format!("{v:.4}")),
            r.seconds
        );
    })
}

fn cmd_train(cli: &Cli, a: &TrainCmd) -> Result<()> {
    let seeds = Seeds::from_master(a.seed);
    let cfg = model_config(&a.model, seeds.init);
    cfg.validate()?;
    let hyper = optimizer(&a.optim, seeds.train);
    hyper.validate()?;
    let splits = resolve_split(load_data(&a.data)?, &a.split, seeds)?;
    let (model, mut log) = train_one(&splits, &cfg, &hyper, "")?;
    let ckpt = a.out.join("model.ckpt.json");
    Checkpoint::new(model, &splits.base).save(&ckpt)?;
    log.checkpoint = Some(ckpt.display().to_string());
    write_text_file(&a.out.join("train_log.jsonl"), &log.to_jsonl())?;
    write_split(&a.out.join("split"), &splits)?;
    write_manifest(&a.out, cli, seeds, Some(&cfg), Some(&hyper))?;
    println!(
        "train\tepochs={}\tbest_epoch={}\tinitial_loss={:.6}\tcheckpoint={}",
        log.epochs.len(),
        log.best_epoch,
        log.initial_loss,
        ckpt.display()
    );
    Ok(())
}

fn cmd_eval_items(cli: &Cli, a: &EvalItemsCmd) -> Result<()> {
    let seeds = Seeds::from_master(a.seed);
    let splits = resolve_split(load_data(&a.data)?, &a.split, seeds)?;
    let model = load_checkpoint(&a.checkpoint, &splits.base)?;
    let opts = ItemEvalOptions {
        ks: a.k.clone(),
        negatives: a.negatives,
        repeats: a.repeats,
        seed: seeds.eval,
    };
    let report = evaluate_item_rec(&model, &splits, &opts)?;
    write_report(&a.out, "item_eval", &report)?;
    write_manifest(&a.out, cli, seeds, Some(&model.config), None)?;
    print_report("items", &report);
    Ok(())
}

fn cmd_eval_frames(cli: &Cli, a: &EvalFramesCmd) -> Result<()> {
    let seeds = Seeds::from_master(a.seed);
    let splits = resolve_split(load_data(&a.data)?, &a.split, seeds)?;
    let model = load_checkpoint(&a.checkpoint, &splits.base)?;
    let opts = FrameEvalOptions {
        ks: a.k.clone(),
        exclude_singletons: a.exclude_singletons,
    };
    let report = evaluate_frame_rec(&model, &splits, &opts)?;
    write_report(&a.out, "frame_eval", &report)?;
    print_report("frames", &report);
    if a.random_baseline {
        let rnd = random_frame_baseline(&splits, &opts, seeds.eval)?;
        write_report(&a.out, "frame_eval_random", &rnd)?;
        print_report("random", &rnd);
    }
    write_manifest(&a.out, cli, seeds, Some(&model.config), None)
}

fn parse_modes(list: &str) -> Result<Vec<(VisualMode, FusionMode)>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(ALL_MODES.to_vec());
    }
    list.split(',')
        .map(|m| {
            let (v, f) = m
                .trim()
                .split_once(['-', '/'])
                .ok_or_else(|| Error::Argument(format!("mode '{m}' is not <visual>-<fusion>")))?;
            Ok((v.parse()?, f.parse()?))
        })
        .collect()
}

fn cmd_gradcheck(cli: &Cli, a: &GradcheckCmd) -> Result<bool> {
    #[derive(Serialize)]
    struct Line {
        visual: VisualMode,
        fusion: FusionMode,
        max_rel_error: f64,
        worst: Option<(String, usize)>,
        coordinates: usize,
        pass: bool,
    }
    let seeds = Seeds::from_master(a.seed);
    let opts = FiniteDiff {
        step: a.step,
        seed: seeds.eval,
        ..FiniteDiff::default()
    };
    let mut all_pass = true;
    let mut lines = String::new();
    for (v, f) in parse_modes(&a.modes)? {
        let (model, data, batch) = random_instance(v, f, seeds.init);
        let r = finite_diff_check(&model, &data, &batch, opts)?;
        let pass = r.max_rel_error < a.tolerance;
        all_pass &= pass;
        let line = serde_json::to_string(&Line {
            visual: v,
            fusion: f,
            max_rel_error: r.max_rel_error,
            worst: r.worst,
            coordinates: r.coordinates,
            pass,
        })
        .expect("plain data");
        println!("{line}");
        lines.push_str(&line);
        lines.push('\n');
    }
    if let Some(out) = &a.out {
        write_text_file(&out.join("gradcheck.jsonl"), &lines)?;
        write_manifest(out, cli, seeds, None, None)?;
    }
    Ok(all_pass)
}

fn cmd_ablate(cli: &Cli, a: &AblateCmd) -> Result<()> {
    let seeds = Seeds::from_master(a.seed);
    let hyper = optimizer(&a.optim, seeds.train);
    hyper.validate()?;
    let splits = resolve_split(load_data(&a.data)?, &a.split, seeds)?;
    let grid = [
        (VisualMode::Avg, FusionMode::Sum),
        (VisualMode::Avg, FusionMode::Att),
        (VisualMode::Att, FusionMode::Sum),
        (VisualMode::Att, FusionMode::Att),
    ];
    let item_opts = ItemEvalOptions {
        ks: vec![a.item_k],
        negatives: a.negatives,
        repeats: a.repeats,
        seed: seeds.eval,
    };
    let frame_opts = FrameEvalOptions {
        ks: vec![a.frame_k],
        exclude_singletons: false,
    };
    let mut rows = Vec::new();
    for (v, f) in grid {
        let cfg = ModelConfig {
            visual_mode: v,
            fusion_mode: f,
            ..model_config(&a.model, seeds.init)
        };
        cfg.validate()?;
        let (model, _) = train_one(&splits, &cfg, &hyper, &format!("[{v}/{f}] "))?;
        let items = evaluate_item_rec(&model, &splits, &item_opts)?;
        let frames = evaluate_frame_rec(&model, &splits, &frame_opts)?;
        let i = items.at(a.item_k).expect("requested K");
        let fr = frames.at(a.frame_k).expect("requested K");
        rows.push((v, f, [i.hr, i.ndcg, fr.hr, fr.ndcg]));
    }
    let base = rows[0].2;
    let rel = |x: f64, b: f64| {
        if b == 0.0 {
            f64::NAN
        } else {
            100.0 * (x - b) / b
        }
    };
    let mut table = format!(
        "visual\tfusion\titem_HR@{k}\titem_NDCG@{k}\tframe_HR@{fk}\tframe_NDCG@{fk}\titem_HR_imp%\titem_NDCG_imp%\tframe_HR_imp%\tframe_NDCG_imp%\n",
        k = a.item_k,
        fk = a.frame_k
    );
    for (v, f, m) in &rows {
        table.push_str(&format!(
            "{v}\t{f}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\n",
            m[0],
            m[1],
            m[2],
            m[3],
            rel(m[0], base[0]),
            rel(m[1], base[1]),
            rel(m[2], base[2]),
            rel(m[3], base[3])
        ));
    }
    print!("{table}");
    write_text_file(&a.out.join("ablation.tsv"), &table)?;
    write_manifest(
        &a.out,
        cli,
        seeds,
        Some(&model_config(&a.model, seeds.init)),
        Some(&hyper),
    )
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

fn fail(kind: &str, message: impl Into<String>, code: i32) -> i32 {
    let line = ErrorLine {
        error: kind,
        message: message.into().replace('\n', " "),
    };
    eprintln!("{}", serde_json::to_string(&line).expect("plain data"));
    code
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a).map(|_| 0),
        Command::Split(a) => cmd_split(cli, a).map(|_| 0),
        Command::Train(a) => cmd_train(cli, a).map(|_| 0),
        Command::EvalItems(a) => cmd_eval_items(cli, a).map(|_| 0),
        Command::EvalFrames(a) => cmd_eval_frames(cli, a).map(|_| 0),
        Command::Gradcheck(a) => cmd_gradcheck(cli, a).map(|ok| if ok { 0 } else { 1 }),
        Command::Ablate(a) => cmd_ablate(cli, a).map(|_| 0),
    }
}

/// Parses `argv` (program name first), runs one subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("bad arguments")
                .trim_start_matches("error: ");
            return fail("usage", first, 2);
        }
    };
    if cli.precision == Precision::F32 {
        return fail(
            "usage",
            "--precision f32 is not available in this build; use f64",
            2,
        );
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            return fail(
                "usage",
                format!("cannot start {} threads: {e}", cli.threads),
                2,
            )
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => {
            if code != 0 {
                return fail("gradcheck", "max relative error above tolerance", code);
            }
            0
        }
        Err(e) => fail(e.kind(), e.to_string(), exit_code(&e)),
    }
}
