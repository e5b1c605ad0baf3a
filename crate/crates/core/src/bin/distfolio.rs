//! Batch pipeline driver: synthetic market generation, feature building,
//! teacher labeling, dataset splitting, student training, constrained
//! evaluation, stress transforms, the full seed-grid sweep, and report
//! aggregation. Every subcommand reads one JSON config plus flag
//! overrides and writes a run manifest next to its outputs.
//!
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure,
//! 5 grid completed with failed cells.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use distfolio::allocators::label_dates;
use distfolio::config::{
    load_config, EvaluateConfig, FeatureEntry, FeatureTable, FeaturesConfig, GenSynthConfig,
    GridArtifact, GridCliConfig, LabelConfig, LabelSet, ReportConfig, SplitArtifact, SplitConfig,
    SplitEntry, StressCliConfig, TrackArtifact, TrainCliConfig, UnlabeledEntry, CONFIG_DIR_ENV,
};
use distfolio::error::{Error, Result};
use distfolio::eval::{
    evaluate_frozen, market_series, parse_report_csv, report_csv, reports_for_track, summary_csv,
    trailing_vol, win_rate_csv, RunKey, REGIME_VOL_WINDOW,
};
use distfolio::exec::{ConstraintLevel, ConstraintSpec};
use distfolio::features::{build_feature_matrix, FeatureInputs, FeatureOutcome, FeatureParams};
use distfolio::grid::{filter_label_pairs, run_grid_with};
use distfolio::io;
use distfolio::manifest::{config_hash_of, RunManifest};
use distfolio::nn::NetworkSpec;
use distfolio::panel::ReturnPanel;
use distfolio::stress::apply_stress;
use distfolio::synth::{generate_world, reference_models, stride_dates};
use distfolio::train::{train_sandwich, train_supervised, split_parts, StudentKind, TrainedStudent};

#[derive(Parser)]
#[command(
    name = "distfolio",
    version,
    about = "CVaR portfolio distillation pipeline",
    after_help = format!(
        "Relative --config paths that do not exist in the working directory \
         are looked up under ${CONFIG_DIR_ENV} when it is set."
    )
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a synthetic weekly market and write return/factor CSVs.
    GenSynth(GenSynthArgs),
    /// Build per-date feature rows from return and factor CSVs.
    Features(FeaturesArgs),
    /// Solve the CVaR teacher at stride dates and write weight labels.
    Label(LabelArgs),
    /// Split labeled pairs 60/20/20 and collect the unlabeled pool.
    Split(SplitArgs),
    /// Train one student on a split and save its checkpoint.
    Train(TrainArgs),
    /// Backtest a checkpoint on the test dates under a constraint level.
    Evaluate(EvaluateArgs),
    /// Apply a stress transform to a return CSV.
    Stress(StressArgs),
    /// Run the full world-seed x model-seed sweep with baselines.
    Grid(GridArgs),
    /// Aggregate report CSVs into a summary table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// JSON config path.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_assets: Option<usize>,
    /// Weeks to simulate.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    world_seed: Option<u64>,
    /// Weeks between labeled dates (reported count only).
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Return CSV path.
    #[arg(long)]
    returns: Option<PathBuf>,
    /// Factor CSV path.
    #[arg(long)]
    factors: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    returns: Option<PathBuf>,
    #[arg(long)]
    stride: Option<usize>,
    /// Scenario window in weeks.
    #[arg(long)]
    window: Option<usize>,
    /// CVaR tail level.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    returns: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    world_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    returns: Option<PathBuf>,
    /// dnn_sup | bnn_sup | dnn_sandwich | bnn_sandwich.
    #[arg(long)]
    kind: Option<StudentKind>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    returns: Option<PathBuf>,
    /// L1 | L2 | L3.
    #[arg(long)]
    level: Option<ConstraintLevel>,
    /// Sampled passes per Bayesian prediction.
    #[arg(long)]
    mc_draws: Option<usize>,
    /// Evaluation RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct StressArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    returns: Option<PathBuf>,
    /// Stress RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, conflicts_with = "desk")]
    config: Option<PathBuf>,
    /// Use the workstation-scale preset (8 assets, 600 weeks, 3x3 seeds).
    #[arg(long)]
    desk: bool,
    /// Comma-separated world seeds.
    #[arg(long, value_delimiter = ',')]
    world_seeds: Option<Vec<u64>>,
    /// Comma-separated model seeds.
    #[arg(long, value_delimiter = ',')]
    model_seeds: Option<Vec<u64>>,
    /// Worker threads for training cells; 0 = one per core.
    #[arg(long)]
    workers: Option<usize>,
    /// Skip writing student checkpoints.
    #[arg(long)]
    no_checkpoints: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report CSVs to aggregate.
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::GenSynth(a) => cmd_gen_synth(a),
        Cmd::Features(a) => cmd_features(a),
        Cmd::Label(a) => cmd_label(a),
        Cmd::Split(a) => cmd_split(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Stress(a) => cmd_stress(a),
        Cmd::Grid(a) => cmd_grid(a),
        Cmd::Report(a) => cmd_report(a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Manifest path: `<subcommand>.manifest.json` next to the primary output.
fn manifest_path(primary_out: &Path, subcommand: &str) -> PathBuf {
    let dir = if primary_out.is_dir() {
        primary_out
    } else {
        primary_out.parent().unwrap_or(Path::new("."))
    };
    dir.join(format!("{subcommand}.manifest.json"))
}

fn finish_manifest(
    mut manifest: RunManifest,
    inputs: &[&Path],
    outputs: &[&Path],
    at: &Path,
) -> Result<()> {
    for p in inputs {
        manifest.record_input(p)?;
    }
    for p in outputs {
        manifest.record_output(p)?;
    }
    manifest.save(at)
}

fn cmd_gen_synth(a: GenSynthArgs) -> Result<i32> {
    let mut cfg: GenSynthConfig = load_config(a.config.as_deref())?;
    if let Some(v) = a.n_assets {
        cfg.n_assets = v;
    }
    if let Some(v) = a.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = a.world_seed {
        cfg.world_seed = v;
    }
    if let Some(v) = a.stride {
        cfg.stride = v;
    }
    if let Some(v) = a.out_dir {
        cfg.out_dir = v;
    }
    cfg.validate()?;

    let models = reference_models(cfg.n_assets);
    let world = generate_world(&models, cfg.horizon, cfg.world_seed)?;
    ensure_dir(&cfg.out_dir)?;
    let returns_path = cfg.out_dir.join("returns.csv");
    let factors_path = cfg.out_dir.join("factors.csv");
    io::save_return_csv(&returns_path, &world.returns)?;
    io::save_factor_csv(&factors_path, &world.factors)?;

    let min_hist = FeatureParams::default().min_hist();
    let n_labeled = stride_dates(cfg.horizon, min_hist, cfg.stride).len();

    let mut manifest = RunManifest::new("gen-synth", &cfg)?;
    manifest.record_seed("world", cfg.world_seed);
    finish_manifest(
        manifest,
        &[],
        &[&returns_path, &factors_path],
        &manifest_path(&cfg.out_dir, "gen-synth"),
    )?;

    println!(
        "gen-synth: {} weeks x {} assets (world seed {}) -> {}",
        cfg.horizon,
        cfg.n_assets,
        cfg.world_seed,
        cfg.out_dir.display()
    );
    println!("gen-synth: {n_labeled} labeled dates pre-filter (stride {}, warm-up {min_hist})", cfg.stride);
    Ok(0)
}

fn cmd_features(a: FeaturesArgs) -> Result<i32> {
    let mut cfg: FeaturesConfig = load_config(a.config.as_deref())?;
    if let Some(v) = a.returns {
        cfg.returns = v;
    }
    if let Some(v) = a.factors {
        cfg.factors = v;
    }
    if let Some(v) = a.out {
        cfg.out = v;
    }
    cfg.validate()?;

    let panel = io::load_return_csv(&cfg.returns)?;
    let factors = io::load_factor_csv(&cfg.factors)?;
    if factors.dates != panel.dates {
        return Err(Error::Alignment(format!(
            "{} and {} cover different calendars",
            cfg.returns.display(),
            cfg.factors.display()
        )));
    }
    if panel.rf.is_empty() {
        return Err(Error::Data(format!("{}: no RF column", cfg.returns.display())));
    }
    let mat = panel.dense_simple()?;
    let n = mat.cols();
    let inputs = FeatureInputs {
        dates: panel.dates.clone(),
        asset_names: panel.assets.clone(),
        returns: mat,
        rf: panel.rf.clone(),
        factors: factors.factors.clone(),
    };
    // Strategy-agnostic feature construction: equal-weight previous
    // allocation and a unit position cap at every date.
    let prev = vec![1.0 / n as f64; n];
    let mut entries = Vec::new();
    for t in cfg.params.min_hist()..panel.dates.len() {
        if let FeatureOutcome::Built(m) = build_feature_matrix(&inputs, t, &cfg.params, &prev, 1.0)? {
            entries.push(FeatureEntry { t, date: panel.dates[t], x: m.flatten() });
        }
    }
    let dim = entries.first().map_or(0, |e| e.x.len());
    let table = FeatureTable { config_hash: config_hash_of(&cfg)?, dim, entries };
    io::save_json(&cfg.out, &table)?;

    let manifest = RunManifest::new("features", &cfg)?;
    finish_manifest(
        manifest,
        &[&cfg.returns, &cfg.factors],
        &[&cfg.out],
        &manifest_path(&cfg.out, "features"),
    )?;

    println!(
        "features: {} rows of dim {} -> {}",
        table.entries.len(),
        table.dim,
        cfg.out.display()
    );
    Ok(0)
}

fn cmd_label(a: LabelArgs) -> Result<i32> {
    let mut cfg: LabelConfig = load_config(a.config.as_deref())?;
    if let Some(v) = a.returns {
        cfg.returns = v;
    }
    if let Some(v) = a.stride {
        cfg.stride = v;
    }
    if let Some(v) = a.window {
        cfg.window = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.out {
        cfg.out = v;
    }
    cfg.validate()?;

    let panel = io::load_return_csv(&cfg.returns)?;
    let mat = panel.dense_simple()?;
    let dates = stride_dates(panel.dates.len(), cfg.min_hist, cfg.stride);
    let labels = label_dates(&mat, &dates, cfg.window, cfg.alpha)?;
    let converged = labels.iter().filter(|l| l.converged).count();
    let set = LabelSet {
        config_hash: config_hash_of(&cfg)?,
        window: cfg.window,
        alpha: cfg.alpha,
        labels,
    };
    io::save_json(&cfg.out, &set)?;

    let manifest = RunManifest::new("label", &cfg)?;
    finish_manifest(manifest, &[&cfg.returns], &[&cfg.out], &manifest_path(&cfg.out, "label"))?;

    println!(
        "label: {} teacher labels ({} converged) -> {}",
        set.labels.len(),
        converged,
        cfg.out.display()
    );
    Ok(0)
}

fn cmd_split(a: SplitArgs) -> Result<i32> {
    let mut cfg: SplitConfig = load_config(a.config.as_deref())?;
    if let Some(v) = a.returns {
        cfg.returns = v;
    }
    if let Some(v) = a.features {
        cfg.features = v;
    }
    if let Some(v) = a.labels {
        cfg.labels = v;
    }
    if let Some(v) = a.world_seed {
        cfg.world_seed = v;
    }
    if let Some(v) = a.out {
        cfg.out = v;
    }
    cfg.validate()?;

    let panel = io::load_return_csv(&cfg.returns)?;
    let table: FeatureTable = io::load_json(&cfg.features)?;
    let labels: LabelSet = io::load_json(&cfg.labels)?;
    let horizon = panel.dates.len();

    let feature_map: std::collections::BTreeMap<usize, Vec<f64>> =
        table.entries.iter().map(|e| (e.t, e.x.clone())).collect();
    let pairs = filter_label_pairs(&labels.labels, &feature_map, horizon);
    let kept = pairs.len();
    let (train, val, test, warning) = split_parts(Vec::new(), pairs, cfg.world_seed);

    let to_entries = |v: Vec<(distfolio::train::LabeledPair, usize)>| -> Vec<SplitEntry> {
        v.into_iter()
            .map(|(p, t)| SplitEntry { t, x: p.x, w_teacher: p.w_teacher, real: p.real })
            .collect()
    };
    // The unlabeled pool spans every eligible date regardless of split.
    let unlabeled: Vec<UnlabeledEntry> = table
        .entries
        .iter()
        .filter(|e| e.t + 1 >= cfg.label_window && e.t < horizon)
        .map(|e| UnlabeledEntry { t: e.t, x: e.x.clone() })
        .collect();

    let artifact = SplitArtifact {
        config_hash: config_hash_of(&cfg)?,
        world_seed: cfg.world_seed,
        label_window: cfg.label_window,
        dates: panel.dates.clone(),
        train: to_entries(train),
        val: to_entries(val),
        test: to_entries(test),
        unlabeled,
        warning: warning.clone(),
    };
    io::save_json(&cfg.out, &artifact)?;

    let mut manifest = RunManifest::new("split", &cfg)?;
    manifest.record_seed("world", cfg.world_seed);
    finish_manifest(
        manifest,
        &[&cfg.returns, &cfg.features, &cfg.labels],
        &[&cfg.out],
        &manifest_path(&cfg.out, "split"),
    )?;

    println!(
        "split: {kept} usable labels -> {} train / {} val / {} test, {} unlabeled -> {}",
        artifact.train.len(),
        artifact.val.len(),
        artifact.test.len(),
        artifact.unlabeled.len(),
        cfg.out.display()
    );
    if let Some(w) = warning {
        println!("split: warning: {w}");
    }
    Ok(0)
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let mut cfg: TrainCliConfig = load_config(a.config.as_deref())?;
    if let Some(v) = a.split {
        cfg.split = v;
    }
    if let Some(v) = a.returns {
        cfg.returns = v;
    }
    if let Some(v) = a.kind {
        cfg.kind = v;
    }
    if let Some(v) = a.model_seed {
        cfg.train.model_seed = v;
    }
    if let Some(v) = a.out {
        cfg.out = v;
    }
    cfg.validate()?;

    let artifact: SplitArtifact = io::load_json(&cfg.split)?;
    let panel = io::load_return_csv(&cfg.returns)?;
    let mat = panel.dense_simple()?;
    let dataset = artifact.to_dataset(&mat)?;
    let spec = NetworkSpec::policy(mat.cols(), &cfg.train.hidden, cfg.kind.is_bayesian());
    let student = if cfg.kind.is_sandwich() {
        train_sandwich(&dataset, spec, &cfg.train, cfg.kind)
    } else {
        train_supervised(&dataset, spec, &cfg.train, cfg.train.supervised_budget(), cfg.kind)
    }?;
    student.save(&cfg.out)?;

    let mut manifest = RunManifest::new("train", &cfg)?;
    manifest.record_seed("model", cfg.train.model_seed);
    manifest.record_seed("world", artifact.world_seed);
    finish_manifest(
        manifest,
        &[&cfg.split, &cfg.returns],
        &[&cfg.out],
        &manifest_path(&cfg.out, "train"),
    )?;

    let last = student.curve.last();
    println!(
        "train: {} (seed {}) took {} steps; final {} loss {:.6} -> {}",
        cfg.kind.name(),
        cfg.train.model_seed,
        student.steps,
        last.map_or("-", |c| c.stage.as_str()),
        last.map_or(f64::NAN, |c| c.total),
        cfg.out.display()
    );
    Ok(0)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<i32> {
    let mut cfg: EvaluateConfig = load_config(a.config.as_deref())?;
    if let Some(v) = a.checkpoint {
        cfg.checkpoint = v;
    }
    if let Some(v) = a.split {
        cfg.split = v;
    }
    if let Some(v) = a.returns {
        cfg.returns = v;
    }
    if let Some(v) = a.level {
        cfg.level = v;
    }
    if let Some(v) = a.mc_draws {
        cfg.mc_draws = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.out_dir {
        cfg.out_dir = v;
    }
    cfg.validate()?;

    let student = TrainedStudent::load(&cfg.checkpoint)?;
    let artifact: SplitArtifact = io::load_json(&cfg.split)?;
    let panel = io::load_return_csv(&cfg.returns)?;
    let decide = panel.dense_simple()?;
    let earn = match &cfg.stress {
        Some(spec) => apply_stress(&decide, spec)?,
        None => decide.clone(),
    };
    let points = artifact.test_points()?;
    let spec = ConstraintSpec::for_level(cfg.level);
    let track = evaluate_frozen(&student, &points, &earn, &spec, cfg.mc_draws, cfg.seed)?;

    let idx: Vec<usize> = points.iter().map(|p| p.idx).collect();
    let vols = trailing_vol(&market_series(&decide), &idx, REGIME_VOL_WINDOW);
    let model = cfg.model_name.clone().unwrap_or_else(|| student.kind.name().to_string());
    let key = RunKey {
        model: model.clone(),
        world_seed: artifact.world_seed,
        model_seed: student.config.model_seed,
        universe: cfg.universe,
        level: cfg.level,
        stress: cfg.stress.as_ref().map(|s| s.kind.name().to_string()),
    };
    let reports = reports_for_track(&track, &vols, &key)?;

    ensure_dir(&cfg.out_dir)?;
    let report_path = cfg.out_dir.join("report.csv");
    let track_path = cfg.out_dir.join("track.json");
    io::write_string(&report_path, &report_csv(&reports))?;
    io::save_json(
        &track_path,
        &TrackArtifact {
            config_hash: config_hash_of(&cfg)?,
            model,
            world_seed: key.world_seed,
            model_seed: key.model_seed,
            universe: key.universe,
            level: key.level,
            stress: key.stress.clone(),
            track,
        },
    )?;

    let mut manifest = RunManifest::new("evaluate", &cfg)?;
    manifest.record_seed("eval", cfg.seed);
    manifest.record_seed("world", artifact.world_seed);
    manifest.record_seed("model", key.model_seed);
    finish_manifest(
        manifest,
        &[&cfg.checkpoint, &cfg.split, &cfg.returns],
        &[&report_path, &track_path],
        &manifest_path(&cfg.out_dir, "evaluate"),
    )?;

    let all = &reports[0];
    println!(
        "evaluate: {} at {} over {} weeks: sharpe {}, cvar95 {:.4}, mdd {:.4}, turnover {:.4}",
        key.model,
        cfg.level,
        all.n_weeks,
        all.sharpe.map_or("NA".to_string(), |s| format!("{s:.3}")),
        all.cvar95,
        all.max_drawdown,
        all.mean_turnover,
    );
    Ok(0)
}

fn cmd_stress(a: StressArgs) -> Result<i32> {
    let mut cfg: StressCliConfig = load_config(a.config.as_deref())?;
    if let Some(v) = a.returns {
        cfg.returns = v;
    }
    if let Some(v) = a.seed {
        cfg.stress.seed = v;
    }
    if let Some(v) = a.out {
        cfg.out = v;
    }
    cfg.validate()?;

    let panel = io::load_return_csv(&cfg.returns)?;
    let mat = panel.dense_simple()?;
    let stressed = apply_stress(&mat, &cfg.stress)?;
    let out_panel =
        ReturnPanel::from_dense(panel.dates.clone(), panel.assets.clone(), stressed, panel.rf.clone())?;
    io::save_return_csv(&cfg.out, &out_panel)?;

    let mut manifest = RunManifest::new("stress", &cfg)?;
    manifest.record_seed("stress", cfg.stress.seed);
    finish_manifest(manifest, &[&cfg.returns], &[&cfg.out], &manifest_path(&cfg.out, "stress"))?;

    println!(
        "stress: {} (seed {}) on {} -> {}",
        cfg.stress.kind.name(),
        cfg.stress.seed,
        cfg.returns.display(),
        cfg.out.display()
    );
    Ok(0)
}

fn cmd_grid(a: GridArgs) -> Result<i32> {
    let mut cfg: GridCliConfig = if a.desk {
        GridCliConfig { grid: distfolio::grid::GridConfig::desk(), ..GridCliConfig::default() }
    } else {
        load_config(a.config.as_deref())?
    };
    if let Some(v) = a.world_seeds {
        cfg.grid.world_seeds = v;
    }
    if let Some(v) = a.model_seeds {
        cfg.grid.model_seeds = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    if a.no_checkpoints {
        cfg.save_checkpoints = false;
    }
    if let Some(v) = a.out_dir {
        cfg.out_dir = v;
    }
    cfg.validate()?;

    ensure_dir(&cfg.out_dir)?;
    let ckpt_dir = cfg.out_dir.join("checkpoints");
    if cfg.save_checkpoints {
        ensure_dir(&ckpt_dir)?;
    }
    let outcome = run_grid_with(
        &cfg.grid,
        cfg.workers,
        cfg.save_checkpoints.then_some(ckpt_dir.as_path()),
    )?;

    let reports_path = cfg.out_dir.join("reports.csv");
    let win_path = cfg.out_dir.join("win_rate.csv");
    let summary_path = cfg.out_dir.join("summary.csv");
    let grid_path = cfg.out_dir.join("grid.json");
    io::write_string(&reports_path, &report_csv(&outcome.reports))?;
    io::write_string(&win_path, &win_rate_csv(&outcome.models, &outcome.win_rate))?;
    io::write_string(&summary_path, &summary_csv(&outcome.reports))?;
    let failures = outcome.failures.clone();
    let summary = outcome.summary.clone();
    io::save_json(&grid_path, &GridArtifact { config_hash: config_hash_of(&cfg)?, outcome })?;

    let mut manifest = RunManifest::new("grid", &cfg)?;
    for (i, &s) in cfg.grid.world_seeds.iter().enumerate() {
        manifest.record_seed(&format!("world_{i}"), s);
    }
    for (i, &s) in cfg.grid.model_seeds.iter().enumerate() {
        manifest.record_seed(&format!("model_{i}"), s);
    }
    let mut outputs: Vec<PathBuf> =
        vec![reports_path.clone(), win_path.clone(), summary_path.clone(), grid_path.clone()];
    if cfg.save_checkpoints {
        let mut ckpts: Vec<PathBuf> = std::fs::read_dir(&ckpt_dir)
            .map_err(|e| Error::io(&ckpt_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        ckpts.sort();
        outputs.extend(ckpts);
    }
    let output_refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    finish_manifest(manifest, &[], &output_refs, &manifest_path(&cfg.out_dir, "grid"))?;

    for (model, s) in &summary {
        println!(
            "grid: {model}: mean sharpe {:.3} (n={}), mean turnover {:.4}",
            s.sharpe.mean, s.sharpe.n, s.mean_turnover.mean
        );
    }
    if failures.is_empty() {
        println!("grid: complete -> {}", cfg.out_dir.display());
        Ok(0)
    } else {
        for f in &failures {
            eprintln!(
                "grid: cell failed: world {} model_seed {:?} {}: {}",
                f.world_seed, f.model_seed, f.model, f.error
            );
        }
        println!(
            "grid: partial ({} cells failed) -> {}",
            failures.len(),
            cfg.out_dir.display()
        );
        Ok(5)
    }
}

fn cmd_report(a: ReportArgs) -> Result<i32> {
    let mut cfg: ReportConfig = load_config(a.config.as_deref())?;
    if !a.inputs.is_empty() {
        cfg.inputs = a.inputs;
    }
    if let Some(v) = a.out {
        cfg.out = v;
    }
    cfg.validate()?;

    let mut all = Vec::new();
    for path in &cfg.inputs {
        let text = io::read_to_string(path)?;
        all.extend(parse_report_csv(&text)?);
    }
    let summary = summary_csv(&all);
    io::write_string(&cfg.out, &summary)?;

    let manifest = RunManifest::new("report", &cfg)?;
    let input_refs: Vec<&Path> = cfg.inputs.iter().map(|p| p.as_path()).collect();
    finish_manifest(manifest, &input_refs, &[&cfg.out], &manifest_path(&cfg.out, "report"))?;

    print!("{summary}");
    println!("report: {} rows aggregated -> {}", all.len(), cfg.out.display());
    Ok(0)
}
