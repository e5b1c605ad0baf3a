//! Seed-grid sweep on synthetic worlds: per world seed, generate a
//! market, build features, label with the teacher, split, train all four
//! students per model seed, and evaluate students plus four baselines on
//! the held-out synthetic test dates. Cell failures are recorded and the
//! sweep continues.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocators::{
    label_dates, solve_mean_variance, solve_min_variance, solve_risk_parity, window_moments,
    TeacherLabel, WeightVector,
};
use crate::error::{Error, Result};
use crate::eval::{
    build_track, evaluate_frozen, market_series, reports_for_track, trailing_vol, win_rate_matrix,
    BacktestTrack, EvalPoint, EvalReport, RegimeTag, RunKey, UniverseTag, REGIME_VOL_WINDOW,
};
use crate::exec::{ConstraintLevel, ConstraintSpec};
use crate::features::{build_feature_matrix, FeatureInputs, FeatureOutcome, FeatureParams};
use crate::linalg::Mat;
use crate::nn::NetworkSpec;
use crate::stats;
use crate::stress::{apply_stress, StressSpec};
use crate::synth::{generate_world, reference_models, stride_dates};
use crate::train::{
    split_parts, train_sandwich, train_supervised, Dataset, LabeledPair, StudentKind, TrainConfig,
    TrainedStudent, UnlabeledPair,
};

/// Baseline strategies evaluated next to the students.
pub const BASELINES: [&str; 4] = ["teacher", "mean_var", "min_var", "risk_parity"];

/// Fixed report order: the four students, then the four baselines.
pub fn strategy_order() -> Vec<String> {
    StudentKind::ALL
        .iter()
        .map(|k| k.name().to_string())
        .chain(BASELINES.iter().map(|s| s.to_string()))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub n_assets: usize,
    /// Synthetic horizon in weeks.
    pub horizon: usize,
    pub world_seeds: Vec<u64>,
    pub model_seeds: Vec<u64>,
    /// Weeks between labeled dates.
    pub stride: usize,
    /// Trailing window for teacher labels and baseline moments.
    pub label_window: usize,
    /// Tail level of the teacher objective.
    pub alpha: f64,
    /// Constraint level applied to every evaluated track.
    pub level: ConstraintLevel,
    /// Stress transform for the earned returns (forces an L2-style run).
    pub stress: Option<StressSpec>,
    /// Sampled passes per Bayesian prediction.
    pub mc_draws: usize,
    pub train: TrainConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_assets: 36,
            horizon: 1400,
            world_seeds: vec![32, 42, 52],
            model_seeds: vec![0, 1, 2, 3, 4],
            stride: 4,
            label_window: 52,
            alpha: 0.95,
            level: ConstraintLevel::L1,
            stress: None,
            mc_draws: 32,
            train: TrainConfig::default(),
        }
    }
}

impl GridConfig {
    /// Workstation-scale preset: a small universe and short horizon, for
    /// sweeps that finish in minutes. Epochs are full-batch steps, so the
    /// schedule pairs a larger constant step size with enough epochs to
    /// train the small nets to saturation.
    pub fn desk() -> Self {
        GridConfig {
            n_assets: 8,
            horizon: 600,
            world_seeds: vec![32, 42, 52],
            model_seeds: vec![0, 1, 2],
            mc_draws: 16,
            train: TrainConfig {
                learning_rate: 0.05,
                epochs_s0: 300,
                cycles: 3,
                epochs_sup: 100,
                epochs_unsup: 100,
                epochs_s2: 200,
                hidden: vec![32, 16],
                ..TrainConfig::default()
            },
            ..GridConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets < 2 {
            return Err(Error::Config("grid needs at least 2 assets".into()));
        }
        if self.world_seeds.is_empty() || self.model_seeds.is_empty() {
            return Err(Error::Config("grid needs world and model seeds".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0,1)", self.alpha)));
        }
        if self.stress.is_some() != (self.level == ConstraintLevel::L2) {
            return Err(Error::Config(
                "stress transforms pair exactly with constraint level L2".into(),
            ));
        }
        let needed = FeatureParams::default().min_hist() + self.stride;
        if self.horizon <= needed {
            return Err(Error::Config(format!(
                "horizon {} leaves no labeled dates after {needed} warm-up weeks",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// One cell of the sweep that could not run to completion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellFailure {
    pub world_seed: u64,
    /// None marks a whole-world failure before any model ran.
    pub model_seed: Option<u64>,
    pub model: String,
    pub error: String,
}

/// Label bookkeeping per world: raw teacher labels versus pairs kept
/// after the feasibility filter, the convergence-certificate count, and
/// the split sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldDiag {
    pub world_seed: u64,
    pub raw_labels: usize,
    pub converged_labels: usize,
    pub kept_labels: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_unlabeled: usize,
    pub split_warning: Option<String>,
}

/// Mean and sample std of one metric across completed runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

fn mean_std(values: &[f64]) -> MeanStd {
    MeanStd { mean: stats::mean(values), std: stats::sample_std(values), n: values.len() }
}

/// Per-model aggregation over all (world seed, model seed) runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub sharpe: MeanStd,
    pub cvar95: MeanStd,
    pub max_drawdown: MeanStd,
    pub mean_turnover: MeanStd,
    pub ann_return: MeanStd,
    pub ann_vol: MeanStd,
    /// Runs whose Sharpe was undefined (zero variance).
    pub undefined_sharpe: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub config: GridConfig,
    pub models: Vec<String>,
    pub reports: Vec<EvalReport>,
    pub failures: Vec<CellFailure>,
    pub worlds: Vec<WorldDiag>,
    /// Pairwise Sharpe win rates in `models` order.
    pub win_rate: Mat,
    pub summary: BTreeMap<String, ModelSummary>,
}

impl GridOutcome {
    /// Mean ALL-regime Sharpe per model within one world, over the model
    /// seeds that completed.
    pub fn world_model_sharpe(&self, world_seed: u64, model: &str) -> Option<f64> {
        let vals: Vec<f64> = self
            .reports
            .iter()
            .filter(|r| {
                r.world_seed == world_seed
                    && r.model == model
                    && r.regime == RegimeTag::All
                    && r.sharpe.is_some()
            })
            .map(|r| r.sharpe.expect("filtered"))
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(stats::mean(&vals))
        }
    }

    /// Mean ALL-regime weekly turnover per model within one world.
    pub fn world_model_turnover(&self, world_seed: u64, model: &str) -> Option<f64> {
        let vals: Vec<f64> = self
            .reports
            .iter()
            .filter(|r| {
                r.world_seed == world_seed && r.model == model && r.regime == RegimeTag::All
            })
            .map(|r| r.mean_turnover)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(stats::mean(&vals))
        }
    }
}

/// Everything derived from one world seed that is shared across model
/// seeds: the panel, the dataset split, test decision points, baseline
/// tracks, and the regime classifier inputs.
pub struct WorldData {
    pub seed: u64,
    pub returns: Mat,
    /// Panel the tracks earn from (stress-transformed under L2).
    pub earn: Mat,
    pub dataset: Dataset,
    pub test_points: Vec<EvalPoint>,
    pub market_vols: Vec<f64>,
    pub baseline_tracks: BTreeMap<String, BacktestTrack>,
    pub diag: WorldDiag,
}

fn equal_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Keep labels usable as training pairs: finite weights, a built feature
/// row, and a following week to earn. Unconverged labels stay: the
/// solver falls back to its best visited point, which still meets the
/// grid-oracle tolerance, so the flag is diagnostic rather than a
/// quality gate.
pub fn filter_label_pairs(
    labels: &[TeacherLabel],
    features: &BTreeMap<usize, Vec<f64>>,
    horizon: usize,
) -> Vec<(LabeledPair, usize)> {
    let mut pairs = Vec::new();
    for lab in labels {
        if lab.weights.iter().any(|w| !w.is_finite()) {
            continue;
        }
        if lab.t + 1 >= horizon {
            continue;
        }
        let Some(x) = features.get(&lab.t) else { continue };
        pairs.push((
            LabeledPair { x: x.clone(), w_teacher: lab.weights.clone(), real: false },
            lab.t,
        ));
    }
    pairs
}

/// Generate and prepare one synthetic world end to end.
pub fn prepare_world(cfg: &GridConfig, world_seed: u64) -> Result<WorldData> {
    cfg.validate()?;
    let models = reference_models(cfg.n_assets);
    let world = generate_world(&models, cfg.horizon, world_seed)?;
    let returns = world.returns.dense_simple()?;
    let inputs = FeatureInputs {
        dates: world.returns.dates.clone(),
        asset_names: world.returns.assets.clone(),
        returns: returns.clone(),
        rf: world.returns.rf.clone(),
        factors: world.factors.factors.clone(),
    };
    let params = FeatureParams::default();
    let min_hist = params.min_hist();
    let prev = equal_weights(cfg.n_assets);

    // Flattened features at every eligible date; strategy-agnostic
    // construction (equal-weight previous allocation, unit cap).
    let mut features: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for t in min_hist..cfg.horizon {
        match build_feature_matrix(&inputs, t, &params, &prev, 1.0)? {
            FeatureOutcome::Built(m) => {
                features.insert(t, m.flatten());
            }
            FeatureOutcome::Skipped(_) => {}
        }
    }

    // Teacher labels on the stride dates.
    let stride = stride_dates(cfg.horizon, min_hist, cfg.stride);
    let labels: Vec<TeacherLabel> = label_dates(&returns, &stride, cfg.label_window, cfg.alpha)?;
    let raw_labels = labels.len();
    let converged_labels = labels.iter().filter(|l| l.converged).count();
    let pairs = filter_label_pairs(&labels, &features, cfg.horizon);
    let kept_labels = pairs.len();

    let (train, val, test, split_warning) = split_parts(Vec::new(), pairs, world_seed);

    // Unlabeled pool: scenario windows at every eligible date regardless
    // of the split.
    let mut unlabeled = Vec::new();
    for (&t, x) in &features {
        if t + 1 < cfg.label_window {
            continue;
        }
        let window = Mat::from_fn(cfg.label_window, cfg.n_assets, |i, j| {
            returns[(t + 1 - cfg.label_window + i, j)]
        });
        unlabeled.push(UnlabeledPair { x: x.clone(), window });
    }

    let diag = WorldDiag {
        world_seed,
        raw_labels,
        converged_labels,
        kept_labels,
        n_train: train.len(),
        n_val: val.len(),
        n_test: test.len(),
        n_unlabeled: unlabeled.len(),
        split_warning,
    };

    let mut test_sorted = test;
    test_sorted.sort_by_key(|(_, t)| *t);
    if test_sorted.is_empty() {
        return Err(Error::Data(format!("world {world_seed}: empty test split")));
    }
    let test_points: Vec<EvalPoint> = test_sorted
        .iter()
        .map(|(p, t)| EvalPoint { idx: *t, date: world.returns.dates[*t], x: p.x.clone() })
        .collect();
    let teacher_targets: Vec<WeightVector> = test_sorted
        .iter()
        .map(|(p, _)| WeightVector::new(p.w_teacher.clone()))
        .collect::<Result<_>>()?;

    let earn = match &cfg.stress {
        Some(spec) => apply_stress(&returns, spec)?,
        None => returns.clone(),
    };

    // Static baselines from the trailing window at the first test date;
    // the teacher re-solves (its labels) at every test date.
    let spec = ConstraintSpec::for_level(cfg.level);
    let first_test = test_points[0].idx;
    let (mu, cov) = window_moments(&returns, first_test, min_hist)?;
    let statics: [(&str, WeightVector); 3] = [
        ("mean_var", solve_mean_variance(&mu, &cov, stats::mean(&mu))?),
        ("min_var", solve_min_variance(&cov)?),
        ("risk_parity", solve_risk_parity(&cov)?),
    ];
    let mut baseline_tracks = BTreeMap::new();
    baseline_tracks.insert(
        "teacher".to_string(),
        build_track(&test_points, &teacher_targets, &earn, &spec, Vec::new())?,
    );
    for (name, w) in statics {
        let targets = vec![w; test_points.len()];
        baseline_tracks
            .insert(name.to_string(), build_track(&test_points, &targets, &earn, &spec, Vec::new())?);
    }

    let market = market_series(&returns);
    let idx: Vec<usize> = test_points.iter().map(|p| p.idx).collect();
    let market_vols = trailing_vol(&market, &idx, REGIME_VOL_WINDOW);

    Ok(WorldData {
        seed: world_seed,
        returns,
        earn,
        dataset: Dataset {
            labeled: train.into_iter().map(|(p, _)| p).collect(),
            unlabeled,
        },
        test_points,
        market_vols,
        baseline_tracks,
        diag,
    })
}

/// Train one student for a grid cell.
pub fn train_cell(
    cfg: &GridConfig,
    world: &WorldData,
    model_seed: u64,
    kind: StudentKind,
) -> Result<TrainedStudent> {
    let mut tc = cfg.train.clone();
    tc.model_seed = model_seed;
    tc.alpha = cfg.alpha;
    let spec = NetworkSpec::policy(cfg.n_assets, &tc.hidden, kind.is_bayesian());
    if kind.is_sandwich() {
        train_sandwich(&world.dataset, spec, &tc, kind)
    } else {
        train_supervised(&world.dataset, spec, &tc, tc.supervised_budget(), kind)
    }
}

/// Train, optionally checkpoint, and evaluate one (model seed, kind)
/// cell against an already prepared world.
fn run_cell(
    cfg: &GridConfig,
    world: &WorldData,
    spec: &ConstraintSpec,
    stress_name: &Option<String>,
    checkpoint_dir: Option<&Path>,
    model_seed: u64,
    kind: StudentKind,
) -> Result<(Vec<EvalReport>, f64)> {
    let student = train_cell(cfg, world, model_seed, kind)?;
    if let Some(dir) = checkpoint_dir {
        let name = format!("ckpt_w{}_m{}_{}.json", world.seed, model_seed, kind.name());
        student.save(&dir.join(name))?;
    }
    let track = evaluate_frozen(
        &student,
        &world.test_points,
        &world.earn,
        spec,
        cfg.mc_draws,
        model_seed,
    )?;
    let key = RunKey {
        model: kind.name().to_string(),
        world_seed: world.seed,
        model_seed,
        universe: UniverseTag::Grid,
        level: cfg.level,
        stress: stress_name.clone(),
    };
    let rows = reports_for_track(&track, &world.market_vols, &key)?;
    let sharpe = rows[0].sharpe.unwrap_or(f64::NAN);
    Ok((rows, sharpe))
}

/// Run the full sweep. Every completed run contributes report rows; the
/// win-rate matrix pairs all eight strategies per (world, model seed)
/// run using the ALL-regime Sharpe. Training/evaluation cells fan out
/// over `workers` threads (0 = one per core); results are assembled in
/// a fixed order, so the outcome does not depend on the worker count.
pub fn run_grid_with(
    cfg: &GridConfig,
    workers: usize,
    checkpoint_dir: Option<&Path>,
) -> Result<GridOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let models = strategy_order();
    let spec = ConstraintSpec::for_level(cfg.level);
    let stress_name = cfg.stress.map(|s| s.kind.name().to_string());
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut worlds = Vec::new();
    let mut run_sharpes: Vec<Vec<f64>> = Vec::new();

    for &world_seed in &cfg.world_seeds {
        let world = match prepare_world(cfg, world_seed) {
            Ok(w) => w,
            Err(e) => {
                failures.push(CellFailure {
                    world_seed,
                    model_seed: None,
                    model: "world".into(),
                    error: e.to_string(),
                });
                continue;
            }
        };
        worlds.push(world.diag.clone());

        // Baseline reports replicate across model seeds by construction.
        let mut baseline_reports: BTreeMap<String, (Vec<EvalReport>, f64)> = BTreeMap::new();
        for name in BASELINES {
            let track = &world.baseline_tracks[name];
            let key = RunKey {
                model: name.to_string(),
                world_seed,
                model_seed: 0,
                universe: UniverseTag::Grid,
                level: cfg.level,
                stress: stress_name.clone(),
            };
            let rows = reports_for_track(track, &world.market_vols, &key)?;
            let sharpe = rows[0].sharpe.unwrap_or(f64::NAN);
            baseline_reports.insert(name.to_string(), (rows, sharpe));
        }

        let jobs: Vec<(u64, StudentKind)> = cfg
            .model_seeds
            .iter()
            .flat_map(|&ms| StudentKind::ALL.iter().map(move |&k| (ms, k)))
            .collect();
        let cell_results: Vec<Result<(Vec<EvalReport>, f64)>> = pool.install(|| {
            jobs.par_iter()
                .map(|&(ms, kind)| {
                    run_cell(cfg, &world, &spec, &stress_name, checkpoint_dir, ms, kind)
                })
                .collect()
        });
        let mut cell_map: BTreeMap<(u64, &str), Result<(Vec<EvalReport>, f64)>> =
            jobs.iter().map(|&(ms, k)| (ms, k.name())).zip(cell_results).collect();

        for &model_seed in &cfg.model_seeds {
            let mut sharpe_row: BTreeMap<String, f64> = BTreeMap::new();
            for kind in StudentKind::ALL {
                let name = kind.name().to_string();
                match cell_map.remove(&(model_seed, kind.name())).expect("job enumerated") {
                    Ok((rows, sharpe)) => {
                        sharpe_row.insert(name, sharpe);
                        reports.extend(rows);
                    }
                    Err(e) => {
                        failures.push(CellFailure {
                            world_seed,
                            model_seed: Some(model_seed),
                            model: name,
                            error: e.to_string(),
                        });
                    }
                }
            }
            for (name, (rows, sharpe)) in &baseline_reports {
                let mut rows = rows.clone();
                for r in &mut rows {
                    r.model_seed = model_seed;
                }
                reports.extend(rows);
                sharpe_row.insert(name.clone(), *sharpe);
            }
            // Win-rate pairing needs the complete strategy set.
            if sharpe_row.len() == models.len() {
                run_sharpes.push(models.iter().map(|m| sharpe_row[m]).collect());
            }
        }
    }

    if run_sharpes.is_empty() {
        return Err(Error::Data("no grid run completed with all strategies".into()));
    }
    let win_rate = win_rate_matrix(&run_sharpes)?;

    let mut summary = BTreeMap::new();
    for model in &models {
        let all_rows: Vec<&EvalReport> = reports
            .iter()
            .filter(|r| &r.model == model && r.regime == RegimeTag::All)
            .collect();
        if all_rows.is_empty() {
            continue;
        }
        let sharpes: Vec<f64> = all_rows.iter().filter_map(|r| r.sharpe).collect();
        let pick = |f: fn(&EvalReport) -> f64| -> Vec<f64> { all_rows.iter().map(|r| f(r)).collect() };
        summary.insert(
            model.clone(),
            ModelSummary {
                sharpe: mean_std(&sharpes),
                cvar95: mean_std(&pick(|r| r.cvar95)),
                max_drawdown: mean_std(&pick(|r| r.max_drawdown)),
                mean_turnover: mean_std(&pick(|r| r.mean_turnover)),
                ann_return: mean_std(&pick(|r| r.ann_return)),
                ann_vol: mean_std(&pick(|r| r.ann_vol)),
                undefined_sharpe: all_rows.len() - sharpes.len(),
            },
        );
    }

    Ok(GridOutcome { config: cfg.clone(), models, reports, failures, worlds, win_rate, summary })
}

/// Single-threaded sweep without checkpoint files.
pub fn run_grid(cfg: &GridConfig) -> Result<GridOutcome> {
    run_grid_with(cfg, 1, None)
}
