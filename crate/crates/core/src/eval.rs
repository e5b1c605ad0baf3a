//! Walk-forward evaluation: performance metrics, constraint-level
//! backtests, past-only adaptive inference with periodic fine-tune and
//! reset, volatility-regime decomposition, and comparative analytics.

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocators::{empirical_cvar, WeightVector};
use crate::error::{Error, Result};
use crate::exec::{
    clip_renormalize, execute_rebalance, net_return, turnover, ConstraintLevel, ConstraintSpec,
};
use crate::io::fmt_num;
use crate::linalg::Mat;
use crate::nn::{Mode, Network};
use crate::rng;
use crate::stats;
use crate::train::TrainedStudent;

/// Annualization base for weekly data.
pub const WEEKS_PER_YEAR: f64 = 52.0;
/// Tail level for reported CVaR.
pub const REPORT_ALPHA: f64 = 0.95;
/// Regime sub-tracks shorter than this are flagged low-sample.
pub const LOW_SAMPLE_WEEKS: usize = 8;
/// Trailing window (weeks) for the regime-classification market vol.
pub const REGIME_VOL_WINDOW: usize = 12;

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Annualized mean return: weekly mean times 52.
pub fn annualized_return(returns: &[f64]) -> f64 {
    stats::mean(returns) * WEEKS_PER_YEAR
}

/// Annualized volatility: weekly sample std times sqrt(52).
pub fn annualized_vol(returns: &[f64]) -> f64 {
    stats::sample_std(returns) * WEEKS_PER_YEAR.sqrt()
}

/// Annualized Sharpe ratio: sample mean over sample std, scaled by
/// sqrt(52). `None` marks the undefined zero-variance case.
pub fn sharpe_annualized(returns: &[f64]) -> Result<Option<f64>> {
    if returns.len() < 2 {
        return Err(Error::Data(format!(
            "Sharpe needs at least 2 observations, got {}",
            returns.len()
        )));
    }
    let sd = stats::sample_std(returns);
    if sd == 0.0 {
        return Ok(None);
    }
    Ok(Some(stats::mean(returns) / sd * WEEKS_PER_YEAR.sqrt()))
}

/// Maximum fractional drawdown of the compounded wealth path, with the
/// unit starting wealth counted as a peak.
pub fn max_drawdown(returns: &[f64]) -> Result<f64> {
    let mut wealth = 1.0f64;
    let mut peak = 1.0f64;
    let mut mdd = 0.0f64;
    for (i, &r) in returns.iter().enumerate() {
        if r <= -1.0 {
            return Err(Error::Domain(format!("week {i}: return {r} wipes out wealth")));
        }
        wealth *= 1.0 + r;
        peak = peak.max(wealth);
        mdd = mdd.max((peak - wealth) / peak);
    }
    Ok(mdd)
}

/// Tail expectation of weekly returns in report sign convention:
/// negative values denote losses.
pub fn cvar_report(returns: &[f64], alpha: f64) -> Result<f64> {
    let losses: Vec<f64> = returns.iter().map(|r| -r).collect();
    Ok(-empirical_cvar(&losses, alpha)?)
}

/// Percentile bootstrap 95% confidence interval on the annualized Sharpe
/// ratio; resamples with degenerate (zero-variance) draws are skipped.
pub fn bootstrap_sharpe_ci(returns: &[f64], resamples: usize, seed: u64) -> Result<(f64, f64)> {
    if returns.len() < 2 {
        return Err(Error::Data("bootstrap needs at least 2 observations".into()));
    }
    if resamples == 0 {
        return Err(Error::Config("bootstrap needs at least 1 resample".into()));
    }
    let mut r = rng::stream(seed, "bootstrap");
    let mut sharpes = Vec::with_capacity(resamples);
    let mut draw = vec![0.0; returns.len()];
    for _ in 0..resamples {
        for slot in draw.iter_mut() {
            *slot = returns[r.random_range(0..returns.len())];
        }
        if let Some(s) = sharpe_annualized(&draw)? {
            sharpes.push(s);
        }
    }
    if sharpes.is_empty() {
        return Err(Error::Numerical("every bootstrap resample was degenerate".into()));
    }
    sharpes.sort_by(f64::total_cmp);
    Ok((stats::quantile(&sharpes, 0.025), stats::quantile(&sharpes, 0.975)))
}

/// Point metrics of one weekly return/turnover stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMetrics {
    pub sharpe: Option<f64>,
    pub cvar95: f64,
    pub max_drawdown: f64,
    pub mean_turnover: f64,
    pub ann_return: f64,
    pub ann_vol: f64,
    pub n_weeks: usize,
}

pub fn track_metrics(returns: &[f64], turnover_series: &[f64]) -> Result<TrackMetrics> {
    if returns.len() != turnover_series.len() {
        return Err(Error::Shape(format!(
            "{} returns against {} turnover entries",
            returns.len(),
            turnover_series.len()
        )));
    }
    Ok(TrackMetrics {
        sharpe: sharpe_annualized(returns)?,
        cvar95: cvar_report(returns, REPORT_ALPHA)?,
        max_drawdown: max_drawdown(returns)?,
        mean_turnover: stats::mean(turnover_series),
        ann_return: annualized_return(returns),
        ann_vol: annualized_vol(returns),
        n_weeks: returns.len(),
    })
}

// ---------------------------------------------------------------------------
// Backtest tracks
// ---------------------------------------------------------------------------

/// One decision date: the panel row index at which weights are set (they
/// earn the following row's returns) and the raw flattened features.
#[derive(Debug, Clone)]
pub struct EvalPoint {
    pub idx: usize,
    pub date: NaiveDate,
    pub x: Vec<f64>,
}

/// A realized weekly path: weights decided at `dates[i]` earn the returns
/// of the following week, net of execution costs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestTrack {
    pub dates: Vec<NaiveDate>,
    pub net_returns: Vec<f64>,
    /// Executed weights, one row per decision date.
    pub weights: Mat,
    /// One-way turnover against the previous executed row; the opening
    /// position counts as zero.
    pub turnover: Vec<f64>,
    pub rebalanced: Vec<bool>,
    /// Protocol events: normalization fallbacks, skipped fine-tunes.
    pub flags: Vec<String>,
}

impl BacktestTrack {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Check simplex weight rows and turnover consistency to 1e-9.
    pub fn validate(&self) -> Result<()> {
        let n = self.dates.len();
        if self.net_returns.len() != n
            || self.weights.rows() != n
            || self.turnover.len() != n
            || self.rebalanced.len() != n
        {
            return Err(Error::Shape("track field lengths disagree".into()));
        }
        for t in 0..n {
            let row = self.weights.row(t);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&w| w < -1e-12) {
                return Err(Error::Domain(format!("weights at row {t} leave the simplex")));
            }
            let expect = if t == 0 { 0.0 } else { turnover(self.weights.row(t - 1), row) };
            if (self.turnover[t] - expect).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "turnover at row {t} ({}) disagrees with weight rows ({expect})",
                    self.turnover[t]
                )));
            }
        }
        Ok(())
    }
}

fn check_points(points: &[EvalPoint], earn_panel: &Mat) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Data("no decision dates to evaluate".into()));
    }
    for pair in points.windows(2) {
        if pair[1].idx <= pair[0].idx {
            return Err(Error::Alignment("decision dates must be strictly increasing".into()));
        }
    }
    let last = points.last().expect("non-empty").idx;
    if last + 1 >= earn_panel.rows() {
        return Err(Error::Alignment(format!(
            "decision at row {last} needs realized returns at row {}, panel has {}",
            last + 1,
            earn_panel.rows()
        )));
    }
    Ok(())
}

/// Turn per-date target weights into a realized track under a constraint
/// level: weights at `points[i]` earn `earn_panel` row `idx + 1`, net of
/// proportional costs. The opening rebalance is frictionless.
pub fn build_track(
    points: &[EvalPoint],
    targets: &[WeightVector],
    earn_panel: &Mat,
    spec: &ConstraintSpec,
    flags: Vec<String>,
) -> Result<BacktestTrack> {
    spec.validate()?;
    check_points(points, earn_panel)?;
    if targets.len() != points.len() {
        return Err(Error::Shape(format!(
            "{} targets for {} decision dates",
            targets.len(),
            points.len()
        )));
    }
    let n_assets = earn_panel.cols();
    let mut weights = Mat::zeros(points.len(), n_assets);
    let mut net_returns = Vec::with_capacity(points.len());
    let mut turnover_series = Vec::with_capacity(points.len());
    let mut prev: Option<WeightVector> = None;
    for (i, (pt, target)) in points.iter().zip(targets).enumerate() {
        if target.len() != n_assets {
            return Err(Error::Shape(format!(
                "target at {} has {} assets, panel has {n_assets}",
                pt.date,
                target.len()
            )));
        }
        let (exec, to, cost) = match &prev {
            None => (clip_renormalize(target, spec.w_max)?, 0.0, 0.0),
            Some(p) => {
                let out = execute_rebalance(p, target, spec)?;
                (out.executed, out.turnover, out.cost)
            }
        };
        net_returns.push(net_return(&exec, earn_panel.row(pt.idx + 1), cost)?);
        turnover_series.push(to);
        for (j, &w) in exec.as_slice().iter().enumerate() {
            weights[(i, j)] = w;
        }
        prev = Some(exec);
    }
    let track = BacktestTrack {
        dates: points.iter().map(|p| p.date).collect(),
        net_returns,
        weights,
        turnover: turnover_series,
        rebalanced: vec![true; points.len()],
        flags,
    };
    track.validate()?;
    Ok(track)
}

/// Evaluate a frozen student: train-time standardization, no adaptation.
/// Bayesian students average `mc_draws` sampled passes (0 forces the
/// deterministic mean path).
pub fn evaluate_frozen(
    student: &TrainedStudent,
    points: &[EvalPoint],
    earn_panel: &Mat,
    spec: &ConstraintSpec,
    mc_draws: usize,
    seed: u64,
) -> Result<BacktestTrack> {
    check_points(points, earn_panel)?;
    let mut targets = Vec::with_capacity(points.len());
    for pt in points {
        let w = if student.kind.is_bayesian() && mc_draws > 0 {
            let date_seed: u64 = rng::substream(seed, "eval-mc", pt.idx as u64).random();
            student.predict_mc(&pt.x, mc_draws, date_seed)?.0
        } else {
            student.predict(&pt.x)?
        };
        targets.push(w);
    }
    build_track(points, &targets, earn_panel, spec, Vec::new())
}

// ---------------------------------------------------------------------------
// Adaptive inference
// ---------------------------------------------------------------------------

/// Rolling-window deployment protocol: past-only feature normalization
/// plus periodic fine-tuning that always restarts from the frozen
/// checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    /// Rolling normalization window over decision dates.
    pub norm_window: usize,
    /// Fine-tune cycle length in decision steps.
    pub finetune_every: usize,
    /// Realized periods per fine-tune window.
    pub finetune_window: usize,
    /// Turnover penalty in the fine-tune objective.
    pub lambda_to: f64,
    pub finetune_lr: f64,
    pub finetune_epochs: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            norm_window: 52,
            finetune_every: 8,
            finetune_window: 26,
            lambda_to: 0.1,
            finetune_lr: 1e-4,
            finetune_epochs: 20,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.norm_window < 1 || self.finetune_every < 1 || self.finetune_window < 1 {
            return Err(Error::Config("adaptive windows must be at least 1".into()));
        }
        if !(self.lambda_to >= 0.0) {
            return Err(Error::Config(format!("lambda_to {} negative", self.lambda_to)));
        }
        if !(self.finetune_lr > 0.0) {
            return Err(Error::Config(format!("fine-tune lr {} not positive", self.finetune_lr)));
        }
        Ok(())
    }
}

/// Past-only z-score of one feature vector against up to `window` prior
/// observations; `None` when fewer than 2 exist. Sample std, additive
/// epsilon 1e-8.
pub fn rolling_normalize(x: &[f64], history: &[EvalPoint], window: usize) -> Option<Vec<f64>> {
    if history.len() < 2 {
        return None;
    }
    let lo = history.len().saturating_sub(window);
    let rows = &history[lo..];
    let w = rows.len() as f64;
    let d = x.len();
    let mut mean = vec![0.0; d];
    for p in rows {
        for j in 0..d {
            mean[j] += p.x[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= w);
    let mut var = vec![0.0; d];
    for p in rows {
        for j in 0..d {
            var[j] += (p.x[j] - mean[j]).powi(2);
        }
    }
    Some(
        (0..d)
            .map(|j| (x[j] - mean[j]) / ((var[j] / (w - 1.0)).sqrt() + 1e-8))
            .collect(),
    )
}

/// Fine-tune objective over one realized window: negative mean realized
/// portfolio return plus a turnover penalty over consecutive weights.
/// Returns the loss and the flat parameter gradient.
fn fine_tune_loss_grad(
    net: &Network,
    xs: &[&[f64]],
    realized: &[&[f64]],
    lambda_to: f64,
) -> Result<(f64, Vec<f64>)> {
    let w_len = xs.len();
    let n = net.spec.output_dim();
    let mut tapes = Vec::with_capacity(w_len);
    let mut ws: Vec<Vec<f64>> = Vec::with_capacity(w_len);
    for x in xs {
        let (w, tape) = net.forward(x, Mode::Deterministic)?;
        ws.push(w.as_slice().to_vec());
        tapes.push(tape);
    }
    let mut loss = 0.0;
    let mut d_out = vec![vec![0.0; n]; w_len];
    let inv = 1.0 / w_len as f64;
    for s in 0..w_len {
        let dot: f64 = ws[s].iter().zip(realized[s]).map(|(a, b)| a * b).sum();
        loss -= dot * inv;
        for j in 0..n {
            d_out[s][j] -= realized[s][j] * inv;
        }
    }
    if lambda_to > 0.0 && w_len >= 2 {
        let denom = (w_len - 1) as f64;
        for s in 1..w_len {
            for j in 0..n {
                let d = ws[s][j] - ws[s - 1][j];
                loss += lambda_to * d.abs() / denom;
                let sg = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                d_out[s][j] += lambda_to * sg / denom;
                d_out[s - 1][j] -= lambda_to * sg / denom;
            }
        }
    }
    let mut grad = vec![0.0; net.param_count()];
    for s in 0..w_len {
        let g = net.backward(&tapes[s], &d_out[s])?;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

/// Walk decision dates with past-only normalization and periodic
/// fine-tune-and-reset. Decisions (normalization and fine-tuning) always
/// read `decide_panel`; earned returns come from `earn_panel`, which a
/// stressed evaluation replaces while the decision stream stays fixed.
pub fn adaptive_walk_forward(
    student: &TrainedStudent,
    points: &[EvalPoint],
    decide_panel: &Mat,
    earn_panel: &Mat,
    spec: &ConstraintSpec,
    adaptive: &AdaptiveConfig,
    mc_draws: usize,
    seed: u64,
) -> Result<BacktestTrack> {
    adaptive.validate()?;
    check_points(points, earn_panel)?;
    check_points(points, decide_panel)?;
    let frozen = student.net.to_flat();
    let net_spec = student.net.spec.clone();
    let mut net = Network::from_flat(net_spec.clone(), &frozen)?;
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    let mut targets = Vec::with_capacity(points.len());
    let mut flags = Vec::new();
    for d in 0..points.len() {
        let x_in = match rolling_normalize(&points[d].x, &points[..d], adaptive.norm_window) {
            Some(v) => v,
            None => {
                flags.push(format!("norm-fallback:{}", points[d].date));
                student.standardizer.apply(&points[d].x)
            }
        };
        inputs.push(x_in);
        if d % adaptive.finetune_every == 0 {
            net = Network::from_flat(net_spec.clone(), &frozen)?;
            if adaptive.finetune_epochs > 0 && d >= 1 {
                let w_eff = adaptive.finetune_window.min(d);
                let lo = d - w_eff;
                let xs: Vec<&[f64]> = inputs[lo..d].iter().map(Vec::as_slice).collect();
                let realized: Vec<&[f64]> =
                    (lo..d).map(|s| decide_panel.row(points[s].idx + 1)).collect();
                let mut params = net.to_flat();
                let mut diverged = false;
                for _ in 0..adaptive.finetune_epochs {
                    let (loss, grad) = fine_tune_loss_grad(&net, &xs, &realized, adaptive.lambda_to)?;
                    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                        diverged = true;
                        break;
                    }
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= adaptive.finetune_lr * g;
                    }
                    net = Network::from_flat(net_spec.clone(), &params)?;
                }
                if diverged {
                    net = Network::from_flat(net_spec.clone(), &frozen)?;
                    flags.push(format!("finetune-skipped:{}", points[d].date));
                }
            }
        }
        let w = if student.kind.is_bayesian() && mc_draws > 0 {
            let date_seed: u64 = rng::substream(seed, "eval-mc", points[d].idx as u64).random();
            net.mc_average(&inputs[d], mc_draws, date_seed)?.0
        } else {
            net.forward(&inputs[d], Mode::Deterministic)?.0
        };
        targets.push(w);
    }
    build_track(points, &targets, earn_panel, spec, flags)
}

// ---------------------------------------------------------------------------
// Regime decomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeTag {
    #[serde(rename = "ALL")]
    All,
    #[serde(rename = "HIGHVOL")]
    HighVol,
    #[serde(rename = "LOWVOL")]
    LowVol,
}

impl std::fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegimeTag::All => "ALL",
            RegimeTag::HighVol => "HIGHVOL",
            RegimeTag::LowVol => "LOWVOL",
        })
    }
}

impl std::str::FromStr for RegimeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ALL" => Ok(RegimeTag::All),
            "HIGHVOL" => Ok(RegimeTag::HighVol),
            "LOWVOL" => Ok(RegimeTag::LowVol),
            _ => Err(Error::Config(format!("unknown regime {s:?}"))),
        }
    }
}

/// Equal-weight market proxy: the cross-sectional mean return per week.
pub fn market_series(panel: &Mat) -> Vec<f64> {
    (0..panel.rows())
        .map(|t| panel.row(t).iter().sum::<f64>() / panel.cols() as f64)
        .collect()
}

/// Trailing sample std of the market series over windows ending at each
/// decision row (inclusive); rows without 2 observations yet get 0.
pub fn trailing_vol(series: &[f64], idx: &[usize], window: usize) -> Vec<f64> {
    idx.iter()
        .map(|&t| {
            let lo = (t + 1).saturating_sub(window);
            let slice = &series[lo..=t];
            if slice.len() < 2 {
                0.0
            } else {
                stats::sample_std(slice)
            }
        })
        .collect()
}

/// Partition decision rows by trailing market vol against its full-sample
/// median: strictly above goes HIGHVOL.
pub fn regime_partition(vols: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut sorted = vols.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = stats::quantile(&sorted, 0.5);
    let mut high = Vec::new();
    let mut low = Vec::new();
    for (i, &v) in vols.iter().enumerate() {
        if v > med {
            high.push(i);
        } else {
            low.push(i);
        }
    }
    (high, low)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UniverseTag {
    #[serde(rename = "GRID")]
    Grid,
    #[serde(rename = "C2A")]
    C2a,
    #[serde(rename = "D2A")]
    D2a,
}

impl std::fmt::Display for UniverseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UniverseTag::Grid => "GRID",
            UniverseTag::C2a => "C2A",
            UniverseTag::D2a => "D2A",
        })
    }
}

impl std::str::FromStr for UniverseTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "GRID" => Ok(UniverseTag::Grid),
            "C2A" => Ok(UniverseTag::C2a),
            "D2A" => Ok(UniverseTag::D2a),
            _ => Err(Error::Config(format!("unknown universe {s:?}"))),
        }
    }
}

/// Identity of one evaluation run, attached to every report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub model: String,
    pub world_seed: u64,
    pub model_seed: u64,
    pub universe: UniverseTag,
    pub level: ConstraintLevel,
    /// Stress transform name when returns were perturbed.
    pub stress: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub world_seed: u64,
    pub model_seed: u64,
    pub universe: UniverseTag,
    pub level: ConstraintLevel,
    pub stress: Option<String>,
    pub regime: RegimeTag,
    pub sharpe: Option<f64>,
    pub cvar95: f64,
    pub max_drawdown: f64,
    pub mean_turnover: f64,
    pub ann_return: f64,
    pub ann_vol: f64,
    pub n_weeks: usize,
    pub low_sample: bool,
}

fn report_row(key: &RunKey, regime: RegimeTag, m: &TrackMetrics) -> EvalReport {
    EvalReport {
        model: key.model.clone(),
        world_seed: key.world_seed,
        model_seed: key.model_seed,
        universe: key.universe,
        level: key.level,
        stress: key.stress.clone(),
        regime,
        sharpe: m.sharpe,
        cvar95: m.cvar95,
        max_drawdown: m.max_drawdown,
        mean_turnover: m.mean_turnover,
        ann_return: m.ann_return,
        ann_vol: m.ann_vol,
        n_weeks: m.n_weeks,
        low_sample: m.n_weeks < LOW_SAMPLE_WEEKS,
    }
}

fn subset<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Full-track metrics plus HIGHVOL/LOWVOL decomposition by trailing
/// market vol; degenerate sub-tracks (fewer than 2 weeks) are omitted.
pub fn reports_for_track(
    track: &BacktestTrack,
    market_vols: &[f64],
    key: &RunKey,
) -> Result<Vec<EvalReport>> {
    if market_vols.len() != track.len() {
        return Err(Error::Shape(format!(
            "{} vol entries for {} track rows",
            market_vols.len(),
            track.len()
        )));
    }
    let mut out =
        vec![report_row(key, RegimeTag::All, &track_metrics(&track.net_returns, &track.turnover)?)];
    let (high, low) = regime_partition(market_vols);
    for (tag, idx) in [(RegimeTag::HighVol, high), (RegimeTag::LowVol, low)] {
        if idx.len() < 2 {
            continue;
        }
        let m = track_metrics(&subset(&track.net_returns, &idx), &subset(&track.turnover, &idx))?;
        out.push(report_row(key, tag, &m));
    }
    Ok(out)
}

/// Report CSV, one row per EvalReport; undefined Sharpe prints NA.
pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "model,world_seed,model_seed,universe,level,stress,regime,n_weeks,low_sample,\
         sharpe,cvar95,max_drawdown,mean_turnover,ann_return,ann_vol\n",
    );
    for r in reports {
        let sharpe = r.sharpe.map_or("NA".to_string(), fmt_num);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.world_seed,
            r.model_seed,
            r.universe,
            r.level,
            r.stress.as_deref().unwrap_or("none"),
            r.regime,
            r.n_weeks,
            r.low_sample,
            sharpe,
            fmt_num(r.cvar95),
            fmt_num(r.max_drawdown),
            fmt_num(r.mean_turnover),
            fmt_num(r.ann_return),
            fmt_num(r.ann_vol),
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Comparative analytics
// ---------------------------------------------------------------------------

/// Pairwise win rates from per-run Sharpe vectors (one row per run, one
/// column per model): entry (i, j) is the fraction of runs where model i
/// beats model j, ties counting one half.
pub fn win_rate_matrix(sharpes_by_run: &[Vec<f64>]) -> Result<Mat> {
    let first = sharpes_by_run
        .first()
        .ok_or_else(|| Error::Data("win-rate matrix needs at least one run".into()))?;
    let m = first.len();
    if sharpes_by_run.iter().any(|r| r.len() != m) {
        return Err(Error::Shape("runs cover different model sets".into()));
    }
    let runs = sharpes_by_run.len() as f64;
    let mut out = Mat::zeros(m, m);
    for run in sharpes_by_run {
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] += if run[i] > run[j] {
                    1.0
                } else if run[i] < run[j] {
                    0.0
                } else {
                    0.5
                };
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] /= runs;
        }
    }
    Ok(out)
}

pub fn win_rate_csv(models: &[String], matrix: &Mat) -> String {
    let mut out = String::from("model");
    for m in models {
        out.push(',');
        out.push_str(m);
    }
    out.push('\n');
    for (i, m) in models.iter().enumerate() {
        out.push_str(m);
        for j in 0..models.len() {
            out.push(',');
            out.push_str(&fmt_num(matrix[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Relative Sharpe change between the constrained and frictionless
/// levels: (L3 - L1) / L1. `None` when the base is zero.
pub fn constraint_sensitivity(l1: f64, l3: f64) -> Option<f64> {
    if l1 == 0.0 {
        None
    } else {
        Some((l3 - l1) / l1)
    }
}

/// Parse a report CSV produced by [`report_csv`]. The writer emits no
/// quoted or comma-bearing fields, so a plain split is exact.
pub fn parse_report_csv(text: &str) -> Result<Vec<EvalReport>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Data("empty report CSV".into()))?;
    let expected = "model,world_seed,model_seed,universe,level,stress,regime,n_weeks,\
                    low_sample,sharpe,cvar95,max_drawdown,mean_turnover,ann_return,ann_vol";
    if header != expected {
        return Err(Error::Data(format!("unexpected report header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(Error::Data(format!("report line {}: {} fields, expected 15", i + 1, f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Data(format!("report line {}: bad {what} {s:?}", i + 1)))
        };
        let int = |s: &str, what: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::Data(format!("report line {}: bad {what} {s:?}", i + 1)))
        };
        out.push(EvalReport {
            model: f[0].to_string(),
            world_seed: int(f[1], "world_seed")?,
            model_seed: int(f[2], "model_seed")?,
            universe: f[3].parse()?,
            level: f[4].parse()?,
            stress: if f[5] == "none" { None } else { Some(f[5].to_string()) },
            regime: f[6].parse()?,
            n_weeks: int(f[7], "n_weeks")? as usize,
            low_sample: match f[8] {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Data(format!("report line {}: bad low_sample {other:?}", i + 1)))
                }
            },
            sharpe: if f[9] == "NA" { None } else { Some(num(f[9], "sharpe")?) },
            cvar95: num(f[10], "cvar95")?,
            max_drawdown: num(f[11], "max_drawdown")?,
            mean_turnover: num(f[12], "mean_turnover")?,
            ann_return: num(f[13], "ann_return")?,
            ann_vol: num(f[14], "ann_vol")?,
        });
    }
    Ok(out)
}

/// Aggregate report rows into one summary row per
/// (model, universe, level, stress, regime): run count, undefined-Sharpe
/// count, and mean/std of each metric over the runs.
pub fn summary_csv(reports: &[EvalReport]) -> String {
    use std::collections::BTreeMap;
    type Key = (String, String, String, String, String);
    let mut groups: BTreeMap<Key, Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        let key = (
            r.model.clone(),
            r.universe.to_string(),
            r.level.to_string(),
            r.stress.clone().unwrap_or_else(|| "none".into()),
            r.regime.to_string(),
        );
        groups.entry(key).or_default().push(r);
    }
    let mut out = String::from(
        "model,universe,level,stress,regime,n_runs,undefined_sharpe,\
         sharpe_mean,sharpe_std,cvar95_mean,cvar95_std,max_drawdown_mean,max_drawdown_std,\
         mean_turnover_mean,mean_turnover_std,ann_return_mean,ann_return_std,\
         ann_vol_mean,ann_vol_std\n",
    );
    for ((model, universe, level, stress, regime), rows) in &groups {
        let sharpes: Vec<f64> = rows.iter().filter_map(|r| r.sharpe).collect();
        let col = |f: fn(&EvalReport) -> f64| -> Vec<f64> { rows.iter().map(|r| f(r)).collect() };
        let pair = |v: &[f64]| format!("{},{}", fmt_num(stats::mean(v)), fmt_num(stats::sample_std(v)));
        out.push_str(&format!(
            "{model},{universe},{level},{stress},{regime},{},{},{},{},{},{},{},{}\n",
            rows.len(),
            rows.len() - sharpes.len(),
            pair(&sharpes),
            pair(&col(|r| r.cvar95)),
            pair(&col(|r| r.max_drawdown)),
            pair(&col(|r| r.mean_turnover)),
            pair(&col(|r| r.ann_return)),
            pair(&col(|r| r.ann_vol)),
        ));
    }
    out
}
