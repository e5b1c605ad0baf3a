//! Per-asset feature construction at rebalance dates. Sixteen columns in
//! six blocks: return forecast (blended mu, forecast sigma, realized vol),
//! PCA loadings, momentum z-scores, drawdown, portfolio state (previous
//! weight, cap), and four market-regime columns broadcast to all assets.
//! Everything is computed from data at or before the decision date.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::stats;

pub const N_FEATURES: usize = 16;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "mu_blend",
    "sigma_mu",
    "vol_26w",
    "pc1",
    "pc2",
    "pc3",
    "z_mom_12_1",
    "z_mom_6m",
    "z_mom_1m",
    "drawdown_52w",
    "w_prev",
    "cap",
    "mkt_ret_4w",
    "mkt_ret_12w",
    "mkt_vol_12w",
    "mkt_dd_52w",
];

/// Which series stands in for "the market" in the regime block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum MarketProxy {
    /// Cross-sectional mean return each week (equal-weight market).
    EqualWeight,
    /// A designated asset column.
    Asset(usize),
}

impl Default for MarketProxy {
    fn default() -> Self {
        MarketProxy::EqualWeight
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    pub lookback: usize,
    pub ridge_lambda: f64,
    pub min_obs: usize,
    pub fbar_weeks: usize,
    pub pca_window: usize,
    pub vol_window: usize,
    pub dd_window: usize,
    pub regime_vol_window: usize,
    pub blend_mu: f64,
    pub blend_mom: f64,
    pub market: MarketProxy,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            lookback: 52,
            ridge_lambda: 5.0,
            min_obs: 30,
            fbar_weeks: 13,
            pca_window: 104,
            vol_window: 26,
            dd_window: 52,
            regime_vol_window: 12,
            blend_mu: 0.7,
            blend_mom: 0.3,
            market: MarketProxy::EqualWeight,
        }
    }
}

impl FeatureParams {
    /// Earliest usable decision index: every block must fit its window.
    pub fn min_hist(&self) -> usize {
        self.lookback.max(self.pca_window).max(self.dd_window).max(52)
    }
}

/// Aligned dense inputs the builder reads: weekly simple returns (T x N),
/// the risk-free series, and the factor panel (T x K).
#[derive(Debug, Clone)]
pub struct FeatureInputs {
    pub dates: Vec<NaiveDate>,
    pub asset_names: Vec<String>,
    pub returns: Mat,
    pub rf: Vec<f64>,
    pub factors: Mat,
}

impl FeatureInputs {
    pub fn validate(&self) -> Result<()> {
        let t = self.dates.len();
        if self.returns.rows() != t || self.factors.rows() != t || self.rf.len() != t {
            return Err(Error::Shape(format!(
                "inputs disagree on length: {} dates, {} return rows, {} rf, {} factor rows",
                t,
                self.returns.rows(),
                self.rf.len(),
                self.factors.rows()
            )));
        }
        if self.asset_names.len() != self.returns.cols() {
            return Err(Error::Shape("asset name count mismatch".into()));
        }
        Ok(())
    }

    pub fn n_assets(&self) -> usize {
        self.returns.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeForecast {
    pub mu_ex_hat: Vec<f64>,
    pub sigma_mu: Vec<f64>,
    pub beta_hat: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumBlock {
    pub mom_12_1: Vec<f64>,
    pub z_12_1: Vec<f64>,
    pub z_6m: Vec<f64>,
    pub z_1m: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeBlock {
    pub ret_4w: f64,
    pub ret_12w: f64,
    pub vol: f64,
    pub drawdown: f64,
}

/// A date is either fully built or skipped with a reason; never partial.
#[derive(Debug, Clone)]
pub enum FeatureOutcome {
    Built(FeatureMatrix),
    Skipped(SkipReason),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SkipReason {
    InsufficientHistory { t: usize, needed: usize },
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::InsufficientHistory { t, needed } => {
                write!(f, "date index {t} lacks {needed} weeks of history")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub t: usize,
    pub date: NaiveDate,
    pub per_asset: Mat,
}

impl FeatureMatrix {
    /// Row-major vectorization: asset 0's 16 features, then asset 1's, ...
    pub fn flatten(&self) -> Vec<f64> {
        self.per_asset.data().to_vec()
    }

    pub fn unflatten(flat: &[f64], n_assets: usize) -> Result<Mat> {
        if flat.len() != n_assets * N_FEATURES {
            return Err(Error::Shape(format!(
                "flat vector of {} for {} assets x {} features",
                flat.len(),
                n_assets,
                N_FEATURES
            )));
        }
        Ok(Mat::from_vec(n_assets, N_FEATURES, flat.to_vec()))
    }
}

/// Ridge regression of excess returns on factors over the trailing window
/// (intercept unpenalized), forecasting with the 13-week factor mean.
/// Returns None when fewer than `min_obs` rows are available.
pub fn rolling_ridge(
    inputs: &FeatureInputs,
    t: usize,
    params: &FeatureParams,
) -> Result<Option<RidgeForecast>> {
    let start = (t + 1).saturating_sub(params.lookback);
    let len = t + 1 - start;
    if len < params.min_obs || t >= inputs.returns.rows() {
        return Ok(None);
    }
    let k = inputs.factors.cols();
    let n = inputs.n_assets();
    let p = k + 1;
    // Shared design matrix: [1, f_tau] for tau in the window.
    let mut xtx = Mat::zeros(p, p);
    for tau in start..=t {
        let f = inputs.factors.row(tau);
        let mut x = Vec::with_capacity(p);
        x.push(1.0);
        x.extend_from_slice(f);
        for i in 0..p {
            for j in 0..p {
                xtx[(i, j)] += x[i] * x[j];
            }
        }
    }
    // Penalize slopes only.
    let mut reg = xtx.clone();
    for i in 1..p {
        reg[(i, i)] += params.ridge_lambda;
    }
    // 13-week factor mean for the forecast.
    let fb_start = (t + 1).saturating_sub(params.fbar_weeks);
    let mut fbar = vec![0.0; k];
    for tau in fb_start..=t {
        for j in 0..k {
            fbar[j] += inputs.factors[(tau, j)];
        }
    }
    let fb_len = (t + 1 - fb_start) as f64;
    fbar.iter_mut().for_each(|v| *v /= fb_len);

    let mut mu = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut beta_hat = Mat::zeros(n, k);
    for i in 0..n {
        let mut xty = vec![0.0; p];
        for tau in start..=t {
            let y = inputs.returns[(tau, i)] - inputs.rf[tau];
            xty[0] += y;
            let f = inputs.factors.row(tau);
            for j in 0..k {
                xty[j + 1] += f[j] * y;
            }
        }
        let b = linalg::solve(&reg, &xty)
            .map_err(|e| Error::Fit(format!("ridge solve failed for asset {i}: {e}")))?;
        for j in 0..k {
            beta_hat[(i, j)] = b[j + 1];
        }
        // Slopes only in the forecast: the intercept just absorbs the
        // window mean during fitting.
        mu.push(linalg::dot(&b[1..], &fbar));
        let mut resid = Vec::with_capacity(len);
        for tau in start..=t {
            let y = inputs.returns[(tau, i)] - inputs.rf[tau];
            let fit = b[0] + linalg::dot(&b[1..], inputs.factors.row(tau));
            resid.push(y - fit);
        }
        sigma.push(stats::sample_std(&resid));
    }
    Ok(Some(RidgeForecast { mu_ex_hat: mu, sigma_mu: sigma, beta_hat }))
}

fn cumulative_return(returns: &Mat, asset: usize, from: usize, to: usize) -> f64 {
    let mut w = 1.0;
    for tau in from..=to {
        w *= 1.0 + returns[(tau, asset)];
    }
    w - 1.0
}

/// Cross-sectional z-scores with the sample-std convention; a degenerate
/// cross-section (zero std) maps to all zeros.
fn cross_sectional_z(values: &[f64]) -> Vec<f64> {
    let m = stats::mean(values);
    let s = stats::sample_std(values);
    if s <= 0.0 || !s.is_finite() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - m) / s).collect()
}

/// 12-1 momentum (skipping the latest 4 weeks), 6-month and 1-month
/// cumulative returns, each z-scored cross-sectionally.
pub fn momentum_features(inputs: &FeatureInputs, t: usize) -> Result<Option<MomentumBlock>> {
    if t < 52 {
        return Ok(None);
    }
    let n = inputs.n_assets();
    let mut mom = Vec::with_capacity(n);
    let mut six = Vec::with_capacity(n);
    let mut one = Vec::with_capacity(n);
    for i in 0..n {
        mom.push(cumulative_return(&inputs.returns, i, t - 52, t - 5));
        six.push(cumulative_return(&inputs.returns, i, t - 25, t));
        one.push(cumulative_return(&inputs.returns, i, t - 3, t));
    }
    Ok(Some(MomentumBlock {
        z_12_1: cross_sectional_z(&mom),
        z_6m: cross_sectional_z(&six),
        z_1m: cross_sectional_z(&one),
        mom_12_1: mom,
    }))
}

/// Loadings on the top principal components of the trailing covariance.
/// Sign convention: the largest-magnitude entry of each component is
/// positive. With fewer than three assets the trailing columns are zero.
pub fn pca_loadings(
    inputs: &FeatureInputs,
    t: usize,
    window: usize,
) -> Result<Option<Mat>> {
    if t + 1 < window {
        return Ok(None);
    }
    let n = inputs.n_assets();
    let start = t + 1 - window;
    let mut means = vec![0.0; n];
    for tau in start..=t {
        for i in 0..n {
            means[i] += inputs.returns[(tau, i)];
        }
    }
    means.iter_mut().for_each(|m| *m /= window as f64);
    let mut cov = Mat::zeros(n, n);
    for tau in start..=t {
        for i in 0..n {
            let di = inputs.returns[(tau, i)] - means[i];
            for j in i..n {
                cov[(i, j)] += di * (inputs.returns[(tau, j)] - means[j]);
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            cov[(i, j)] /= (window - 1) as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    let (_, vecs) = linalg::jacobi_eigen_sym(&cov)?;
    let mut out = Mat::zeros(n, 3);
    for c in 0..3.min(n) {
        let mut v = vecs.col(c);
        let lead = (0..n)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap())
            .unwrap();
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..n {
            out[(i, c)] = v[i];
        }
    }
    Ok(Some(out))
}

/// Drawdown of the wealth path implied by a return sequence: (peak -
/// current) / peak with the peak tracked over the whole sequence.
pub fn drawdown_from_returns(rets: &[f64]) -> f64 {
    let mut wealth = 1.0f64;
    let mut peak = 1.0f64;
    for r in rets {
        wealth *= 1.0 + r;
        peak = peak.max(wealth);
    }
    (peak - wealth) / peak
}

/// Per-asset trailing drawdown over `window` weeks.
pub fn drawdown_feature(
    inputs: &FeatureInputs,
    t: usize,
    window: usize,
) -> Result<Option<Vec<f64>>> {
    if t + 1 < window {
        return Ok(None);
    }
    let start = t + 1 - window;
    let n = inputs.n_assets();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let rets: Vec<f64> = (start..=t).map(|tau| inputs.returns[(tau, i)]).collect();
        out.push(drawdown_from_returns(&rets));
    }
    Ok(Some(out))
}

fn market_return(inputs: &FeatureInputs, proxy: MarketProxy, tau: usize) -> Result<f64> {
    match proxy {
        MarketProxy::EqualWeight => {
            let n = inputs.n_assets();
            Ok((0..n).map(|i| inputs.returns[(tau, i)]).sum::<f64>() / n as f64)
        }
        MarketProxy::Asset(i) => {
            if i >= inputs.n_assets() {
                return Err(Error::Config(format!(
                    "market proxy column {i} out of range ({} assets)",
                    inputs.n_assets()
                )));
            }
            Ok(inputs.returns[(tau, i)])
        }
    }
}

/// Market regime block: 4- and 12-week cumulative market return, 12-week
/// realized vol (sample std), 52-week market drawdown.
pub fn market_regime_features(
    inputs: &FeatureInputs,
    t: usize,
    params: &FeatureParams,
) -> Result<Option<RegimeBlock>> {
    if t + 1 < 52 {
        return Ok(None);
    }
    let series: Vec<f64> = (0..=t)
        .map(|tau| market_return(inputs, params.market, tau))
        .collect::<Result<_>>()?;
    let cum = |weeks: usize| -> f64 {
        series[t + 1 - weeks..=t].iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0
    };
    let vw = params.regime_vol_window;
    let vol = stats::sample_std(&series[t + 1 - vw..=t]);
    let dd = drawdown_from_returns(&series[t + 1 - 52..=t]);
    Ok(Some(RegimeBlock { ret_4w: cum(4), ret_12w: cum(12), vol, drawdown: dd }))
}

/// Realized 26-week volatility per asset (sample std of simple returns).
fn realized_vol(inputs: &FeatureInputs, t: usize, window: usize) -> Vec<f64> {
    let start = (t + 1).saturating_sub(window);
    (0..inputs.n_assets())
        .map(|i| {
            let r: Vec<f64> = (start..=t).map(|tau| inputs.returns[(tau, i)]).collect();
            stats::sample_std(&r)
        })
        .collect()
}

/// Assemble the full 16-column matrix for one date, or a typed skip when
/// any block lacks history. `prev_weights` is the strategy's last executed
/// allocation; `cap` is the active position cap (1.0 when unconstrained).
pub fn build_feature_matrix(
    inputs: &FeatureInputs,
    t: usize,
    params: &FeatureParams,
    prev_weights: &[f64],
    cap: f64,
) -> Result<FeatureOutcome> {
    inputs.validate()?;
    let n = inputs.n_assets();
    if prev_weights.len() != n {
        return Err(Error::Shape(format!(
            "{} previous weights for {} assets",
            prev_weights.len(),
            n
        )));
    }
    let needed = params.min_hist();
    if t < needed || t >= inputs.returns.rows() {
        return Ok(FeatureOutcome::Skipped(SkipReason::InsufficientHistory { t, needed }));
    }
    let ridge = match rolling_ridge(inputs, t, params)? {
        Some(r) => r,
        None => {
            return Ok(FeatureOutcome::Skipped(SkipReason::InsufficientHistory {
                t,
                needed: params.min_obs,
            }))
        }
    };
    let mom = match momentum_features(inputs, t)? {
        Some(m) => m,
        None => {
            return Ok(FeatureOutcome::Skipped(SkipReason::InsufficientHistory { t, needed: 52 }))
        }
    };
    let pca = match pca_loadings(inputs, t, params.pca_window)? {
        Some(p) => p,
        None => {
            return Ok(FeatureOutcome::Skipped(SkipReason::InsufficientHistory {
                t,
                needed: params.pca_window,
            }))
        }
    };
    let dd = match drawdown_feature(inputs, t, params.dd_window)? {
        Some(d) => d,
        None => {
            return Ok(FeatureOutcome::Skipped(SkipReason::InsufficientHistory {
                t,
                needed: params.dd_window,
            }))
        }
    };
    let regime = match market_regime_features(inputs, t, params)? {
        Some(r) => r,
        None => {
            return Ok(FeatureOutcome::Skipped(SkipReason::InsufficientHistory { t, needed: 52 }))
        }
    };
    let vol = realized_vol(inputs, t, params.vol_window);

    // Blend: 0.7 ridge forecast + 0.3 momentum tilt scaled to the
    // forecast's cross-sectional dispersion, plus the risk-free level.
    let s = stats::sample_std(&ridge.mu_ex_hat);
    let rf_t = inputs.rf[t];
    let mut per_asset = Mat::zeros(n, N_FEATURES);
    for i in 0..n {
        let mu_blend =
            params.blend_mu * ridge.mu_ex_hat[i] + params.blend_mom * s * mom.z_12_1[i] + rf_t;
        let row = [
            mu_blend,
            ridge.sigma_mu[i],
            vol[i],
            pca[(i, 0)],
            pca[(i, 1)],
            pca[(i, 2)],
            mom.z_12_1[i],
            mom.z_6m[i],
            mom.z_1m[i],
            dd[i],
            prev_weights[i],
            cap,
            regime.ret_4w,
            regime.ret_12w,
            regime.vol,
            regime.drawdown,
        ];
        for (c, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite feature for asset {} column {}",
                    inputs.asset_names[i], FEATURE_NAMES[c]
                )));
            }
            per_asset[(i, c)] = *v;
        }
    }
    Ok(FeatureOutcome::Built(FeatureMatrix { t, date: inputs.dates[t], per_asset }))
}

/// Schema manifest emitted next to feature CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub n_assets: usize,
    pub asset_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub params: FeatureParams,
}
