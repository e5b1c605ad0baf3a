//! Stylized stress transforms applied to realized weekly return panels
//! while decision rules stay fixed: idiosyncratic volatility bursts,
//! negatively biased market jumps, sign-alternating whipsaw, correlation
//! spikes, and their sequential combination. Every transform at its
//! identity parameters returns the panel bitwise unchanged.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng;

/// Default burst amplification.
pub const VOL_SIGMA_S: f64 = 2.0;
/// Default number of burst windows.
pub const VOL_N_BURSTS: usize = 3;
/// Default burst window length in weeks.
pub const VOL_BURST_LEN: usize = 8;
/// Default weekly market-jump probability.
pub const JUMP_PROB: f64 = 0.03;
/// Default mean jump magnitude.
pub const JUMP_MEAN: f64 = 0.08;
/// Default probability that a market jump is negative.
pub const JUMP_NEG_PROB: f64 = 0.80;
/// Default whipsaw strength.
pub const WHIPSAW_GAMMA: f64 = 0.7;
/// Default correlation-spike blend.
pub const CORR_LAMBDA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StressKind {
    VolBursts { sigma_s: f64, n_b: usize, l_b: usize },
    Jumps { p_j: f64, mu_j: f64, p_neg: f64 },
    Whipsaw { gamma: f64 },
    CorrSpike { lambda: f64 },
    Combo,
}

impl StressKind {
    pub fn vol_bursts_default() -> Self {
        StressKind::VolBursts { sigma_s: VOL_SIGMA_S, n_b: VOL_N_BURSTS, l_b: VOL_BURST_LEN }
    }

    pub fn jumps_default() -> Self {
        StressKind::Jumps { p_j: JUMP_PROB, mu_j: JUMP_MEAN, p_neg: JUMP_NEG_PROB }
    }

    pub fn whipsaw_default() -> Self {
        StressKind::Whipsaw { gamma: WHIPSAW_GAMMA }
    }

    pub fn corr_spike_default() -> Self {
        StressKind::CorrSpike { lambda: CORR_LAMBDA }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StressKind::VolBursts { .. } => "vol_bursts",
            StressKind::Jumps { .. } => "jumps",
            StressKind::Whipsaw { .. } => "whipsaw",
            StressKind::CorrSpike { .. } => "corr_spike",
            StressKind::Combo => "combo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressSpec {
    #[serde(flatten)]
    pub kind: StressKind,
    pub seed: u64,
}

pub fn apply_stress(panel: &Mat, spec: &StressSpec) -> Result<Mat> {
    match spec.kind {
        StressKind::VolBursts { sigma_s, n_b, l_b } => {
            stress_vol_bursts(panel, sigma_s, n_b, l_b, spec.seed)
        }
        StressKind::Jumps { p_j, mu_j, p_neg } => {
            stress_jumps(panel, p_j, mu_j, p_neg, spec.seed)
        }
        StressKind::Whipsaw { gamma } => stress_whipsaw(panel, gamma),
        StressKind::CorrSpike { lambda } => stress_corr_spike(panel, lambda),
        StressKind::Combo => stress_combo(panel, spec.seed),
    }
}

fn row_mean(panel: &Mat, t: usize) -> f64 {
    let row = panel.row(t);
    row.iter().sum::<f64>() / row.len() as f64
}

/// Place `n_b` non-overlapping windows of `l_b` rows by rejection sampling
/// start indices; deterministic under the seed.
fn place_bursts(t_len: usize, n_b: usize, l_b: usize, seed: u64) -> Result<Vec<usize>> {
    if n_b * l_b > t_len {
        return Err(Error::Infeasible(format!(
            "{n_b} bursts of {l_b} weeks cannot fit in {t_len} weeks"
        )));
    }
    let mut r = rng::stream(seed, "bursts");
    let mut starts: Vec<usize> = Vec::with_capacity(n_b);
    let mut attempts = 0usize;
    while starts.len() < n_b {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::Numerical(format!(
                "burst placement did not converge ({n_b} windows of {l_b} in {t_len} weeks)"
            )));
        }
        let s = r.random_range(0..=t_len - l_b);
        if starts.iter().all(|&e| s + l_b <= e || e + l_b <= s) {
            starts.push(s);
        }
    }
    starts.sort_unstable();
    Ok(starts)
}

/// Amplify within-week residuals by `sigma_s` inside randomly placed
/// burst windows; the cross-sectional mean of every week is preserved.
pub fn stress_vol_bursts(
    panel: &Mat,
    sigma_s: f64,
    n_b: usize,
    l_b: usize,
    seed: u64,
) -> Result<Mat> {
    if sigma_s < 1.0 {
        return Err(Error::Config(format!("burst amplification {sigma_s} below 1")));
    }
    if l_b == 0 {
        return Err(Error::Config("burst length must be at least 1".into()));
    }
    if n_b == 0 || sigma_s == 1.0 {
        return Ok(panel.clone());
    }
    let starts = place_bursts(panel.rows(), n_b, l_b, seed)?;
    let mut out = panel.clone();
    for &s in &starts {
        for t in s..s + l_b {
            let m = row_mean(panel, t);
            for j in 0..panel.cols() {
                out[(t, j)] = m + sigma_s * (panel[(t, j)] - m);
            }
        }
    }
    Ok(out)
}

/// Market jumps with a negative sign bias plus sparse idiosyncratic
/// shocks. Each week jumps with probability `p_j`; the jump magnitude is
/// |N(mu_j, (mu_j/2)^2)| and hits every asset with the same signed amount.
/// Independently, each cell receives N(0, (mu_j/2)^2) with probability
/// p_j / 3.
pub fn stress_jumps(panel: &Mat, p_j: f64, mu_j: f64, p_neg: f64, seed: u64) -> Result<Mat> {
    if !(0.0..=1.0).contains(&p_j) || !(0.0..=1.0).contains(&p_neg) {
        return Err(Error::Config("jump probabilities must lie in [0,1]".into()));
    }
    if !(mu_j > 0.0) {
        return Err(Error::Config(format!("jump magnitude {mu_j} not positive")));
    }
    if p_j == 0.0 {
        return Ok(panel.clone());
    }
    let mut r = rng::stream(seed, "jumps");
    let magnitude = Normal::new(mu_j, mu_j / 2.0).expect("finite parameters");
    let idio = Normal::new(0.0, mu_j / 2.0).expect("finite parameters");
    let mut out = panel.clone();
    for t in 0..panel.rows() {
        let u: f64 = r.random();
        if u < p_j {
            let j: f64 = magnitude.sample(&mut r);
            let s: f64 = if r.random::<f64>() < p_neg { -1.0 } else { 1.0 };
            let shock = s * j.abs();
            for c in 0..panel.cols() {
                out[(t, c)] += shock;
            }
        }
        for c in 0..panel.cols() {
            if r.random::<f64>() < p_j / 3.0 {
                out[(t, c)] += idio.sample(&mut r);
            }
        }
    }
    Ok(out)
}

/// Alternate the sign of the market component week by week (parity
/// anchored to row 0) and damp residuals: x + gamma * (a_t |m| - m)
/// - 0.3 gamma * eps.
pub fn stress_whipsaw(panel: &Mat, gamma: f64) -> Result<Mat> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("whipsaw strength {gamma} outside [0,1]")));
    }
    if gamma == 0.0 {
        return Ok(panel.clone());
    }
    let mut out = panel.clone();
    for t in 0..panel.rows() {
        let m = row_mean(panel, t);
        let a = if t % 2 == 0 { 1.0 } else { -1.0 };
        let market_shift = gamma * (a * m.abs() - m);
        for c in 0..panel.cols() {
            let eps = panel[(t, c)] - m;
            out[(t, c)] = panel[(t, c)] + market_shift - 0.3 * gamma * eps;
        }
    }
    Ok(out)
}

/// Blend every asset toward the weekly cross-sectional mean, shrinking
/// dispersion by exactly (1 - lambda).
pub fn stress_corr_spike(panel: &Mat, lambda: f64) -> Result<Mat> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("correlation blend {lambda} outside [0,1]")));
    }
    if lambda == 0.0 {
        return Ok(panel.clone());
    }
    let mut out = panel.clone();
    for t in 0..panel.rows() {
        let m = row_mean(panel, t);
        for c in 0..panel.cols() {
            out[(t, c)] = (1.0 - lambda) * panel[(t, c)] + lambda * m;
        }
    }
    Ok(out)
}

/// Sequential composition at the reference parameters: correlation spike,
/// then volatility bursts, then jumps, each stochastic stage on its own
/// derived stream.
pub fn stress_combo(panel: &Mat, seed: u64) -> Result<Mat> {
    let burst_seed: u64 = rng::stream(seed, "combo-bursts").random();
    let jump_seed: u64 = rng::stream(seed, "combo-jumps").random();
    let spiked = stress_corr_spike(panel, CORR_LAMBDA)?;
    let burst = stress_vol_bursts(&spiked, VOL_SIGMA_S, VOL_N_BURSTS, VOL_BURST_LEN, burst_seed)?;
    stress_jumps(&burst, JUMP_PROB, JUMP_MEAN, JUMP_NEG_PROB, jump_seed)
}
