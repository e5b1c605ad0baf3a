//! Long-only allocators: the CVaR teacher solved by projected subgradient
//! descent on the Rockafellar-Uryasev objective, plus mean-variance,
//! minimum-variance and inverse-volatility baselines. All outputs live on
//! the probability simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::stats;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    /// Validate and emit: entries below -1e-12 or a sum off by more than
    /// 1e-9 are rejected; tiny negatives are clamped to zero.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("weights sum to {sum}, not 1")));
        }
        for (i, w) in weights.iter().enumerate() {
            if *w < -1e-12 {
                return Err(Error::Domain(format!("weight {w} < 0 at index {i}")));
            }
        }
        Ok(WeightVector { weights: weights.into_iter().map(|w| w.max(0.0)).collect() })
    }

    pub fn uniform(n: usize) -> Self {
        WeightVector { weights: vec![1.0 / n as f64; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Return scenarios for the teacher: S draws over N assets plus the CVaR
/// confidence level.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub scenarios: Mat,
    pub alpha: f64,
}

impl ScenarioSet {
    pub fn new(scenarios: Mat, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha {alpha} outside (0,1)")));
        }
        let s = scenarios.rows();
        // ceil with a guard against binary representation of alpha pushing
        // an exact integer over the boundary (e.g. 1/(1-0.95) = 20.0000...4).
        let need = robust_ceil(1.0 / (1.0 - alpha));
        if s < need {
            return Err(Error::Data(format!(
                "{s} scenarios cannot resolve the {alpha} tail; need at least {need}"
            )));
        }
        if !scenarios.is_finite() {
            return Err(Error::Data("non-finite scenario entry".into()));
        }
        Ok(ScenarioSet { scenarios, alpha })
    }

    pub fn n_assets(&self) -> usize {
        self.scenarios.cols()
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenarios.rows()
    }
}

/// ceil(x) that forgives float noise of ~1e-9 above an integer.
fn robust_ceil(x: f64) -> usize {
    (x - 1e-9).ceil().max(1.0) as usize
}

/// Number of tail scenarios at level alpha: K = ceil((1-alpha) S).
pub fn tail_count(s: usize, alpha: f64) -> usize {
    robust_ceil((1.0 - alpha) * s as f64).min(s)
}

/// Average of the worst K = ceil((1-alpha)S) losses.
pub fn empirical_cvar(losses: &[f64], alpha: f64) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::Data("empirical CVaR of an empty loss vector".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0,1)")));
    }
    let k = tail_count(losses.len(), alpha);
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted[losses.len() - k..].iter().sum::<f64>() / k as f64)
}

/// Euclidean projection onto the probability simplex (sorting algorithm).
/// Ties resolve deterministically in index order.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cssv = 0.0;
    let mut theta = 0.0;
    let mut found = false;
    for (j, &uj) in u.iter().enumerate() {
        cssv += uj;
        let cand = (cssv - 1.0) / (j + 1) as f64;
        if uj - cand > 0.0 {
            theta = cand;
            found = true;
        }
    }
    if !found {
        // All mass below threshold (can only happen with degenerate input
        // like all -inf); fall back to uniform.
        return vec![1.0 / n as f64; n];
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Rockafellar-Uryasev objective: ell + mean tail excess / (1-alpha).
pub fn ru_objective(losses: &[f64], ell: f64, alpha: f64) -> f64 {
    let lam = (1.0 - alpha) * losses.len() as f64;
    ell + losses.iter().map(|&l| (l - ell).max(0.0)).sum::<f64>() / lam
}

/// Exact minimizer of the RU objective over ell for fixed losses: the
/// ceil((1-alpha)S)-th largest loss, with the attained value.
pub fn optimal_ell(losses: &[f64], alpha: f64) -> (f64, f64) {
    let s = losses.len();
    let lam = (1.0 - alpha) * s as f64;
    let k = robust_ceil(lam).min(s);
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let ell = sorted[k - 1];
    let excess: f64 = sorted[..k].iter().map(|&l| (l - ell).max(0.0)).sum();
    (ell, ell + excess / lam)
}

#[derive(Debug, Clone)]
pub struct TeacherSolution {
    pub weights: WeightVector,
    /// RU objective at the returned weights with ell at its conditional
    /// optimum; equals the empirical-distribution CVaR of the portfolio.
    pub objective: f64,
    pub var_level: f64,
    pub converged: bool,
}

pub const TEACHER_ITERS: usize = 5000;
pub const TEACHER_STEP: f64 = 0.1;

/// CVaR teacher: minimize the RU objective over the simplex by projected
/// subgradient descent with step a0/sqrt(k), averaging the last half of the
/// iterates. Scenarios are normalized to unit dispersion internally, which
/// makes the solution exactly scale-equivariant and keeps the pinned step
/// size meaningful for weekly-return magnitudes.
pub fn solve_cvar_teacher(set: &ScenarioSet) -> Result<TeacherSolution> {
    let s = set.n_scenarios();
    let n = set.n_assets();
    let alpha = set.alpha;
    let scale = {
        let sd = stats::pop_std(set.scenarios.data());
        if sd > 0.0 {
            sd
        } else {
            // All scenarios identical to their mean: if that mean is zero in
            // every asset the objective is flat; otherwise dispersion-free
            // scenarios still order the assets. Use mean magnitude instead.
            let mm = set.scenarios.data().iter().map(|x| x.abs()).fold(0.0f64, f64::max);
            if mm > 0.0 {
                mm
            } else {
                return Ok(TeacherSolution {
                    weights: WeightVector::uniform(n),
                    objective: 0.0,
                    var_level: 0.0,
                    converged: true,
                });
            }
        }
    };
    let r = set.scenarios.scale(1.0 / scale);
    let lam = (1.0 - alpha) * s as f64;

    let mut w = vec![1.0 / n as f64; n];
    let mut losses: Vec<f64> = (0..s).map(|i| -dot(r.row(i), &w)).collect();
    let mut ell = optimal_ell(&losses, alpha).0;

    let mut w_best = w.clone();
    let mut f_best = ru_objective(&losses, ell, alpha);
    let mut w_avg = vec![0.0; n];
    let mut ell_avg = 0.0;
    let avg_from = TEACHER_ITERS / 2;
    let mut avg_count = 0usize;

    let mut g_w = vec![0.0; n];
    for k in 1..=TEACHER_ITERS {
        for i in 0..s {
            losses[i] = -dot(r.row(i), &w);
        }
        let f_cur = ru_objective(&losses, ell, alpha);
        if f_cur < f_best {
            f_best = f_cur;
            w_best.copy_from_slice(&w);
        }

        g_w.iter_mut().for_each(|g| *g = 0.0);
        let mut n_active = 0usize;
        for i in 0..s {
            if losses[i] > ell {
                n_active += 1;
                let row = r.row(i);
                for j in 0..n {
                    g_w[j] -= row[j] / lam;
                }
            }
        }
        let g_ell = 1.0 - n_active as f64 / lam;

        let a_k = TEACHER_STEP / (k as f64).sqrt();
        for j in 0..n {
            w[j] -= a_k * g_w[j];
        }
        w = project_simplex(&w);
        ell -= a_k * g_ell;

        if k > avg_from {
            for j in 0..n {
                w_avg[j] += w[j];
            }
            ell_avg += ell;
            avg_count += 1;
        }
    }
    for j in 0..n {
        w_avg[j] /= avg_count as f64;
    }
    ell_avg /= avg_count as f64;
    let w_avg = project_simplex(&w_avg);

    let eval = |wv: &[f64]| -> (f64, f64) {
        let l: Vec<f64> = (0..s).map(|i| -dot(r.row(i), wv)).collect();
        optimal_ell(&l, alpha)
    };
    let (ell_a, f_a) = eval(&w_avg);
    let (ell_b, f_b) = eval(&w_best);
    let _ = ell_avg; // the conditional optimum supersedes the averaged ell

    let converged = (f_a - f_b) <= 1e-5 * (1.0 + f_b.abs());
    let (w_out, ell_out, f_out) =
        if converged { (w_avg, ell_a, f_a) } else { (w_best, ell_b, f_b) };
    Ok(TeacherSolution {
        weights: WeightVector::new(w_out)?,
        objective: f_out * scale,
        var_level: ell_out * scale,
        converged,
    })
}

fn check_covariance(sigma: &Mat) -> Result<()> {
    let n = sigma.rows();
    if sigma.cols() != n {
        return Err(Error::Shape(format!("covariance {}x{}", sigma.rows(), sigma.cols())));
    }
    let scale = (0..n).map(|i| sigma[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
    for i in 0..n {
        for j in 0..n {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::Domain(format!("covariance not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Projected gradient descent for min w'Sw [+ penalty] over the simplex.
fn pgd_quadratic(sigma: &Mat, mu: Option<(&[f64], f64, f64)>, iters: usize, w0: &[f64]) -> Vec<f64> {
    // Lipschitz upper bound: 2||S||_F plus the penalty curvature.
    let mut lips = 2.0 * sigma.frobenius_norm();
    if let Some((m, _, rho)) = mu {
        lips += 2.0 * rho * dot(m, m);
    }
    let step = 1.0 / lips.max(1e-12);
    let n = sigma.rows();
    let mut w = w0.to_vec();
    for _ in 0..iters {
        let mut g = sigma.matvec(&w);
        g.iter_mut().for_each(|x| *x *= 2.0);
        if let Some((m, target, rho)) = mu {
            let viol = target - dot(m, &w);
            if viol > 0.0 {
                for j in 0..n {
                    g[j] -= 2.0 * rho * viol * m[j];
                }
            }
        }
        for j in 0..n {
            w[j] -= step * g[j];
        }
        w = project_simplex(&w);
    }
    w
}

/// Markowitz: minimize w'Sw subject to w'mu >= target on the simplex. The
/// return constraint is an exterior quadratic penalty escalated until the
/// violation is below 1e-8.
pub fn solve_mean_variance(mu: &[f64], sigma: &Mat, target_return: f64) -> Result<WeightVector> {
    check_covariance(sigma)?;
    if mu.len() != sigma.rows() {
        return Err(Error::Shape(format!(
            "{} expected returns for {}x{} covariance",
            mu.len(),
            sigma.rows(),
            sigma.cols()
        )));
    }
    let max_mu = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if target_return > max_mu + 1e-12 {
        return Err(Error::Infeasible(format!(
            "target return {target_return} exceeds max achievable {max_mu}"
        )));
    }
    let scale = sigma.frobenius_norm().max(1e-12);
    let mut w = vec![1.0 / mu.len() as f64; mu.len()];
    for escalation in 0..8 {
        let rho = scale * 10f64.powi(2 + 2 * escalation);
        w = pgd_quadratic(sigma, Some((mu, target_return, rho)), 4000, &w);
        if target_return - dot(mu, &w) <= 1e-10 {
            break;
        }
    }
    // Exact feasibility polish: blend minimally toward the best-return
    // corner. The blend coefficient is <= 1 because the feasibility
    // pre-check passed, and it is tiny whenever the penalty nearly closed
    // the gap, so the variance cost is negligible.
    let viol = target_return - dot(mu, &w);
    if viol > 0.0 {
        let argmax = (0..mu.len())
            .max_by(|&i, &j| mu[i].partial_cmp(&mu[j]).unwrap())
            .unwrap();
        let room = max_mu - dot(mu, &w);
        let beta = if room > 0.0 { (viol / room).min(1.0) } else { 1.0 };
        for (j, x) in w.iter_mut().enumerate() {
            *x = (1.0 - beta) * *x + beta * f64::from(j == argmax);
        }
    }
    WeightVector::new(w)
}

/// Minimum variance on the simplex: mean-variance without the return floor.
pub fn solve_min_variance(sigma: &Mat) -> Result<WeightVector> {
    check_covariance(sigma)?;
    let uniform = vec![1.0 / sigma.rows() as f64; sigma.rows()];
    WeightVector::new(pgd_quadratic(sigma, None, 8000, &uniform))
}

/// Inverse-volatility weights w_i proportional to 1/sqrt(Sigma_ii).
pub fn solve_risk_parity(sigma: &Mat) -> Result<WeightVector> {
    check_covariance(sigma)?;
    let n = sigma.rows();
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let v = sigma[(i, i)];
        if !(v > 0.0) {
            return Err(Error::Domain(format!("asset {i} has non-positive variance {v}")));
        }
        w.push(1.0 / v.sqrt());
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    WeightVector::new(w)
}

/// Teacher label for one decision date.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeacherLabel {
    pub t: usize,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
}

/// Solve the teacher on the trailing `window` weeks of returns ending at
/// each candidate date (inclusive). Dates without enough history are
/// silently discarded.
pub fn label_dates(
    returns: &Mat,
    dates: &[usize],
    window: usize,
    alpha: f64,
) -> Result<Vec<TeacherLabel>> {
    let mut out = Vec::new();
    for &t in dates {
        if t + 1 < window || t >= returns.rows() {
            continue;
        }
        let scen = Mat::from_fn(window, returns.cols(), |i, j| {
            returns[(t + 1 - window + i, j)]
        });
        let sol = solve_cvar_teacher(&ScenarioSet::new(scen, alpha)?)?;
        out.push(TeacherLabel {
            t,
            weights: sol.weights.into_vec(),
            objective: sol.objective,
            converged: sol.converged,
        });
    }
    Ok(out)
}

/// Trailing sample covariance and mean from the same window the teacher
/// sees, so baselines and teacher are comparable.
pub fn window_moments(returns: &Mat, t: usize, window: usize) -> Result<(Vec<f64>, Mat)> {
    if t + 1 < window {
        return Err(Error::Data(format!("date {t} lacks {window} weeks of history")));
    }
    let n = returns.cols();
    let rows: Vec<&[f64]> = (t + 1 - window..=t).map(|i| returns.row(i)).collect();
    let mu: Vec<f64> =
        (0..n).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / window as f64).collect();
    let mut cov = Mat::zeros(n, n);
    for r in &rows {
        for i in 0..n {
            let di = r[i] - mu[i];
            for j in i..n {
                cov[(i, j)] += di * (r[j] - mu[j]);
            }
        }
    }
    let denom = (window - 1).max(1) as f64;
    for i in 0..n {
        for j in i..n {
            cov[(i, j)] /= denom;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    Ok((mu, cov))
}
