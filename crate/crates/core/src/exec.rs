//! Constraint-aware execution: box bounds via fixed-point clip and
//! renormalize, one-way turnover caps via partial execution, and
//! proportional transaction costs. Turnover is half the L1 distance
//! everywhere, including reports.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::allocators::WeightVector;
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintLevel {
    L1,
    L2,
    L3,
}

impl std::fmt::Display for ConstraintLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintLevel::L1 => "L1",
            ConstraintLevel::L2 => "L2",
            ConstraintLevel::L3 => "L3",
        })
    }
}

impl std::str::FromStr for ConstraintLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L1" | "l1" => Ok(ConstraintLevel::L1),
            "L2" | "l2" => Ok(ConstraintLevel::L2),
            "L3" | "l3" => Ok(ConstraintLevel::L3),
            _ => Err(Error::Config(format!("unknown constraint level {s:?}; expected L1, L2, or L3"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub level: ConstraintLevel,
    /// Per-asset position cap.
    pub w_max: f64,
    /// One-way turnover cap per rebalance.
    pub to_max: f64,
    /// Proportional cost per unit of one-way turnover.
    pub cost_rate: f64,
}

impl ConstraintSpec {
    /// Frictionless level: no bounds, no costs.
    pub fn l1() -> Self {
        ConstraintSpec { level: ConstraintLevel::L1, w_max: 1.0, to_max: 1.0, cost_rate: 0.0 }
    }

    /// Stress level: execution behaves as L1; the stress transformation of
    /// returns happens in the evaluation layer.
    pub fn l2() -> Self {
        ConstraintSpec { level: ConstraintLevel::L2, w_max: 1.0, to_max: 1.0, cost_rate: 0.0 }
    }

    /// Constrained level: 30% position cap, 30% turnover cap, 10bp
    /// round-trip cost.
    pub fn l3() -> Self {
        ConstraintSpec { level: ConstraintLevel::L3, w_max: 0.30, to_max: 0.30, cost_rate: 0.001 }
    }

    pub fn for_level(level: ConstraintLevel) -> Self {
        match level {
            ConstraintLevel::L1 => Self::l1(),
            ConstraintLevel::L2 => Self::l2(),
            ConstraintLevel::L3 => Self::l3(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_max > 0.0 && self.w_max <= 1.0) {
            return Err(Error::Config(format!("w_max {} outside (0,1]", self.w_max)));
        }
        if !(self.to_max > 0.0 && self.to_max <= 1.0) {
            return Err(Error::Config(format!("to_max {} outside (0,1]", self.to_max)));
        }
        if !(self.cost_rate >= 0.0) {
            return Err(Error::Config(format!("cost rate {} negative", self.cost_rate)));
        }
        if self.level == ConstraintLevel::L1
            && (self.w_max != 1.0 || self.to_max != 1.0 || self.cost_rate != 0.0)
        {
            return Err(Error::Config(
                "L1 must be transparent: w_max = 1, to_max = 1, cost_rate = 0".into(),
            ));
        }
        Ok(())
    }
}

/// One-way turnover between two allocations.
pub fn turnover(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Cap every entry at `w_max` and restore the budget. Computed as the
/// exact fixed point of the clip-then-renormalize iteration: violating
/// entries freeze at the cap and the remaining mass is spread
/// proportionally over the free entries. Each pass caps at least one new
/// entry, so at most N passes run. Inputs already within bounds return
/// unchanged (bitwise).
pub fn clip_renormalize(w: &WeightVector, w_max: f64) -> Result<WeightVector> {
    let n = w.len();
    if (n as f64) * w_max < 1.0 {
        return Err(Error::Infeasible(format!(
            "{n} assets capped at {w_max} cannot hold the full budget"
        )));
    }
    let v = w.as_slice();
    if v.iter().all(|&x| x <= w_max) {
        return Ok(w.clone());
    }
    let mut out = v.to_vec();
    let mut capped = vec![false; n];
    loop {
        let n_capped = capped.iter().filter(|&&c| c).count();
        let free_mass = 1.0 - n_capped as f64 * w_max;
        let free_sum: f64 = (0..n).filter(|&i| !capped[i]).map(|i| out[i]).sum();
        if free_sum > 0.0 {
            let scale = free_mass / free_sum;
            for i in 0..n {
                if !capped[i] {
                    out[i] *= scale;
                }
            }
        } else {
            // All free weight is zero: split the remaining mass evenly.
            let n_free = n - n_capped;
            for i in 0..n {
                if !capped[i] {
                    out[i] = free_mass / n_free as f64;
                }
            }
        }
        let mut newly_capped = false;
        for i in 0..n {
            if !capped[i] && out[i] > w_max {
                out[i] = w_max;
                capped[i] = true;
                newly_capped = true;
            }
        }
        if !newly_capped {
            break;
        }
    }
    WeightVector::new(out)
}

/// Partial execution under a one-way turnover cap: if the desired trade
/// exceeds `to_max`, move only the fraction alpha = to_max / TO of the way
/// from `prev` to `target`, then re-apply the box bound.
pub fn apply_turnover_cap(
    prev: &WeightVector,
    target: &WeightVector,
    to_max: f64,
    w_max: f64,
) -> Result<WeightVector> {
    if prev.len() != target.len() {
        return Err(Error::Shape(format!(
            "previous weights have {} assets, target {}",
            prev.len(),
            target.len()
        )));
    }
    let to = turnover(prev.as_slice(), target.as_slice());
    // The tiny relative slack keeps re-application a bitwise no-op when a
    // recomputed turnover lands one ulp above the cap.
    if to <= to_max * (1.0 + 1e-12) {
        return Ok(target.clone());
    }
    let alpha = to_max / to;
    let blended: Vec<f64> = prev
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| p + alpha * (t - p))
        .collect();
    clip_renormalize(&WeightVector::new(blended)?, w_max)
}

/// Proportional cost of moving between two executed allocations.
pub fn transaction_cost(prev_exec: &WeightVector, exec: &WeightVector, cost_rate: f64) -> f64 {
    cost_rate * turnover(prev_exec.as_slice(), exec.as_slice())
}

/// Realized portfolio return net of the rebalance cost. The cost applies
/// only on the week the trade happens; pass tc = 0 for holding weeks.
pub fn net_return(exec: &WeightVector, realized: &[f64], tc: f64) -> Result<f64> {
    if exec.len() != realized.len() {
        return Err(Error::Shape(format!(
            "{} weights against {} returns",
            exec.len(),
            realized.len()
        )));
    }
    let gross: f64 = exec.as_slice().iter().zip(realized).map(|(w, r)| w * r).sum();
    Ok(gross - tc)
}

/// Full rebalance under a constraint level: box bound, then turnover cap,
/// then cost accounting.
#[derive(Debug, Clone)]
pub struct ExecutionOutcome {
    pub executed: WeightVector,
    pub turnover: f64,
    pub cost: f64,
}

pub fn execute_rebalance(
    prev: &WeightVector,
    target: &WeightVector,
    spec: &ConstraintSpec,
) -> Result<ExecutionOutcome> {
    spec.validate()?;
    let boxed = clip_renormalize(target, spec.w_max)?;
    let executed = apply_turnover_cap(prev, &boxed, spec.to_max, spec.w_max)?;
    let to = turnover(prev.as_slice(), executed.as_slice());
    Ok(ExecutionOutcome { cost: spec.cost_rate * to, turnover: to, executed })
}

/// One row of the per-week execution log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecRecord {
    pub date: NaiveDate,
    pub target: Vec<f64>,
    pub executed: Vec<f64>,
    pub turnover: f64,
    pub cost: f64,
}

/// Execution log CSV: date, turnover, cost, then target and executed
/// weights per asset.
pub fn execution_log_csv(records: &[ExecRecord], assets: &[String]) -> String {
    let mut out = String::from("date,turnover,cost");
    for a in assets {
        out.push_str(&format!(",target_{a}"));
    }
    for a in assets {
        out.push_str(&format!(",exec_{a}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{}", r.date, io::fmt_num(r.turnover), io::fmt_num(r.cost)));
        for v in &r.target {
            out.push_str(&format!(",{}", io::fmt_num(*v)));
        }
        for v in &r.executed {
            out.push_str(&format!(",{}", io::fmt_num(*v)));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn wv(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    fn random_simplex(r: &mut impl Rng, n: usize) -> WeightVector {
        let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0f64).max(1e-12)).collect();
        let s: f64 = raw.iter().sum();
        wv(&raw.iter().map(|v| v / s).collect::<Vec<_>>())
    }

    #[test]
    fn clip_converges_to_the_cap() {
        let out = clip_renormalize(&wv(&[0.7, 0.3]), 0.5).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn clip_is_identity_within_bounds() {
        let w = wv(&[0.4, 0.35, 0.25]);
        let out = clip_renormalize(&w, 0.5).unwrap();
        assert_eq!(out.as_slice(), w.as_slice());
    }

    #[test]
    fn clip_rejects_infeasible_cap() {
        let err = clip_renormalize(&wv(&[0.5, 0.5]), 0.4).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn clip_handles_zero_free_weight() {
        let out = clip_renormalize(&wv(&[1.0, 0.0]), 0.5).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn clip_matches_naive_iteration_limit() {
        // The naive clip-then-renormalize loop converges to the same fixed
        // point this implementation computes directly.
        let mut r = crate::rng::stream(2, "clip-limit");
        for _ in 0..50 {
            let n = r.random_range(2..7usize);
            let w_max = r.random_range((1.0 / n as f64).max(0.15)..1.0);
            let w = random_simplex(&mut r, n);
            let direct = clip_renormalize(&w, w_max).unwrap();
            let mut naive = w.as_slice().to_vec();
            for _ in 0..10_000 {
                for v in naive.iter_mut() {
                    *v = v.min(w_max);
                }
                let s: f64 = naive.iter().sum();
                for v in naive.iter_mut() {
                    *v /= s;
                }
            }
            for v in naive.iter_mut() {
                *v = v.min(w_max);
            }
            let s: f64 = naive.iter().sum();
            for v in naive.iter_mut() {
                *v /= s;
            }
            for (a, b) in direct.as_slice().iter().zip(&naive) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn clip_is_idempotent_bitwise() {
        let mut r = crate::rng::stream(3, "clip-idem");
        for _ in 0..200 {
            let n = r.random_range(2..7usize);
            let w_max = r.random_range((1.0 / n as f64).max(0.15)..1.0);
            let w = random_simplex(&mut r, n);
            let once = clip_renormalize(&w, w_max).unwrap();
            let twice = clip_renormalize(&once, w_max).unwrap();
            assert_eq!(once.as_slice(), twice.as_slice());
        }
    }

    #[test]
    fn turnover_cap_blends_partial_execution() {
        let out = apply_turnover_cap(&wv(&[1.0, 0.0]), &wv(&[0.0, 1.0]), 0.3, 1.0).unwrap();
        assert_abs_diff_eq!(out.as_slice()[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(out.as_slice()[1], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn turnover_below_cap_returns_target_bitwise() {
        let prev = wv(&[0.5, 0.5]);
        let target = wv(&[0.55, 0.45]);
        let out = apply_turnover_cap(&prev, &target, 0.3, 1.0).unwrap();
        assert_eq!(out.as_slice(), target.as_slice());
    }

    #[test]
    fn cost_examples() {
        let a = wv(&[0.5, 0.5]);
        assert_eq!(transaction_cost(&a, &a, 0.001), 0.0);
        let b = wv(&[0.6, 0.4]);
        // TO = 0.1, c = 0.001.
        assert_abs_diff_eq!(transaction_cost(&a, &b, 0.001), 0.0001, epsilon = 1e-15);
        let c = wv(&[1.0, 0.0]);
        let d = wv(&[0.0, 1.0]);
        assert_abs_diff_eq!(transaction_cost(&c, &d, 0.001), 0.001, epsilon = 1e-15);
    }

    #[test]
    fn cost_is_nonnegative_and_zero_only_without_trade() {
        let mut r = crate::rng::stream(4, "cost-fuzz");
        for _ in 0..500 {
            let n = r.random_range(2..6usize);
            let a = random_simplex(&mut r, n);
            let b = random_simplex(&mut r, n);
            let c = transaction_cost(&a, &b, 0.001);
            assert!(c >= 0.0);
            if a.as_slice() != b.as_slice() {
                assert!(c > 0.0);
            }
        }
    }

    #[test]
    fn net_return_examples() {
        let w = wv(&[0.25; 4]);
        let r = [0.02; 4];
        assert_abs_diff_eq!(net_return(&w, &r, 0.001).unwrap(), 0.019, epsilon = 1e-15);
        assert_abs_diff_eq!(net_return(&w, &r, 0.0).unwrap(), 0.02, epsilon = 1e-15);
    }

    #[test]
    fn net_return_matches_dot_product_oracle() {
        let mut rng = crate::rng::stream(5, "netret");
        let w = random_simplex(&mut rng, 5);
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(-0.05..0.05)).collect();
        let tc = 0.0004;
        let mut oracle = -tc;
        for i in 0..5 {
            oracle += w.as_slice()[i] * r[i];
        }
        assert_abs_diff_eq!(net_return(&w, &r, tc).unwrap(), oracle, epsilon = 1e-12);
    }

    #[test]
    fn net_return_rejects_shape_mismatch() {
        let w = wv(&[0.5, 0.5]);
        assert!(net_return(&w, &[0.01], 0.0).is_err());
    }

    #[test]
    fn l1_spec_is_transparent() {
        let spec = ConstraintSpec::l1();
        let mut r = crate::rng::stream(6, "l1-identity");
        for _ in 0..200 {
            let n = r.random_range(2..8usize);
            let prev = random_simplex(&mut r, n);
            let target = random_simplex(&mut r, n);
            let out = execute_rebalance(&prev, &target, &spec).unwrap();
            assert_eq!(out.executed.as_slice(), target.as_slice());
            assert_eq!(out.cost, 0.0);
        }
    }

    #[test]
    fn execution_satisfies_all_constraints_fuzz() {
        let mut r = crate::rng::stream(7, "exec-fuzz");
        for _ in 0..100_000 {
            let n = r.random_range(2..8usize);
            let w_max = r.random_range((1.0 / n as f64).max(0.2)..1.0);
            let to_max = r.random_range(0.05..1.0);
            let spec = ConstraintSpec {
                level: ConstraintLevel::L3,
                w_max,
                to_max,
                cost_rate: 0.001,
            };
            // Previous weights are themselves feasible, as in a live run.
            let prev = clip_renormalize(&random_simplex(&mut r, n), w_max).unwrap();
            let target = random_simplex(&mut r, n);
            let out = execute_rebalance(&prev, &target, &spec).unwrap();
            let e = out.executed.as_slice();
            let sum: f64 = e.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(e.iter().all(|&v| v >= 0.0 && v <= w_max + 1e-9));
            let to = turnover(prev.as_slice(), e);
            assert!(
                to <= to_max + 1e-9,
                "turnover {to} above cap {to_max} (n = {n}, w_max = {w_max})"
            );
            assert_abs_diff_eq!(out.cost, 0.001 * out.turnover, epsilon = 1e-15);
        }
    }

    #[test]
    fn execution_is_idempotent() {
        let mut r = crate::rng::stream(8, "exec-idem");
        for _ in 0..1000 {
            let n = r.random_range(2..6usize);
            let w_max = r.random_range((1.0 / n as f64).max(0.3)..1.0);
            let spec = ConstraintSpec {
                level: ConstraintLevel::L3,
                w_max,
                to_max: r.random_range(0.05..1.0),
                cost_rate: 0.001,
            };
            let prev = clip_renormalize(&random_simplex(&mut r, n), w_max).unwrap();
            let target = random_simplex(&mut r, n);
            let once = execute_rebalance(&prev, &target, &spec).unwrap();
            let twice = execute_rebalance(&prev, &once.executed, &spec).unwrap();
            assert_eq!(once.executed.as_slice(), twice.executed.as_slice());
        }
    }

    #[test]
    fn level_presets_and_validation() {
        assert!(ConstraintSpec::l1().validate().is_ok());
        assert!(ConstraintSpec::l2().validate().is_ok());
        let l3 = ConstraintSpec::l3();
        assert!(l3.validate().is_ok());
        assert_eq!((l3.w_max, l3.to_max, l3.cost_rate), (0.30, 0.30, 0.001));
        let bad = ConstraintSpec { level: ConstraintLevel::L1, w_max: 0.5, to_max: 1.0, cost_rate: 0.0 };
        assert!(bad.validate().is_err());
        let bad2 = ConstraintSpec { level: ConstraintLevel::L3, w_max: 0.0, to_max: 0.3, cost_rate: 0.001 };
        assert!(bad2.validate().is_err());
    }

    #[test]
    fn execution_log_csv_shape() {
        let rec = ExecRecord {
            date: NaiveDate::from_ymd_opt(2020, 1, 3).unwrap(),
            target: vec![0.6, 0.4],
            executed: vec![0.55, 0.45],
            turnover: 0.05,
            cost: 0.00005,
        };
        let csv = execution_log_csv(&[rec], &["A00".into(), "A01".into()]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "date,turnover,cost,target_A00,target_A01,exec_A00,exec_A01"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("2020-01-03,0.05,"));
    }
}
