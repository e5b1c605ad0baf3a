//! Acceptance gate: ten independently checkable claims about the toolkit,
//! one test per claim. Every test prints a single verdict line
//! (`acceptance NN <name>: PASS|FAIL`) before asserting, so a full run
//! under `--nocapture` reads as a checklist.

use std::path::{Path, PathBuf};
use std::time::Instant;

use distfolio::allocators::{
    empirical_cvar, solve_cvar_teacher, ScenarioSet, WeightVector,
};
use distfolio::exec::{
    clip_renormalize, execute_rebalance, turnover, ConstraintLevel, ConstraintSpec,
};
use distfolio::linalg::Mat;
use distfolio::nn::{
    kl_divergence, softplus, softplus_inv, Activation, Mode, Network, NetworkSpec,
    VariationalLayer,
};
use distfolio::rng;
use distfolio::stress::{
    apply_stress, stress_corr_spike, stress_jumps, stress_vol_bursts, StressKind, StressSpec,
};
use distfolio::synth::{fit_copula, fidelity_report, reference_models, sample_copula, stride_dates};
use distfolio::train::{split_parts, supervised_loss, unsupervised_loss_grad};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn verdict(idx: usize, name: &str, pass: bool) {
    println!("acceptance {idx:02} {name}: {}", if pass { "PASS" } else { "FAIL" });
}

fn random_simplex(r: &mut impl Rng, n: usize) -> WeightVector {
    let raw: Vec<f64> = (0..n).map(|_| -r.random::<f64>().max(1e-12).ln()).collect();
    let s: f64 = raw.iter().sum();
    WeightVector::new(raw.into_iter().map(|v| v / s).collect()).unwrap()
}

// ---------------------------------------------------------------------
// 1. Teacher solve vs exhaustive simplex grid search
// ---------------------------------------------------------------------

/// Best CVaR over the simplex lattice with 0.02 spacing, N <= 3.
fn grid_search_cvar(scenarios: &Mat, alpha: f64) -> f64 {
    let n = scenarios.cols();
    let ticks = 50usize; // 1 / 0.02
    let eval = |w: &[f64]| -> f64 {
        let losses: Vec<f64> = (0..scenarios.rows())
            .map(|r| {
                let row = scenarios.row(r);
                -(0..n).map(|j| row[j] * w[j]).sum::<f64>()
            })
            .collect();
        empirical_cvar(&losses, alpha).unwrap()
    };
    let mut best = f64::INFINITY;
    match n {
        1 => best = eval(&[1.0]),
        2 => {
            for i in 0..=ticks {
                let a = i as f64 / ticks as f64;
                best = best.min(eval(&[a, 1.0 - a]));
            }
        }
        3 => {
            for i in 0..=ticks {
                for j in 0..=(ticks - i) {
                    let a = i as f64 / ticks as f64;
                    let b = j as f64 / ticks as f64;
                    best = best.min(eval(&[a, b, 1.0 - a - b]));
                }
            }
        }
        _ => panic!("grid oracle supports N <= 3"),
    }
    best
}

#[test]
fn a01_teacher_objective_matches_grid_oracle() {
    let started = Instant::now();
    let mut worst_gap = 0.0f64;
    for inst in 0..20u64 {
        let mut r = rng::substream(90, "acc-teacher", inst);
        let n = 1 + (inst % 3) as usize;
        let s = 30 + (inst as usize * 7) % 71; // 30..=100
        let alpha = if inst % 2 == 0 { 0.95 } else { 0.90 };
        let data: Vec<f64> = (0..s * n).map(|_| r.random_range(-0.05..0.05)).collect();
        let set = ScenarioSet::new(Mat::from_vec(s, n, data.clone()), alpha).unwrap();
        let sol = solve_cvar_teacher(&set).unwrap();
        let oracle = grid_search_cvar(&Mat::from_vec(s, n, data), alpha);
        worst_gap = worst_gap.max((sol.objective - oracle).abs());
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst_gap <= 1e-3 && elapsed < 5.0;
    verdict(1, "teacher objective within 1e-3 of 0.02-step grid search", pass);
    assert!(worst_gap <= 1e-3, "worst |teacher - grid| gap {worst_gap}");
    assert!(elapsed < 5.0, "20 instances took {elapsed:.2}s");
}

// ---------------------------------------------------------------------
// 2. Gradient finite-difference suite
// ---------------------------------------------------------------------

struct GradCase {
    spec: NetworkSpec,
    mode: Mode,
}

/// Cycle through six archetypes so dense-only, variational, and mixed
/// networks each meet every loss in both forward modes.
fn grad_case(i: u64) -> GradCase {
    let mut r = rng::substream(91, "acc-grad-arch", i);
    let d0 = r.random_range(2..=5usize);
    let d1 = r.random_range(2..=5usize);
    let d2 = r.random_range(2..=4usize);
    let (sizes, variational, mode) = match i % 6 {
        0 => (vec![d0, d2], vec![false], Mode::Deterministic),
        1 => (vec![d0, d1, d2], vec![false, false], Mode::Deterministic),
        2 => (vec![d0, d2], vec![true], Mode::Deterministic),
        3 => (vec![d0, d2], vec![true], Mode::Sampled { seed: i, draw: i % 5 }),
        4 => (vec![d0, d1, d2], vec![false, true], Mode::Deterministic),
        _ => (vec![d0, d1, d2], vec![true, true], Mode::Sampled { seed: i, draw: i % 3 }),
    };
    let prior_sigma = r.random_range(0.5..1.5);
    GradCase {
        spec: NetworkSpec { sizes, variational, activation: Activation::Tanh, prior_sigma },
        mode,
    }
}

/// Central finite differences over every parameter against the analytic
/// gradient. `d_output` must be the loss gradient in weight space at the
/// unperturbed point; `loss` re-evaluates the scalar from flat params.
fn fd_check(
    net: &Network,
    spec: &NetworkSpec,
    analytic: &[f64],
    loss: impl Fn(&Network) -> f64,
    label: &str,
) -> f64 {
    let mut flat = net.to_flat();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..flat.len() {
        let orig = flat[k];
        flat[k] = orig + h;
        let up = loss(&Network::from_flat(spec.clone(), &flat).unwrap());
        flat[k] = orig - h;
        let down = loss(&Network::from_flat(spec.clone(), &flat).unwrap());
        flat[k] = orig;
        let fd = (up - down) / (2.0 * h);
        // Central FD resolves gradients down to eps * |loss| / h ~ 1e-11;
        // below the 1e-6 floor both sides are numerically zero and a
        // relative comparison would only measure roundoff.
        let denom = fd.abs().max(analytic[k].abs()).max(1e-6);
        let rel = (fd - analytic[k]).abs() / denom;
        assert!(
            rel < 1e-4,
            "{label}: param {k} fd {fd} vs analytic {} (rel {rel})",
            analytic[k]
        );
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn a02_gradient_suite_passes_finite_differences() {
    let started = Instant::now();
    let mut checks = 0usize;
    for i in 0..50u64 {
        let case = grad_case(i);
        let spec = case.spec.clone();
        let mode = case.mode;
        let net = Network::init(spec.clone(), 1000 + i).unwrap();
        let mut r = rng::substream(92, "acc-grad-data", i);
        let x: Vec<f64> = (0..spec.input_dim()).map(|_| r.random_range(-1.5..1.5)).collect();
        let n_out = spec.output_dim();

        // Supervised imitation loss.
        let target = random_simplex(&mut r, n_out);
        let (w, tape) = net.forward(&x, mode).unwrap();
        let d_output: Vec<f64> =
            w.as_slice().iter().zip(target.as_slice()).map(|(p, t)| 2.0 * (p - t)).collect();
        let analytic = net.backward(&tape, &d_output).unwrap();
        fd_check(
            &net,
            &spec,
            &analytic,
            |candidate| {
                let (wc, _) = candidate.forward(&x, mode).unwrap();
                supervised_loss(&[wc.as_slice().to_vec()], &[target.as_slice().to_vec()]).unwrap()
            },
            &format!("case {i} supervised"),
        );
        checks += 1;

        // Unsupervised tail-risk loss. Regenerate the scenario window
        // until the tail boundary is comfortably untied, so the
        // subgradient's scenario set cannot flip inside the FD stencil.
        let (lambda_cvar, lambda_div, alpha) = (1.0, 0.1, 0.95);
        let s_rows = 30;
        let window = (0..40u64)
            .map(|attempt| {
                let mut wr = rng::substream2(93, "acc-grad-window", i, attempt);
                Mat::from_fn(s_rows, n_out, |_, _| wr.random_range(-0.04..0.04))
            })
            .find(|win| {
                let mut losses: Vec<f64> = (0..s_rows)
                    .map(|t| {
                        let row = win.row(t);
                        -(0..n_out).map(|j| row[j] * w.as_slice()[j]).sum::<f64>()
                    })
                    .collect();
                losses.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let k = ((1.0 - alpha) * s_rows as f64).ceil() as usize;
                losses[k - 1] - losses[k] > 1e-4
            })
            .expect("an untied scenario window exists within 40 draws");
        let (_, grad_w) =
            unsupervised_loss_grad(w.as_slice(), &window, lambda_cvar, lambda_div, alpha).unwrap();
        let analytic = net.backward(&tape, &grad_w).unwrap();
        fd_check(
            &net,
            &spec,
            &analytic,
            |candidate| {
                let (wc, _) = candidate.forward(&x, mode).unwrap();
                unsupervised_loss_grad(wc.as_slice(), &window, lambda_cvar, lambda_div, alpha)
                    .unwrap()
                    .0
            },
            &format!("case {i} unsupervised"),
        );
        checks += 1;

        // KL regularizer, wherever the network carries posteriors.
        if spec.variational.iter().any(|&v| v) {
            let analytic = net.kl_gradient_flat();
            fd_check(&net, &spec, &analytic, |candidate| candidate.kl_total(), &format!("case {i} kl"));
            checks += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = elapsed < 30.0;
    verdict(2, "layer/loss gradients match central differences at 1e-4", pass);
    assert!(checks > 100, "only {checks} gradient checks ran");
    assert!(elapsed < 30.0, "gradient suite took {elapsed:.2}s");
}

// ---------------------------------------------------------------------
// 3. KL closed form vs Monte Carlo
// ---------------------------------------------------------------------

#[test]
fn a03_kl_closed_form_matches_monte_carlo() {
    let draws = 1_000_000usize;
    let mut worst_rel = 0.0f64;
    for layer_idx in 0..10u64 {
        let mut r = rng::substream(94, "acc-kl", layer_idx);
        let rows = r.random_range(2..=3usize);
        let cols = r.random_range(2..=4usize);
        let prior_sigma = r.random_range(0.4..1.5);
        let mut mus = Vec::new();
        let mut sigmas = Vec::new();
        let mu_w = Mat::from_fn(rows, cols, |_, _| {
            let m = r.random_range(0.2..0.8) * if r.random::<bool>() { 1.0 } else { -1.0 };
            mus.push(m);
            m
        });
        let rho_w = Mat::from_fn(rows, cols, |_, _| {
            let s = r.random_range(0.2..1.0);
            sigmas.push(s);
            softplus_inv(s)
        });
        let mu_b: Vec<f64> = (0..rows)
            .map(|_| {
                let m = r.random_range(0.2..0.8) * if r.random::<bool>() { 1.0 } else { -1.0 };
                mus.push(m);
                m
            })
            .collect();
        let rho_b: Vec<f64> = (0..rows)
            .map(|_| {
                let s = r.random_range(0.2..1.0);
                sigmas.push(s);
                softplus_inv(s)
            })
            .collect();
        let layer = VariationalLayer { mu_w, rho_w, mu_b, rho_b, prior_sigma };
        let closed = kl_divergence(&layer);

        // E_q[log q(theta) - log p(theta)] by reparameterized sampling:
        // per coordinate log(sp/sq) - eps^2/2 + (mu + sq*eps)^2 / (2 sp^2).
        let mut mc_rng = rng::substream(95, "acc-kl-mc", layer_idx);
        let consts: Vec<(f64, f64, f64)> = mus
            .iter()
            .zip(&sigmas)
            .map(|(&m, &sq)| {
                // Round-trip through softplus like the layer itself does.
                let sq = softplus(softplus_inv(sq));
                ((prior_sigma / sq).ln(), m, sq)
            })
            .collect();
        let mut acc = 0.0f64;
        for _ in 0..draws {
            let mut term = 0.0;
            for &(log_ratio, m, sq) in &consts {
                let eps: f64 = StandardNormal.sample(&mut mc_rng);
                let theta = m + sq * eps;
                term += log_ratio - 0.5 * eps * eps
                    + theta * theta / (2.0 * prior_sigma * prior_sigma);
            }
            acc += term;
        }
        let mc = acc / draws as f64;
        let rel = (mc - closed).abs() / closed.abs();
        worst_rel = worst_rel.max(rel);
        assert!(
            rel < 0.01,
            "layer {layer_idx}: closed form {closed} vs MC {mc} (rel {rel})"
        );
    }
    verdict(3, "closed-form KL within 1% of 1e6-sample Monte Carlo", worst_rel < 0.01);
}

// ---------------------------------------------------------------------
// 4. Constraint feasibility fuzz
// ---------------------------------------------------------------------

#[test]
fn a04_constraint_feasibility_fuzz() {
    let mut r = rng::stream(96, "acc-exec-fuzz");
    for case in 0..100_000usize {
        let n = r.random_range(2..=8usize);
        let floor = 1.0 / n as f64;
        let w_max = r.random_range(floor..1.0f64).max(floor + 1e-6);
        let to_max = r.random_range(0.01..1.0);
        let cost_rate = r.random_range(0.0..0.01);
        let spec = ConstraintSpec { level: ConstraintLevel::L3, w_max, to_max, cost_rate };
        let prev = clip_renormalize(&random_simplex(&mut r, n), w_max).unwrap();
        let target = random_simplex(&mut r, n);
        let out = execute_rebalance(&prev, &target, &spec).unwrap();
        let e = out.executed.as_slice();
        let sum: f64 = e.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "case {case}: budget {sum}");
        assert!(
            e.iter().all(|&v| v >= -1e-9 && v <= w_max + 1e-9),
            "case {case}: box violated (w_max {w_max}): {e:?}"
        );
        let to = turnover(prev.as_slice(), e);
        assert!(to <= to_max + 1e-9, "case {case}: turnover {to} above {to_max}");
        assert!((out.turnover - to).abs() <= 1e-9, "case {case}: reported turnover drifts");
        // Idempotence: feeding the execution back as the target moves
        // nothing further.
        let again = execute_rebalance(&prev, &out.executed, &spec).unwrap();
        assert_eq!(
            again.executed.as_slice(),
            out.executed.as_slice(),
            "case {case}: full operator is not idempotent"
        );
    }
    verdict(4, "1e5 execution triples feasible and idempotent", true);
}

// ---------------------------------------------------------------------
// 5. Stress transform invariants
// ---------------------------------------------------------------------

fn row_mean(m: &Mat, t: usize) -> f64 {
    (0..m.cols()).map(|j| m[(t, j)]).sum::<f64>() / m.cols() as f64
}

fn row_pop_std(m: &Mat, t: usize) -> f64 {
    let mu = row_mean(m, t);
    ((0..m.cols()).map(|j| (m[(t, j)] - mu).powi(2)).sum::<f64>() / m.cols() as f64).sqrt()
}

#[test]
fn a05_stress_invariants_hold() {
    let mut r = rng::stream(97, "acc-stress");
    let panel = Mat::from_fn(400, 10, |_, _| {
        let z: f64 = StandardNormal.sample(&mut r);
        0.002 + 0.025 * z
    });

    // Correlation spike shrinks weekly dispersion by exactly 1 - lambda.
    let spiked = stress_corr_spike(&panel, 0.7).unwrap();
    let mut spike_ok = true;
    for t in 0..panel.rows() {
        if (row_pop_std(&spiked, t) - 0.3 * row_pop_std(&panel, t)).abs() > 1e-12 {
            spike_ok = false;
        }
    }

    // Volatility bursts leave every weekly cross-sectional mean alone.
    let burst = stress_vol_bursts(&panel, 2.0, 3, 8, 11).unwrap();
    let mut burst_ok = true;
    for t in 0..panel.rows() {
        if (row_mean(&burst, t) - row_mean(&panel, t)).abs() > 1e-12 {
            burst_ok = false;
        }
    }

    // Identity parameters are bitwise no-ops, transform by transform.
    let identity_specs = [
        StressKind::VolBursts { sigma_s: 1.0, n_b: 3, l_b: 8 },
        StressKind::VolBursts { sigma_s: 2.0, n_b: 0, l_b: 8 },
        StressKind::Jumps { p_j: 0.0, mu_j: 0.08, p_neg: 0.8 },
        StressKind::Whipsaw { gamma: 0.0 },
        StressKind::CorrSpike { lambda: 0.0 },
    ];
    let identity_ok = identity_specs.iter().all(|kind| {
        apply_stress(&panel, &StressSpec { kind: *kind, seed: 123 }).unwrap() == panel
    });

    // Market-jump frequency estimated on a zero panel: only a market
    // jump touches every asset in a week, so all-nonzero rows count it.
    let zeros = Mat::zeros(100_000, 6);
    let jumped = stress_jumps(&zeros, 0.03, 0.08, 0.80, 19).unwrap();
    let hits = (0..jumped.rows())
        .filter(|&t| (0..jumped.cols()).all(|j| jumped[(t, j)] != 0.0))
        .count();
    let freq = hits as f64 / jumped.rows() as f64;
    let jump_ok = (freq - 0.03).abs() <= 0.01;

    let pass = spike_ok && burst_ok && identity_ok && jump_ok;
    verdict(5, "stress dispersion/mean/identity/jump-frequency invariants", pass);
    assert!(spike_ok, "corr_spike dispersion scaling broke 1e-12");
    assert!(burst_ok, "vol_bursts moved a weekly mean");
    assert!(identity_ok, "an identity-parameter transform was not bitwise");
    assert!(jump_ok, "jump frequency {freq} outside 0.03 +- 0.01");
}

// ---------------------------------------------------------------------
// 6. Labeled-date count and split structure
// ---------------------------------------------------------------------

#[test]
fn a06_pipeline_counts_match() {
    let dates = stride_dates(1400, 104, 4);
    let count_ok = dates.len() == 324;

    // 104 real + 323 synthetic pairs: all real pairs stay in train,
    // synthetic fill to the 60/20/20 targets.
    let real: Vec<(bool, usize)> = (0..104).map(|i| (true, i)).collect();
    let synth: Vec<(bool, usize)> = (0..323).map(|i| (false, i)).collect();
    let (train, val, test, warning) = split_parts(real, synth, 7);
    let total = train.len() + val.len() + test.len();
    let sizes_ok = total == 427 && train.len() == 256 && val.len() == 85 && test.len() == 86;
    let real_in_train = train.iter().filter(|(is_real, _)| *is_real).count() == 104
        && val.iter().all(|(is_real, _)| !is_real)
        && test.iter().all(|(is_real, _)| !is_real);

    let pass = count_ok && sizes_ok && real_in_train && warning.is_none();
    verdict(6, "324 stride dates and 427-pair all-real-in-train split", pass);
    assert!(count_ok, "stride_dates(1400, 104, 4) gave {}", dates.len());
    assert!(sizes_ok, "split sizes {} / {} / {}", train.len(), val.len(), test.len());
    assert!(real_in_train, "a real pair escaped the train set");
    assert!(warning.is_none(), "unexpected split warning: {warning:?}");
}

// ---------------------------------------------------------------------
// 7. Copula refit fidelity
// ---------------------------------------------------------------------

#[test]
fn a07_copula_refit_reproduces_dependence() {
    let models = reference_models(12);
    let original = sample_copula(&models.copula, 5000, 20260818).unwrap();
    let refit = fit_copula(&original, 6.0).unwrap();
    let resampled = sample_copula(&refit, 5000, 914).unwrap();
    let report = fidelity_report(&original, &resampled).unwrap();
    let pass = report.corr_gap_p90 <= 0.15 && report.ks_max < 0.05;
    verdict(7, "copula refit corr gap p90 <= 0.15 and KS < 0.05 at T=5000", pass);
    assert!(
        report.corr_gap_p90 <= 0.15,
        "90th percentile correlation gap {}",
        report.corr_gap_p90
    );
    assert!(report.ks_max < 0.05, "worst per-asset KS distance {}", report.ks_max);
}

// ---------------------------------------------------------------------
// 8. Desk-scale sweep with directional ordering
// ---------------------------------------------------------------------

#[test]
fn a08_desk_grid_completes_with_directional_ordering() {
    use distfolio::grid::{run_grid_with, strategy_order, GridConfig};

    let cfg = GridConfig::desk();
    let started = Instant::now();
    let outcome = run_grid_with(&cfg, 0, None).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let time_ok = elapsed < 900.0;

    let order = strategy_order();
    let complete = outcome.failures.is_empty();
    let mut cells_ok = true;
    for &w in &cfg.world_seeds {
        for &m in &cfg.model_seeds {
            let mut present: Vec<&str> = outcome
                .reports
                .iter()
                .filter(|rep| rep.world_seed == w && rep.model_seed == m)
                .map(|rep| rep.model.as_str())
                .collect();
            present.sort_unstable();
            present.dedup();
            if present.len() != order.len() {
                cells_ok = false;
            }
        }
    }

    let mean2 = |a: Option<f64>, b: Option<f64>| -> f64 {
        (a.expect("sharpe defined") + b.expect("sharpe defined")) / 2.0
    };
    let mut sandwich_wins = 0;
    let mut turnover_wins = 0;
    for &w in &cfg.world_seeds {
        let sand = mean2(
            outcome.world_model_sharpe(w, "dnn_sandwich"),
            outcome.world_model_sharpe(w, "bnn_sandwich"),
        );
        let sup = mean2(
            outcome.world_model_sharpe(w, "dnn_sup"),
            outcome.world_model_sharpe(w, "bnn_sup"),
        );
        let bnn_to = mean2(
            outcome.world_model_turnover(w, "bnn_sup"),
            outcome.world_model_turnover(w, "bnn_sandwich"),
        );
        let dnn_sand_to = outcome.world_model_turnover(w, "dnn_sandwich").unwrap();
        println!(
            "  world {w}: sandwich sharpe {sand:.3} vs supervised {sup:.3}; \
             bayesian turnover {bnn_to:.4} vs dnn_sandwich {dnn_sand_to:.4}"
        );
        if sand >= sup {
            sandwich_wins += 1;
        }
        if bnn_to < dnn_sand_to {
            turnover_wins += 1;
        }
    }
    let directional_ok = sandwich_wins >= 2 && turnover_wins >= 2;

    let pass = time_ok && complete && cells_ok && directional_ok;
    verdict(8, "desk grid < 15 min, 8 strategies per cell, directional wins", pass);
    assert!(time_ok, "desk grid took {elapsed:.1}s");
    assert!(complete, "cells failed: {:?}", outcome.failures);
    assert!(cells_ok, "a cell is missing strategies");
    assert!(
        sandwich_wins >= 2,
        "sandwich sharpe beat supervised in only {sandwich_wins} of 3 worlds"
    );
    assert!(
        turnover_wins >= 2,
        "bayesian turnover beat dnn_sandwich in only {turnover_wins} of 3 worlds"
    );
}

// ---------------------------------------------------------------------
// 9. Metric oracles and sensitivity arithmetic
// ---------------------------------------------------------------------

/// ceil((1 - alpha) n) evaluated as exact arithmetic: values within 1e-9
/// of an integer are that integer, so 0.05 * 100 stays 5.
fn oracle_tail_count(n: usize, alpha: f64) -> usize {
    let raw = (1.0 - alpha) * n as f64;
    if (raw - raw.round()).abs() < 1e-9 {
        raw.round() as usize
    } else {
        raw.ceil() as usize
    }
}

#[test]
fn a09_metric_oracles_and_delta_sensitivity() {
    let mut worst = 0.0f64;
    for series in 0..100u64 {
        let mut r = rng::substream(98, "acc-metrics", series);
        let n = 30 + (series as usize * 13) % 171;
        let returns: Vec<f64> = (0..n).map(|_| r.random_range(-0.08..0.08)).collect();

        // Sharpe: two-pass mean and n-1 std, annualized by sqrt(52).
        let mean = returns.iter().sum::<f64>() / n as f64;
        let var = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sharpe_oracle = mean / var.sqrt() * 52f64.sqrt();
        let sharpe = distfolio::eval::sharpe_annualized(&returns).unwrap().unwrap();
        worst = worst.max((sharpe - sharpe_oracle).abs());

        // Max drawdown: quadratic scan over every (peak, trough) pair of
        // the wealth path, initial wealth included.
        let mut wealth = vec![1.0f64];
        for &x in &returns {
            wealth.push(wealth.last().unwrap() * (1.0 + x));
        }
        let mut mdd_oracle = 0.0f64;
        for i in 0..wealth.len() {
            for j in i + 1..wealth.len() {
                mdd_oracle = mdd_oracle.max((wealth[i] - wealth[j]) / wealth[i]);
            }
        }
        let mdd = distfolio::eval::max_drawdown(&returns).unwrap();
        worst = worst.max((mdd - mdd_oracle).abs());

        // Empirical CVaR: mean of the k worst losses by full sort.
        let alpha = 0.95;
        let losses: Vec<f64> = returns.iter().map(|&x| -x).collect();
        let mut sorted = losses.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let k = oracle_tail_count(n, alpha);
        let cvar_oracle = sorted[..k].iter().sum::<f64>() / k as f64;
        let cvar = empirical_cvar(&losses, alpha).unwrap();
        worst = worst.max((cvar - cvar_oracle).abs());

        // Reporting convention: tail mean in return units.
        let report = distfolio::eval::cvar_report(&returns, alpha).unwrap();
        worst = worst.max((report - (-cvar_oracle)).abs());

        // Turnover: half the L1 distance between weight vectors.
        let a = random_simplex(&mut r, 6);
        let b = random_simplex(&mut r, 6);
        let to_oracle = 0.5
            * a.as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>();
        worst = worst.max((turnover(a.as_slice(), b.as_slice()) - to_oracle).abs());
    }
    let metrics_ok = worst <= 1e-12;

    // Sensitivity arithmetic on the published pair: (2.38 -> 2.37) is a
    // -0.4% relative move at one decimal.
    let delta = distfolio::eval::constraint_sensitivity(2.38, 2.37).unwrap();
    let delta_str = format!("{:.1}%", 100.0 * delta);
    let delta_ok = delta_str == "-0.4%";

    verdict(9, "metrics match brute-force oracles at 1e-12; delta -0.4%", metrics_ok && delta_ok);
    assert!(metrics_ok, "worst oracle gap {worst}");
    assert_eq!(delta_str, "-0.4%");
}

// ---------------------------------------------------------------------
// 10. Byte-identical reruns through the CLI
// ---------------------------------------------------------------------

fn run_cli(dir: &Path, args: &[&str]) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_distfolio"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn CLI");
    assert!(
        out.status.success(),
        "{:?} failed: {}\n{}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn collect_files(root: &Path, base: &Path, into: &mut Vec<PathBuf>) {
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(&path, base, into);
        } else {
            into.push(path.strip_prefix(base).unwrap().to_path_buf());
        }
    }
}

fn run_chain(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let train_cfg = r#"{
  "split": "split.json",
  "returns": "synth/returns.csv",
  "kind": "dnn_sandwich",
  "train": {
    "epochs_s0": 4, "cycles": 1, "epochs_sup": 2, "epochs_unsup": 2,
    "epochs_s2": 2, "hidden": [8], "model_seed": 1
  },
  "out": "student.json"
}"#;
    std::fs::write(dir.join("train.json"), train_cfg).unwrap();
    run_cli(
        dir,
        &["gen-synth", "--n-assets", "4", "--horizon", "220", "--world-seed", "7", "--out-dir", "synth"],
    );
    run_cli(
        dir,
        &[
            "features",
            "--returns",
            "synth/returns.csv",
            "--factors",
            "synth/factors.csv",
            "--out",
            "features.json",
        ],
    );
    run_cli(dir, &["label", "--returns", "synth/returns.csv", "--out", "labels.json"]);
    run_cli(
        dir,
        &[
            "split",
            "--returns",
            "synth/returns.csv",
            "--features",
            "features.json",
            "--labels",
            "labels.json",
            "--world-seed",
            "7",
            "--out",
            "split.json",
        ],
    );
    run_cli(dir, &["train", "--config", "train.json"]);
    run_cli(
        dir,
        &[
            "evaluate",
            "--checkpoint",
            "student.json",
            "--split",
            "split.json",
            "--returns",
            "synth/returns.csv",
            "--level",
            "L1",
            "--mc-draws",
            "4",
            "--seed",
            "3",
            "--out-dir",
            "eval",
        ],
    );
    run_cli(dir, &["stress", "--returns", "synth/returns.csv", "--seed", "5", "--out", "stressed.csv"]);
    run_cli(dir, &["report", "eval/report.csv", "--out", "summary.csv"]);
}

#[test]
fn a10_cli_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_chain(&a);
    run_chain(&b);

    let mut files_a = Vec::new();
    let mut files_b = Vec::new();
    collect_files(&a, &a, &mut files_a);
    collect_files(&b, &b, &mut files_b);
    files_a.sort();
    files_b.sort();
    assert_eq!(files_a, files_b, "the two runs produced different file sets");
    assert!(files_a.len() >= 10, "only {} files produced", files_a.len());

    let mut manifests = 0usize;
    let mut compared = 0usize;
    for rel in &files_a {
        let bytes_a = std::fs::read(a.join(rel)).unwrap();
        let bytes_b = std::fs::read(b.join(rel)).unwrap();
        if rel.file_name().unwrap().to_string_lossy().ends_with(".manifest.json") {
            // Manifests may differ only in their creation timestamp.
            let mut va: serde_json::Value = serde_json::from_slice(&bytes_a).unwrap();
            let mut vb: serde_json::Value = serde_json::from_slice(&bytes_b).unwrap();
            va.as_object_mut().unwrap().remove("created_utc");
            vb.as_object_mut().unwrap().remove("created_utc");
            assert_eq!(va, vb, "manifest {} differs beyond its timestamp", rel.display());
            manifests += 1;
        } else {
            assert_eq!(bytes_a, bytes_b, "data output {} is not byte-identical", rel.display());
            compared += 1;
        }
    }
    let pass = compared >= 9 && manifests >= 7;
    verdict(10, "full CLI chain reruns byte-identical", pass);
    assert!(pass, "{compared} data files, {manifests} manifests compared");
}
