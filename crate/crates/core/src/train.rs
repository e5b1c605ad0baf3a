//! Student training: supervised imitation of the teacher (with a KL
//! regularizer for Bayesian nets), the unsupervised tail-risk + entropy
//! objective, and the three-stage sandwich schedule S0/S1/S2. All training
//! is full-batch plain gradient descent with gradient-norm clipping.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::allocators::{self, WeightVector};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::nn::{self, Mode, Network, NetworkSpec};
use crate::rng;

/// The four student variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentKind {
    DnnSup,
    BnnSup,
    DnnSandwich,
    BnnSandwich,
}

impl StudentKind {
    pub const ALL: [StudentKind; 4] =
        [StudentKind::DnnSup, StudentKind::BnnSup, StudentKind::DnnSandwich, StudentKind::BnnSandwich];

    pub fn is_bayesian(self) -> bool {
        matches!(self, StudentKind::BnnSup | StudentKind::BnnSandwich)
    }

    pub fn is_sandwich(self) -> bool {
        matches!(self, StudentKind::DnnSandwich | StudentKind::BnnSandwich)
    }

    pub fn name(self) -> &'static str {
        match self {
            StudentKind::DnnSup => "dnn_sup",
            StudentKind::BnnSup => "bnn_sup",
            StudentKind::DnnSandwich => "dnn_sandwich",
            StudentKind::BnnSandwich => "bnn_sandwich",
        }
    }
}

impl std::str::FromStr for StudentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StudentKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown student kind {s:?}; expected one of dnn_sup, bnn_sup, dnn_sandwich, bnn_sandwich"
            ))
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// KL weight for Bayesian supervision; None means 1 / n_labeled.
    pub beta: Option<f64>,
    pub lambda_cvar: f64,
    pub lambda_div: f64,
    /// S0 warm-up epochs.
    pub epochs_s0: usize,
    /// S1 alternation cycles.
    pub cycles: usize,
    /// Supervised epochs per S1 cycle.
    pub epochs_sup: usize,
    /// Unsupervised epochs per S1 cycle.
    pub epochs_unsup: usize,
    /// S2 anchoring epochs.
    pub epochs_s2: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    /// None means full-batch (the only implemented mode; recorded for
    /// provenance).
    pub batch: Option<usize>,
    pub model_seed: u64,
    /// Tail level for the unsupervised CVaR term.
    pub alpha: f64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: None,
            lambda_cvar: 1.0,
            lambda_div: 0.05,
            epochs_s0: 200,
            cycles: 5,
            epochs_sup: 50,
            epochs_unsup: 50,
            epochs_s2: 100,
            learning_rate: 1e-3,
            grad_clip: 5.0,
            batch: None,
            model_seed: 0,
            alpha: 0.95,
            hidden: vec![256, 128],
        }
    }
}

impl TrainConfig {
    /// Supervised-only epoch budget matching a full sandwich run's
    /// supervised step count.
    pub fn supervised_budget(&self) -> usize {
        self.epochs_s0 + self.cycles * self.epochs_sup + self.epochs_s2
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_cvar < 0.0 || self.lambda_div < 0.0 || self.beta.unwrap_or(0.0) < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0,1)", self.alpha)));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledPair {
    /// Flattened feature vector (N assets x 16 features).
    pub x: Vec<f64>,
    /// Teacher weights.
    pub w_teacher: Vec<f64>,
    /// True for pairs labeled on observed data, false for synthetic.
    pub real: bool,
}

#[derive(Debug, Clone)]
pub struct UnlabeledPair {
    pub x: Vec<f64>,
    /// Trailing scenario window (W x N simple returns).
    pub window: Mat,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub labeled: Vec<LabeledPair>,
    pub unlabeled: Vec<UnlabeledPair>,
}

/// Per-dimension z-score fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Standardizer> {
        let d = rows.first().ok_or_else(|| Error::Data("standardizer fit on empty set".into()))?.len();
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::Shape("ragged feature rows".into()));
            }
            for j in 0..d {
                mean[j] += r[j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let std = var
            .iter()
            .map(|v| (v / rows.len() as f64).sqrt().max(1e-8))
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.std[j])
            .collect()
    }
}

/// One training-curve sample; stages are "s0", "s1-sup", "s1-unsup", "s2"
/// (plain supervised runs log stage "sup").
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub stage: String,
    pub epoch: usize,
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
    pub cvar: f64,
    pub div: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedStudent {
    pub kind: StudentKind,
    pub net: Network,
    pub standardizer: Standardizer,
    pub config: TrainConfig,
    pub curve: Vec<CurvePoint>,
    /// Total gradient steps taken; must equal the schedule's closed form.
    pub steps: usize,
}

impl TrainedStudent {
    /// Deterministic single-pass prediction on raw (unstandardized)
    /// features using the stored training-time standardizer.
    pub fn predict(&self, x_raw: &[f64]) -> Result<WeightVector> {
        let x = self.standardizer.apply(x_raw);
        Ok(self.net.forward(&x, Mode::Deterministic)?.0)
    }

    /// Monte Carlo prediction for Bayesian students: mean of `m` sampled
    /// passes plus the dispersion proxy.
    pub fn predict_mc(&self, x_raw: &[f64], m: usize, seed: u64) -> Result<(WeightVector, Vec<f64>)> {
        let x = self.standardizer.apply(x_raw);
        self.net.mc_average(&x, m, seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": self.kind,
            "config": self.config,
            "standardizer": self.standardizer,
            "steps": self.steps,
            "curve": self.curve,
        });
        nn::save_checkpoint(&self.net, meta, path)
    }

    pub fn load(path: &Path) -> Result<TrainedStudent> {
        let (net, header) = nn::load_checkpoint(path)?;
        let meta = header.meta;
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("{}: meta lacks {k:?}", path.display())))
        };
        Ok(TrainedStudent {
            kind: serde_json::from_value(get("kind")?)?,
            config: serde_json::from_value(get("config")?)?,
            standardizer: serde_json::from_value(get("standardizer")?)?,
            steps: serde_json::from_value(get("steps")?)?,
            curve: serde_json::from_value(get("curve")?)?,
            net,
        })
    }
}

/// Mean squared distance between predicted and teacher weight batches.
pub fn supervised_loss(predicted: &[Vec<f64>], teacher: &[Vec<f64>]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != teacher.len() {
        return Err(Error::Shape(format!(
            "supervised loss over {} predictions and {} labels",
            predicted.len(),
            teacher.len()
        )));
    }
    let mut acc = 0.0;
    for (p, t) in predicted.iter().zip(teacher) {
        if p.len() != t.len() {
            return Err(Error::Shape("prediction/label length mismatch".into()));
        }
        acc += p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(acc / predicted.len() as f64)
}

/// Supervised loss plus the weighted KL of the posterior against the prior.
pub fn bnn_supervised_loss(
    predicted: &[Vec<f64>],
    teacher: &[Vec<f64>],
    kl_total: f64,
    beta: f64,
) -> Result<f64> {
    Ok(supervised_loss(predicted, teacher)? + beta * kl_total)
}

/// Tail-risk + concentration objective for one portfolio against one
/// scenario window, with its gradient in weight space. The CVaR term
/// averages the worst ceil((1-alpha)S) of the losses -r_s . w; the
/// diversification term is sum_i w_i log w_i (zero at w_i = 0).
pub fn unsupervised_loss_grad(
    w: &[f64],
    window: &Mat,
    lambda_cvar: f64,
    lambda_div: f64,
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    let s = window.rows();
    let n = window.cols();
    if w.len() != n {
        return Err(Error::Shape(format!("{} weights for {n} assets", w.len())));
    }
    if s < 20 {
        return Err(Error::Data(format!("scenario window of {s} rows; need at least 20")));
    }
    let mut losses: Vec<(f64, usize)> = (0..s)
        .map(|r| {
            let row = window.row(r);
            let mut l = 0.0;
            for j in 0..n {
                l -= row[j] * w[j];
            }
            (l, r)
        })
        .collect();
    let k = allocators::tail_count(s, alpha);
    // Deterministic subgradient at ties: sort order breaks them by row.
    losses.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let cvar = losses[..k].iter().map(|(l, _)| l).sum::<f64>() / k as f64;
    let mut grad = vec![0.0; n];
    for &(_, r) in &losses[..k] {
        let row = window.row(r);
        for j in 0..n {
            grad[j] -= lambda_cvar * row[j] / k as f64;
        }
    }
    let mut div = 0.0;
    for j in 0..n {
        if w[j] > 0.0 {
            div += w[j] * w[j].ln();
            grad[j] += lambda_div * (w[j].ln() + 1.0);
        }
        // At w_j = 0 the term is 0 and the loss cannot decrease by
        // shrinking further; leave the gradient component untouched.
    }
    Ok((lambda_cvar * cvar + lambda_div * div, grad))
}

/// Scalar value of the unsupervised objective.
pub fn unsupervised_loss(
    w: &[f64],
    window: &Mat,
    lambda_cvar: f64,
    lambda_div: f64,
    alpha: f64,
) -> Result<f64> {
    Ok(unsupervised_loss_grad(w, window, lambda_cvar, lambda_div, alpha)?.0)
}

fn derive_seed(seed: u64, label: &str) -> u64 {
    rng::stream(seed, label).random()
}

fn clip_gradient(g: &mut [f64], max_norm: f64) {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        g.iter_mut().for_each(|v| *v *= scale);
    }
}

struct Trainer {
    net: Network,
    flat: Vec<f64>,
    config: TrainConfig,
    bayesian: bool,
    beta: f64,
    sup_seed: u64,
    unsup_seed: u64,
    sup_epoch: usize,
    unsup_epoch: usize,
    steps: usize,
    curve: Vec<CurvePoint>,
}

impl Trainer {
    fn new(spec: NetworkSpec, config: &TrainConfig, n_labeled: usize) -> Result<Trainer> {
        config.validate()?;
        let net = Network::init(spec, config.model_seed)?;
        let flat = net.to_flat();
        let bayesian = net.spec.variational.iter().any(|&v| v);
        let beta = config.beta.unwrap_or(1.0 / n_labeled as f64);
        Ok(Trainer {
            sup_seed: derive_seed(config.model_seed, "train-sup-eps"),
            unsup_seed: derive_seed(config.model_seed, "train-unsup-eps"),
            net,
            flat,
            config: config.clone(),
            bayesian,
            beta,
            sup_epoch: 0,
            unsup_epoch: 0,
            steps: 0,
            curve: Vec::new(),
        })
    }

    fn mode_for(&self, seed: u64, epoch: usize, idx: usize, batch: usize) -> Mode {
        if self.bayesian {
            Mode::Sampled { seed, draw: (epoch * batch + idx) as u64 }
        } else {
            Mode::Deterministic
        }
    }

    fn check_finite(&self, stage: &str, loss: f64) -> Result<()> {
        if loss.is_finite() {
            Ok(())
        } else {
            Err(Error::Fit(format!(
                "training diverged: loss {loss} at stage {stage}, step {}",
                self.steps
            )))
        }
    }

    /// One full-batch supervised epoch over standardized labeled pairs.
    fn supervised_epoch(&mut self, stage: &str, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<()> {
        let b = xs.len();
        let mut grad = vec![0.0; self.flat.len()];
        let mut mse = 0.0;
        for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
            let mode = self.mode_for(self.sup_seed, self.sup_epoch, i, b);
            let (w, tape) = self.net.forward(x, mode)?;
            let w = w.as_slice();
            mse += w.iter().zip(y).map(|(a, t)| (a - t).powi(2)).sum::<f64>();
            let d_out: Vec<f64> =
                w.iter().zip(y).map(|(a, t)| 2.0 * (a - t) / b as f64).collect();
            let g = self.net.backward(&tape, &d_out)?;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        mse /= b as f64;
        let kl = if self.bayesian { self.net.kl_total() } else { 0.0 };
        if self.bayesian && self.beta > 0.0 {
            let klg = self.net.kl_gradient_flat();
            for (acc, v) in grad.iter_mut().zip(&klg) {
                *acc += self.beta * v;
            }
        }
        let total = mse + self.beta * kl;
        self.check_finite(stage, total)?;
        self.apply(&mut grad);
        self.curve.push(CurvePoint {
            stage: stage.into(),
            epoch: self.sup_epoch,
            total,
            mse,
            kl,
            cvar: 0.0,
            div: 0.0,
        });
        self.sup_epoch += 1;
        Ok(())
    }

    /// One full-batch unsupervised epoch over the unlabeled pool.
    fn unsupervised_epoch(&mut self, stage: &str, xs: &[Vec<f64>], windows: &[&Mat]) -> Result<()> {
        let b = xs.len();
        let mut grad = vec![0.0; self.flat.len()];
        let mut cvar_part = 0.0;
        let mut div_part = 0.0;
        for (i, (x, window)) in xs.iter().zip(windows).enumerate() {
            let mode = self.mode_for(self.unsup_seed, self.unsup_epoch, i, b);
            let (w, tape) = self.net.forward(x, mode)?;
            let w = w.as_slice();
            let (_, mut d_out) = unsupervised_loss_grad(
                w,
                window,
                self.config.lambda_cvar,
                self.config.lambda_div,
                self.config.alpha,
            )?;
            // Components for the curve.
            let (c_only, _) = unsupervised_loss_grad(w, window, 1.0, 0.0, self.config.alpha)?;
            let (d_only, _) = unsupervised_loss_grad(w, window, 0.0, 1.0, self.config.alpha)?;
            cvar_part += c_only;
            div_part += d_only;
            d_out.iter_mut().for_each(|v| *v /= b as f64);
            let g = self.net.backward(&tape, &d_out)?;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        cvar_part /= b as f64;
        div_part /= b as f64;
        let total = self.config.lambda_cvar * cvar_part + self.config.lambda_div * div_part;
        self.check_finite(stage, total)?;
        self.apply(&mut grad);
        self.curve.push(CurvePoint {
            stage: stage.into(),
            epoch: self.unsup_epoch,
            total,
            mse: 0.0,
            kl: 0.0,
            cvar: cvar_part,
            div: div_part,
        });
        self.unsup_epoch += 1;
        Ok(())
    }

    fn apply(&mut self, grad: &mut [f64]) {
        clip_gradient(grad, self.config.grad_clip);
        for (p, g) in self.flat.iter_mut().zip(grad.iter()) {
            *p -= self.config.learning_rate * *g;
        }
        self.net = Network::from_flat(self.net.spec.clone(), &self.flat)
            .expect("parameter vector length is stable");
        self.steps += 1;
    }

    fn finish(self, kind: StudentKind, standardizer: Standardizer) -> TrainedStudent {
        TrainedStudent {
            kind,
            net: self.net,
            standardizer,
            config: self.config,
            curve: self.curve,
            steps: self.steps,
        }
    }
}

fn prepare_labeled(
    labeled: &[LabeledPair],
    standardizer: &Standardizer,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let xs = labeled.iter().map(|p| standardizer.apply(&p.x)).collect();
    let ys = labeled.iter().map(|p| p.w_teacher.clone()).collect();
    (xs, ys)
}

/// Supervised-only training (DNN-sup / BNN-sup) for a fixed epoch budget.
pub fn train_supervised(
    dataset: &Dataset,
    spec: NetworkSpec,
    config: &TrainConfig,
    epochs: usize,
    kind: StudentKind,
) -> Result<TrainedStudent> {
    if dataset.labeled.is_empty() {
        return Err(Error::Data("supervised training needs labeled pairs".into()));
    }
    let raw: Vec<Vec<f64>> = dataset.labeled.iter().map(|p| p.x.clone()).collect();
    let standardizer = Standardizer::fit(&raw)?;
    let (xs, ys) = prepare_labeled(&dataset.labeled, &standardizer);
    let mut tr = Trainer::new(spec, config, dataset.labeled.len())?;
    for _ in 0..epochs {
        tr.supervised_epoch("sup", &xs, &ys)?;
    }
    debug_assert_eq!(tr.steps, epochs);
    Ok(tr.finish(kind, standardizer))
}

/// Three-stage sandwich: S0 supervised warm-up, S1 alternating
/// supervised/unsupervised cycles, S2 supervised anchoring.
pub fn train_sandwich(
    dataset: &Dataset,
    spec: NetworkSpec,
    config: &TrainConfig,
    kind: StudentKind,
) -> Result<TrainedStudent> {
    if dataset.labeled.is_empty() {
        return Err(Error::Data("sandwich training needs labeled pairs".into()));
    }
    if config.cycles > 0 && config.epochs_unsup > 0 && dataset.unlabeled.is_empty() {
        return Err(Error::Data("sandwich training needs an unlabeled pool".into()));
    }
    let raw: Vec<Vec<f64>> = dataset.labeled.iter().map(|p| p.x.clone()).collect();
    let standardizer = Standardizer::fit(&raw)?;
    let (xs, ys) = prepare_labeled(&dataset.labeled, &standardizer);
    let uxs: Vec<Vec<f64>> = dataset.unlabeled.iter().map(|p| standardizer.apply(&p.x)).collect();
    let uwindows: Vec<&Mat> = dataset.unlabeled.iter().map(|p| &p.window).collect();

    let mut tr = Trainer::new(spec, config, dataset.labeled.len())?;
    for _ in 0..config.epochs_s0 {
        tr.supervised_epoch("s0", &xs, &ys)?;
    }
    for _ in 0..config.cycles {
        for _ in 0..config.epochs_sup {
            tr.supervised_epoch("s1-sup", &xs, &ys)?;
        }
        for _ in 0..config.epochs_unsup {
            tr.unsupervised_epoch("s1-unsup", &uxs, &uwindows)?;
        }
    }
    for _ in 0..config.epochs_s2 {
        tr.supervised_epoch("s2", &xs, &ys)?;
    }
    let expected =
        config.epochs_s0 + config.cycles * (config.epochs_sup + config.epochs_unsup) + config.epochs_s2;
    if tr.steps != expected {
        return Err(Error::Fit(format!(
            "schedule accounting violated: {} steps, expected {expected}",
            tr.steps
        )));
    }
    Ok(tr.finish(kind, standardizer))
}

/// Outcome of the 60/20/20 construction split.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<LabeledPair>,
    pub val: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
    pub warning: Option<String>,
}

/// Assign labeled pairs to train/val/test. Real pairs all go to train;
/// synthetic pairs (seeded shuffle) fill train to 60% of the total, then
/// val and test take about 20% each.
pub fn split_dataset(
    real: Vec<LabeledPair>,
    synth: Vec<LabeledPair>,
    seed: u64,
) -> DatasetSplit {
    let (train, val, test, warning) = split_parts(real, synth, seed);
    DatasetSplit { train, val, test, warning }
}

/// The split assignment itself, generic so callers can carry extra
/// bookkeeping (such as decision-date indices) through the same seeded
/// shuffle.
pub fn split_parts<T>(
    real: Vec<T>,
    synth: Vec<T>,
    seed: u64,
) -> (Vec<T>, Vec<T>, Vec<T>, Option<String>) {
    let total = real.len() + synth.len();
    let train_target = (0.6 * total as f64).floor() as usize;
    let val_target = (0.2 * total as f64).floor() as usize;
    let mut warning = None;
    if real.len() > train_target {
        warning = Some(format!(
            "real pairs ({}) exceed the 60% train target ({train_target}); keeping all in train",
            real.len()
        ));
    }
    let mut pool = synth;
    pool.shuffle(&mut rng::stream(seed, "split"));
    let mut train = real;
    let fill = train_target.saturating_sub(train.len()).min(pool.len());
    let mut rest = pool.split_off(fill);
    train.append(&mut pool);
    let val_n = val_target.min(rest.len());
    let test = rest.split_off(val_n);
    let val = rest;
    if (val.is_empty() || test.is_empty()) && warning.is_none() {
        warning = Some("validation or test split is empty".into());
    }
    (train, val, test, warning)
}

/// Mean squared imitation error of a student on a labeled set, using
/// deterministic forward passes.
pub fn evaluate_mse(student: &TrainedStudent, pairs: &[LabeledPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Data("mse over an empty set".into()));
    }
    let mut preds = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    for p in pairs {
        preds.push(student.predict(&p.x)?.as_slice().to_vec());
        labels.push(p.w_teacher.clone());
    }
    supervised_loss(&preds, &labels)
}

/// Write the training curve as CSV (stage, epoch, loss components).
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("stage,epoch,total,mse,kl,cvar,div\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.stage, p.epoch, p.total, p.mse, p.kl, p.cvar, p.div
        ));
    }
    out
}
