//! Learning from `(x, ẋ)` pairs: datasets, the derivative-matching loss,
//! Adam, and an early-stopping loop.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ad::{consts, param_value_and_grad, Scalar, Var};
use crate::model::StableModel;
use crate::ode::{rk4_step_with, Trajectory};
use crate::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub dx: Vec<f64>,
}

/// Paired states and derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    samples: Vec<Sample>,
    dt: f64,
    provenance: Provenance,
}

impl TrajectoryDataset {
    pub fn new(samples: Vec<Sample>, dt: f64, provenance: Provenance) -> Result<Self> {
        if provenance == Provenance::FiniteDifference && !(dt > 0.0) {
            return Err(Error::Invalid("finite-difference data needs dt > 0".into()));
        }
        if let Some(first) = samples.first() {
            let d = first.x.len();
            for s in &samples {
                check_dim("sample state", d, s.x.len())?;
                check_dim("sample derivative", d, s.dx.len())?;
            }
        }
        Ok(TrajectoryDataset { samples, dt, provenance })
    }

    /// Samples along trajectories with derivatives from `rhs`.
    pub fn analytic<F>(trajs: &[Trajectory], dt: f64, rhs: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let samples = trajs
            .iter()
            .flat_map(|t| t.states.iter())
            .map(|x| Sample { x: x.clone(), dx: rhs(x) })
            .collect();
        Self::new(samples, dt, Provenance::Analytic)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// CSV with header `x1,…,xd,dx1,…,dxd`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let d = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        header.extend((1..=d).map(|i| format!("dx{i}")));
        w.write_record(&header)?;
        for s in &self.samples {
            w.write_record(s.x.iter().chain(&s.dx).map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(input: R, dt: f64, provenance: Provenance) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers()?.len();
        if width == 0 || width % 2 != 0 {
            return Err(Error::Shape(format!("dataset CSV needs an even number of columns, found {width}")));
        }
        let d = width / 2;
        let mut samples = Vec::new();
        for rec in r.records() {
            let vals = rec?
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Shape(format!("bad number `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            samples.push(Sample { x: vals[..d].to_vec(), dx: vals[d..].to_vec() });
        }
        Self::new(samples, dt, provenance)
    }
}

/// Forward differences `(x_{k+1} − x_k)/Δt` paired with `x_k`.
pub fn finite_diff_derivatives(traj: &Trajectory) -> Result<TrajectoryDataset> {
    if traj.len() < 2 {
        return Err(Error::Invalid("need at least two samples".into()));
    }
    let dt = traj.times[1] - traj.times[0];
    for (k, w) in traj.times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) {
            return Err(Error::NonUniformTimes { index: k + 1 });
        }
    }
    let samples = traj
        .states
        .windows(2)
        .map(|w| Sample { x: w[0].clone(), dx: w[1].iter().zip(&w[0]).map(|(b, a)| (b - a) / dt).collect() })
        .collect();
    TrajectoryDataset::new(samples, dt, Provenance::FiniteDifference)
}

fn sq_err<S: Scalar>(f: &[S], target: &[f64]) -> S {
    f.iter().zip(target).fold(S::zero(), |acc, (&a, &b)| acc + (a - b).square())
}

/// `(1/N) Σ ‖f(xᵢ) − ẋᵢ‖²`.
pub fn derivative_loss(model: &StableModel, ds: &TrajectoryDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let p = model.params();
    let mut total = 0.0;
    for s in ds.samples() {
        total += sq_err(&model.eval_with(&p, &s.x)?, &s.dx);
    }
    let loss = total / ds.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite { primitive: "derivative_loss", operands: vec![loss] });
    }
    Ok(loss)
}

/// Derivative loss and its gradient with respect to every model parameter
/// (frozen parameters included; see [`StableModel::trainable_mask`]).
pub fn derivative_loss_grad(model: &StableModel, ds: &TrajectoryDataset, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    param_value_and_grad(
        |p: &[Var<'_>], s: &Sample| Ok(sq_err(&model.eval_with(p, &consts(&s.x))?, &s.dx)),
        params,
        ds.samples(),
    )
}

/// A window of consecutive trajectory states for the unrolled loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
}

/// Non-overlapping windows of `horizon + 1` states.
pub fn windows(trajs: &[Trajectory], horizon: usize) -> Vec<Window> {
    let mut out = Vec::new();
    for t in trajs {
        let dt = if t.len() > 1 { t.times[1] - t.times[0] } else { continue };
        let mut start = 0;
        while start + horizon < t.len() {
            out.push(Window { states: t.states[start..=start + horizon].to_vec(), dt });
            start += horizon;
        }
    }
    out
}

fn sequence_sample_loss<S: Scalar>(model: &StableModel, p: &[S], w: &Window) -> Result<S> {
    let mut x: Vec<S> = w.states[0].iter().map(|&v| S::cst(v)).collect();
    let mut field = |y: &[S]| model.eval_with(p, y);
    let mut total = S::zero();
    for target in &w.states[1..] {
        x = rk4_step_with(&mut field, &x, w.dt)?;
        total = total + sq_err(&x, target);
    }
    Ok(total)
}

/// Mean over windows of the summed squared state error of an RK4 unroll.
pub fn sequence_loss(model: &StableModel, ws: &[Window]) -> Result<f64> {
    if ws.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let p = model.params();
    let mut total = 0.0;
    for w in ws {
        total += sequence_sample_loss(model, &p, w)?;
    }
    Ok(total / ws.len() as f64)
}

pub fn sequence_loss_grad(model: &StableModel, ws: &[Window], params: &[f64]) -> Result<(f64, Vec<f64>)> {
    param_value_and_grad(|p: &[Var<'_>], w: &Window| sequence_sample_loss(model, p, w), params, ws)
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: `p ← p − lr·wd·p` alongside the Adam update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One Adam update with bias correction. Entries with `mask[i] == false`
/// are left untouched.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], cfg: &AdamConfig, mask: Option<&[bool]>) -> Result<()> {
    check_dim("adam gradient", params.len(), grad.len())?;
    check_dim("adam state", params.len(), state.m.len())?;
    state.t += 1;
    let b1t = 1.0 - cfg.beta1.powi(state.t as i32);
    let b2t = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params[i] -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * params[i]);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Squared error between `f(x)` and `ẋ`.
    #[default]
    Derivative,
    /// Squared state error of an unrolled RK4 rollout.
    Sequence,
}

/// Training-loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss: LossKind,
    /// Unroll length for the sequence loss.
    pub horizon: usize,
    /// Progress is logged every this many epochs (0: never).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            max_epochs: 1000,
            patience: 50,
            loss: LossKind::Derivative,
            horizon: 5,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.patience == 0 {
            return Err(Error::Invalid("patience must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Invalid("weight decay must be nonnegative".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }
}

/// What the loop optimises.
pub trait Objective {
    /// Training loss and its gradient at `params`.
    fn loss_and_grad(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// Validation loss at `params`.
    fn val_loss(&mut self, params: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub history: Vec<EpochRecord>,
}

/// Writes `epoch,train_loss,val_loss`.
pub fn write_history<W: std::io::Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.val_loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn as_divergence(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { primitive, operands } => {
            log::warn!("non-finite `{primitive}` ({operands:?}) at epoch {epoch}");
            Error::Diverged { epoch }
        }
        other => other,
    }
}

/// Full-batch Adam with early stopping on the validation loss.
///
/// Epoch `k` (1-based) takes one step and then scores the new parameters
/// on validation data. Returns the parameters of the best-scoring epoch.
pub fn train_loop<O: Objective>(obj: &mut O, init: &[f64], mask: Option<&[bool]>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let adam = cfg.adam();
    let mut params = init.to_vec();
    let mut state = AdamState::new(params.len());
    let mut best = (init.to_vec(), 0usize, f64::INFINITY);
    let mut history = Vec::new();
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let (train_loss, grad) = obj.loss_and_grad(&params).map_err(|e| as_divergence(e, epoch))?;
        if !train_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        adam_step(&mut state, &mut params, &grad, &adam, mask)?;
        let val_loss = obj.val_loss(&params).map_err(|e| as_divergence(e, epoch))?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(EpochRecord { epoch, train_loss, val_loss });
        if cfg.log_every > 0 && epoch % cfg.log_every == 0 {
            log::info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}");
        }
        if val_loss < best.2 {
            best = (params.clone(), epoch, val_loss);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome { params: best.0, best_epoch: best.1, best_val: best.2, history })
}

/// Derivative-matching (or sequence) objective over a model.
pub struct ModelObjective<'a> {
    model: StableModel,
    train: &'a TrajectoryDataset,
    val: &'a TrajectoryDataset,
    train_windows: Vec<Window>,
    val_windows: Vec<Window>,
    loss: LossKind,
}

impl<'a> ModelObjective<'a> {
    pub fn derivative(model: &StableModel, train: &'a TrajectoryDataset, val: &'a TrajectoryDataset) -> Self {
        ModelObjective {
            model: model.clone(),
            train,
            val,
            train_windows: Vec::new(),
            val_windows: Vec::new(),
            loss: LossKind::Derivative,
        }
    }

    pub fn sequence(
        model: &StableModel,
        train: &'a TrajectoryDataset,
        val: &'a TrajectoryDataset,
        train_windows: Vec<Window>,
        val_windows: Vec<Window>,
    ) -> Self {
        ModelObjective { model: model.clone(), train, val, train_windows, val_windows, loss: LossKind::Sequence }
    }
}

impl Objective for ModelObjective<'_> {
    fn loss_and_grad(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.loss {
            LossKind::Derivative => derivative_loss_grad(&self.model, self.train, params),
            LossKind::Sequence => sequence_loss_grad(&self.model, &self.train_windows, params),
        }
    }

    fn val_loss(&mut self, params: &[f64]) -> Result<f64> {
        self.model.set_params(params)?;
        match self.loss {
            LossKind::Derivative => derivative_loss(&self.model, self.val),
            LossKind::Sequence => sequence_loss(&self.model, &self.val_windows),
        }
    }
}

/// Trains `model` on derivative pairs and returns the best-validation
/// model with its history.
pub fn train_model(
    model: &StableModel,
    train: &TrajectoryDataset,
    val: &TrajectoryDataset,
    cfg: &TrainConfig,
) -> Result<(StableModel, TrainOutcome)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut obj = ModelObjective::derivative(model, train, val);
    let mask = model.trainable_mask();
    let outcome = train_loop(&mut obj, &model.params(), Some(&mask), cfg)?;
    let mut best = model.clone();
    best.set_params(&outcome.params)?;
    Ok((best, outcome))
}

/// Trains on unrolled windows of the given trajectories.
pub fn train_model_sequence(
    model: &StableModel,
    train: &[Trajectory],
    val: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<(StableModel, TrainOutcome)> {
    let (tw, vw) = (windows(train, cfg.horizon), windows(val, cfg.horizon));
    if tw.is_empty() || vw.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let empty = TrajectoryDataset::new(Vec::new(), 0.0, Provenance::Analytic)?;
    let mut obj = ModelObjective::sequence(model, &empty, &empty, tw, vw);
    let mask = model.trainable_mask();
    let outcome = train_loop(&mut obj, &model.params(), Some(&mask), cfg)?;
    let mut best = model.clone();
    best.set_params(&outcome.params)?;
    Ok((best, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trajectory_has_zero_slopes() {
        let t = Trajectory::new(vec![0.0, 0.5, 1.0], vec![vec![2.0, 3.0]; 3]).unwrap();
        let ds = finite_diff_derivatives(&t).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.samples().iter().all(|s| s.dx == vec![0.0, 0.0]));
    }

    #[test]
    fn identity_trajectory_has_unit_slope() {
        let times: Vec<f64> = (0..6).map(|k| k as f64 * 0.25).collect();
        let states = times.iter().map(|&t| vec![t]).collect();
        let ds = finite_diff_derivatives(&Trajectory::new(times, states).unwrap()).unwrap();
        assert!(ds.samples().iter().all(|s| s.dx == vec![1.0]));
    }

    #[test]
    fn nonuniform_times_rejected() {
        let t = Trajectory::new(vec![0.0, 0.1, 0.3], vec![vec![0.0]; 3]).unwrap();
        assert!(matches!(finite_diff_derivatives(&t), Err(Error::NonUniformTimes { index: 2 })));
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut st = AdamState::new(2);
        let mut p = vec![1.0, -2.0];
        adam_step(&mut st, &mut p, &[0.0, 0.0], &AdamConfig::default(), None).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut st = AdamState::new(3);
        let mut p = vec![0.5, 0.5, 0.5];
        let g = [2.0, -0.3, 1e-4];
        adam_step(&mut st, &mut p, &g, &cfg, None).unwrap();
        for i in 0..3 {
            // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
            let expect = 0.5 - 0.01 * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - expect).abs() < 1e-15, "{i}: {} vs {expect}", p[i]);
        }
    }

    #[test]
    fn adam_mask_freezes_entries() {
        let mut st = AdamState::new(2);
        let mut p = vec![1.0, 1.0];
        adam_step(&mut st, &mut p, &[1.0, 1.0], &AdamConfig::default(), Some(&[true, false])).unwrap();
        assert!(p[0] < 1.0);
        assert_eq!(p[1], 1.0);
    }

    struct Scripted {
        vals: Vec<f64>,
        calls: usize,
    }

    impl Objective for Scripted {
        fn loss_and_grad(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((1.0, vec![1.0; params.len()]))
        }
        fn val_loss(&mut self, _params: &[f64]) -> Result<f64> {
            self.calls += 1;
            Ok(self.vals[self.calls - 1])
        }
    }

    #[test]
    fn early_stop_with_patience_one() {
        let mut obj = Scripted { vals: vec![1.0, 2.0, 3.0, 4.0], calls: 0 };
        let cfg = TrainConfig { patience: 1, max_epochs: 10, lr: 0.1, ..TrainConfig::default() };
        let out = train_loop(&mut obj, &[0.0], None, &cfg).unwrap();
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.best_epoch, 1);
        // Epoch-1 parameters: one Adam step of size lr from 0.
        assert!((out.params[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut obj = Scripted { vals: vec![1.0, f64::NAN], calls: 0 };
        let cfg = TrainConfig { patience: 5, max_epochs: 10, ..TrainConfig::default() };
        assert!(matches!(train_loop(&mut obj, &[0.0], None, &cfg), Err(Error::Diverged { epoch: 2 })));
    }

    #[test]
    fn history_csv_header() {
        let mut buf = Vec::new();
        write_history(&[EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.25 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,val_loss\n1,0.5,0.25\n");
    }
}
