//! Experiment configurations, presets, and the commands behind the CLI.
//! Every command is a pure function of its configuration and seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{Architecture, ModelKind, SetChoice, StableModel};
use crate::ode::{rollout, Trajectory};
use crate::systems::{generate_dataset, read_test_csv, GeneratedData, Recipe, System};
use crate::train::{train_model, write_history, TrainConfig, TrainOutcome};
use crate::transform::TransformKind;
use crate::{Error, Result};

/// Version tag expected in configuration files.
pub const CONFIG_VERSION: u32 = 1;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "STABSET_OUT";

/// Even grid over a rectangle of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
    pub n1: usize,
    pub n2: usize,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::Invalid("grid needs at least one point per axis".into()));
        }
        if !(self.x1[0] <= self.x1[1] && self.x2[0] <= self.x2[1]) || [self.x1, self.x2].iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::Invalid("grid bounds must be finite and ordered".into()));
        }
        Ok(crate::systems::grid((self.x1[0], self.x1[1]), (self.x2[0], self.x2[1]), self.n1, self.n2))
    }
}

/// Rollout, grid and error-statistics settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub rollout_x0: Vec<f64>,
    pub rollout_dt: f64,
    pub rollout_steps: usize,
    pub grid: GridSpec,
    /// Prediction horizon (steps) for the error statistics.
    pub error_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rollout_x0: vec![-0.1, 0.1],
            rollout_dt: 0.075,
            rollout_steps: 200,
            grid: GridSpec { x1: [-2.0, 2.0], x2: [-2.0, 2.0], n1: 50, n2: 50 },
            error_steps: 49,
        }
    }
}

/// A complete, reproducible experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub experiment: Recipe,
    pub seed: u64,
    #[serde(default)]
    pub noise: f64,
    pub model: Architecture,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    /// Built-in configuration of a named experiment.
    pub fn preset(recipe: Recipe) -> Self {
        match recipe {
            Recipe::LimitCycle => ExperimentConfig {
                version: CONFIG_VERSION,
                experiment: recipe,
                seed: 0,
                noise: 0.0,
                model: Architecture {
                    h_hidden: vec![64, 64],
                    q_hidden: vec![16],
                    set: SetChoice::Circle { r: 1.0, axes: [0, 1], learnable: false },
                    ..Architecture::default()
                },
                train: TrainConfig {
                    lr: 1e-3,
                    weight_decay: 1e-5,
                    max_epochs: 3000,
                    patience: 1000,
                    ..TrainConfig::default()
                },
                eval: EvalConfig::default(),
            },
            Recipe::LineAttractor => ExperimentConfig {
                version: CONFIG_VERSION,
                experiment: recipe,
                seed: 0,
                noise: 0.0,
                model: Architecture {
                    h_hidden: vec![64, 64],
                    q_hidden: vec![16],
                    set: SetChoice::Hyperplane { c: vec![1.0, 0.5], b: 0.0, learnable: true, learnable_b: false },
                    ..Architecture::default()
                },
                train: TrainConfig {
                    lr: 1e-3,
                    weight_decay: 1e-5,
                    max_epochs: 1000,
                    patience: 100,
                    ..TrainConfig::default()
                },
                eval: EvalConfig {
                    rollout_x0: vec![1.0, -1.0],
                    rollout_dt: 0.05,
                    rollout_steps: 200,
                    grid: GridSpec { x1: [-2.0, 2.0], x2: [-2.0, 2.0], n1: 50, n2: 50 },
                    error_steps: 79,
                },
            },
            Recipe::VanDerPol => ExperimentConfig {
                version: CONFIG_VERSION,
                experiment: recipe,
                seed: 0,
                noise: 0.0,
                model: Architecture {
                    transform: TransformKind::Anode,
                    d_aug: 2,
                    psi_hidden: vec![32, 32],
                    phi_steps: 4,
                    h_hidden: vec![32, 32],
                    q_hidden: vec![128],
                    set: SetChoice::Circle { r: 2.0, axes: [0, 1], learnable: true },
                    ..Architecture::default()
                },
                train: TrainConfig {
                    lr: 1e-3,
                    weight_decay: 1e-4,
                    max_epochs: 1500,
                    patience: 300,
                    ..TrainConfig::default()
                },
                eval: EvalConfig {
                    rollout_x0: vec![0.5, 0.5],
                    rollout_dt: 0.05,
                    rollout_steps: 400,
                    grid: GridSpec { x1: [-3.5, 3.5], x2: [-8.0, 8.0], n1: 36, n2: 41 },
                    error_steps: 399,
                },
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == CONFIG_VERSION as u64 => {}
            Some(v) => return Err(Error::Version { found: v as u32, expected: CONFIG_VERSION }),
            None => return Err(Error::Config("missing `version`".into())),
        }
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Architecture for the requested model kind.
    pub fn architecture(&self, kind: ModelKind) -> Architecture {
        Architecture { kind, ..self.model.clone() }
    }

    pub fn data(&self) -> Result<GeneratedData> {
        generate_dataset(self.experiment, self.seed, self.noise)
    }
}

/// Output root: explicit flag, then the environment, then `./out`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out")),
    }
}

/// Writes the recipe's train/validation/test files into `dir`.
pub fn cmd_generate(cfg: &ExperimentConfig, dir: &Path) -> Result<GeneratedData> {
    let data = cfg.data()?;
    data.save(dir, cfg.noise)?;
    Ok(data)
}

pub fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Proposed => "proposed",
        ModelKind::Vanilla => "vanilla",
        ModelKind::StableEquilibrium => "stable-equilibrium",
    }
}

/// Builds the model from the seed and trains it on the recipe's data.
pub fn train_kind(cfg: &ExperimentConfig, kind: ModelKind, data: &GeneratedData) -> Result<(StableModel, TrainOutcome)> {
    let model = cfg.architecture(kind).build(cfg.seed)?;
    train_model(&model, &data.train, &data.val, &cfg.train)
}

/// Trains and writes `model_<kind>.json` and `history_<kind>.csv`.
pub fn cmd_train(cfg: &ExperimentConfig, kind: ModelKind, dir: &Path) -> Result<(StableModel, TrainOutcome)> {
    let data = cfg.data()?;
    let (model, outcome) = train_kind(cfg, kind, &data)?;
    std::fs::create_dir_all(dir)?;
    let name = kind_name(kind);
    model.save(&dir.join(format!("model_{name}.json")))?;
    write_history(&outcome.history, std::fs::File::create(dir.join(format!("history_{name}.csv")))?)?;
    Ok((model, outcome))
}

/// A vector field to integrate: a learned model or a true system.
#[derive(Debug, Clone)]
pub enum FieldSource {
    Model(Box<StableModel>),
    System(System),
}

impl FieldSource {
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FieldSource::Model(m) => m.f_eval(x),
            FieldSource::System(s) => s.rhs(x),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FieldSource::Model(m) => m.dim(),
            FieldSource::System(s) => s.dim(),
        }
    }

    pub fn rollout(&self, x0: &[f64], dt: f64, n: usize) -> Result<Trajectory> {
        crate::check_dim("initial state", self.dim(), x0.len())?;
        rollout(|x| self.eval(x), x0, dt, n)
    }
}

/// Field values `x1,x2,u,v` on a grid.
pub fn field_grid(src: &FieldSource, grid: &GridSpec) -> Result<Vec<[f64; 4]>> {
    grid.points()?
        .into_iter()
        .map(|x| {
            let f = src.eval(&x)?;
            Ok([x[0], x[1], f[0], f[1]])
        })
        .collect()
}

/// `V(φ(x))` on a grid as `x1,x2,V`.
pub fn contour_grid(model: &StableModel, grid: &GridSpec) -> Result<Vec<[f64; 3]>> {
    grid.points()?
        .into_iter()
        .map(|x| Ok([x[0], x[1], model.v_at_x(&x)?]))
        .collect()
}

fn write_rows<W: std::io::Write, const N: usize>(header: [&str; N], rows: &[[f64; N]], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_field_csv<W: std::io::Write>(rows: &[[f64; 4]], out: W) -> Result<()> {
    write_rows(["x1", "x2", "u", "v"], rows, out)
}

pub fn write_contour_csv<W: std::io::Write>(rows: &[[f64; 3]], out: W) -> Result<()> {
    write_rows(["x1", "x2", "V"], rows, out)
}

/// Per-step prediction error of one model over many test trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub name: String,
    /// `errors[k][i]`: Euclidean error at step `k` on trajectory `i`.
    pub errors: Vec<Vec<f64>>,
}

impl ErrorStats {
    pub fn mean(&self, step: usize) -> f64 {
        let e = &self.errors[step];
        e.iter().sum::<f64>() / e.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self, step: usize) -> f64 {
        let m = self.mean(step);
        let e = &self.errors[step];
        (e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / e.len() as f64).sqrt()
    }

    pub fn steps(&self) -> usize {
        self.errors.len()
    }
}

/// Ground truth for `steps` steps from each test start. Stored test
/// trajectories are used as far as they reach; longer horizons are
/// regenerated with the reference integrator when `system` is given.
pub fn truth_for(test: &[Trajectory], dt: f64, steps: usize, system: Option<System>) -> Result<Vec<Trajectory>> {
    test.iter()
        .map(|t| {
            if t.len() > steps {
                Ok(Trajectory { times: t.times[..=steps].to_vec(), states: t.states[..=steps].to_vec() })
            } else if let Some(sys) = system {
                sys.reference(&t.states[0], dt, steps + 1)
            } else {
                Err(Error::Dimension { context: "test trajectory length", expected: steps + 1, got: t.len() })
            }
        })
        .collect()
}

/// Rolls each source out from every truth start and records the error.
pub fn error_stats(sources: &[(String, FieldSource)], truth: &[Trajectory], dt: f64) -> Result<Vec<ErrorStats>> {
    if truth.is_empty() {
        return Err(Error::Invalid("no test trajectories".into()));
    }
    let steps = truth[0].len() - 1;
    if truth.iter().any(|t| t.len() != steps + 1) {
        return Err(Error::Invalid("test trajectories differ in length".into()));
    }
    sources
        .iter()
        .map(|(name, src)| {
            let mut errors = vec![Vec::with_capacity(truth.len()); steps + 1];
            for t in truth {
                let pred = src.rollout(&t.states[0], dt, steps)?;
                for (k, (p, q)) in pred.states.iter().zip(&t.states).enumerate() {
                    errors[k].push(p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
                }
            }
            Ok(ErrorStats { name: name.clone(), errors })
        })
        .collect()
}

/// `step,<name>_mean,<name>_std,…`.
pub fn write_error_csv<W: std::io::Write>(stats: &[ErrorStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    for s in stats {
        header.push(format!("{}_mean", s.name));
        header.push(format!("{}_std", s.name));
    }
    w.write_record(&header)?;
    let steps = stats.first().map_or(0, ErrorStats::steps);
    for k in 0..steps {
        let mut row = vec![k.to_string()];
        for s in stats {
            row.push(s.mean(k).to_string());
            row.push(s.std(k).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Points where a planar trajectory crosses the half-line `x2 = 0, x1 > 0`,
/// located by linear interpolation between samples.
pub fn section_crossings(traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.states
        .windows(2)
        .filter(|w| (w[0][1] > 0.0 && w[1][1] <= 0.0) || (w[0][1] < 0.0 && w[1][1] >= 0.0))
        .map(|w| {
            let s = w[0][1] / (w[0][1] - w[1][1]);
            w[0].iter().zip(&w[1]).map(|(a, b)| a + s * (b - a)).collect::<Vec<f64>>()
        })
        .filter(|p| p[0] > 0.0)
        .collect()
}

/// Distances between successive section crossings. Small values mean the
/// trajectory returns to the same point once per revolution.
pub fn recurrence_distances(traj: &Trajectory) -> Vec<f64> {
    section_crossings(traj)
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect()
}

/// Loads test trajectories written by [`cmd_generate`].
pub fn load_test(path: &Path) -> Result<Vec<Trajectory>> {
    read_test_csv(std::fs::File::open(path)?)
}
