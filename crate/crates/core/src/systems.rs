//! Ground-truth systems and the dataset recipes built on them.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ode::{rk45_reference, uniform_times, Tolerances, Trajectory};
use crate::train::{Provenance, Sample, TrajectoryDataset};
use crate::{check_dim, Error, Result};

/// `(x₁ − x₂ − x₁r², x₁ + x₂ − x₂r²)`; orbits approach the unit circle.
pub fn unit_limit_cycle_rhs(x: &[f64]) -> Vec<f64> {
    let r2 = x[0] * x[0] + x[1] * x[1];
    vec![x[0] - x[1] - x[0] * r2, x[0] + x[1] - x[1] * r2]
}

/// `(x₁(1 − x₂), x₁²)`; every point of `x₁ = 0` is an equilibrium.
pub fn line_attractor_rhs(x: &[f64]) -> Vec<f64> {
    vec![x[0] * (1.0 - x[1]), x[0] * x[0]]
}

/// Van der Pol oscillator `(x₂, μ(1 − x₁²)x₂ − x₁)`.
pub fn vdp_rhs(x: &[f64], mu: f64) -> Vec<f64> {
    vec![x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum System {
    UnitLimitCycle,
    LineAttractor,
    VanDerPol { mu: f64 },
}

impl System {
    pub fn dim(&self) -> usize {
        2
    }

    pub fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("system state", 2, x.len())?;
        Ok(match *self {
            System::UnitLimitCycle => unit_limit_cycle_rhs(x),
            System::LineAttractor => line_attractor_rhs(x),
            System::VanDerPol { mu } => vdp_rhs(x, mu),
        })
    }

    /// Reference trajectory with `n` samples spaced `dt`.
    pub fn reference(&self, x0: &[f64], dt: f64, n: usize) -> Result<Trajectory> {
        if n == 0 {
            return Err(Error::Invalid("trajectory length must be positive".into()));
        }
        rk45_reference(|x| self.rhs(x), x0, &uniform_times(0.0, dt, n - 1), Tolerances::default())
    }
}

/// Named data recipes for the three experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    LimitCycle,
    LineAttractor,
    VanDerPol,
}

impl std::str::FromStr for Recipe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "limit-cycle" => Ok(Recipe::LimitCycle),
            "line-attractor" => Ok(Recipe::LineAttractor),
            "van-der-pol" | "vdp" => Ok(Recipe::VanDerPol),
            other => Err(Error::UnknownRecipe(other.to_string())),
        }
    }
}

impl Recipe {
    pub fn name(&self) -> &'static str {
        match self {
            Recipe::LimitCycle => "limit-cycle",
            Recipe::LineAttractor => "line-attractor",
            Recipe::VanDerPol => "van-der-pol",
        }
    }

    pub fn system(&self) -> System {
        match self {
            Recipe::LimitCycle => System::UnitLimitCycle,
            Recipe::LineAttractor => System::LineAttractor,
            Recipe::VanDerPol => System::VanDerPol { mu: 2.0 },
        }
    }

    /// Sampling interval of the trajectories.
    pub fn dt(&self) -> f64 {
        match self {
            Recipe::LimitCycle => 0.075,
            Recipe::LineAttractor | Recipe::VanDerPol => 0.05,
        }
    }
}

/// Training, validation and test data of one recipe.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub recipe: Recipe,
    pub seed: u64,
    pub dt: f64,
    pub train: TrajectoryDataset,
    pub val: TrajectoryDataset,
    /// Trajectories behind `train` / `val` (empty for grid recipes).
    pub train_trajs: Vec<Trajectory>,
    pub val_trajs: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

/// Evenly spaced `n × m` grid over `[x_lo, x_hi] × [y_lo, y_hi]`, first
/// coordinate varying slowest.
pub fn grid(x: (f64, f64), y: (f64, f64), n: usize, m: usize) -> Vec<Vec<f64>> {
    let lin = |(lo, hi): (f64, f64), k: usize, i: usize| if k == 1 { lo } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 };
    let mut pts = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            pts.push(vec![lin(x, n, i), lin(y, m, j)]);
        }
    }
    pts
}

fn trajectories(sys: System, ics: &[Vec<f64>], dt: f64, len: usize) -> Result<Vec<Trajectory>> {
    ics.iter().map(|x0| sys.reference(x0, dt, len)).collect()
}

fn uniform_ics(rng: &mut ChaCha8Rng, n: usize, x: (f64, f64), y: (f64, f64)) -> Vec<Vec<f64>> {
    (0..n).map(|_| vec![rng.gen_range(x.0..x.1), rng.gen_range(y.0..y.1)]).collect()
}

fn grid_dataset(sys: System, pts: Vec<Vec<f64>>, dt: f64) -> Result<TrajectoryDataset> {
    let samples = pts
        .into_iter()
        .map(|x| Ok(Sample { dx: sys.rhs(&x)?, x }))
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(samples, dt, Provenance::Analytic)
}

fn analytic(sys: System, trajs: &[Trajectory], dt: f64) -> Result<TrajectoryDataset> {
    TrajectoryDataset::analytic(trajs, dt, |x| sys.rhs(x).expect("dimension checked"))
}

/// Builds the train / validation / test data of `recipe`. Observation
/// noise of standard deviation `noise` is added to the states of training
/// and validation pairs (0 disables it).
pub fn generate_dataset(recipe: Recipe, seed: u64, noise: f64) -> Result<GeneratedData> {
    let sys = recipe.system();
    let dt = recipe.dt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_trajs, val_trajs, mut train, mut val, test) = match recipe {
        Recipe::LimitCycle => {
            let tr_ic = [vec![-2.0, 0.5], vec![2.0, 0.5], vec![-0.3, -0.3], vec![0.3, 0.3]];
            let va_ic = [vec![-1.5, 0.0], vec![1.5, 0.0], vec![-0.5, -0.5], vec![0.5, 0.5]];
            let tr = trajectories(sys, &tr_ic, dt, 20)?;
            let va = trajectories(sys, &va_ic, dt, 20)?;
            let test_ic = uniform_ics(&mut rng, 20, (-1.5, 1.5), (-0.5, 0.5));
            let test = trajectories(sys, &test_ic, dt, 50)?;
            let (a, b) = (analytic(sys, &tr, dt)?, analytic(sys, &va, dt)?);
            (tr, va, a, b, test)
        }
        Recipe::LineAttractor => {
            let tr = trajectories(sys, &grid((-2.0, 2.0), (-2.0, 2.0), 4, 4), dt, 80)?;
            let va = trajectories(sys, &grid((-1.5, 1.5), (-2.0, 2.0), 4, 4), dt, 80)?;
            let (a, b) = (analytic(sys, &tr, dt)?, analytic(sys, &va, dt)?);
            (tr, va, a, b, Vec::new())
        }
        Recipe::VanDerPol => {
            let a = grid_dataset(sys, grid((-2.5, 2.5), (-4.5, 4.5), 20, 20), dt)?;
            let b = grid_dataset(sys, grid((-2.0, 2.0), (-4.0, 4.0), 15, 15), dt)?;
            let test_ic = uniform_ics(&mut rng, 20, (-2.5, 2.5), (-4.5, 4.5));
            let test = trajectories(sys, &test_ic, dt, 400)?;
            (Vec::new(), Vec::new(), a, b, test)
        }
    };
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut noisy = |ds: &TrajectoryDataset| -> Result<TrajectoryDataset> {
            let samples = ds
                .samples()
                .iter()
                .map(|s| Sample { x: s.x.iter().map(|v| v + normal.sample(&mut rng)).collect(), dx: s.dx.clone() })
                .collect();
            TrajectoryDataset::new(samples, ds.dt(), ds.provenance())
        };
        train = noisy(&train)?;
        val = noisy(&val)?;
    }
    Ok(GeneratedData { recipe, seed, dt, train, val, train_trajs, val_trajs, test })
}

/// Writes test trajectories as `traj,t,x1,…,xd`.
pub fn write_test_csv<W: std::io::Write>(trajs: &[Trajectory], out: W) -> Result<()> {
    let d = trajs.first().map_or(0, Trajectory::dim);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["traj".to_string(), "t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (k, tr) in trajs.iter().enumerate() {
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let mut row = vec![k.to_string(), t.to_string()];
            row.extend(s.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_test_csv<R: std::io::Read>(input: R) -> Result<Vec<Trajectory>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("traj") || header.get(1) != Some("t") {
        return Err(Error::Shape("test CSV must start with columns `traj,t`".into()));
    }
    let mut out: Vec<(Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let k: usize = rec[0].trim().parse().map_err(|e| Error::Shape(format!("bad trajectory index: {e}")))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Shape(format!("bad number `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if k == out.len() {
            out.push((Vec::new(), Vec::new()));
        } else if k + 1 != out.len() {
            return Err(Error::Shape(format!("trajectory index {k} out of order")));
        }
        let last = out.last_mut().unwrap();
        last.0.push(vals[0]);
        last.1.push(vals[1..].to_vec());
    }
    out.into_iter().map(|(t, s)| Trajectory::new(t, s)).collect()
}

/// Sidecar describing how a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSidecar {
    pub recipe: Recipe,
    pub seed: u64,
    pub dt: f64,
    pub noise: f64,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_trajectories: usize,
}

impl GeneratedData {
    /// Writes `train.csv`, `val.csv`, `test.csv` and `dataset.json`.
    pub fn save(&self, dir: &Path, noise: f64) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.train.save_csv(&dir.join("train.csv"))?;
        self.val.save_csv(&dir.join("val.csv"))?;
        write_test_csv(&self.test, std::fs::File::create(dir.join("test.csv"))?)?;
        let side = DatasetSidecar {
            recipe: self.recipe,
            seed: self.seed,
            dt: self.dt,
            noise,
            train_samples: self.train.len(),
            val_samples: self.val.len(),
            test_trajectories: self.test.len(),
        };
        std::fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }
}
