//! Command-line front end. Each subcommand resolves an experiment
//! configuration (file or preset), applies overrides and writes CSV/JSON
//! outputs under the output root.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::experiment::{
    cmd_generate, cmd_train, contour_grid, error_stats, field_grid, kind_name, load_test, output_root, truth_for,
    write_contour_csv, write_error_csv, write_field_csv, ExperimentConfig, FieldSource, GridSpec,
};
use crate::model::{ModelKind, StableModel};
use crate::systems::Recipe;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "stabset", version, about = "Learned dynamics with a stable invariant set")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write train/validation/test data for an experiment.
    Generate(Common),
    /// Train a model and write its checkpoint and loss history.
    Train {
        #[command(flatten)]
        common: Common,
        /// proposed | vanilla | stable-equilibrium
        #[arg(long, default_value = "proposed")]
        kind: String,
        /// Override the maximum number of epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Integrate a model (or the true system) from one initial state.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Export the vector field on a grid as `x1,x2,u,v`.
    Field {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Export the Lyapunov function on a grid as `x1,x2,V`.
    Contour {
        #[command(flatten)]
        common: Common,
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Per-step prediction error statistics over the test set.
    Errors {
        #[command(flatten)]
        common: Common,
        /// Model checkpoints; repeat for several models.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// Test CSV (defaults to `<out>/test.csv`).
        #[arg(long)]
        test: Option<PathBuf>,
        /// Prediction horizon in steps.
        #[arg(long)]
        steps: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset used when no configuration file is given.
    #[arg(long, default_value = "limit-cycle")]
    experiment: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to $STABSET_OUT, then `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Source {
    /// Model checkpoint.
    #[arg(long, conflicts_with = "system")]
    model: Option<PathBuf>,
    /// Use the experiment's true system instead of a model.
    #[arg(long)]
    system: bool,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Range of the first coordinate as `lo,hi`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    x1: Option<[f64; 2]>,
    /// Range of the second coordinate as `lo,hi`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    x2: Option<[f64; 2]>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
}

fn parse_range(s: &str) -> std::result::Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok([num(lo)?, num(hi)?])
}

impl GridArgs {
    fn apply(&self, mut g: GridSpec) -> GridSpec {
        g.x1 = self.x1.unwrap_or(g.x1);
        g.x2 = self.x2.unwrap_or(g.x2);
        g.n1 = self.n1.unwrap_or(g.n1);
        g.n2 = self.n2.unwrap_or(g.n2);
        g
    }
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(self.experiment.parse::<Recipe>()?),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn out(&self) -> PathBuf {
        output_root(self.out.as_deref())
    }
}

fn parse_kind(s: &str) -> Result<ModelKind> {
    match s {
        "proposed" => Ok(ModelKind::Proposed),
        "vanilla" => Ok(ModelKind::Vanilla),
        "stable-equilibrium" => Ok(ModelKind::StableEquilibrium),
        other => Err(Error::Config(format!("unknown model kind `{other}`"))),
    }
}

fn source(cfg: &ExperimentConfig, src: &Source) -> Result<FieldSource> {
    match (&src.model, src.system) {
        (Some(p), _) => Ok(FieldSource::Model(Box::new(StableModel::load(p)?))),
        (None, true) => Ok(FieldSource::System(cfg.experiment.system())),
        (None, false) => Err(Error::Config("give --model <path> or --system".into())),
    }
}

fn create(dir: &Path, name: &str) -> Result<std::fs::File> {
    std::fs::create_dir_all(dir)?;
    Ok(std::fs::File::create(dir.join(name))?)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(c) => {
            let cfg = c.config()?;
            let data = cmd_generate(&cfg, &c.out())?;
            log::info!(
                "{}: {} train, {} val samples, {} test trajectories",
                cfg.experiment.name(),
                data.train.samples().len(),
                data.val.samples().len(),
                data.test.len()
            );
        }
        Command::Train { common, kind, epochs } => {
            let mut cfg = common.config()?;
            if let Some(e) = epochs {
                cfg.train.max_epochs = e;
                cfg.train.validate()?;
            }
            let kind = parse_kind(&kind)?;
            let (_, outcome) = cmd_train(&cfg, kind, &common.out())?;
            log::info!(
                "{}: best validation loss {:e} at epoch {} of {}",
                kind_name(kind),
                outcome.best_val,
                outcome.best_epoch,
                outcome.history.len()
            );
        }
        Command::Rollout { common, source: s, x0, dt, steps } => {
            let cfg = common.config()?;
            let src = source(&cfg, &s)?;
            let x0 = x0.unwrap_or_else(|| cfg.eval.rollout_x0.clone());
            let traj = src.rollout(&x0, dt.unwrap_or(cfg.eval.rollout_dt), steps.unwrap_or(cfg.eval.rollout_steps))?;
            traj.write_csv(create(&common.out(), "rollout.csv")?)?;
        }
        Command::Field { common, source: s, grid } => {
            let cfg = common.config()?;
            let src = source(&cfg, &s)?;
            let rows = field_grid(&src, &grid.apply(cfg.eval.grid))?;
            write_field_csv(&rows, create(&common.out(), "field.csv")?)?;
        }
        Command::Contour { common, model, grid } => {
            let cfg = common.config()?;
            let m = StableModel::load(&model)?;
            let rows = contour_grid(&m, &grid.apply(cfg.eval.grid))?;
            write_contour_csv(&rows, create(&common.out(), "contour.csv")?)?;
        }
        Command::Errors { common, models, test, steps } => {
            let cfg = common.config()?;
            let out = common.out();
            let test = load_test(&test.unwrap_or_else(|| out.join("test.csv")))?;
            let dt = cfg.experiment.dt();
            let truth = truth_for(&test, dt, steps.unwrap_or(cfg.eval.error_steps), Some(cfg.experiment.system()))?;
            let sources = models
                .iter()
                .map(|p| {
                    let name = p.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
                    Ok((name, FieldSource::Model(Box::new(StableModel::load(p)?))))
                })
                .collect::<Result<Vec<_>>>()?;
            let stats = error_stats(&sources, &truth, dt)?;
            write_error_csv(&stats, create(&out, "errors.csv")?)?;
        }
    }
    Ok(())
}

/// Parses `std::env::args`, runs the command and returns the exit code:
/// 0 on success, 1 for usage or configuration errors, 2 for numerical
/// failures.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
