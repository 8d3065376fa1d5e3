//! Trains the proposed and vanilla models on the unit limit cycle and
//! compares long-horizon prediction error.
//!
//! `cargo run --release --example limit_cycle [epochs]`

use stabset::experiment::{error_stats, train_kind, truth_for, ExperimentConfig, FieldSource};
use stabset::systems::Recipe;
use stabset::ModelKind;

fn main() -> stabset::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = ExperimentConfig::preset(Recipe::LimitCycle);
    if let Some(e) = std::env::args().nth(1) {
        cfg.train.max_epochs = e.parse().map_err(|_| stabset::Error::Config(format!("bad epoch count `{e}`")))?;
    }
    let data = cfg.data()?;
    let dt = cfg.experiment.dt();
    let mut sources = Vec::new();
    for kind in [ModelKind::Proposed, ModelKind::Vanilla] {
        let (model, out) = train_kind(&cfg, kind, &data)?;
        println!("{kind:?}: best validation loss {:.4e} at epoch {}", out.best_val, out.best_epoch);
        let tr = FieldSource::Model(Box::new(model.clone())).rollout(&[-0.1, 0.1], dt, 200)?;
        let end = tr.last();
        println!("  200-step rollout from (-0.1, 0.1) ends at radius {:.4}", end[0].hypot(end[1]));
        sources.push((format!("{kind:?}"), FieldSource::Model(Box::new(model))));
    }
    let truth = truth_for(&data.test, dt, 200, Some(cfg.experiment.system()))?;
    let stats = error_stats(&sources, &truth, dt)?;
    println!("{:>5} {:>12} {:>12}", "step", "proposed", "vanilla");
    for k in (0..=200).step_by(25) {
        println!("{k:>5} {:>12.4} {:>12.4}", stats[0].mean(k), stats[1].mean(k));
    }
    Ok(())
}
