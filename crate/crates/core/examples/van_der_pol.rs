//! Van der Pol oscillator with a learnable ANODE transform and a learnable
//! circle: the trained model's rollout settles on a closed orbit.
//!
//! `cargo run --release --example van_der_pol [epochs]`

use stabset::experiment::{recurrence_distances, train_kind, ExperimentConfig, FieldSource};
use stabset::ode::Trajectory;
use stabset::systems::Recipe;
use stabset::ModelKind;

fn fmt(d: &[f64]) -> String {
    d.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
}

fn main() -> stabset::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = ExperimentConfig::preset(Recipe::VanDerPol);
    cfg.train.max_epochs = match std::env::args().nth(1) {
        Some(e) => e.parse().map_err(|_| stabset::Error::Config(format!("bad epoch count `{e}`")))?,
        None => 100,
    };
    let data = cfg.data()?;
    let (model, out) = train_kind(&cfg, ModelKind::Proposed, &data)?;
    println!("best validation loss {:.4e} at epoch {}", out.best_val, out.best_epoch);
    println!("learned circle: {:?}", model.set().coefficients());
    let tr = FieldSource::Model(Box::new(model)).rollout(&[0.5, 0.5], cfg.experiment.dt(), 800)?;
    let tail = Trajectory::new(tr.times[400..].to_vec(), tr.states[400..].to_vec())?;
    println!("distances between successive returns to x₂ = 0, x₁ > 0: {}", fmt(&recurrence_distances(&tail)));
    println!("true orbit for comparison:");
    let truth = cfg.experiment.system().reference(&[0.5, 0.5], cfg.experiment.dt(), 801)?;
    let tail = Trajectory::new(truth.times[400..].to_vec(), truth.states[400..].to_vec())?;
    println!("  {}", fmt(&recurrence_distances(&tail)));
    Ok(())
}
