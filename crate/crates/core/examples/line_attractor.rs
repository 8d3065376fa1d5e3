//! Learns the line attractor `ẋ₁ = x₁(1 − x₂)`, `ẋ₂ = x₁²` with a learnable
//! line as the invariant set and prints the learned Lyapunov function on a
//! coarse grid.
//!
//! `cargo run --release --example line_attractor [epochs]`

use stabset::experiment::{train_kind, ExperimentConfig};
use stabset::systems::Recipe;
use stabset::ModelKind;

fn main() -> stabset::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = ExperimentConfig::preset(Recipe::LineAttractor);
    cfg.train.max_epochs = match std::env::args().nth(1) {
        Some(e) => e.parse().map_err(|_| stabset::Error::Config(format!("bad epoch count `{e}`")))?,
        None => 300,
    };
    let data = cfg.data()?;
    let (model, out) = train_kind(&cfg, ModelKind::Proposed, &data)?;
    println!("best validation loss {:.4e} at epoch {}", out.best_val, out.best_epoch);
    println!("learned set coefficients: {:?}", model.set().coefficients());
    println!("V(x) on [-2, 2]², rows x₂ = 2 … -2, columns x₁ = -2 … 2:");
    for j in (0..9).rev() {
        let x2 = -2.0 + 0.5 * j as f64;
        let row: Vec<String> = (0..9)
            .map(|i| model.v_at_x(&[-2.0 + 0.5 * i as f64, x2]).map(|v| format!("{v:7.3}")))
            .collect::<stabset::Result<_>>()?;
        println!("{x2:5.1} | {}", row.join(" "));
    }
    Ok(())
}
