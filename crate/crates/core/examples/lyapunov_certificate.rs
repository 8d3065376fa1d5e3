//! An untrained model already has its set as a stable invariant set: the
//! Lyapunov function decreases off the set, the boundary flux vanishes on
//! it, and a rollout started on the set stays there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stabset::model::{Architecture, SetChoice};
use stabset::ode::rollout;

fn main() -> stabset::Result<()> {
    let model = Architecture {
        h_hidden: vec![32, 32],
        set: SetChoice::Circle { r: 1.0, axes: [0, 1], learnable: false },
        ..Architecture::default()
    }
    .build(7)?;
    let alpha = model.stability().alpha;
    let band = model.invariance().band;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_rate, mut worst_flux) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..10_000 {
        let z: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let t = model.trace(&z)?;
        let rate: f64 = t.grad_v.iter().zip(&t.f_tilde).map(|(a, b)| a * b).sum::<f64>() + alpha * t.v;
        if t.c.abs() > band {
            worst_rate = worst_rate.max(rate);
        } else {
            let gc = model.set().c_grad(&z)?;
            worst_flux = worst_flux.max(gc.iter().zip(&t.f_tilde).map(|(a, b)| a * b).sum::<f64>().abs());
        }
    }
    println!("max over samples off the set of ∇Vᵀf̃ + αV: {worst_rate:.3e} (must be ≤ 0)");
    println!("max boundary flux |∇Cᵀf̃| inside the band: {worst_flux:.3e}");

    let traj = rollout(|x| model.f_eval(x), &[0.6, 0.8], 0.01, 10_000)?;
    let drift = traj.states.iter().map(|x| model.set().c_value(x).unwrap_or(f64::NAN).abs()).fold(0.0, f64::max);
    println!("max |C| along a 10⁴-step RK4 rollout started on the circle: {drift:.3e}");

    let outside = rollout(|x| model.f_eval(x), &[2.5, -1.0], 0.01, 3000)?;
    let v0 = model.v_at_x(&outside.states[0])?;
    let v1 = model.v_at_x(outside.last())?;
    println!("V along a rollout from (2.5, -1): {v0:.4} -> {v1:.4}");
    Ok(())
}
