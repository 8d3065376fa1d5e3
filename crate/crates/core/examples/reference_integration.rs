//! Fixed-step RK4 against the adaptive Dormand–Prince reference on the
//! Van der Pol oscillator.

use stabset::ode::{rk45_reference, rollout, uniform_times, Tolerances};
use stabset::systems::System;

fn main() -> stabset::Result<()> {
    let sys = System::VanDerPol { mu: 2.0 };
    let x0 = [0.5, 0.5];
    let reference = rk45_reference(|x| sys.rhs(x), &x0, &uniform_times(0.0, 0.05, 400), Tolerances::default())?;
    for dt in [0.05f64, 0.025, 0.0125] {
        let n = (20.0f64 / dt).round() as usize;
        let stride = (0.05f64 / dt).round() as usize;
        let rk4 = rollout(|x| sys.rhs(x), &x0, dt, n)?;
        let worst = reference
            .states
            .iter()
            .enumerate()
            .map(|(k, r)| rk4.states[k * stride].iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        println!("RK4 dt = {dt:<7} max deviation from the reference over t ∈ [0, 20]: {worst:.3e}");
    }
    println!("state at t = 20: {:.6?}", reference.last());
    Ok(())
}
