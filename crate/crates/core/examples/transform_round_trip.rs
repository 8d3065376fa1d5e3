//! Neural-ODE feature transforms: forward map, inverse and the convergence
//! of the round-trip error with the number of RK4 steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stabset::nets::Mlp;
use stabset::transform::{Transform, TransformKind};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn main() -> stabset::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut psi = Mlp::new(&[2, 16, 16, 2], &mut rng);
    psi.scale(2.0);
    let points: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();

    println!("{:>6} {:>14} {:>8}", "steps", "max round trip", "ratio");
    let mut prev: Option<f64> = None;
    for steps in [5, 10, 20, 40, 80] {
        let t = Transform::node(psi.clone(), steps)?;
        let mut worst = 0.0f64;
        for x in &points {
            let lat = t.forward(x)?;
            worst = worst.max(dist(&t.inverse(&lat.z, &lat.a)?, x));
        }
        let ratio = prev.map_or(String::from("-"), |p| format!("{:.1}", p / worst));
        println!("{steps:>6} {worst:>14.3e} {ratio:>8}");
        prev = Some(worst);
    }

    let anode = Transform::random(TransformKind::Anode, 2, 2, &[16, 16], 20, &mut rng)?;
    let lat = anode.forward(&[0.5, -0.5])?;
    println!("ANODE: z = {:.4?}, carried augmentation a = {:.4?}", lat.z, lat.a);
    println!("ANODE inverse: {:.6?}", anode.inverse(&lat.z, &lat.a)?);
    Ok(())
}
