//! Projection onto each primitive set and the value of its defining
//! function `C` before and after projecting.

use stabset::SetSpec;

fn main() -> stabset::Result<()> {
    let sets = [
        ("circle r=1.5", SetSpec::circle(2, 1.5)?, vec![3.0, 4.0]),
        ("sphere r=1", SetSpec::sphere(3, 1.0)?, vec![0.5, -0.5, 2.0]),
        ("circle on axes (1,3) of R⁴", SetSpec::axis_circle(4, 1.0, [1, 3])?, vec![7.0, 0.0, -2.0, 0.0]),
        ("torus R=2 r=0.5", SetSpec::torus(3, 2.0, 0.5)?, vec![4.0, 0.0, 0.0]),
        ("hyperplane x1 + 0.5 x2 = 1", SetSpec::hyperplane(&[1.0, 0.5], 1.0)?, vec![2.0, 2.0]),
        ("ball r=1", SetSpec::ball(2, 1.0)?, vec![0.3, 0.2]),
        ("ball r=1", SetSpec::ball(2, 1.0)?, vec![3.0, 0.0]),
    ];
    for (name, set, z) in sets {
        let p = set.project(&z)?;
        println!(
            "{name:<28} {:?}: z = {z:?}  C(z) = {:+.4}  P(z) = {:.4?}  C(P(z)) = {:+.1e}{}",
            set.kind(),
            set.c_value(&z)?,
            p.point,
            set.c_value(&p.point)?,
            if p.ambiguous { "  (ambiguous)" } else { "" }
        );
    }
    Ok(())
}
