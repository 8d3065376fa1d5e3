//! Reverse-mode and forward-mode derivatives of the same generic function.

use stabset::ad::{value_and_grad, Dual, Scalar, Var};

/// `f(x, y) = exp(x)·y / (1 + y²) + ELU(x − y)`.
fn f<S: Scalar>(v: &[S]) -> S {
    let (x, y) = (v[0], v[1]);
    x.exp() * y / (y * y + 1.0) + (x - y).elu()
}

fn main() -> stabset::Result<()> {
    let x = [0.3, -1.2];
    let (value, grad) = value_and_grad(|v: &[Var]| f(v), &x)?;
    println!("f{x:?} = {value:.6}");
    println!("reverse mode ∇f = {grad:.6?}");

    let forward: Vec<f64> = (0..2).map(|i| f(&Dual::seeded(&x, i)).eps).collect();
    println!("forward mode ∇f = {forward:.6?}");

    let h = 1e-6;
    let fd: Vec<f64> = (0..2)
        .map(|i| {
            let (mut p, mut m) = (x, x);
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect();
    println!("central differences = {fd:.6?}");
    Ok(())
}
