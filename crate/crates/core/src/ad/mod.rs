//! Minimal automatic differentiation.
//!
//! Reverse mode lives on a [`Tape`] of scalar nodes; forward mode is the
//! [`Dual`] number. The two compose: `Dual<Var>` gives input-gradients that
//! can themselves be differentiated with respect to parameters, which is
//! what training through `∇V(z)` needs.

mod dual;
mod scalar;
mod tape;

use std::sync::atomic::{AtomicUsize, Ordering};

pub use dual::Dual;
pub use scalar::{
    consts, guarded_div, inv_softplus, sigmoid, smooth_relu, softplus, softplus_f64, values, Scalar,
};
pub use tape::{Gradients, NonFiniteRecord, Tape, Var};

use crate::{Error, Result};

/// Floor applied to denominators of division and norm derivatives.
pub const DENOM_FLOOR: f64 = 1e-12;

static FLOOR_HITS: AtomicUsize = AtomicUsize::new(0);

pub(crate) fn note_floor(primitive: &'static str, denominator: f64) {
    FLOOR_HITS.fetch_add(1, Ordering::Relaxed);
    log::debug!("{primitive}: denominator {denominator:e} floored at {DENOM_FLOOR:e}");
}

/// Number of times any denominator floor has triggered in this process.
pub fn floor_hits() -> usize {
    FLOOR_HITS.load(Ordering::Relaxed)
}

fn check_tape(tape: &Tape) -> Result<()> {
    match tape.non_finite() {
        Some(rec) => Err(Error::NonFinite {
            primitive: rec.primitive,
            operands: rec.operands,
        }),
        None => Ok(()),
    }
}

/// Value and exact gradient of a scalar function.
pub fn value_and_grad<F>(f: F, x: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let xs = tape.vars(x);
    let out = f(&xs);
    check_tape(&tape)?;
    if !out.val().is_finite() {
        return Err(Error::NonFinite {
            primitive: "output",
            operands: vec![out.val()],
        });
    }
    let grads = tape.backward(out);
    Ok((out.val(), grads.wrt_all(&xs)))
}

/// Gradient of the mean of `loss` over `batch` with respect to `params`.
///
/// Samples are processed in order, one tape each, so the result is
/// deterministic for a fixed batch order.
pub fn param_grad<T, F>(loss: F, params: &[f64], batch: &[T]) -> Result<Vec<f64>>
where
    F: for<'t> Fn(&[Var<'t>], &T) -> Result<Var<'t>>,
{
    Ok(param_value_and_grad(loss, params, batch)?.1)
}

/// Mean loss and its parameter gradient; see [`param_grad`].
pub fn param_value_and_grad<T, F>(loss: F, params: &[f64], batch: &[T]) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> Fn(&[Var<'t>], &T) -> Result<Var<'t>>,
{
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut tape = Tape::new();
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;
    for sample in batch {
        tape.clear();
        let (value, adj) = {
            let ps = tape.vars(params);
            let out = loss(&ps, sample)?;
            check_tape(&tape)?;
            let g = tape.backward(out);
            (out.val(), g.wrt_all(&ps))
        };
        total += value;
        for (acc, a) in grad.iter_mut().zip(adj) {
            *acc += a;
        }
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let (v, g) = value_and_grad(|x| x[0] * x[0] + x[1] * x[1], &[1.0, 2.0]).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(g, vec![2.0, 4.0]);
    }

    #[test]
    fn coordinate_projection() {
        let (v, g) = value_and_grad(|x| x[0], &[3.0, 7.0]).unwrap();
        assert_eq!(v, 3.0);
        assert_eq!(g, vec![1.0, 0.0]);
    }

    #[test]
    fn non_finite_intermediate_names_primitive() {
        let err = value_and_grad(|x| (x[0] - 2.0).ln() + x[1], &[1.0, 0.0]).unwrap_err();
        match err {
            Error::NonFinite { primitive, operands } => {
                assert_eq!(primitive, "ln");
                assert_eq!(operands, vec![-1.0]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn param_grad_of_squared_norm() {
        let g = param_grad(|p, _: &()| Ok(p[0] * p[0] + p[1] * p[1]), &[1.0, -1.0], &[()]).unwrap();
        assert_eq!(g, vec![2.0, -2.0]);
    }

    #[test]
    fn param_grad_of_constant_is_zero() {
        let g = param_grad(|_p, _: &()| Ok(Var::Const(4.0)), &[1.0, -1.0, 3.0], &[(), ()]).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn param_grad_rejects_empty_batch() {
        let batch: [(); 0] = [];
        let err = param_grad(|p, _: &()| Ok(p[0]), &[1.0], &batch).unwrap_err();
        assert!(matches!(err, Error::EmptyBatch));
    }

    #[test]
    fn dual_over_var_gives_mixed_derivative() {
        // f(x, p) = p·x²; ∂f/∂x = 2px; ∂/∂p (∂f/∂x) = 2x.
        let tape = Tape::new();
        let p = tape.var(1.5);
        let x = Dual::new(Var::Const(3.0), Var::Const(1.0));
        let f = Dual::lift(p) * x * x;
        assert_eq!(f.eps.val(), 9.0);
        let g = tape.backward(f.eps);
        assert_eq!(g.wrt(p), 6.0);
    }
}
