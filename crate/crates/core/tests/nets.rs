mod common;

use common::{central_diff, convexity_violations, rel_err, rng, uniform_point};
use proptest::prelude::*;
use rand::Rng;
use stabset::ad::{param_value_and_grad, value_and_grad, Var};
use stabset::nets::{sigma, Icnn, Mlp, Slack};

#[test]
fn icnn_is_convex_for_random_and_extreme_parameters() {
    for (i, hidden) in [vec![8], vec![16, 16], vec![32, 16, 8]].iter().enumerate() {
        let mut q = Icnn::new(3, hidden, &mut rng(i as u64));
        assert_eq!(convexity_violations(&q, 10_000, 100 + i as u64), 0);
        // Raw parameters of any sign and size keep the network convex.
        let mut r = rng(200 + i as u64);
        q.params_mut().iter_mut().for_each(|p| *p = r.gen_range(-6.0..6.0));
        assert_eq!(convexity_violations(&q, 10_000, 300 + i as u64), 0);
    }
}

#[test]
fn icnn_gradients_match_finite_differences() {
    let q = Icnn::new(2, &[8, 8], &mut rng(3));
    let mut r = rng(4);
    for _ in 0..100 {
        let z = uniform_point(&mut r, 2, -2.0, 2.0);
        let (_, gz) = value_and_grad(
            |zs: &[Var]| {
                let p: Vec<Var> = q.params().iter().map(|&v| Var::Const(v)).collect();
                q.forward(&p, zs).unwrap()
            },
            &z,
        )
        .unwrap();
        let fd = central_diff(|y| q.eval(y).unwrap(), &z, 1e-6);
        assert!(rel_err(&gz, &fd, 1e-6) <= 1e-4, "{gz:?} vs {fd:?}");
    }
    let z = [0.4, -1.3];
    let (_, gp) = param_value_and_grad(
        |p: &[Var], z: &[f64; 2]| q.forward(p, &[Var::Const(z[0]), Var::Const(z[1])]),
        q.params(),
        &[z],
    )
    .unwrap();
    let fd = central_diff(|p| Icnn::from_params(2, &[8, 8], p.to_vec()).unwrap().eval(&z).unwrap(), q.params(), 1e-6);
    assert!(rel_err(&gp, &fd, 1e-6) <= 1e-4);
}

#[test]
fn mlp_parameter_gradient_matches_finite_differences() {
    let net = Mlp::new(&[2, 16, 16, 2], &mut rng(5));
    let x = [0.7, -0.2];
    let (_, g) = param_value_and_grad(
        |p: &[Var], x: &[f64; 2]| {
            let out = net.forward(p, &[Var::Const(x[0]), Var::Const(x[1])])?;
            Ok(out[0] * 0.3 - out[1])
        },
        net.params(),
        &[x],
    )
    .unwrap();
    let f = |p: &[f64]| {
        let o = Mlp::from_params(&[2, 16, 16, 2], p.to_vec()).unwrap().eval(&x).unwrap();
        o[0] * 0.3 - o[1]
    };
    assert!(rel_err(&g, &central_diff(f, net.params(), 1e-6), 1e-6) <= 1e-4);
}

#[test]
fn zero_initialised_eta_is_ln_two() {
    let eta = Slack::Nonnegative { net: Mlp::zeros(&[2, 4, 1]) };
    assert!((eta.eval(&[0.3, -2.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
    assert_eq!(Slack::Zero.eval(&[5.0, 1.0]).unwrap(), 0.0);
}

#[test]
fn xi_respects_its_floor() {
    let mut xi = Slack::positive(2, &[8], 1e-3, &mut rng(6));
    // Push the net output strongly negative as well.
    xi.params_mut().iter_mut().for_each(|p| *p *= 40.0);
    let mut r = rng(7);
    for _ in 0..1000 {
        let z = uniform_point(&mut r, 2, -10.0, 10.0);
        assert!(xi.eval(&z).unwrap() >= 1e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn sigma_is_monotone_nonnegative_and_zero_at_zero(a in -5.0..5.0f64, b in -5.0..5.0f64, w in 0.01..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(sigma(w, lo) <= sigma(w, hi));
        prop_assert!(sigma(w, a) >= 0.0);
        prop_assert_eq!(sigma(w, 0.0), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn slack_sign_contracts(seed in 0u64..1000, scale in 0.1..20.0f64, z in prop::collection::vec(-5.0..5.0f64, 2)) {
        let mut eta = Slack::nonnegative(2, &[8], &mut rng(seed));
        let mut xi = Slack::positive(2, &[8], 0.05, &mut rng(seed + 1));
        eta.params_mut().iter_mut().for_each(|p| *p *= scale);
        xi.params_mut().iter_mut().for_each(|p| *p *= scale);
        prop_assert!(eta.eval(&z).unwrap() >= 0.0);
        prop_assert!(xi.eval(&z).unwrap() >= 0.05);
    }
}
