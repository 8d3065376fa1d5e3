mod common;

use common::{ball, central_diff, circle, dot, hyperplane, norm, rel_err, rng, small_model, uniform_point};
use proptest::prelude::*;
use rand::Rng;
use stabset::model::{Architecture, SetChoice};
use stabset::sets::SetSpec;
use stabset::stable::{equilibrium_stable, stability_mod};
use stabset::{ModelKind, SetKind, StableModel};

fn set_choice(i: usize) -> SetChoice {
    match i % 3 {
        0 => circle(1.0),
        1 => hyperplane(&[1.0, 0.5], 0.3),
        _ => ball(0.8),
    }
}

/// Random point off the set and outside the invariance band.
fn off_set_point<R: Rng>(m: &StableModel, r: &mut R) -> Vec<f64> {
    loop {
        let z = uniform_point(r, m.dim(), -3.0, 3.0);
        let c = m.set().c_value(&z).unwrap();
        let outside = match m.set().kind() {
            SetKind::Surface => c.abs() > m.invariance().band,
            SetKind::Volume => c < -m.invariance().band,
        };
        if outside {
            return z;
        }
    }
}

/// Random point inside the band `|C| ≤ band`, obtained by stepping off a
/// set member along the normal.
fn band_point<R: Rng>(set: &SetSpec, band: f64, r: &mut R) -> Vec<f64> {
    loop {
        let s = set.sample_member(r);
        let g = set.c_grad(&s).unwrap();
        let t: f64 = r.gen_range(-0.9 * band..0.9 * band);
        let n2 = dot(&g, &g);
        let z: Vec<f64> = s.iter().zip(&g).map(|(a, b)| a + t * b / n2).collect();
        if set.c_value(&z).unwrap().abs() <= band {
            return z;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn lyapunov_decreases_off_the_set(seed in 0u64..10_000, which in 0usize..3, with_eta in any::<bool>()) {
        let m = Architecture {
            h_hidden: vec![16, 16],
            q_hidden: vec![8],
            xi_hidden: vec![8],
            eta_hidden: with_eta.then(|| vec![8]),
            set: set_choice(which),
            ..Architecture::default()
        }
        .build(seed)
        .unwrap();
        let alpha = m.stability().alpha;
        let mut r = rng(seed);
        for _ in 0..200 {
            let z = off_set_point(&m, &mut r);
            let t = m.trace(&z).unwrap();
            prop_assert!(t.v > 0.0);
            let rate = dot(&t.grad_v, &t.f_tilde) + alpha * t.v;
            prop_assert!(rate <= 1e-8, "z={:?}: {}", z, rate);
        }
    }

    #[test]
    fn boundary_flux_is_zero_or_xi(seed in 0u64..10_000, which in 0usize..3) {
        let m = small_model(set_choice(which), seed);
        let mut r = rng(seed);
        for _ in 0..100 {
            let z = band_point(m.set(), m.invariance().band, &mut r);
            let t = m.trace(&z).unwrap();
            let flux = dot(&m.set().c_grad(&z).unwrap(), &t.f_tilde);
            match m.set().kind() {
                SetKind::Surface => prop_assert!(flux.abs() <= 1e-8, "flux {}", flux),
                SetKind::Volume => {
                    prop_assert!((flux - t.xi).abs() <= 1e-8, "flux {} vs xi {}", flux, t.xi);
                    prop_assert!(t.xi >= m.invariance().xi.floor());
                }
            }
        }
    }

    #[test]
    fn stability_correction_is_minimal_norm(
        h in prop::collection::vec(-3.0..3.0f64, 3),
        gv in prop::collection::vec(-3.0..3.0f64, 3),
        v in 0.01..5.0f64,
        eta in 0.0..2.0f64,
    ) {
        prop_assume!(norm(&gv) > 1e-2);
        let alpha = 0.01;
        let g = stability_mod(&h, v, &gv, eta, alpha, false).unwrap();
        let beta = dot(&gv, &h) + alpha * v;
        let delta: Vec<f64> = g.iter().zip(&h).map(|(a, b)| a - b).collect();
        if beta >= 0.0 {
            let ng = norm(&gv);
            prop_assert!((norm(&delta) - (beta + eta) / ng).abs() <= 1e-12 * (1.0 + norm(&delta)));
            let along = dot(&delta, &gv) / ng;
            let ortho: Vec<f64> = delta.iter().zip(&gv).map(|(d, u)| d - along * u / ng).collect();
            prop_assert!(norm(&ortho) <= 1e-12 * (1.0 + norm(&delta)));
        } else {
            prop_assert_eq!(g, h);
        }
    }

    #[test]
    fn point_set_collapses_to_equilibrium_construction(
        h in prop::collection::vec(-3.0..3.0f64, 2),
        gv in prop::collection::vec(-3.0..3.0f64, 2),
        v in 0.01..5.0f64,
    ) {
        prop_assume!(norm(&gv) > 1e-2);
        let a = stability_mod(&h, v, &gv, 0.0, 0.01, false).unwrap();
        let b = equilibrium_stable(&h, v, &gv, 0.01).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn lyapunov_gradient_matches_finite_differences() {
    let mut r = rng(21);
    let sets = [
        SetSpec::circle(2, 1.0).unwrap(),
        SetSpec::hyperplane(&[1.0, -0.5], 0.2).unwrap(),
        SetSpec::ball(2, 0.7).unwrap(),
        SetSpec::point(2).unwrap(),
    ];
    for (i, set) in sets.iter().enumerate() {
        let m = Architecture { q_hidden: vec![16, 16], ..Architecture::default() }.build(i as u64).unwrap();
        let lyap = m.lyapunov();
        let mut checked = 0;
        while checked < 1000 {
            let z = uniform_point(&mut r, 2, -2.5, 2.5);
            if set.project(&z).unwrap().ambiguous || set.c_value(&z).unwrap().abs() < 1e-3 {
                continue;
            }
            if set.kind() == SetKind::Volume && set.c_value(&z).unwrap() >= 0.0 {
                continue;
            }
            let g = lyap.grad(set, &z).unwrap();
            let fd = central_diff(|y| lyap.value(set, y).unwrap(), &z, 1e-6);
            let err = rel_err(&g, &fd, 1e-6);
            assert!(err <= 1e-5, "{:?} at {z:?}: {g:?} vs {fd:?}", set.shape());
            checked += 1;
        }
    }
}

#[test]
fn lyapunov_vanishes_on_members_and_is_positive_elsewhere() {
    let mut r = rng(22);
    for i in 0..3 {
        let m = small_model(set_choice(i), i as u64);
        for _ in 0..500 {
            let s = m.set().sample_member(&mut r);
            assert!(m.lyapunov().value(m.set(), &s).unwrap() <= 1e-8);
            let z = off_set_point(&m, &mut r);
            assert!(m.lyapunov().value(m.set(), &z).unwrap() > 0.0);
        }
    }
}

#[test]
fn equilibrium_baseline_decreases_off_the_origin() {
    let m = Architecture {
        kind: ModelKind::StableEquilibrium,
        h_hidden: vec![16, 16],
        q_hidden: vec![8],
        set: SetChoice::Point,
        ..Architecture::default()
    }
    .build(5)
    .unwrap();
    let mut r = rng(23);
    for _ in 0..2000 {
        let x = uniform_point(&mut r, 2, -3.0, 3.0);
        if norm(&x) < 1e-6 {
            continue;
        }
        let v = m.lyapunov().value(m.set(), &x).unwrap();
        let gv = m.lyapunov().grad(m.set(), &x).unwrap();
        let f = m.f_eval(&x).unwrap();
        assert!(v > 0.0);
        assert!(dot(&gv, &f) + m.stability().alpha * v <= 1e-8);
    }
}
