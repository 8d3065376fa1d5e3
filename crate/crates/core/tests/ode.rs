mod common;

use std::f64::consts::TAU;

use common::{dist, norm, rng, uniform_point};
use proptest::prelude::*;
use stabset::experiment::recurrence_distances;
use stabset::ode::{rk45_reference, rk4_step, rollout, uniform_times, Tolerances, Trajectory};
use stabset::systems::{unit_limit_cycle_rhs, System};

type Mat = Vec<Vec<f64>>;

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// `exp(A)` by scaling and squaring of a long Taylor series.
fn expm(a: &Mat) -> Mat {
    let n = a.len();
    let s = 10;
    let scaled: Mat = a.iter().map(|r| r.iter().map(|v| v / f64::from(1 << s)).collect()).collect();
    let mut result: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut term = result.clone();
    for k in 1..20 {
        term = matmul(&term, &scaled).iter().map(|r| r.iter().map(|v| v / k as f64).collect()).collect();
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = matmul(&result, &result);
    }
    result
}

#[test]
fn rk4_step_matches_matrix_exponential_to_fifth_order() {
    let mut r = rng(1);
    for _ in 0..20 {
        let a: Mat = (0..3).map(|_| uniform_point(&mut r, 3, -1.0, 1.0)).collect();
        let x = uniform_point(&mut r, 3, -1.0, 1.0);
        let local = |dt: f64| {
            let y = rk4_step(|u| Ok(matvec(&a, u)), &x, dt).unwrap();
            let step: Mat = a.iter().map(|row| row.iter().map(|v| v * dt).collect()).collect();
            dist(&y, &matvec(&expm(&step), &x))
        };
        let (e1, e2) = (local(0.1), local(0.05));
        assert!(e1 <= 1e-5, "local error {e1}");
        let ratio = e1 / e2;
        assert!((16.0..=64.0).contains(&ratio), "local ratio {ratio}");
    }
}

fn harmonic(x: &[f64]) -> stabset::Result<Vec<f64>> {
    Ok(vec![x[1], -x[0]])
}

#[test]
fn rk4_global_error_is_fourth_order() {
    let x0 = [1.0, 0.0];
    let end = |n: usize| {
        let tr = rollout(harmonic, &x0, TAU / n as f64, n).unwrap();
        dist(tr.last(), &x0)
    };
    let ratio = end(50) / end(100);
    assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn reference_returns_after_one_period() {
    let tol = Tolerances::default();
    let tr = rk45_reference(harmonic, &[1.0, 0.0], &[0.0, TAU], tol).unwrap();
    assert!(dist(tr.last(), &[1.0, 0.0]) <= 10.0 * tol.abs.max(tol.rel));
}

#[test]
fn reference_conserves_energy_of_undamped_oscillator() {
    let sys = System::VanDerPol { mu: 0.0 };
    let times = uniform_times(0.0, TAU / 200.0, 200);
    let tr = rk45_reference(|x| sys.rhs(x), &[0.6, -0.8], &times, Tolerances::default()).unwrap();
    for s in &tr.states {
        assert!((norm(s).powi(2) - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn reference_integrates_constant_field() {
    let tr = rk45_reference(|_| Ok(vec![0.0, 0.0]), &[2.0, -1.0], &uniform_times(0.0, 0.5, 10), Tolerances::default()).unwrap();
    assert!(tr.states.iter().all(|s| s == &vec![2.0, -1.0]));
}

#[test]
fn van_der_pol_settles_on_a_closed_orbit() {
    let tr = System::VanDerPol { mu: 2.0 }.reference(&[0.5, 0.5], 0.05, 1601).unwrap();
    let tail = Trajectory::new(tr.times[800..].to_vec(), tr.states[800..].to_vec()).unwrap();
    let d = recurrence_distances(&tail);
    assert!(d.len() >= 3);
    assert!(d.iter().all(|&v| v < 1e-2), "{d:?}");
}

#[test]
fn limit_cycle_rollout_reaches_the_circle() {
    let rk4 = rollout(|x| Ok(unit_limit_cycle_rhs(x)), &[-0.1, 0.1], 0.075, 200).unwrap();
    assert!((norm(rk4.last()) - 1.0).abs() <= 1e-3);
    let reference = System::UnitLimitCycle.reference(&[-0.1, 0.1], 0.075, 201).unwrap();
    assert!((norm(reference.last()) - 1.0).abs() <= 1e-3);
    // RK4 at this step agrees with the tight-tolerance reference up to its
    // own truncation error.
    let worst = rk4.states.iter().zip(&reference.states).map(|(a, b)| dist(a, b)).fold(0.0, f64::max);
    assert!(worst <= 1e-4, "max deviation {worst}");
}

proptest! {
    #[test]
    fn rollout_prefix_is_shorter_rollout(x in prop::collection::vec(-2.0..2.0f64, 2), m in 0usize..30) {
        let long = rollout(|x| Ok(unit_limit_cycle_rhs(x)), &x, 0.05, 30).unwrap();
        let short = rollout(|x| Ok(unit_limit_cycle_rhs(x)), &x, 0.05, m).unwrap();
        prop_assert_eq!(&long.states[..=m], &short.states[..]);
        prop_assert_eq!(&long.times[..=m], &short.times[..]);
    }
}
