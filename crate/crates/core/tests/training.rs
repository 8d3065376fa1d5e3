mod common;

use common::{central_diff, central_jacobian, circle, dist, dot, norm, rel_err, rng, small_model, uniform_point};
use stabset::experiment::{train_kind, ExperimentConfig};
use stabset::model::{Architecture, SetChoice};
use stabset::nets::Icnn;
use stabset::ode::Trajectory;
use stabset::systems::{generate_dataset, line_attractor_rhs, unit_limit_cycle_rhs, Recipe, System};
use stabset::train::{
    derivative_loss, derivative_loss_grad, finite_diff_derivatives, train_loop, train_model, Provenance, Sample,
    TrainConfig, TrajectoryDataset,
};
use stabset::transform::TransformKind;
use stabset::ModelKind;

#[test]
fn recipes_have_the_documented_sizes() {
    let lc = generate_dataset(Recipe::LimitCycle, 0, 0.0).unwrap();
    assert_eq!((lc.train.len(), lc.val.len(), lc.test.len()), (80, 80, 20));
    assert!(lc.test.iter().all(|t| t.len() == 50));
    let la = generate_dataset(Recipe::LineAttractor, 0, 0.0).unwrap();
    assert_eq!((la.train.len(), la.val.len()), (16 * 80, 16 * 80));
    let vdp = generate_dataset(Recipe::VanDerPol, 0, 0.0).unwrap();
    assert_eq!((vdp.train.len(), vdp.val.len(), vdp.test.len()), (400, 225, 20));
    assert!(vdp.test.iter().all(|t| t.len() == 400));
}

#[test]
fn generation_is_deterministic_per_seed() {
    for r in [Recipe::LimitCycle, Recipe::VanDerPol] {
        let a = generate_dataset(r, 3, 0.01).unwrap();
        let b = generate_dataset(r, 3, 0.01).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = generate_dataset(r, 4, 0.01).unwrap();
        assert_ne!(a.test, c.test);
    }
}

#[test]
fn limit_cycle_field_is_radially_attracting() {
    let mut r = rng(1);
    for _ in 0..1000 {
        let x = uniform_point(&mut r, 2, -2.0, 2.0);
        let n2 = dot(&x, &x);
        let radial = dot(&x, &unit_limit_cycle_rhs(&x));
        assert!((radial - n2 * (1.0 - n2)).abs() <= 1e-12 * (1.0 + n2 * n2));
    }
}

#[test]
fn line_attractor_equilibria() {
    for c in [-3.0, 0.0, 2.5] {
        assert_eq!(line_attractor_rhs(&[0.0, c]), vec![0.0, 0.0]);
    }
}

/// Forward differences against the analytic field: the error is bounded by
/// `(Δt/2)·max‖ẍ‖`, with `ẍ = Df(x)·f(x)` from a finite-difference Jacobian.
#[test]
fn finite_difference_slopes_are_within_the_taylor_bound() {
    let sys = System::UnitLimitCycle;
    let dt = 0.075;
    for x0 in [[-0.1, 0.1], [1.5, 0.5], [-1.2, -0.4]] {
        let traj = sys.reference(&x0, dt, 20).unwrap();
        let ds = finite_diff_derivatives(&traj).unwrap();
        let max_acc = traj
            .states
            .iter()
            .map(|x| {
                let j = central_jacobian(unit_limit_cycle_rhs, x, 1e-6);
                let f = unit_limit_cycle_rhs(x);
                norm(&j.iter().map(|row| dot(row, &f)).collect::<Vec<_>>())
            })
            .fold(0.0, f64::max);
        for s in ds.samples() {
            let err = dist(&s.dx, &unit_limit_cycle_rhs(&s.x));
            assert!(err <= dt / 2.0 * max_acc * 1.05, "{err} vs bound {}", dt / 2.0 * max_acc);
        }
    }
}

#[test]
fn generated_trajectories_follow_the_field() {
    let data = generate_dataset(Recipe::LimitCycle, 0, 0.0).unwrap();
    let sys = System::UnitLimitCycle;
    for t in &data.test {
        for w in t.states.windows(2) {
            let step = sys.reference(&w[0], 0.075, 2).unwrap();
            assert!(dist(step.last(), &w[1]) <= 1e-6);
        }
    }
}

fn dataset(samples: Vec<Sample>) -> TrajectoryDataset {
    TrajectoryDataset::new(samples, 0.1, Provenance::Analytic).unwrap()
}

#[test]
fn derivative_loss_examples() {
    let mut m = small_model(circle(1.0), 0).with_kind(ModelKind::Vanilla).unwrap();
    let zeros = vec![0.0; m.n_params()];
    m.set_params(&zeros).unwrap();
    let ds = dataset(vec![Sample { x: vec![0.3, 0.4], dx: vec![1.0, 1.0] }]);
    assert_eq!(derivative_loss(&m, &ds).unwrap(), 2.0);
    let m = small_model(circle(1.0), 1);
    let mut r = rng(2);
    let own = dataset(
        (0..20)
            .map(|_| {
                let x = uniform_point(&mut r, 2, -2.0, 2.0);
                let dx = m.f_eval(&x).unwrap();
                Sample { x, dx }
            })
            .collect(),
    );
    assert_eq!(derivative_loss(&m, &own).unwrap(), 0.0);
}

#[test]
fn derivative_loss_gradient_matches_finite_differences() {
    let models = [
        Architecture {
            h_hidden: vec![6],
            q_hidden: vec![4],
            xi_hidden: vec![4],
            eta_hidden: Some(vec![4]),
            set: SetChoice::Circle { r: 1.2, axes: [0, 1], learnable: true },
            ..Architecture::default()
        },
        Architecture { h_hidden: vec![6], q_hidden: vec![4], set: SetChoice::Ball { r: 0.9, learnable: true }, ..Architecture::default() },
        Architecture {
            transform: TransformKind::Anode,
            d_aug: 1,
            psi_hidden: vec![5],
            phi_steps: 4,
            h_hidden: vec![6],
            q_hidden: vec![4],
            set: SetChoice::Hyperplane { c: vec![1.0, 0.4], b: 0.1, learnable: true, learnable_b: true },
            ..Architecture::default()
        },
    ];
    let mut r = rng(3);
    for (i, arch) in models.iter().enumerate() {
        let m = arch.build(i as u64).unwrap();
        let ds = dataset(
            (0..8)
                .map(|_| Sample { x: uniform_point(&mut r, 2, -2.0, 2.0), dx: uniform_point(&mut r, 2, -1.0, 1.0) })
                .collect(),
        );
        let p = m.params();
        let (v, g) = derivative_loss_grad(&m, &ds, &p).unwrap();
        assert!((v - derivative_loss(&m, &ds).unwrap()).abs() <= 1e-12 * v.max(1.0));
        let f = |q: &[f64]| {
            let mut mm = m.clone();
            mm.set_params(q).unwrap();
            derivative_loss(&mm, &ds).unwrap()
        };
        let fd = central_diff(f, &p, 1e-6);
        let err = rel_err(&g, &fd, 1e-6);
        assert!(err <= 1e-4, "model {i}: rel err {err}");
    }
}

#[test]
fn limit_cycle_loss_falls_over_the_first_ten_steps() {
    let mut cfg = ExperimentConfig::preset(Recipe::LimitCycle);
    cfg.train.max_epochs = 11;
    let data = cfg.data().unwrap();
    let (_, out) = train_kind(&cfg, ModelKind::Proposed, &data).unwrap();
    let losses: Vec<f64> = out.history.iter().map(|r| r.train_loss).collect();
    assert_eq!(losses.len(), 11);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn training_is_deterministic_and_keeps_structural_invariants() {
    let mut cfg = ExperimentConfig::preset(Recipe::LimitCycle);
    cfg.model = Architecture {
        h_hidden: vec![16, 16],
        q_hidden: vec![8],
        set: SetChoice::Circle { r: 0.8, axes: [0, 1], learnable: true },
        ..Architecture::default()
    };
    cfg.train = TrainConfig { lr: 1e-2, max_epochs: 100, patience: 1000, ..TrainConfig::default() };
    let data = cfg.data().unwrap();
    let (a, oa) = train_kind(&cfg, ModelKind::Proposed, &data).unwrap();
    let (b, ob) = train_kind(&cfg, ModelKind::Proposed, &data).unwrap();
    assert_eq!(a.params(), b.params());
    assert_eq!(oa, ob);
    assert_eq!(oa.history.len(), 100);
    // The best epoch is never worse than any recorded epoch.
    assert!(oa.history.iter().all(|r| oa.best_val <= r.val_loss));
    assert!(a.set().coefficients()[0].1 > 0.0);
    let q: &Icnn = &a.lyapunov().q;
    let mut r = rng(4);
    for _ in 0..10_000 {
        let u = uniform_point(&mut r, 2, -3.0, 3.0);
        let v = uniform_point(&mut r, 2, -3.0, 3.0);
        let m: Vec<f64> = u.iter().zip(&v).map(|(x, y)| 0.5 * (x + y)).collect();
        assert!(q.eval(&m).unwrap() <= 0.5 * (q.eval(&u).unwrap() + q.eval(&v).unwrap()) + 1e-9);
    }
}

#[test]
fn training_reduces_validation_loss() {
    let mut cfg = ExperimentConfig::preset(Recipe::LimitCycle);
    cfg.train = TrainConfig { lr: 3e-3, max_epochs: 300, patience: 50, ..TrainConfig::default() };
    let data = cfg.data().unwrap();
    let model = cfg.architecture(ModelKind::Proposed).build(cfg.seed).unwrap();
    let before = derivative_loss(&model, &data.val).unwrap();
    let (trained, out) = train_model(&model, &data.train, &data.val, &cfg.train).unwrap();
    assert!((derivative_loss(&trained, &data.val).unwrap() - out.best_val).abs() <= 1e-12 * out.best_val);
    assert!(out.best_val < before);
}

#[test]
fn train_loop_rejects_bad_configuration() {
    struct Never;
    impl stabset::train::Objective for Never {
        fn loss_and_grad(&mut self, _: &[f64]) -> stabset::Result<(f64, Vec<f64>)> {
            unreachable!()
        }
        fn val_loss(&mut self, _: &[f64]) -> stabset::Result<f64> {
            unreachable!()
        }
    }
    let cfg = TrainConfig { lr: -1.0, ..TrainConfig::default() };
    assert!(train_loop(&mut Never, &[0.0], None, &cfg).is_err());
}

#[test]
fn finite_difference_dataset_round_trips_through_csv() {
    let traj = Trajectory::new(vec![0.0, 0.5, 1.0], vec![vec![0.0, 1.0], vec![0.5, 1.0], vec![1.0, 1.0]]).unwrap();
    let ds = finite_diff_derivatives(&traj).unwrap();
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).unwrap();
    let back = TrajectoryDataset::read_csv(&buf[..], 0.5, Provenance::FiniteDifference).unwrap();
    assert_eq!(back, ds);
}
