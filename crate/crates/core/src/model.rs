//! Full model `f(x)`: transform, base field, stability correction,
//! invariance correction, and the map back; plus the two baselines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{consts, Scalar};
use crate::nets::{Icnn, Mlp, Sigma, Slack};
use crate::sets::{SetKind, SetSpec, Shape, DEFAULT_BAND};
use crate::stable::{
    equilibrium_stable, has_boundary, invariance_mod, stability_mod, InvarianceConfig, LyapunovNet, StabilityConfig,
    DEFAULT_ALPHA, DEFAULT_EPS_V, DEFAULT_XI_MIN,
};
use crate::transform::{solve, CarryMode, Transform, TransformKind, DEFAULT_AUG, DEFAULT_STEPS};
use crate::{check_dim, Error, Result};

/// Version tag written into model documents.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// All five stages.
    Proposed,
    /// `φ⁻¹(h(φ(x)))`, no corrections.
    Vanilla,
    /// Single stable equilibrium at the origin, in the original coordinates.
    StableEquilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionMode {
    /// `f(x) = φ⁻¹(f̃(φ(x)))`.
    #[default]
    PaperComposition,
    /// `f(x) = (Dφ(x))⁻¹ f̃(φ(x))`.
    JacobianPullback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableModel {
    kind: ModelKind,
    composition: CompositionMode,
    transform: Transform,
    h: Mlp,
    lyapunov: LyapunovNet,
    set: SetSpec,
    stability: StabilityConfig,
    invariance: InvarianceConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    version: u32,
    d: usize,
    model_kind: ModelKind,
    composition_mode: CompositionMode,
    transform: Transform,
    h: Mlp,
    lyapunov: LyapunovNet,
    set: SetSpec,
    stability: StabilityConfig,
    invariance: InvarianceConfig,
}

/// Offsets of each component inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub transform: (usize, usize),
    pub h: (usize, usize),
    pub q: (usize, usize),
    pub eta: (usize, usize),
    pub xi: (usize, usize),
    pub set: (usize, usize),
}

impl Layout {
    pub fn len(&self) -> usize {
        self.set.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn slice<T>(p: &[T], r: (usize, usize)) -> &[T] {
    &p[r.0..r.1]
}

/// Intermediate quantities of one latent evaluation, for inspection.
#[derive(Debug, Clone)]
pub struct LatentTrace {
    pub z: Vec<f64>,
    pub h: Vec<f64>,
    pub v: f64,
    pub grad_v: Vec<f64>,
    pub on_set: bool,
    pub ambiguous: bool,
    pub eta: f64,
    pub g: Vec<f64>,
    pub c: f64,
    pub xi: f64,
    pub f_tilde: Vec<f64>,
}

impl StableModel {
    /// Assembles and validates a model from its components.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: ModelKind,
        composition: CompositionMode,
        transform: Transform,
        h: Mlp,
        lyapunov: LyapunovNet,
        set: SetSpec,
        stability: StabilityConfig,
        invariance: InvarianceConfig,
    ) -> Result<Self> {
        let m = StableModel { kind, composition, transform, h, lyapunov, set, stability, invariance };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let d = self.transform.dim();
        let shape = |what: &str| Error::Shape(format!("{what} does not match model dimension {d}"));
        if self.h.input_dim() != d || self.h.output_dim() != d {
            return Err(shape("base field"));
        }
        if self.lyapunov.q.dim() != d {
            return Err(shape("convex network"));
        }
        if self.set.dim() != d {
            return Err(shape("set"));
        }
        for (name, slack) in [("eta", &self.stability.eta), ("xi", &self.invariance.xi)] {
            if let Slack::Nonnegative { net } | Slack::Positive { net, .. } = slack {
                if net.input_dim() != d || net.output_dim() != 1 {
                    return Err(shape(name));
                }
            }
        }
        self.stability.validate()?;
        if has_boundary(&self.set) {
            self.invariance.validate(self.set.kind())?;
        }
        if self.kind == ModelKind::StableEquilibrium {
            if !self.transform.is_identity() {
                return Err(Error::Invalid("the equilibrium baseline works without a transform".into()));
            }
            if self.set.shape() != &Shape::Point {
                return Err(Error::Invalid("the equilibrium baseline needs the point set".into()));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn composition(&self) -> CompositionMode {
        self.composition
    }

    pub fn dim(&self) -> usize {
        self.transform.dim()
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn h(&self) -> &Mlp {
        &self.h
    }

    pub fn lyapunov(&self) -> &LyapunovNet {
        &self.lyapunov
    }

    pub fn set(&self) -> &SetSpec {
        &self.set
    }

    pub fn stability(&self) -> &StabilityConfig {
        &self.stability
    }

    pub fn invariance(&self) -> &InvarianceConfig {
        &self.invariance
    }

    /// Same parameters, different model kind (no validation of the point
    /// set requirement beyond the usual checks).
    pub fn with_kind(mut self, kind: ModelKind) -> Result<Self> {
        self.kind = kind;
        self.validate()?;
        Ok(self)
    }

    pub fn with_composition(mut self, composition: CompositionMode) -> Self {
        self.composition = composition;
        self
    }

    pub fn layout(&self) -> Layout {
        let mut at = 0;
        let mut next = |n: usize| {
            let r = (at, at + n);
            at += n;
            r
        };
        Layout {
            transform: next(self.transform.params().len()),
            h: next(self.h.n_params()),
            q: next(self.lyapunov.q.n_params()),
            eta: next(self.stability.eta.n_params()),
            xi: next(self.invariance.xi.n_params()),
            set: next(self.set.params().len()),
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().len()
    }

    /// All parameters, flattened in layout order.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(self.transform.params());
        p.extend_from_slice(self.h.params());
        p.extend_from_slice(self.lyapunov.q.params());
        p.extend_from_slice(self.stability.eta.params());
        p.extend_from_slice(self.invariance.xi.params());
        p.extend_from_slice(self.set.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let l = self.layout();
        check_dim("model parameters", l.len(), p.len())?;
        self.transform.params_mut().copy_from_slice(slice(p, l.transform));
        self.h.params_mut().copy_from_slice(slice(p, l.h));
        self.lyapunov.q.params_mut().copy_from_slice(slice(p, l.q));
        self.stability.eta.params_mut().copy_from_slice(slice(p, l.eta));
        self.invariance.xi.params_mut().copy_from_slice(slice(p, l.xi));
        self.set.params_mut().copy_from_slice(slice(p, l.set));
        Ok(())
    }

    /// Which parameters the optimizer may change. Set coefficients follow
    /// their learnable flags; everything else is trainable.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let l = self.layout();
        let mut mask = vec![true; l.len()];
        for (m, &on) in mask[l.set.0..l.set.1].iter_mut().zip(self.set.learnable()) {
            *m = on;
        }
        mask
    }

    /// `f̃(z)` with parameters `p`.
    pub fn latent_field_with<S: Scalar>(&self, p: &[S], z: &[S]) -> Result<Vec<S>> {
        let l = self.layout();
        let h = self.h.forward(slice(p, l.h), z)?;
        if self.kind == ModelKind::Vanilla {
            return Ok(h);
        }
        let q_eff = self.lyapunov.q.effective(slice(p, l.q));
        let set_raw = slice(p, l.set);
        let ve = self.lyapunov.value_and_grad_with(&q_eff, &self.set, set_raw, z)?;
        if ve.ambiguous {
            log::debug!("projection ambiguous at {:?}", crate::ad::values(z));
        }
        if self.kind == ModelKind::StableEquilibrium {
            if ve.on_set {
                return Ok(h);
            }
            return equilibrium_stable(&h, ve.v, &ve.grad, self.stability.alpha);
        }
        let eta = if ve.on_set { S::zero() } else { self.stability.eta.forward(slice(p, l.eta), z)? };
        let g = stability_mod(&h, ve.v, &ve.grad, eta, self.stability.alpha, ve.on_set)?;
        if !has_boundary(&self.set) {
            return Ok(g);
        }
        let c = self.set.c_value_with(set_raw, z);
        if c.value().abs() > self.invariance.band {
            return Ok(g);
        }
        let grad_c = self.set.c_grad_with(set_raw, z)?;
        let xi = self.invariance.xi.forward(slice(p, l.xi), z)?;
        invariance_mod(&g, c, &grad_c, xi, self.invariance.band)
    }

    /// `f(x)` with parameters `p`.
    pub fn eval_with<S: Scalar>(&self, p: &[S], x: &[S]) -> Result<Vec<S>> {
        check_dim("model input", self.dim(), x.len())?;
        let l = self.layout();
        let tp = slice(p, l.transform);
        if self.transform.is_identity() {
            return self.latent_field_with(p, x);
        }
        match self.composition {
            CompositionMode::PaperComposition => {
                let lat = self.transform.forward_with(tp, x)?;
                let ft = self.latent_field_with(p, &lat.z)?;
                self.transform.inverse_with(tp, &ft, &lat.a)
            }
            CompositionMode::JacobianPullback => {
                let (lat, jac) = self.transform.jacobian_with(tp, x)?;
                let ft = self.latent_field_with(p, &lat.z)?;
                solve(jac, ft)
            }
        }
    }

    /// `f(x)`.
    pub fn f_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.params();
        let y = self.eval_with(&p, x)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { primitive: "f_eval", operands: x.to_vec() });
        }
        Ok(y)
    }

    /// `f̃(z)` in latent coordinates.
    pub fn latent_field(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim("latent input", self.dim(), z.len())?;
        self.latent_field_with(&self.params(), z)
    }

    /// `z = φ(x)`.
    pub fn latent(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.transform.forward(x)?.z)
    }

    /// `V(φ(x))`.
    pub fn v_at_x(&self, x: &[f64]) -> Result<f64> {
        let z = self.latent(x)?;
        self.lyapunov.value(&self.set, &z)
    }

    /// Whether `φ(x)` lies in the latent set up to `tol`.
    pub fn in_set_x(&self, x: &[f64], tol: f64) -> Result<bool> {
        let z = self.latent(x)?;
        self.set.contains(&z, tol)
    }

    /// Every intermediate of the latent pipeline at `z`.
    pub fn trace(&self, z: &[f64]) -> Result<LatentTrace> {
        check_dim("latent input", self.dim(), z.len())?;
        let p = self.params();
        let l = self.layout();
        let h = self.h.eval(z)?;
        let eff = self.lyapunov.q.effective(self.lyapunov.q.params());
        let ve = self.lyapunov.value_and_grad_with(&eff, &self.set, self.set.params(), z)?;
        let grad_v = if ve.on_set { vec![0.0; z.len()] } else { ve.grad.clone() };
        let eta = if ve.on_set { 0.0 } else { self.stability.eta.eval(z)? };
        let g = stability_mod(&h, ve.v, &grad_v, eta, self.stability.alpha, ve.on_set)?;
        let c = self.set.c_value(z)?;
        let xi = self.invariance.xi.forward(slice(&p, l.xi), z)?;
        let f_tilde = self.latent_field_with(&p, &consts::<f64>(z))?;
        Ok(LatentTrace { z: z.to_vec(), h, v: ve.v, grad_v, on_set: ve.on_set, ambiguous: ve.ambiguous, eta, g, c, xi, f_tilde })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            version: MODEL_VERSION,
            d: self.dim(),
            model_kind: self.kind,
            composition_mode: self.composition,
            transform: self.transform.clone(),
            h: self.h.clone(),
            lyapunov: self.lyapunov.clone(),
            set: self.set.clone(),
            stability: self.stability.clone(),
            invariance: self.invariance.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Shape("model document has no version".into()))?;
        if found != MODEL_VERSION as u64 {
            return Err(Error::Version { found: found as u32, expected: MODEL_VERSION });
        }
        let doc: ModelDoc = serde_json::from_value(value)?;
        let m = StableModel::new(
            doc.model_kind,
            doc.composition_mode,
            doc.transform,
            doc.h,
            doc.lyapunov,
            doc.set,
            doc.stability,
            doc.invariance,
        )?;
        if m.dim() != doc.d {
            return Err(Error::Shape(format!("document dimension {} disagrees with components ({})", doc.d, m.dim())));
        }
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Set choice in an architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetChoice {
    Sphere {
        r: f64,
        #[serde(default)]
        learnable: bool,
    },
    Circle {
        r: f64,
        #[serde(default = "default_axes")]
        axes: [usize; 2],
        #[serde(default)]
        learnable: bool,
    },
    Torus {
        big_r: f64,
        r: f64,
        #[serde(default)]
        learnable: bool,
    },
    Hyperplane {
        c: Vec<f64>,
        b: f64,
        /// Applies to the normal `c`.
        #[serde(default)]
        learnable: bool,
        #[serde(default)]
        learnable_b: bool,
    },
    Ball {
        r: f64,
        #[serde(default)]
        learnable: bool,
    },
    Point,
}

fn default_axes() -> [usize; 2] {
    [0, 1]
}

impl SetChoice {
    pub fn build(&self, d: usize) -> Result<SetSpec> {
        Ok(match self {
            SetChoice::Sphere { r, learnable } => SetSpec::sphere(d, *r)?.with_learnable(*learnable),
            SetChoice::Circle { r, axes, learnable } => SetSpec::axis_circle(d, *r, *axes)?.with_learnable(*learnable),
            SetChoice::Torus { big_r, r, learnable } => SetSpec::torus(d, *big_r, *r)?.with_learnable(*learnable),
            SetChoice::Hyperplane { c, b, learnable, learnable_b } => {
                check_dim("hyperplane normal", d, c.len())?;
                let mut flags = vec![*learnable; d];
                flags.push(*learnable_b);
                SetSpec::hyperplane(c, *b)?.with_learnable_mask(&flags)?
            }
            SetChoice::Ball { r, learnable } => SetSpec::ball(d, *r)?.with_learnable(*learnable),
            SetChoice::Point => SetSpec::point(d)?,
        })
    }
}

/// Everything needed to build a freshly initialised model from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub d: usize,
    pub kind: ModelKind,
    pub composition: CompositionMode,
    pub transform: TransformKind,
    pub d_aug: usize,
    pub psi_hidden: Vec<usize>,
    pub phi_steps: usize,
    pub carry: CarryMode,
    pub h_hidden: Vec<usize>,
    pub q_hidden: Vec<usize>,
    pub sigma_width: f64,
    pub eps_v: f64,
    pub alpha: f64,
    /// Hidden sizes of `η`; `None` means `η ≡ 0`. A nonzero `η` adds a
    /// correction of size `η/‖∇V‖`, which grows without bound near the set,
    /// so fixed-step rollouts near `S̃` need small steps.
    pub eta_hidden: Option<Vec<usize>>,
    pub xi_hidden: Vec<usize>,
    pub xi_min: f64,
    pub set: SetChoice,
    pub band: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            d: 2,
            kind: ModelKind::Proposed,
            composition: CompositionMode::PaperComposition,
            transform: TransformKind::Identity,
            d_aug: DEFAULT_AUG,
            psi_hidden: vec![32, 32],
            phi_steps: DEFAULT_STEPS,
            carry: CarryMode::Forward,
            h_hidden: vec![64, 64],
            q_hidden: vec![16],
            sigma_width: 0.1,
            eps_v: DEFAULT_EPS_V,
            alpha: DEFAULT_ALPHA,
            eta_hidden: None,
            xi_hidden: vec![16],
            xi_min: DEFAULT_XI_MIN,
            set: SetChoice::Circle { r: 1.0, axes: [0, 1], learnable: false },
            band: DEFAULT_BAND,
        }
    }
}

/// Independent random streams per component, so models of different kinds
/// built from one seed share their transform and base field.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Architecture {
    pub fn build(&self, seed: u64) -> Result<StableModel> {
        let d = self.d;
        let transform = if self.kind == ModelKind::StableEquilibrium {
            Transform::identity(d)
        } else {
            Transform::random(self.transform, d, self.d_aug, &self.psi_hidden, self.phi_steps, &mut stream(seed, 1))?
                .with_carry(self.carry)
        };
        let mut h_dims = vec![d];
        h_dims.extend_from_slice(&self.h_hidden);
        h_dims.push(d);
        let h = Mlp::new(&h_dims, &mut stream(seed, 2));
        let q = Icnn::new(d, &self.q_hidden, &mut stream(seed, 3));
        let lyapunov = LyapunovNet::new(q, Sigma::new(self.sigma_width)?, self.eps_v)?;
        let eta = match &self.eta_hidden {
            Some(hidden) => Slack::nonnegative(d, hidden, &mut stream(seed, 4)),
            None => Slack::Zero,
        };
        let set = if self.kind == ModelKind::StableEquilibrium { SetSpec::point(d)? } else { self.set.build(d)? };
        let xi = match set.kind() {
            SetKind::Volume => Slack::positive(d, &self.xi_hidden, self.xi_min, &mut stream(seed, 5)),
            SetKind::Surface => Slack::Zero,
        };
        StableModel::new(
            self.kind,
            self.composition,
            transform,
            h,
            lyapunov,
            set,
            StabilityConfig { alpha: self.alpha, eta },
            InvarianceConfig { xi, band: self.band },
        )
    }
}
