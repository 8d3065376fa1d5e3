//! Primitive invariant sets: defining function `C`, its gradient, the
//! orthogonal projection `P`, and membership.
//!
//! Coefficients are stored as raw parameters. Radii pass through softplus
//! so they stay positive under any update; hyperplane coefficients are used
//! as is. All geometry is generic over [`Scalar`] so the projection can be
//! differentiated with respect to both the point and the coefficients.

use serde::{Deserialize, Serialize};

use crate::ad::{inv_softplus, softplus, Scalar, DENOM_FLOOR};
use crate::{Error, Result};

/// Below this distance the projection direction is undefined.
pub const AMBIGUITY_RADIUS: f64 = 1e-12;

/// Default half-width of the boundary band `|C(z)| ≤ ε_band`.
pub const DEFAULT_BAND: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    /// `{C ≥ 0}`.
    Volume,
    /// `{C = 0}`.
    Surface,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// `‖z‖ = r`.
    SphereSurface,
    /// `z_i² + z_j² = r²`; the other coordinates are free, so in more than
    /// two dimensions this is a cylinder.
    AxisCircle { axes: [usize; 2] },
    /// `(√(z₁²+z₂²) − R)² + z₃² = r²`.
    Torus2,
    /// `cᵀz = b`.
    Hyperplane,
    /// `‖z‖ ≤ r`.
    Ball,
    /// The origin. Reduces the construction to a stable equilibrium.
    Point,
}

impl Shape {
    pub fn kind(&self) -> SetKind {
        match self {
            Shape::Ball => SetKind::Volume,
            _ => SetKind::Surface,
        }
    }

    fn coefficient_names(&self, d: usize) -> Vec<String> {
        match self {
            Shape::SphereSurface | Shape::AxisCircle { .. } | Shape::Ball => vec!["r".into()],
            Shape::Torus2 => vec!["R".into(), "r".into()],
            Shape::Hyperplane => {
                let mut v: Vec<String> = (1..=d).map(|i| format!("c{i}")).collect();
                v.push("b".into());
                v
            }
            Shape::Point => vec![],
        }
    }
}

/// Projection result. `ambiguous` marks points where the nearest point is
/// not unique; a fixed representative is returned there.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<S> {
    pub point: Vec<S>,
    pub ambiguous: bool,
}

/// An invariant-set specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetDoc", into = "SetDoc")]
pub struct SetSpec {
    shape: Shape,
    d: usize,
    raw: Vec<f64>,
    learnable: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetDoc {
    kind: SetKind,
    shape: Shape,
    d: usize,
    /// Natural-unit values, informational.
    coefficients: Vec<(String, f64)>,
    /// Stored parameters: softplus preimages of radii, direct values
    /// otherwise.
    raw: Vec<f64>,
    learnable: Vec<bool>,
}

impl SetSpec {
    fn build(shape: Shape, d: usize, raw: Vec<f64>) -> Result<Self> {
        let n = raw.len();
        let spec = SetSpec { shape, d, raw, learnable: vec![false; n] };
        spec.validate()?;
        Ok(spec)
    }

    fn radius_raw(r: f64) -> Result<f64> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Invalid(format!("radius must be positive, got {r}")));
        }
        Ok(inv_softplus(r))
    }

    pub fn sphere(d: usize, r: f64) -> Result<Self> {
        Self::build(Shape::SphereSurface, d, vec![Self::radius_raw(r)?])
    }

    /// Circle in the `(z₁, z₂)` plane.
    pub fn circle(d: usize, r: f64) -> Result<Self> {
        Self::axis_circle(d, r, [0, 1])
    }

    pub fn axis_circle(d: usize, r: f64, axes: [usize; 2]) -> Result<Self> {
        Self::build(Shape::AxisCircle { axes }, d, vec![Self::radius_raw(r)?])
    }

    /// Torus with major radius `big_r` and minor radius `r`, `big_r > r`.
    /// Stored as `r = softplus(ρ₁)`, `R = r + softplus(ρ₀)`.
    pub fn torus(d: usize, big_r: f64, r: f64) -> Result<Self> {
        if !(big_r > r) {
            return Err(Error::Invalid(format!("torus needs R > r, got R={big_r}, r={r}")));
        }
        Self::build(Shape::Torus2, d, vec![Self::radius_raw(big_r - r)?, Self::radius_raw(r)?])
    }

    pub fn hyperplane(c: &[f64], b: f64) -> Result<Self> {
        let mut raw = c.to_vec();
        raw.push(b);
        Self::build(Shape::Hyperplane, c.len(), raw)
    }

    pub fn ball(d: usize, r: f64) -> Result<Self> {
        Self::build(Shape::Ball, d, vec![Self::radius_raw(r)?])
    }

    pub fn point(d: usize) -> Result<Self> {
        Self::build(Shape::Point, d, vec![])
    }

    /// Marks every coefficient as learnable (or not).
    pub fn with_learnable(mut self, on: bool) -> Self {
        self.learnable.iter_mut().for_each(|l| *l = on);
        self
    }

    /// Per-coefficient learnable flags, in storage order.
    pub fn with_learnable_mask(mut self, flags: &[bool]) -> Result<Self> {
        crate::check_dim("learnable flags", self.learnable.len(), flags.len())?;
        self.learnable.copy_from_slice(flags);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Invalid("set dimension must be positive".into()));
        }
        let need = match &self.shape {
            Shape::AxisCircle { axes } => {
                if axes[0] == axes[1] {
                    return Err(Error::Invalid("circle axes must differ".into()));
                }
                axes[0].max(axes[1]) + 1
            }
            Shape::Torus2 => 3,
            _ => 1,
        };
        if self.d < need {
            return Err(Error::Invalid(format!("{:?} needs dimension ≥ {need}, got {}", self.shape, self.d)));
        }
        let n = self.shape.coefficient_names(self.d).len();
        if self.raw.len() != n || self.learnable.len() != n {
            return Err(Error::Shape(format!("{:?} expects {n} coefficients", self.shape)));
        }
        if self.raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("set coefficients must be finite".into()));
        }
        if self.shape == Shape::Hyperplane {
            let nc = self.raw[..self.d].iter().map(|c| c * c).sum::<f64>().sqrt();
            if nc < DENOM_FLOOR {
                return Err(Error::Invalid("hyperplane normal must be nonzero".into()));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn kind(&self) -> SetKind {
        self.shape.kind()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn params(&self) -> &[f64] {
        &self.raw
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub fn learnable(&self) -> &[bool] {
        &self.learnable
    }

    /// Coefficients in natural units, paired with their names.
    pub fn coefficients(&self) -> Vec<(String, f64)> {
        let vals = self.natural(&self.raw);
        self.shape.coefficient_names(self.d).into_iter().zip(vals).collect()
    }

    /// Natural coefficients from raw parameters: radii (`R`, `r`) or `(c, b)`.
    pub fn natural<S: Scalar>(&self, raw: &[S]) -> Vec<S> {
        match self.shape {
            Shape::Torus2 => {
                let r = softplus(raw[1]);
                vec![r + softplus(raw[0]), r]
            }
            Shape::Hyperplane | Shape::Point => raw.to_vec(),
            _ => vec![softplus(raw[0])],
        }
    }

    fn check_point(&self, len: usize) -> Result<()> {
        crate::check_dim("set point", self.d, len)
    }

    /// `C(z)` for coefficients `raw`.
    pub fn c_value_with<S: Scalar>(&self, raw: &[S], z: &[S]) -> S {
        let k = self.natural(raw);
        match &self.shape {
            Shape::SphereSurface => sq_norm(z) - k[0] * k[0],
            Shape::AxisCircle { axes } => z[axes[0]].square() + z[axes[1]].square() - k[0] * k[0],
            Shape::Torus2 => {
                let rho = (z[0].square() + z[1].square()).sqrt();
                (rho - k[0]).square() + z[2].square() - k[1] * k[1]
            }
            Shape::Hyperplane => S::dot(&k[..self.d], z, S::zero()) - k[self.d],
            Shape::Ball => k[0] * k[0] - sq_norm(z),
            Shape::Point => sq_norm(z),
        }
    }

    /// Analytic `∇C(z)`.
    pub fn c_grad_with<S: Scalar>(&self, raw: &[S], z: &[S]) -> Result<Vec<S>> {
        let k = self.natural(raw);
        let mut g = vec![S::zero(); z.len()];
        match &self.shape {
            Shape::SphereSurface | Shape::Point => {
                for (gi, &zi) in g.iter_mut().zip(z) {
                    *gi = zi * 2.0;
                }
            }
            Shape::AxisCircle { axes } => {
                g[axes[0]] = z[axes[0]] * 2.0;
                g[axes[1]] = z[axes[1]] * 2.0;
            }
            Shape::Torus2 => {
                let rho = (z[0].square() + z[1].square()).sqrt();
                if rho.value() < AMBIGUITY_RADIUS {
                    return Err(Error::Singular { locus: "torus axis z1 = z2 = 0" });
                }
                let s = (rho - k[0]) * 2.0 / rho;
                g[0] = s * z[0];
                g[1] = s * z[1];
                g[2] = z[2] * 2.0;
            }
            Shape::Hyperplane => g.copy_from_slice(&k[..self.d]),
            Shape::Ball => {
                for (gi, &zi) in g.iter_mut().zip(z) {
                    *gi = zi * -2.0;
                }
            }
        }
        Ok(g)
    }

    /// Nearest point of the set to `z`.
    pub fn project_with<S: Scalar>(&self, raw: &[S], z: &[S]) -> Projection<S> {
        let k = self.natural(raw);
        match &self.shape {
            Shape::SphereSurface => {
                let (point, ambiguous) = radial(z, k[0]);
                Projection { point, ambiguous }
            }
            Shape::AxisCircle { axes } => {
                let plane = [z[axes[0]], z[axes[1]]];
                let (p, ambiguous) = radial(&plane, k[0]);
                let mut point = z.to_vec();
                point[axes[0]] = p[0];
                point[axes[1]] = p[1];
                Projection { point, ambiguous }
            }
            Shape::Torus2 => {
                // Nearest point on the core circle, then radially onto the tube.
                let (core, on_axis) = radial(&[z[0], z[1]], k[0]);
                let w = [z[0] - core[0], z[1] - core[1], z[2]];
                let (tube, on_core) = if w.iter().all(|x| x.value() == 0.0) || norm(&w).value() < AMBIGUITY_RADIUS
                {
                    // Representative: the outer equator direction.
                    let rho = norm(&core);
                    ([core[0] / rho * k[1], core[1] / rho * k[1], S::zero()], true)
                } else {
                    let nw = norm(&w);
                    ([w[0] / nw * k[1], w[1] / nw * k[1], w[2] / nw * k[1]], false)
                };
                let mut point = z.to_vec();
                point[0] = core[0] + tube[0];
                point[1] = core[1] + tube[1];
                point[2] = tube[2];
                Projection { point, ambiguous: on_axis || on_core }
            }
            Shape::Hyperplane => {
                let c = &k[..self.d];
                let t = (S::dot(c, z, S::zero()) - k[self.d]) / sq_norm(c);
                let point = z.iter().zip(c).map(|(&zi, &ci)| zi - t * ci).collect();
                Projection { point, ambiguous: false }
            }
            Shape::Ball => {
                if sq_norm(z).value() <= (k[0] * k[0]).value() {
                    Projection { point: z.to_vec(), ambiguous: false }
                } else {
                    let (point, _) = radial(z, k[0]);
                    Projection { point, ambiguous: false }
                }
            }
            Shape::Point => Projection { point: vec![S::zero(); z.len()], ambiguous: false },
        }
    }

    pub fn c_value(&self, z: &[f64]) -> Result<f64> {
        self.check_point(z.len())?;
        Ok(self.c_value_with(&self.raw, z))
    }

    pub fn c_grad(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_point(z.len())?;
        self.c_grad_with(&self.raw, z)
    }

    pub fn project(&self, z: &[f64]) -> Result<Projection<f64>> {
        self.check_point(z.len())?;
        Ok(self.project_with(&self.raw, z))
    }

    /// Surface: `|C| ≤ tol`; volume: `C ≥ −tol`.
    pub fn contains(&self, z: &[f64], tol: f64) -> Result<bool> {
        let c = self.c_value(z)?;
        Ok(match self.kind() {
            SetKind::Surface => c.abs() <= tol,
            SetKind::Volume => c >= -tol,
        })
    }

    /// Random point on the set (or in it, for volumes). Test and sampling
    /// helper.
    pub fn sample_member<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.natural(&self.raw);
        let gauss = |rng: &mut R, n: usize| -> Vec<f64> {
            loop {
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let nv = norm(&v);
                if nv > 1e-3 && nv <= 1.0 {
                    return v.iter().map(|x| x / nv).collect();
                }
            }
        };
        match &self.shape {
            Shape::SphereSurface => gauss(rng, self.d).iter().map(|x| x * k[0]).collect(),
            Shape::AxisCircle { axes } => {
                let mut z: Vec<f64> = (0..self.d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                z[axes[0]] = k[0] * t.cos();
                z[axes[1]] = k[0] * t.sin();
                z
            }
            Shape::Torus2 => {
                let mut z: Vec<f64> = (0..self.d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let (u, v): (f64, f64) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU));
                z[0] = (k[0] + k[1] * v.cos()) * u.cos();
                z[1] = (k[0] + k[1] * v.cos()) * u.sin();
                z[2] = k[1] * v.sin();
                z
            }
            Shape::Hyperplane => {
                let z: Vec<f64> = (0..self.d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                self.project_with(&self.raw, &z).point
            }
            Shape::Ball => {
                let s: f64 = rng.gen_range(0.0..1.0);
                gauss(rng, self.d).iter().map(|x| x * k[0] * s).collect()
            }
            Shape::Point => vec![0.0; self.d],
        }
    }
}

impl TryFrom<SetDoc> for SetSpec {
    type Error = Error;
    fn try_from(doc: SetDoc) -> Result<Self> {
        if doc.kind != doc.shape.kind() {
            return Err(Error::Shape(format!("{:?} is not a {:?} set", doc.shape, doc.kind)));
        }
        let spec = SetSpec { shape: doc.shape, d: doc.d, raw: doc.raw, learnable: doc.learnable };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<SetSpec> for SetDoc {
    fn from(s: SetSpec) -> Self {
        SetDoc {
            kind: s.kind(),
            coefficients: s.coefficients(),
            shape: s.shape,
            d: s.d,
            raw: s.raw,
            learnable: s.learnable,
        }
    }
}

fn sq_norm<S: Scalar>(z: &[S]) -> S {
    S::dot(z, z, S::zero())
}

fn norm<S: Scalar>(z: &[S]) -> S {
    S::norm(z)
}

/// `r·v/‖v‖`, or `(r, 0, …)` with the ambiguity flag when `v ≈ 0`.
fn radial<S: Scalar>(v: &[S], r: S) -> (Vec<S>, bool) {
    let n = sq_norm(v);
    if n.value() < AMBIGUITY_RADIUS * AMBIGUITY_RADIUS {
        let mut p = vec![S::zero(); v.len()];
        p[0] = r;
        return (p, true);
    }
    let scale = r / n.sqrt();
    (v.iter().map(|&x| x * scale).collect(), false)
}
