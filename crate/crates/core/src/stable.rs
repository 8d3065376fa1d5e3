//! Lyapunov candidate `V`, the stability correction, the invariance
//! correction, and the single-equilibrium special case.

use serde::{Deserialize, Serialize};

use crate::ad::{Dual, Scalar, DENOM_FLOOR};
use crate::nets::{Icnn, Sigma, Slack};
use crate::sets::{SetKind, SetSpec, Shape, DEFAULT_BAND};
use crate::{check_dim, Error, Result};

/// Default decay rate `α`.
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Default weight `ε_V` of the squared-distance term in `V`.
pub const DEFAULT_EPS_V: f64 = 0.1;
/// Default lower bound of `ξ` on volume sets.
pub const DEFAULT_XI_MIN: f64 = 1e-3;
/// Distance to the set below which a point counts as on it.
pub const ON_SET_TOL: f64 = 1e-10;

/// `V(z) = σ(q(z) − q(Pz)) + ε_V‖z − Pz‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovNet {
    pub q: Icnn,
    pub sigma: Sigma,
    pub eps_v: f64,
}

/// `V` at one point, optionally with its gradient.
#[derive(Debug, Clone)]
pub struct VEval<S> {
    pub v: S,
    /// Empty when only the value was requested or the point is on the set.
    pub grad: Vec<S>,
    pub on_set: bool,
    pub ambiguous: bool,
}

impl LyapunovNet {
    pub fn new(q: Icnn, sigma: Sigma, eps_v: f64) -> Result<Self> {
        if !(eps_v > 0.0 && eps_v.is_finite()) {
            return Err(Error::Invalid(format!("eps_v must be positive, got {eps_v}")));
        }
        Ok(LyapunovNet { q, sigma, eps_v })
    }

    /// `V(z)` given effective ICNN parameters and raw set coefficients.
    pub fn value_with<S: Scalar>(&self, q_eff: &[S], set: &SetSpec, set_raw: &[S], z: &[S]) -> Result<VEval<S>> {
        let proj = set.project_with(set_raw, z);
        let diff: Vec<S> = z.iter().zip(&proj.point).map(|(&a, &b)| a - b).collect();
        let dist2 = S::dot(&diff, &diff, S::zero());
        let on_set = dist2.value() <= ON_SET_TOL * ON_SET_TOL;
        let gap = self.q.forward_effective(q_eff, z)? - self.q.forward_effective(q_eff, &proj.point)?;
        let v = self.sigma.eval(gap) + dist2 * self.eps_v;
        Ok(VEval { v, grad: Vec::new(), on_set, ambiguous: proj.ambiguous })
    }

    /// `V(z)` and `∇V(z)`, the latter through one forward-mode pass per
    /// coordinate so it stays differentiable in the parameters. The
    /// gradient includes the dependence of `Pz` on `z`.
    pub fn value_and_grad_with<S: Scalar>(
        &self,
        q_eff: &[S],
        set: &SetSpec,
        set_raw: &[S],
        z: &[S],
    ) -> Result<VEval<S>> {
        let mut out = self.value_with(q_eff, set, set_raw, z)?;
        if out.on_set {
            return Ok(out);
        }
        let q_d = Dual::lift_all(q_eff);
        let raw_d = Dual::lift_all(set_raw);
        out.grad = (0..z.len())
            .map(|i| Ok(self.value_with(&q_d, set, &raw_d, &Dual::seeded(z, i))?.v.eps))
            .collect::<Result<_>>()?;
        Ok(out)
    }

    pub fn value(&self, set: &SetSpec, z: &[f64]) -> Result<f64> {
        check_dim("lyapunov input", set.dim(), z.len())?;
        let eff = self.q.effective(self.q.params());
        Ok(self.value_with(&eff, set, set.params(), z)?.v)
    }

    /// `∇V(z)`; zero on the set.
    pub fn grad(&self, set: &SetSpec, z: &[f64]) -> Result<Vec<f64>> {
        check_dim("lyapunov input", set.dim(), z.len())?;
        let eff = self.q.effective(self.q.params());
        let e = self.value_and_grad_with(&eff, set, set.params(), z)?;
        Ok(if e.on_set { vec![0.0; z.len()] } else { e.grad })
    }
}

/// Decay rate and the slack `η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub alpha: f64,
    pub eta: Slack,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig { alpha: DEFAULT_ALPHA, eta: Slack::Zero }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Invalid(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if matches!(self.eta, Slack::Positive { .. }) {
            return Err(Error::Invalid("eta must be zero or nonnegative-mode".into()));
        }
        Ok(())
    }
}

/// The slack `ξ` and the band half-width `ε_band`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceConfig {
    pub xi: Slack,
    pub band: f64,
}

impl InvarianceConfig {
    /// `ξ ≡ 0`, the only valid choice for surfaces.
    pub fn surface() -> Self {
        InvarianceConfig { xi: Slack::Zero, band: DEFAULT_BAND }
    }

    pub fn validate(&self, kind: SetKind) -> Result<()> {
        if !(self.band > 0.0 && self.band.is_finite()) {
            return Err(Error::Invalid(format!("band must be positive, got {}", self.band)));
        }
        match (kind, &self.xi) {
            (SetKind::Surface, Slack::Zero) => Ok(()),
            (SetKind::Surface, _) => Err(Error::Invalid("surface sets require xi = 0".into())),
            (SetKind::Volume, Slack::Positive { floor, .. }) if *floor > 0.0 => Ok(()),
            (SetKind::Volume, _) => Err(Error::Invalid("volume sets require a positive-mode xi".into())),
        }
    }
}

/// Whether the invariance correction applies to this shape at all. The
/// origin has no boundary to push across.
pub fn has_boundary(set: &SetSpec) -> bool {
    !matches!(set.shape(), Shape::Point)
}

fn unit_step_on(beta: f64) -> bool {
    beta >= 0.0
}

/// Stability correction of the base field `h`.
///
/// Off the set, with `β = ∇Vᵀh + αV ≥ 0`, returns
/// `h − ((β + η)/‖∇V‖²)∇V`; otherwise returns `h`.
pub fn stability_mod<S: Scalar>(h: &[S], v: S, grad_v: &[S], eta: S, alpha: f64, on_set: bool) -> Result<Vec<S>> {
    if on_set {
        return Ok(h.to_vec());
    }
    check_dim("stability gradient", h.len(), grad_v.len())?;
    let beta = S::dot(grad_v, h, v * alpha);
    if !unit_step_on(beta.value()) {
        return Ok(h.to_vec());
    }
    let n2 = S::dot(grad_v, grad_v, S::zero());
    if n2.value().sqrt() < DENOM_FLOOR {
        return Err(Error::DegenerateGradient { what: "V off the set", norm: n2.value().sqrt() });
    }
    let coef = (beta + eta) / n2;
    Ok(h.iter().zip(grad_v).map(|(&hi, &gi)| hi - coef * gi).collect())
}

/// Correction for a single stable equilibrium:
/// `f̂ − (β/‖∇V‖²)∇V` when `β = ∇Vᵀf̂ + αV ≥ 0`.
pub fn equilibrium_stable<S: Scalar>(f_hat: &[S], v: S, grad_v: &[S], alpha: f64) -> Result<Vec<S>> {
    check_dim("equilibrium gradient", f_hat.len(), grad_v.len())?;
    let beta = S::dot(grad_v, f_hat, v * alpha);
    if !unit_step_on(beta.value()) {
        return Ok(f_hat.to_vec());
    }
    let n2 = S::dot(grad_v, grad_v, S::zero());
    if n2.value().sqrt() < DENOM_FLOOR {
        return Err(Error::DegenerateGradient { what: "V off the equilibrium", norm: n2.value().sqrt() });
    }
    let coef = beta / n2;
    Ok(f_hat.iter().zip(grad_v).map(|(&fi, &gi)| fi - coef * gi).collect())
}

/// Boundary correction: inside `|C| ≤ band`, returns
/// `g − ((γ − ξ)/‖∇C‖²)∇C` with `γ = ∇Cᵀg`, so that `∇Cᵀf̃ = ξ`.
pub fn invariance_mod<S: Scalar>(g: &[S], c: S, grad_c: &[S], xi: S, band: f64) -> Result<Vec<S>> {
    if c.value().abs() > band {
        return Ok(g.to_vec());
    }
    check_dim("invariance gradient", g.len(), grad_c.len())?;
    let n2 = S::dot(grad_c, grad_c, S::zero());
    if n2.value().sqrt() < DENOM_FLOOR {
        return Err(Error::DegenerateGradient { what: "C inside the band", norm: n2.value().sqrt() });
    }
    let gamma = S::dot(grad_c, g, S::zero());
    let coef = (gamma - xi) / n2;
    Ok(g.iter().zip(grad_c).map(|(&gi, &ci)| gi - coef * ci).collect())
}

/// Applies [`invariance_mod`] for `set` at `z` with the model's `ξ`.
pub fn invariance_for_set(g: &[f64], set: &SetSpec, xi: f64, z: &[f64], band: f64) -> Result<Vec<f64>> {
    let c = set.c_value(z)?;
    if c.abs() > band {
        return Ok(g.to_vec());
    }
    invariance_mod(g, c, &set.c_grad(z)?, xi, band)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_q(w: &[f64]) -> Icnn {
        Icnn::from_params(w.len(), &[], w.to_vec()).unwrap()
    }

    #[test]
    fn v_vanishes_on_set() {
        let net = LyapunovNet::new(linear_q(&[1.0, 0.0]), Sigma::default(), 0.1).unwrap();
        let set = SetSpec::circle(2, 1.0).unwrap();
        assert_eq!(net.value(&set, &[0.6, 0.8]).unwrap(), 0.0);
    }

    #[test]
    fn v_closed_form() {
        let net = LyapunovNet::new(linear_q(&[1.0, 0.0]), Sigma::default(), 0.1).unwrap();
        let set = SetSpec::sphere(2, 1.0).unwrap();
        assert!((net.value(&set, &[2.0, 0.0]).unwrap() - 1.05).abs() < 1e-12);
    }

    #[test]
    fn distance_term_alone() {
        let net = LyapunovNet::new(linear_q(&[0.0, 0.0]), Sigma::default(), 0.1).unwrap();
        let set = SetSpec::circle(2, 1.0).unwrap();
        assert!((net.value(&set, &[0.0, 3.0]).unwrap() - 0.4).abs() < 1e-12);
        let g = net.grad(&set, &[2.0, 0.0]).unwrap();
        assert!((g[0] - 0.2).abs() < 1e-12 && g[1].abs() < 1e-15);
        let plane = SetSpec::hyperplane(&[1.0, 0.0], 0.0).unwrap();
        let g = net.grad(&plane, &[1.5, 5.0]).unwrap();
        assert!((g[0] - 0.3).abs() < 1e-12 && g[1].abs() < 1e-15);
    }

    #[test]
    fn stability_examples() {
        let g = stability_mod(&[-1.0, 0.0], 1.0, &[1.0, 0.0], 0.0, 0.0, false).unwrap();
        assert_eq!(g, vec![-1.0, 0.0]);
        let g = stability_mod(&[1.0, 0.0], 1.0, &[1.0, 0.0], 0.0, 0.01, false).unwrap();
        assert!((g[0] + 0.01).abs() < 1e-15 && g[1] == 0.0);
        assert!((g[0] + 0.01 * 1.0).abs() < 1e-15);
        let g = stability_mod(&[3.0, -2.0], 0.0, &[], 0.0, 0.01, true).unwrap();
        assert_eq!(g, vec![3.0, -2.0]);
    }

    #[test]
    fn stability_rejects_vanishing_gradient() {
        let err = stability_mod(&[1.0, 0.0], 1.0, &[0.0, 0.0], 0.0, 0.01, false).unwrap_err();
        assert!(matches!(err, Error::DegenerateGradient { .. }));
    }

    #[test]
    fn invariance_examples() {
        let circle = SetSpec::circle(2, 1.0).unwrap();
        let f = invariance_for_set(&[1.0, 1.0], &circle, 0.0, &[1.0, 0.0], DEFAULT_BAND).unwrap();
        assert_eq!(f, vec![0.0, 1.0]);
        let f = invariance_for_set(&[1.0, 1.0], &circle, 0.0, &[2.0, 0.0], DEFAULT_BAND).unwrap();
        assert_eq!(f, vec![1.0, 1.0]);
        let ball = SetSpec::ball(2, 1.0).unwrap();
        let f = invariance_for_set(&[1.0, 0.0], &ball, 0.5, &[1.0, 0.0], DEFAULT_BAND).unwrap();
        assert!((f[0] + 0.25).abs() < 1e-15 && f[1] == 0.0);
    }

    #[test]
    fn equilibrium_examples() {
        assert_eq!(equilibrium_stable(&[-1.0, 0.0], 1.0, &[1.0, 0.0], 0.0).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(equilibrium_stable(&[1.0, 0.0], 1.0, &[2.0, 0.0], 0.0).unwrap(), vec![0.0, 0.0]);
        let f = equilibrium_stable(&[0.7, -0.2], 0.5, &[1.0, 3.0], 0.01).unwrap();
        assert!((0.7 * 0.0 + f[0] + 3.0 * f[1] + 0.01 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn invariance_config_contract() {
        assert!(InvarianceConfig::surface().validate(SetKind::Surface).is_ok());
        assert!(InvarianceConfig::surface().validate(SetKind::Volume).is_err());
    }
}
