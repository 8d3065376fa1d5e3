//! Invertible feature map `z = φ(x)`: identity, or the time-one flow of a
//! learnable field `ψ`, optionally on a state augmented with extra zeros.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{Dual, Scalar};
use crate::nets::Mlp;
use crate::ode::rk4_step_with;
use crate::{check_dim, Error, Result};

pub const DEFAULT_STEPS: usize = 20;
pub const DEFAULT_AUG: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    Node,
    Anode,
}

/// Which augmented state the inverse starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarryMode {
    /// The `a` produced by the forward pass of the same evaluation.
    #[default]
    Forward,
    /// `a = 0`.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformDoc", into = "TransformDoc")]
pub struct Transform {
    kind: TransformKind,
    d: usize,
    d_aug: usize,
    steps: usize,
    carry: CarryMode,
    psi: Option<Mlp>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformDoc {
    kind: TransformKind,
    d: usize,
    d_aug: usize,
    steps: usize,
    carry: CarryMode,
    psi: Option<Mlp>,
}

/// Output of the forward map: latent state and the augmented tail.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent<S> {
    pub z: Vec<S>,
    pub a: Vec<S>,
}

impl Transform {
    pub fn identity(d: usize) -> Self {
        Transform { kind: TransformKind::Identity, d, d_aug: 0, steps: 0, carry: CarryMode::Forward, psi: None }
    }

    /// Flow of `ψ` on `Rᵈ`.
    pub fn node(psi: Mlp, steps: usize) -> Result<Self> {
        let d = psi.input_dim();
        Self::checked(TransformKind::Node, d, 0, steps, psi)
    }

    /// Flow of `ψ` on `R^{d + d_aug}`.
    pub fn anode(d: usize, psi: Mlp, steps: usize) -> Result<Self> {
        let d_aug = psi.input_dim().saturating_sub(d);
        Self::checked(TransformKind::Anode, d, d_aug, steps, psi)
    }

    /// Randomly initialised `ψ` with the given hidden sizes.
    pub fn random<R: Rng>(kind: TransformKind, d: usize, d_aug: usize, hidden: &[usize], steps: usize, rng: &mut R) -> Result<Self> {
        if kind == TransformKind::Identity {
            return Ok(Self::identity(d));
        }
        let n = d + if kind == TransformKind::Anode { d_aug } else { 0 };
        let mut dims = vec![n];
        dims.extend_from_slice(hidden);
        dims.push(n);
        let psi = Mlp::new(&dims, rng);
        match kind {
            TransformKind::Node => Self::node(psi, steps),
            _ => Self::anode(d, psi, steps),
        }
    }

    fn checked(kind: TransformKind, d: usize, d_aug: usize, steps: usize, psi: Mlp) -> Result<Self> {
        let t = Transform { kind, d, d_aug, steps, carry: CarryMode::Forward, psi: Some(psi) };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Invalid("transform dimension must be positive".into()));
        }
        match (self.kind, &self.psi) {
            (TransformKind::Identity, None) if self.d_aug == 0 => Ok(()),
            (TransformKind::Identity, _) => Err(Error::Shape("identity transform carries no field".into())),
            (_, None) => Err(Error::Shape("flow transform needs a field".into())),
            (kind, Some(psi)) => {
                if kind == TransformKind::Node && self.d_aug != 0 {
                    return Err(Error::Shape("NODE transform has no augmentation".into()));
                }
                if self.steps == 0 {
                    return Err(Error::Invalid("integration steps must be positive".into()));
                }
                let n = self.d + self.d_aug;
                if psi.input_dim() != n || psi.output_dim() != n {
                    return Err(Error::Shape(format!("field must map R^{n} to itself, has dims {:?}", psi.dims())));
                }
                Ok(())
            }
        }
    }

    pub fn with_carry(mut self, carry: CarryMode) -> Self {
        self.carry = carry;
        self
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn aug_dim(&self) -> usize {
        self.d_aug
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn carry(&self) -> CarryMode {
        self.carry
    }

    pub fn is_identity(&self) -> bool {
        self.kind == TransformKind::Identity
    }

    pub fn psi(&self) -> Option<&Mlp> {
        self.psi.as_ref()
    }

    pub fn params(&self) -> &[f64] {
        self.psi.as_ref().map_or(&[], Mlp::params)
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.psi.as_mut().map_or(&mut [], Mlp::params_mut)
    }

    fn flow<S: Scalar>(&self, p: &[S], u0: Vec<S>, sign: f64) -> Result<Vec<S>> {
        let psi = self.psi.as_ref().expect("flow transform without field");
        let dt = sign / self.steps as f64;
        let mut field = |u: &[S]| psi.forward(p, u);
        let mut u = u0;
        for step in 1..=self.steps {
            u = rk4_step_with(&mut field, &u, dt)?;
            if u.iter().any(|v| !v.value().is_finite()) {
                return Err(Error::Integration { step });
            }
        }
        Ok(u)
    }

    /// `φ(x)` with parameters `p`.
    pub fn forward_with<S: Scalar>(&self, p: &[S], x: &[S]) -> Result<Latent<S>> {
        check_dim("transform input", self.d, x.len())?;
        if self.is_identity() {
            return Ok(Latent { z: x.to_vec(), a: Vec::new() });
        }
        let mut u0 = x.to_vec();
        u0.resize(self.d + self.d_aug, S::zero());
        let mut u = self.flow(p, u0, 1.0)?;
        let a = u.split_off(self.d);
        Ok(Latent { z: u, a })
    }

    /// `φ⁻¹(z)`, starting the backward flow from `(z, a)`. An empty `a`
    /// means zeros.
    pub fn inverse_with<S: Scalar>(&self, p: &[S], z: &[S], a: &[S]) -> Result<Vec<S>> {
        check_dim("transform inverse input", self.d, z.len())?;
        if self.is_identity() {
            return Ok(z.to_vec());
        }
        let mut u1 = z.to_vec();
        match (self.carry, a.is_empty()) {
            (CarryMode::Forward, false) => {
                check_dim("augmented state", self.d_aug, a.len())?;
                u1.extend_from_slice(a);
            }
            _ => u1.resize(self.d + self.d_aug, S::zero()),
        }
        let mut u = self.flow(p, u1, -1.0)?;
        u.truncate(self.d);
        Ok(u)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Latent<f64>> {
        self.forward_with(self.params(), x)
    }

    pub fn inverse(&self, z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.inverse_with(self.params(), z, a)
    }

    /// `φ(x)` and the `d × d` Jacobian `∂z/∂x` (row `i` = `∇z_i`).
    pub fn jacobian_with<S: Scalar>(&self, p: &[S], x: &[S]) -> Result<(Latent<S>, Vec<Vec<S>>)> {
        let lat = self.forward_with(p, x)?;
        let d = self.d;
        let mut jac = vec![vec![S::zero(); d]; d];
        if self.is_identity() {
            for (i, row) in jac.iter_mut().enumerate() {
                row[i] = S::cst(1.0);
            }
            return Ok((lat, jac));
        }
        let pd = Dual::lift_all(p);
        for j in 0..d {
            let col = self.forward_with(&pd, &Dual::seeded(x, j))?;
            for i in 0..d {
                jac[i][j] = col.z[i].eps;
            }
        }
        Ok((lat, jac))
    }
}

impl TryFrom<TransformDoc> for Transform {
    type Error = Error;
    fn try_from(doc: TransformDoc) -> Result<Self> {
        let t = Transform {
            kind: doc.kind,
            d: doc.d,
            d_aug: doc.d_aug,
            steps: doc.steps,
            carry: doc.carry,
            psi: doc.psi,
        };
        t.validate()?;
        Ok(t)
    }
}

impl From<Transform> for TransformDoc {
    fn from(t: Transform) -> Self {
        TransformDoc { kind: t.kind, d: t.d, d_aug: t.d_aug, steps: t.steps, carry: t.carry, psi: t.psi }
    }
}

/// Solves `A y = b` by Gaussian elimination with partial pivoting.
pub fn solve<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Result<Vec<S>> {
    let n = b.len();
    check_dim("linear system", n, a.len())?;
    let scale = a.iter().flatten().map(|v| v.value().abs()).fold(0.0, f64::max);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].value().abs().total_cmp(&a[j][col].value().abs()))
            .unwrap();
        if !(a[piv][col].value().abs() > 1e-13 * scale.max(1e-300)) {
            return Err(Error::SingularJacobian);
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            if m.value() == 0.0 && m.is_const_zero() {
                continue;
            }
            for k in col..n {
                let t = a[col][k];
                a[row][k] = a[row][k] - m * t;
            }
            let t = b[col];
            b[row] = b[row] - m * t;
        }
    }
    let mut y = vec![S::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[row][k] * y[k];
        }
        y[row] = acc / a[row][row];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_maps() {
        let t = Transform::identity(2);
        let lat = t.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(lat.z, vec![1.0, 2.0]);
        assert!(lat.a.is_empty());
        assert_eq!(t.inverse(&[1.0, 2.0], &[]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_field_is_identity() {
        let t = Transform::anode(2, Mlp::zeros(&[4, 8, 4]), 10).unwrap();
        let lat = t.forward(&[0.3, -1.2]).unwrap();
        assert_eq!(lat.z, vec![0.3, -1.2]);
        assert_eq!(lat.a, vec![0.0, 0.0]);
        assert_eq!(t.inverse(&lat.z, &lat.a).unwrap(), vec![0.3, -1.2]);
    }

    #[test]
    fn constant_field_shifts_by_one() {
        let mut psi = Mlp::zeros(&[2, 2]);
        psi.params_mut()[4] = 1.0;
        psi.params_mut()[5] = 1.0;
        let t = Transform::node(psi, 7).unwrap();
        let lat = t.forward(&[0.5, -2.0]).unwrap();
        assert!((lat.z[0] - 1.5).abs() < 1e-14 && (lat.z[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_mismatched_field() {
        assert!(Transform::node(Mlp::zeros(&[2, 3]), 5).is_err());
        assert!(Transform::node(Mlp::zeros(&[2, 2]), 0).is_err());
    }

    #[test]
    fn solve_matches_hand_system() {
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let y = solve(a, vec![4.0, 5.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 2.0).abs() < 1e-15);
        assert!(matches!(solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 1.0]), Err(Error::SingularJacobian)));
    }

    #[test]
    fn jacobian_of_identity() {
        let t = Transform::identity(3);
        let (_, j) = t.jacobian_with(&[], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(j, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    }

    #[test]
    fn random_transform_is_deterministic() {
        let mk = || Transform::random(TransformKind::Anode, 2, 2, &[8], 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(mk().forward(&[0.1, 0.2]).unwrap(), mk().forward(&[0.1, 0.2]).unwrap());
    }
}
