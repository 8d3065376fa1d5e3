//! Learnable components: plain MLPs, the input-convex network `q`, the
//! smoothed rectifier `σ`, and the slack networks `η` / `ξ`.
//!
//! Components own their parameters as flat `f64` vectors but evaluate
//! through an explicit parameter slice, so the same code runs on `f64`,
//! tape variables and dual numbers.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{inv_softplus, smooth_relu, softplus, Scalar};
use crate::{check_dim, Error, Result};

/// One named parameter tensor, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBlock {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub type ParamMap = BTreeMap<String, ParamBlock>;

fn take_block(map: &mut ParamMap, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
    let block = map
        .remove(name)
        .ok_or_else(|| Error::Shape(format!("missing parameter block `{name}`")))?;
    if block.shape != shape || block.values.len() != shape.iter().product::<usize>() {
        return Err(Error::Shape(format!(
            "block `{name}`: expected shape {shape:?}, found {:?} with {} values",
            block.shape,
            block.values.len()
        )));
    }
    if block.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape(format!("block `{name}` has non-finite entries")));
    }
    Ok(block.values)
}

fn finish_blocks(map: ParamMap) -> Result<()> {
    match map.keys().next() {
        Some(extra) => Err(Error::Shape(format!("unexpected parameter block `{extra}`"))),
        None => Ok(()),
    }
}

/// Fully connected network with ELU on hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpDoc", into = "MlpDoc")]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpDoc {
    dims: Vec<usize>,
    params: ParamMap,
}

impl Mlp {
    fn count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Fan-in scaled uniform initialisation, `U(−1/√fan_in, 1/√fan_in)`.
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(Self::count(dims));
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[1] * w[0] + w[1]) {
                params.push(rng.gen_range(-bound..bound));
            }
        }
        Mlp { dims: dims.to_vec(), params }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output sizes");
        Mlp { dims: dims.to_vec(), params: vec![0.0; Self::count(dims)] }
    }

    /// Single linear layer holding the identity map.
    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(&[d, d]);
        for i in 0..d {
            m.params[i * d + i] = 1.0;
        }
        m
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        check_dim("mlp parameters", Self::count(dims), params.len())?;
        Ok(Mlp { dims: dims.to_vec(), params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Scales every weight and bias; used to build gentle vector fields.
    pub fn scale(&mut self, factor: f64) {
        self.params.iter_mut().for_each(|p| *p *= factor);
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &[S]) -> Result<Vec<S>> {
        check_dim("mlp input", self.dims[0], x.len())?;
        debug_assert_eq!(p.len(), self.params.len());
        let last = self.dims.len() - 2;
        let mut off = 0;
        let mut cur = x.to_vec();
        for (l, w) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let bias = off + n_out * n_in;
            let mut next = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &p[off + o * n_in..off + (o + 1) * n_in];
                let y = S::dot(row, &cur, p[bias + o]);
                next.push(if l < last { y.elu() } else { y });
            }
            off = bias + n_out;
            cur = next;
        }
        Ok(cur)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(&self.params, x)
    }

    pub fn to_blocks(&self) -> ParamMap {
        let mut map = ParamMap::new();
        let mut off = 0;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            map.insert(
                format!("w{l}"),
                ParamBlock { shape: vec![n_out, n_in], values: self.params[off..off + n_out * n_in].to_vec() },
            );
            off += n_out * n_in;
            map.insert(format!("b{l}"), ParamBlock { shape: vec![n_out], values: self.params[off..off + n_out].to_vec() });
            off += n_out;
        }
        map
    }

    fn from_blocks(dims: Vec<usize>, mut map: ParamMap) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid MLP dims {dims:?}")));
        }
        let mut params = Vec::with_capacity(Self::count(&dims));
        for (l, w) in dims.windows(2).enumerate() {
            params.extend(take_block(&mut map, &format!("w{l}"), &[w[1], w[0]])?);
            params.extend(take_block(&mut map, &format!("b{l}"), &[w[1]])?);
        }
        finish_blocks(map)?;
        Ok(Mlp { dims, params })
    }
}

impl TryFrom<MlpDoc> for Mlp {
    type Error = Error;
    fn try_from(doc: MlpDoc) -> Result<Self> {
        Mlp::from_blocks(doc.dims, doc.params)
    }
}

impl From<Mlp> for MlpDoc {
    fn from(m: Mlp) -> Self {
        MlpDoc { params: m.to_blocks(), dims: m.dims }
    }
}

/// Input-convex network `q: Rᵈ → R`.
///
/// Layer `k` computes `ELU(A_k y_k + B_k⁺ z)` (no passthrough on the first
/// layer, no activation on the last). For `k ≥ 2` both `A_k` and `B_k`
/// enter through softplus, so every weight acting on a convex hidden unit
/// is nonnegative; with ELU convex and nondecreasing this makes `q` convex
/// in `z` for every raw parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IcnnDoc", into = "IcnnDoc")]
pub struct Icnn {
    d: usize,
    hidden: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IcnnDoc {
    d: usize,
    hidden: Vec<usize>,
    params: ParamMap,
}

impl Icnn {
    fn sizes(d: usize, hidden: &[usize]) -> Vec<usize> {
        let mut s = Vec::with_capacity(hidden.len() + 2);
        s.push(d);
        s.extend_from_slice(hidden);
        s.push(1);
        s
    }

    fn count(d: usize, hidden: &[usize]) -> usize {
        let s = Self::sizes(d, hidden);
        s.windows(2)
            .enumerate()
            .map(|(k, w)| w[1] * w[0] + if k > 0 { w[1] * d } else { 0 })
            .sum()
    }

    pub fn new<R: Rng>(d: usize, hidden: &[usize], rng: &mut R) -> Self {
        let s = Self::sizes(d, hidden);
        let mut params = Vec::with_capacity(Self::count(d, hidden));
        for (k, w) in s.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            if k == 0 {
                let bound = 1.0 / (n_in as f64).sqrt();
                params.extend((0..n_out * n_in).map(|_| rng.gen_range(-bound..bound)));
            } else {
                let hi = 1.0 / ((n_in + d) as f64).sqrt();
                let lo = 0.05 * hi;
                params.extend((0..n_out * (n_in + d)).map(|_| inv_softplus(rng.gen_range(lo..hi))));
            }
        }
        Icnn { d, hidden: hidden.to_vec(), params }
    }

    /// Builds from raw parameters laid out as `A_1, (A_k, B_k)_{k≥2}`.
    pub fn from_params(d: usize, hidden: &[usize], params: Vec<f64>) -> Result<Self> {
        check_dim("icnn parameters", Self::count(d, hidden), params.len())?;
        Ok(Icnn { d, hidden: hidden.to_vec(), params })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Raw parameters with the softplus applied where nonnegativity is
    /// required. Compute once, evaluate many times.
    pub fn effective<S: Scalar>(&self, raw: &[S]) -> Vec<S> {
        debug_assert_eq!(raw.len(), self.params.len());
        let first = self.hidden.first().copied().unwrap_or(1) * self.d;
        raw.iter()
            .enumerate()
            .map(|(i, &r)| if i < first { r } else { softplus(r) })
            .collect()
    }

    /// Evaluates `q` given effective parameters (see [`Icnn::effective`]).
    pub fn forward_effective<S: Scalar>(&self, eff: &[S], z: &[S]) -> Result<S> {
        check_dim("icnn input", self.d, z.len())?;
        let s = Self::sizes(self.d, &self.hidden);
        let layers = s.len() - 1;
        let mut off = 0;
        let mut y = z.to_vec();
        let mut scratch_w: Vec<S> = Vec::new();
        let mut scratch_x: Vec<S> = Vec::new();
        for (k, w) in s.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let a_len = n_out * n_in;
            let b_len = if k > 0 { n_out * self.d } else { 0 };
            let (a, b) = (&eff[off..off + a_len], &eff[off + a_len..off + a_len + b_len]);
            let mut next = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let pre = if k == 0 {
                    S::dot(&a[o * n_in..(o + 1) * n_in], &y, S::zero())
                } else {
                    scratch_w.clear();
                    scratch_x.clear();
                    scratch_w.extend_from_slice(&a[o * n_in..(o + 1) * n_in]);
                    scratch_w.extend_from_slice(&b[o * self.d..(o + 1) * self.d]);
                    scratch_x.extend_from_slice(&y);
                    scratch_x.extend_from_slice(z);
                    S::dot(&scratch_w, &scratch_x, S::zero())
                };
                next.push(if k + 1 < layers { pre.elu() } else { pre });
            }
            off += a_len + b_len;
            y = next;
        }
        Ok(y[0])
    }

    pub fn forward<S: Scalar>(&self, raw: &[S], z: &[S]) -> Result<S> {
        self.forward_effective(&self.effective(raw), z)
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        self.forward(&self.params, z)
    }

    pub fn to_blocks(&self) -> ParamMap {
        let s = Self::sizes(self.d, &self.hidden);
        let mut map = ParamMap::new();
        let mut off = 0;
        for (k, w) in s.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            map.insert(
                format!("a{}", k + 1),
                ParamBlock { shape: vec![n_out, n_in], values: self.params[off..off + n_out * n_in].to_vec() },
            );
            off += n_out * n_in;
            if k > 0 {
                map.insert(
                    format!("b{}", k + 1),
                    ParamBlock { shape: vec![n_out, self.d], values: self.params[off..off + n_out * self.d].to_vec() },
                );
                off += n_out * self.d;
            }
        }
        map
    }
}

impl TryFrom<IcnnDoc> for Icnn {
    type Error = Error;
    fn try_from(doc: IcnnDoc) -> Result<Self> {
        if doc.d == 0 || doc.hidden.contains(&0) {
            return Err(Error::Shape("invalid ICNN sizes".into()));
        }
        let s = Icnn::sizes(doc.d, &doc.hidden);
        let mut map = doc.params;
        let mut params = Vec::new();
        for (k, w) in s.windows(2).enumerate() {
            params.extend(take_block(&mut map, &format!("a{}", k + 1), &[w[1], w[0]])?);
            if k > 0 {
                params.extend(take_block(&mut map, &format!("b{}", k + 1), &[w[1], doc.d])?);
            }
        }
        finish_blocks(map)?;
        Ok(Icnn { d: doc.d, hidden: doc.hidden, params })
    }
}

impl From<Icnn> for IcnnDoc {
    fn from(q: Icnn) -> Self {
        IcnnDoc { params: q.to_blocks(), d: q.d, hidden: q.hidden }
    }
}

/// Convex, nondecreasing, `σ(0) = 0`, continuously differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sigma {
    pub width: f64,
}

impl Default for Sigma {
    fn default() -> Self {
        Sigma { width: 0.1 }
    }
}

impl Sigma {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Invalid(format!("sigma width must be positive, got {width}")));
        }
        Ok(Sigma { width })
    }

    pub fn eval<S: Scalar>(&self, a: S) -> S {
        smooth_relu(a, self.width)
    }
}

/// `σ(a)` with half-width `width`.
pub fn sigma(width: f64, a: f64) -> f64 {
    smooth_relu(a, width)
}

/// Slack function: identically zero, or `softplus(net(z)) + floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Slack {
    Zero,
    /// `η`: nonnegative.
    Nonnegative { net: Mlp },
    /// `ξ`: bounded below by `floor > 0`.
    Positive { net: Mlp, floor: f64 },
}

impl Slack {
    pub fn nonnegative<R: Rng>(d: usize, hidden: &[usize], rng: &mut R) -> Self {
        Slack::Nonnegative { net: Mlp::new(&slack_dims(d, hidden), rng) }
    }

    pub fn positive<R: Rng>(d: usize, hidden: &[usize], floor: f64, rng: &mut R) -> Self {
        Slack::Positive { net: Mlp::new(&slack_dims(d, hidden), rng), floor }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Slack::Zero)
    }

    /// Lower bound of the output.
    pub fn floor(&self) -> f64 {
        match self {
            Slack::Positive { floor, .. } => *floor,
            _ => 0.0,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Slack::Zero => &[],
            Slack::Nonnegative { net } | Slack::Positive { net, .. } => net.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Slack::Zero => &mut [],
            Slack::Nonnegative { net } | Slack::Positive { net, .. } => net.params_mut(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    pub fn forward<S: Scalar>(&self, p: &[S], z: &[S]) -> Result<S> {
        match self {
            Slack::Zero => Ok(S::zero()),
            Slack::Nonnegative { net } => Ok(softplus(net.forward(p, z)?[0])),
            Slack::Positive { net, floor } => Ok(softplus(net.forward(p, z)?[0]) + *floor),
        }
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        self.forward(self.params(), z)
    }
}

fn slack_dims(d: usize, hidden: &[usize]) -> Vec<usize> {
    let mut dims = vec![d];
    dims.extend_from_slice(hidden);
    dims.push(1);
    dims
}
