//! Scalar reverse-mode tape.
//!
//! Every recorded node keeps its forward value and a list of
//! `(parent id, local partial)` edges. Node ids are assigned in creation
//! order, so the graph is topologically sorted by construction and the
//! backward sweep is a single reverse pass over the node array.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::{note_floor, DENOM_FLOOR};

/// First non-finite value produced on a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct NonFiniteRecord {
    pub primitive: &'static str,
    pub operands: Vec<f64>,
}

#[derive(Default)]
struct Inner {
    values: Vec<f64>,
    spans: Vec<(u32, u32)>,
    edges: Vec<(u32, f64)>,
    non_finite: Option<NonFiniteRecord>,
}

/// Recording tape. Single-threaded; create one per evaluation (or reuse
/// it after [`Tape::clear`]).
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// Adjoints produced by one backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    /// Adjoint of `v`; constants have zero adjoint.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        match v {
            Var::Const(_) => 0.0,
            Var::Node { id, .. } => self.adjoints[id as usize],
        }
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.adjoints
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        let tape = Self::default();
        {
            let mut t = tape.inner.borrow_mut();
            t.values.reserve(nodes);
            t.spans.reserve(nodes);
            t.edges.reserve(edges);
        }
        tape
    }

    /// Drops all nodes but keeps the allocations.
    pub fn clear(&mut self) {
        let t = self.inner.get_mut();
        t.values.clear();
        t.spans.clear();
        t.edges.clear();
        t.non_finite = None;
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge_count(&self) -> usize {
        self.inner.borrow().edges.len()
    }

    /// New independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let id = self.push(value, &[], "leaf", &[value]);
        Var::Node { tape: self, id, value }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn non_finite(&self) -> Option<NonFiniteRecord> {
        self.inner.borrow().non_finite.clone()
    }

    fn push(&self, value: f64, edges: &[(u32, f64)], primitive: &'static str, operands: &[f64]) -> u32 {
        let mut t = self.inner.borrow_mut();
        let id = t.values.len() as u32;
        let start = t.edges.len() as u32;
        t.edges.extend_from_slice(edges);
        let end = t.edges.len() as u32;
        t.values.push(value);
        t.spans.push((start, end));
        if !value.is_finite() && t.non_finite.is_none() {
            t.non_finite = Some(NonFiniteRecord {
                primitive,
                operands: operands.to_vec(),
            });
        }
        id
    }

    fn push_iter<I>(&self, value: f64, edges: I, primitive: &'static str) -> u32
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut t = self.inner.borrow_mut();
        let id = t.values.len() as u32;
        let start = t.edges.len() as u32;
        t.edges.extend(edges);
        let end = t.edges.len() as u32;
        t.values.push(value);
        t.spans.push((start, end));
        if !value.is_finite() && t.non_finite.is_none() {
            t.non_finite = Some(NonFiniteRecord {
                primitive,
                operands: vec![value],
            });
        }
        id
    }

    /// Reverse sweep seeded with 1 at `output`.
    pub fn backward(&self, output: Var<'_>) -> Gradients {
        let t = self.inner.borrow();
        let mut adj = vec![0.0; t.values.len()];
        if let Var::Node { id, tape, .. } = output {
            assert!(std::ptr::eq(tape, self), "output recorded on another tape");
            adj[id as usize] = 1.0;
            for i in (0..=id as usize).rev() {
                let a = adj[i];
                if a == 0.0 {
                    continue;
                }
                let (s, e) = t.spans[i];
                for &(p, d) in &t.edges[s as usize..e as usize] {
                    adj[p as usize] += a * d;
                }
            }
        }
        Gradients { adjoints: adj }
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.inner.borrow();
        f.debug_struct("Tape")
            .field("nodes", &t.values.len())
            .field("edges", &t.edges.len())
            .finish()
    }
}

/// A differentiable scalar: either a constant (not recorded) or a node on
/// a tape.
#[derive(Clone, Copy)]
pub enum Var<'t> {
    Const(f64),
    Node { tape: &'t Tape, id: u32, value: f64 },
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Const(c) => write!(f, "Const({c})"),
            Var::Node { id, value, .. } => write!(f, "Node#{id}({value})"),
        }
    }
}

impl<'t> Var<'t> {
    #[inline]
    pub fn val(self) -> f64 {
        match self {
            Var::Const(c) => c,
            Var::Node { value, .. } => value,
        }
    }

    #[inline]
    fn tape(self) -> Option<&'t Tape> {
        match self {
            Var::Const(_) => None,
            Var::Node { tape, .. } => Some(tape),
        }
    }

    #[inline]
    fn id(self) -> Option<u32> {
        match self {
            Var::Const(_) => None,
            Var::Node { id, .. } => Some(id),
        }
    }

    pub fn is_const(self) -> bool {
        matches!(self, Var::Const(_))
    }

    fn unary(self, value: f64, partial: f64, primitive: &'static str) -> Var<'t> {
        match self {
            Var::Const(_) => Var::Const(value),
            Var::Node { tape, id, value: x } => {
                let nid = tape.push(value, &[(id, partial)], primitive, &[x]);
                Var::Node { tape, id: nid, value }
            }
        }
    }

    fn binary(self, rhs: Var<'t>, value: f64, da: f64, db: f64, primitive: &'static str) -> Var<'t> {
        let ops = [self.val(), rhs.val()];
        match (self, rhs) {
            (Var::Const(_), Var::Const(_)) => Var::Const(value),
            (Var::Node { tape, id, .. }, Var::Const(_)) => {
                let nid = tape.push(value, &[(id, da)], primitive, &ops);
                Var::Node { tape, id: nid, value }
            }
            (Var::Const(_), Var::Node { tape, id, .. }) => {
                let nid = tape.push(value, &[(id, db)], primitive, &ops);
                Var::Node { tape, id: nid, value }
            }
            (Var::Node { tape, id: ia, .. }, Var::Node { tape: tb, id: ib, .. }) => {
                debug_assert!(std::ptr::eq(tape, tb), "operands on different tapes");
                let nid = tape.push(value, &[(ia, da), (ib, db)], primitive, &ops);
                Var::Node { tape, id: nid, value }
            }
        }
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.val().exp();
        self.unary(e, e, "exp")
    }

    pub fn ln(self) -> Var<'t> {
        let x = self.val();
        self.unary(x.ln(), 1.0 / x, "ln")
    }

    /// Square root; the derivative denominator is floored at `DENOM_FLOOR`.
    pub fn sqrt(self) -> Var<'t> {
        let s = self.val().sqrt();
        let den = if s < DENOM_FLOOR && !self.is_const() {
            note_floor("sqrt", s);
            DENOM_FLOOR
        } else {
            s
        };
        self.unary(s, 0.5 / den, "sqrt")
    }

    pub fn elu(self) -> Var<'t> {
        let x = self.val();
        if x > 0.0 {
            self
        } else {
            let e = x.exp();
            self.unary(e - 1.0, e, "elu")
        }
    }

    /// `Σ wᵢ xᵢ + bias` as a single node.
    pub fn dot(ws: &[Var<'t>], xs: &[Var<'t>], bias: Var<'t>) -> Var<'t> {
        assert_eq!(ws.len(), xs.len(), "dot: length mismatch");
        let mut value = bias.val();
        let mut tape = bias.tape();
        for (w, x) in ws.iter().zip(xs) {
            value += w.val() * x.val();
            if tape.is_none() {
                tape = w.tape().or(x.tape());
            }
        }
        let Some(tape) = tape else {
            return Var::Const(value);
        };
        let edges = ws
            .iter()
            .zip(xs)
            .flat_map(|(w, x)| {
                let a = x.id().map(|i| (i, w.val()));
                let b = w.id().map(|i| (i, x.val()));
                a.into_iter().chain(b)
            })
            .chain(bias.id().map(|i| (i, 1.0)));
        let id = tape.push_iter(value, edges, "dot");
        Var::Node { tape, id, value }
    }

    /// Euclidean norm as a single node; the derivative denominator is
    /// floored at `DENOM_FLOOR`.
    pub fn norm(xs: &[Var<'t>]) -> Var<'t> {
        let value = xs.iter().map(|x| x.val() * x.val()).sum::<f64>().sqrt();
        let Some(tape) = xs.iter().find_map(|x| x.tape()) else {
            return Var::Const(value);
        };
        let den = if value < DENOM_FLOOR {
            note_floor("norm", value);
            DENOM_FLOOR
        } else {
            value
        };
        let edges = xs.iter().filter_map(|x| x.id().map(|i| (i, x.val() / den)));
        let id = tape.push_iter(value, edges, "norm");
        Var::Node { tape, id, value }
    }
}

fn is_zero(v: Var<'_>) -> bool {
    matches!(v, Var::Const(c) if c == 0.0)
}

fn is_one(v: Var<'_>) -> bool {
    matches!(v, Var::Const(c) if c == 1.0)
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        if is_zero(self) {
            return rhs;
        }
        if is_zero(rhs) {
            return self;
        }
        self.binary(rhs, self.val() + rhs.val(), 1.0, 1.0, "add")
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        if is_zero(rhs) {
            return self;
        }
        self.binary(rhs, self.val() - rhs.val(), 1.0, -1.0, "sub")
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        if is_zero(self) || is_zero(rhs) {
            return Var::Const(0.0);
        }
        if is_one(self) {
            return rhs;
        }
        if is_one(rhs) {
            return self;
        }
        let (a, b) = (self.val(), rhs.val());
        self.binary(rhs, a * b, b, a, "mul")
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        if is_one(rhs) {
            return self;
        }
        let (a, b) = (self.val(), rhs.val());
        let q = a / b;
        self.binary(rhs, q, 1.0 / b, -q / b, "div")
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val(), -1.0, "neg")
    }
}

macro_rules! var_f64_ops {
    ($($tr:ident $f:ident),*) => {$(
        impl<'t> $tr<f64> for Var<'t> {
            type Output = Var<'t>;
            #[inline]
            fn $f(self, rhs: f64) -> Var<'t> {
                $tr::$f(self, Var::Const(rhs))
            }
        }
    )*};
}
var_f64_ops!(Add add, Sub sub, Mul mul, Div div);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_is_deterministic() {
        let tape = Tape::new();
        let x = tape.var(0.3);
        let y = tape.var(-1.2);
        let out = (x * y).exp() + (x / (y * y + 1.0)).elu() - Var::norm(&[x, y]);
        let g1 = tape.backward(out);
        let g2 = tape.backward(out);
        assert_eq!(g1.as_slice(), g2.as_slice());
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn constants_are_not_recorded() {
        let tape = Tape::new();
        let c = Var::Const(2.0) * Var::Const(3.0) + Var::Const(1.0);
        assert!(c.is_const());
        assert_eq!(c.val(), 7.0);
        assert!(tape.is_empty());
    }

    #[test]
    fn dot_matches_unfused_expression() {
        let tape = Tape::new();
        let w = tape.vars(&[0.5, -2.0, 1.5]);
        let x = tape.vars(&[1.0, 0.25, -3.0]);
        let b = tape.var(0.1);
        let fused = Var::dot(&w, &x, b);
        let g = tape.backward(fused);
        for i in 0..3 {
            assert_eq!(g.wrt(w[i]), x[i].val());
            assert_eq!(g.wrt(x[i]), w[i].val());
        }
        assert_eq!(g.wrt(b), 1.0);
    }

    #[test]
    fn non_finite_value_is_recorded_with_primitive() {
        let tape = Tape::new();
        let x = tape.var(-1.0);
        let _ = x.ln();
        let rec = tape.non_finite().expect("ln(-1) must be flagged");
        assert_eq!(rec.primitive, "ln");
        assert_eq!(rec.operands, vec![-1.0]);
    }
}
