//! Immutable expression trees for scalar fields on the plane.
//!
//! Every node can be differentiated exactly; the partial derivatives of a
//! node are built once and cached on the node, so derivative DAGs share
//! structure with their primal.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::field::bump;
use crate::field::mollify::Mollifier;
use crate::field::poisson::SineSeries;
use crate::Scalar;

/// Scalar field given as a closed-form expression tree.
#[derive(Clone)]
pub struct FieldExpr<S: Scalar>(pub(crate) Arc<Node<S>>);

pub(crate) struct Node<S: Scalar> {
    pub(crate) kind: Kind<S>,
    partials: [OnceLock<FieldExpr<S>>; 2],
}

pub(crate) enum Kind<S: Scalar> {
    Const(S),
    /// `c + g . x`; covers coordinates and corrugation phases.
    Affine { c: S, g: [S; 2] },
    Sum(Vec<FieldExpr<S>>),
    Prod(FieldExpr<S>, FieldExpr<S>),
    Scale(S, FieldExpr<S>),
    Sin(FieldExpr<S>),
    Cos(FieldExpr<S>),
    Powi(FieldExpr<S>, i32),
    Powf(FieldExpr<S>, S),
    Exp(FieldExpr<S>),
    /// `order`-th derivative of the 1D bump `exp(-1/(1-s^2))` composed with `arg`.
    Bump { order: u32, arg: FieldExpr<S> },
    Mollify { inner: FieldExpr<S>, kernel: Arc<Mollifier<S>> },
    Sine { series: Arc<SineSeries<S>>, deriv: [u8; 2] },
}

impl<S: Scalar> FieldExpr<S> {
    fn from_kind(kind: Kind<S>) -> Self {
        FieldExpr(Arc::new(Node { kind, partials: [OnceLock::new(), OnceLock::new()] }))
    }

    pub(crate) fn kind(&self) -> &Kind<S> {
        &self.0.kind
    }

    pub(crate) fn ptr(&self) -> *const Node<S> {
        Arc::as_ptr(&self.0)
    }

    /// Whether both handles share the same node.
    pub fn ptr_eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn constant(c: S) -> Self {
        Self::from_kind(Kind::Const(c))
    }

    pub fn zero() -> Self {
        Self::constant(S::zero())
    }

    pub fn one() -> Self {
        Self::constant(S::one())
    }

    /// Coordinate `x_1` (`axis = 0`) or `x_2` (`axis = 1`).
    pub fn coord(axis: usize) -> Self {
        let mut g = [S::zero(); 2];
        g[axis] = S::one();
        Self::affine(S::zero(), g)
    }

    pub fn x1() -> Self {
        Self::coord(0)
    }

    pub fn x2() -> Self {
        Self::coord(1)
    }

    pub fn affine(c: S, g: [S; 2]) -> Self {
        if g[0] == S::zero() && g[1] == S::zero() {
            Self::constant(c)
        } else {
            Self::from_kind(Kind::Affine { c, g })
        }
    }

    /// Phase `t = lambda * x . eta`.
    pub fn phase(lambda: S, eta: [S; 2]) -> Self {
        Self::affine(S::zero(), [lambda * eta[0], lambda * eta[1]])
    }

    pub fn as_const(&self) -> Option<S> {
        match self.kind() {
            Kind::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub(crate) fn as_affine(&self) -> Option<(S, [S; 2])> {
        match self.kind() {
            Kind::Const(c) => Some((*c, [S::zero(); 2])),
            Kind::Affine { c, g } => Some((*c, *g)),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(S::zero())
    }

    pub fn sum(terms: impl IntoIterator<Item = FieldExpr<S>>) -> Self {
        let mut c = S::zero();
        let mut g = [S::zero(); 2];
        let mut rest: Vec<FieldExpr<S>> = Vec::new();
        let mut push = |t: FieldExpr<S>, rest: &mut Vec<FieldExpr<S>>| {
            if let Some((tc, tg)) = t.as_affine() {
                c += tc;
                g[0] += tg[0];
                g[1] += tg[1];
            } else {
                rest.push(t);
            }
        };
        for t in terms {
            if let Kind::Sum(children) = t.kind() {
                for ch in children {
                    push(ch.clone(), &mut rest);
                }
            } else {
                push(t, &mut rest);
            }
        }
        let lin = Self::affine(c, g);
        if !lin.is_zero() {
            rest.push(lin);
        }
        match rest.len() {
            0 => Self::zero(),
            1 => rest.pop().expect("one term"),
            _ => Self::from_kind(Kind::Sum(rest)),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::sum([self.clone(), other.clone()])
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::sum([self.clone(), other.scale(-S::one())])
    }

    pub fn neg(&self) -> Self {
        self.scale(-S::one())
    }

    pub fn add_const(&self, c: S) -> Self {
        self.add(&Self::constant(c))
    }

    pub fn scale(&self, c: S) -> Self {
        if c == S::zero() {
            return Self::zero();
        }
        if c == S::one() {
            return self.clone();
        }
        match self.kind() {
            Kind::Const(v) => Self::constant(c * *v),
            Kind::Affine { c: c0, g } => Self::affine(c * *c0, [c * g[0], c * g[1]]),
            Kind::Scale(d, f) => f.scale(c * *d),
            _ => Self::from_kind(Kind::Scale(c, self.clone())),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if let Some(c) = self.as_const() {
            return other.scale(c);
        }
        if let Some(c) = other.as_const() {
            return self.scale(c);
        }
        Self::from_kind(Kind::Prod(self.clone(), other.clone()))
    }

    pub fn product(factors: impl IntoIterator<Item = FieldExpr<S>>) -> Self {
        factors.into_iter().fold(Self::one(), |acc, f| acc.mul(&f))
    }

    pub fn sin(&self) -> Self {
        match self.as_const() {
            Some(c) => Self::constant(c.sin()),
            None => Self::from_kind(Kind::Sin(self.clone())),
        }
    }

    pub fn cos(&self) -> Self {
        match self.as_const() {
            Some(c) => Self::constant(c.cos()),
            None => Self::from_kind(Kind::Cos(self.clone())),
        }
    }

    pub fn exp(&self) -> Self {
        match self.as_const() {
            Some(c) => Self::constant(c.exp()),
            None => Self::from_kind(Kind::Exp(self.clone())),
        }
    }

    pub fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        if n == 1 {
            return self.clone();
        }
        match self.as_const() {
            Some(c) => Self::constant(c.powi(n)),
            None => Self::from_kind(Kind::Powi(self.clone(), n)),
        }
    }

    pub fn powf(&self, p: S) -> Self {
        if p == S::one() {
            return self.clone();
        }
        if p == S::zero() {
            return Self::one();
        }
        match self.as_const() {
            Some(c) => Self::constant(c.powf(p)),
            None => Self::from_kind(Kind::Powf(self.clone(), p)),
        }
    }

    pub fn sqrt(&self) -> Self {
        self.powf(S::lit(0.5))
    }

    pub fn square(&self) -> Self {
        self.powi(2)
    }

    /// `bump^(order)(self)` for the compactly supported bump `exp(-1/(1-s^2))`.
    pub fn bump(&self, order: u32) -> Self {
        match self.as_const() {
            Some(c) => Self::constant(bump::bump_derivative(order, c)),
            None => Self::from_kind(Kind::Bump { order, arg: self.clone() }),
        }
    }

    pub(crate) fn mollify_node(inner: FieldExpr<S>, kernel: Arc<Mollifier<S>>) -> Self {
        Self::from_kind(Kind::Mollify { inner, kernel })
    }

    pub(crate) fn sine_node(series: Arc<SineSeries<S>>, deriv: [u8; 2]) -> Self {
        Self::from_kind(Kind::Sine { series, deriv })
    }

    /// Exact partial derivative along `axis` (0 or 1). Cached on the node.
    pub fn partial(&self, axis: usize) -> FieldExpr<S> {
        self.0.partials[axis].get_or_init(|| self.compute_partial(axis)).clone()
    }

    fn compute_partial(&self, i: usize) -> FieldExpr<S> {
        match self.kind() {
            Kind::Const(_) => Self::zero(),
            Kind::Affine { g, .. } => Self::constant(g[i]),
            Kind::Sum(ts) => Self::sum(ts.iter().map(|t| t.partial(i))),
            Kind::Prod(a, b) => Self::sum([a.partial(i).mul(b), a.mul(&b.partial(i))]),
            Kind::Scale(c, f) => f.partial(i).scale(*c),
            Kind::Sin(f) => f.cos().mul(&f.partial(i)),
            Kind::Cos(f) => f.sin().mul(&f.partial(i)).neg(),
            Kind::Powi(f, n) => f.powi(*n - 1).mul(&f.partial(i)).scale(S::from_i32(*n).unwrap()),
            Kind::Powf(f, p) => f.powf(*p - S::one()).mul(&f.partial(i)).scale(*p),
            Kind::Exp(f) => self.mul(&f.partial(i)),
            Kind::Bump { order, arg } => arg.bump(order + 1).mul(&arg.partial(i)),
            Kind::Mollify { inner, kernel } => kernel.apply(&inner.partial(i)),
            Kind::Sine { series, deriv } => {
                let mut d = *deriv;
                d[i] += 1;
                Self::sine_node(series.clone(), d)
            }
        }
    }

    /// Mixed partial `d^(i+j) / dx1^i dx2^j` without an order restriction.
    pub fn derivative(&self, i: usize, j: usize) -> FieldExpr<S> {
        let mut f = self.clone();
        for _ in 0..i {
            f = f.partial(0);
        }
        for _ in 0..j {
            f = f.partial(1);
        }
        f
    }

    pub fn grad(&self) -> [FieldExpr<S>; 2] {
        [self.partial(0), self.partial(1)]
    }

    /// Number of distinct nodes reachable from this expression.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(f) = stack.pop() {
            if !seen.insert(f.ptr()) {
                continue;
            }
            for ch in f.children() {
                stack.push(ch.clone());
            }
        }
        seen.len()
    }

    pub(crate) fn children(&self) -> Vec<&FieldExpr<S>> {
        match self.kind() {
            Kind::Const(_) | Kind::Affine { .. } | Kind::Sine { .. } | Kind::Mollify { .. } => vec![],
            Kind::Sum(ts) => ts.iter().collect(),
            Kind::Prod(a, b) => vec![a, b],
            Kind::Scale(_, f)
            | Kind::Sin(f)
            | Kind::Cos(f)
            | Kind::Powi(f, _)
            | Kind::Powf(f, _)
            | Kind::Exp(f)
            | Kind::Bump { arg: f, .. } => vec![f],
        }
    }

    /// Evaluate at a single point. Compiles the expression; use
    /// [`crate::field::Program`] when evaluating many points.
    pub fn eval(&self, p: [S; 2]) -> S {
        crate::field::Program::compile(std::slice::from_ref(self)).eval(p)[0]
    }
}

/// Exact mixed partial derivative for multi-indices with `i + j <= 3`.
pub fn differentiate<S: Scalar>(field: &FieldExpr<S>, multi_index: (usize, usize)) -> Result<FieldExpr<S>> {
    let order = multi_index.0 + multi_index.1;
    if order > 3 {
        return Err(Error::UnsupportedOrder { order, what: "composite expression" });
    }
    Ok(field.derivative(multi_index.0, multi_index.1))
}

impl<S: Scalar> fmt::Debug for FieldExpr<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            Kind::Const(c) => write!(f, "{c}"),
            Kind::Affine { c, g } => write!(f, "({c} + {}*x1 + {}*x2)", g[0], g[1]),
            Kind::Sum(ts) => {
                write!(f, "(")?;
                for (k, t) in ts.iter().enumerate() {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{t:?}")?;
                }
                write!(f, ")")
            }
            Kind::Prod(a, b) => write!(f, "{a:?}*{b:?}"),
            Kind::Scale(c, a) => write!(f, "{c}*{a:?}"),
            Kind::Sin(a) => write!(f, "sin{a:?}"),
            Kind::Cos(a) => write!(f, "cos{a:?}"),
            Kind::Powi(a, n) => write!(f, "{a:?}^{n}"),
            Kind::Powf(a, p) => write!(f, "{a:?}^{p}"),
            Kind::Exp(a) => write!(f, "exp{a:?}"),
            Kind::Bump { order, arg } => write!(f, "bump^({order}){arg:?}"),
            Kind::Mollify { inner, kernel } => write!(f, "mollify[l={}]({inner:?})", kernel.scale()),
            Kind::Sine { deriv, .. } => write!(f, "sine_series^({},{})", deriv[0], deriv[1]),
        }
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $call:ident) => {
        impl<S: Scalar> std::ops::$tr<FieldExpr<S>> for FieldExpr<S> {
            type Output = FieldExpr<S>;
            fn $m(self, rhs: FieldExpr<S>) -> FieldExpr<S> {
                FieldExpr::$call(&self, &rhs)
            }
        }
        impl<'a, S: Scalar> std::ops::$tr<&'a FieldExpr<S>> for &'a FieldExpr<S> {
            type Output = FieldExpr<S>;
            fn $m(self, rhs: &'a FieldExpr<S>) -> FieldExpr<S> {
                FieldExpr::$call(self, rhs)
            }
        }
    };
}

binop!(Add, add, add);
binop!(Sub, sub, sub);
binop!(Mul, mul, mul);

impl<S: Scalar> std::ops::Neg for FieldExpr<S> {
    type Output = FieldExpr<S>;
    fn neg(self) -> FieldExpr<S> {
        FieldExpr::neg(&self)
    }
}

/// Pair of scalar fields (e.g. `w` or a gradient).
pub type VecField<S> = [FieldExpr<S>; 2];

/// Symmetric 2x2 matrix field; `e21` is `e12` by construction.
#[derive(Clone, Debug)]
pub struct SymField<S: Scalar> {
    pub e11: FieldExpr<S>,
    pub e12: FieldExpr<S>,
    pub e22: FieldExpr<S>,
}

impl<S: Scalar> SymField<S> {
    pub fn new(e11: FieldExpr<S>, e12: FieldExpr<S>, e22: FieldExpr<S>) -> Self {
        Self { e11, e12, e22 }
    }

    pub fn constant(m: [[S; 2]; 2]) -> Self {
        Self::new(FieldExpr::constant(m[0][0]), FieldExpr::constant(m[0][1]), FieldExpr::constant(m[1][1]))
    }

    pub fn scalar_identity(f: &FieldExpr<S>) -> Self {
        Self::new(f.clone(), FieldExpr::zero(), f.clone())
    }

    pub fn identity_times(c: S) -> Self {
        Self::scalar_identity(&FieldExpr::constant(c))
    }

    pub fn zero() -> Self {
        Self::identity_times(S::zero())
    }

    pub fn entries(&self) -> [&FieldExpr<S>; 3] {
        [&self.e11, &self.e12, &self.e22]
    }

    pub fn map(&self, f: impl Fn(&FieldExpr<S>) -> FieldExpr<S>) -> Self {
        Self::new(f(&self.e11), f(&self.e12), f(&self.e22))
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(&self.e11 + &o.e11, &self.e12 + &o.e12, &self.e22 + &o.e22)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(&self.e11 - &o.e11, &self.e12 - &o.e12, &self.e22 - &o.e22)
    }

    pub fn scale(&self, c: S) -> Self {
        self.map(|e| e.scale(c))
    }

    /// `a (x) b` symmetrised: `sym(a (x) b)`.
    pub fn sym_outer(a: &VecField<S>, b: &VecField<S>) -> Self {
        let h = S::lit(0.5);
        Self::new(
            &a[0] * &b[0],
            (&a[0] * &b[1] + &a[1] * &b[0]).scale(h),
            &a[1] * &b[1],
        )
    }

    /// `f * eta (x) eta` for a constant vector `eta`.
    pub fn rank_one(f: &FieldExpr<S>, eta: [S; 2]) -> Self {
        Self::new(f.scale(eta[0] * eta[0]), f.scale(eta[0] * eta[1]), f.scale(eta[1] * eta[1]))
    }

    /// `sym grad w`.
    pub fn sym_grad(w: &VecField<S>) -> Self {
        let h = S::lit(0.5);
        Self::new(w[0].partial(0), (&w[0].partial(1) + &w[1].partial(0)).scale(h), w[1].partial(1))
    }

    /// `1/2 grad v (x) grad v + sym grad w`.
    pub fn induced(v: &FieldExpr<S>, w: &VecField<S>) -> Self {
        let g = v.grad();
        Self::sym_outer(&g, &g).scale(S::lit(0.5)).add(&Self::sym_grad(w))
    }

    pub fn eval(&self, p: [S; 2]) -> [[S; 2]; 2] {
        let prog = crate::field::Program::compile(&[self.e11.clone(), self.e12.clone(), self.e22.clone()]);
        let v = prog.eval(p);
        [[v[0], v[1]], [v[1], v[2]]]
    }
}
