//! Convolution with the radially symmetric bump
//! `phi(x) = c exp(-1/(1-|x|^2))` scaled to `phi_l(x) = l^-2 phi(x/l)`.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::field::{Domain, FieldExpr, Kind};
use crate::quadrature;
use crate::Scalar;

/// Default tensor Gauss-Legendre order per axis.
pub const DEFAULT_QUAD_ORDER: usize = 24;

/// Normalisation constant `c` with `int phi = 1`, from 1D radial quadrature.
pub fn mass_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let radial = quadrature::integrate(|r| r * (-1.0 / (1.0 - r * r)).exp(), 0.0, 1.0, 64, 20);
        1.0 / (2.0 * std::f64::consts::PI * radial)
    })
}

/// Unscaled mollifier profile `phi(x)` at `|x|^2 = r2`.
pub fn profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        mass_constant() * (-1.0 / (1.0 - r2)).exp()
    }
}

/// Radial moment `int |x|^p phi(x) dx` of the unscaled mollifier.
pub fn radial_moment(p: i32) -> f64 {
    let c = mass_constant();
    2.0 * std::f64::consts::PI
        * c
        * quadrature::integrate(|r| r.powi(p + 1) * (-1.0 / (1.0 - r * r)).exp(), 0.0, 1.0, 64, 20)
}

/// A discretised mollifier at scale `l`: quadrature offsets with weights
/// `w_q ~ phi_l(y_q) dy`, renormalised to unit discrete mass.
#[derive(Debug)]
pub struct Mollifier<S> {
    l: S,
    order: usize,
    pub(crate) offsets: Vec<[S; 2]>,
    pub(crate) weights: Vec<S>,
}

impl<S: Scalar> Mollifier<S> {
    pub fn new(l: S, order: usize) -> Arc<Self> {
        let (x, w) = quadrature::gauss_legendre(order);
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let mut mass = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            for (xj, wj) in x.iter().zip(&w) {
                let r2 = xi * xi + xj * xj;
                if r2 >= 1.0 {
                    continue;
                }
                let wt = wi * wj * profile(r2);
                mass += wt;
                offsets.push([l * S::lit(*xi), l * S::lit(*xj)]);
                weights.push(wt);
            }
        }
        let weights = weights.into_iter().map(|wt| S::lit(wt / mass)).collect();
        Arc::new(Self { l, order, offsets, weights })
    }

    pub fn scale(&self) -> S {
        self.l
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Convolution node `f * phi_l`. Affine parts pass through unchanged
    /// (radial symmetry kills the first moment).
    pub fn apply(self: &Arc<Self>, f: &FieldExpr<S>) -> FieldExpr<S> {
        if f.as_affine().is_some() {
            return f.clone();
        }
        if let Kind::Sum(terms) = f.kind() {
            let (lin, rest): (Vec<_>, Vec<_>) = terms.iter().cloned().partition(|t| t.as_affine().is_some());
            if !lin.is_empty() {
                let rest = FieldExpr::sum(rest);
                return FieldExpr::sum(lin).add(&self.apply(&rest));
            }
        }
        if let Kind::Scale(c, g) = f.kind() {
            return self.apply(g).scale(*c);
        }
        FieldExpr::mollify_node(f.clone(), self.clone())
    }
}

/// `f * phi_l` restricted to the domain; the margin must cover `l`.
pub fn mollify<S: Scalar>(field: &FieldExpr<S>, l: S, quad_order: usize, domain: &Domain<S>) -> Result<FieldExpr<S>> {
    if !(l > S::zero() && l < S::one()) {
        return Err(Error::Parameter(format!("mollification scale must lie in (0,1), got {l}")));
    }
    if quad_order < 2 {
        return Err(Error::Parameter("quadrature order must be at least 2".into()));
    }
    domain.require_margin(l)?;
    Ok(Mollifier::new(l, quad_order).apply(field))
}
