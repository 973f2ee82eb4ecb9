//! Sampled norm estimators on rectangular lattices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Domain, FieldExpr, Program, Rect, SymField};
use crate::Scalar;

/// Which norm a [`NormEstimate`] approximates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    Sup,
    /// `sum_{j<=m} sup max_{|a|=j} |d^a f|`
    Cm(u32),
    /// Holder seminorm `[f]_alpha`.
    Holder(f64),
}

/// Lower bound of a norm obtained by sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub kind: NormKind,
    /// Points per unit length actually used.
    pub sample_resolution: f64,
}

/// Uniform lattice with `n[0] x n[1]` cells (so `(n+1)` points per axis).
///
/// Cell counts are powers of two, so raising the requested resolution only
/// ever refines the lattice by nesting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice<S> {
    pub rect: Rect<S>,
    pub n: [usize; 2],
}

impl<S: Scalar> Lattice<S> {
    /// Lattice with at least `resolution` points per unit length.
    pub fn with_resolution(rect: Rect<S>, resolution: f64) -> Self {
        let cells = |len: S| {
            let want = (resolution * len.as_f64()).ceil().max(1.0) as usize;
            want.next_power_of_two()
        };
        Self { rect, n: [cells(rect.width()), cells(rect.height())] }
    }

    /// Lattice with exactly `nx x ny` cells.
    pub fn with_cells(rect: Rect<S>, nx: usize, ny: usize) -> Self {
        Self { rect, n: [nx.max(1), ny.max(1)] }
    }

    pub fn resolution(&self) -> f64 {
        (self.n[0] as f64 / self.rect.width().as_f64()).min(self.n[1] as f64 / self.rect.height().as_f64())
    }

    pub fn len(&self) -> usize {
        (self.n[0] + 1) * (self.n[1] + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize, j: usize) -> [S; 2] {
        let fx = S::from_usize(i).unwrap() / S::from_usize(self.n[0]).unwrap();
        let fy = S::from_usize(j).unwrap() / S::from_usize(self.n[1]).unwrap();
        [self.rect.min[0] + fx * self.rect.width(), self.rect.min[1] + fy * self.rect.height()]
    }

    /// All points, `x` index outermost.
    pub fn points(&self) -> Vec<[S; 2]> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..=self.n[0] {
            for j in 0..=self.n[1] {
                out.push(self.point(i, j));
            }
        }
        out
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * (self.n[1] + 1) + j
    }
}

/// Evaluate `fields` on `lattice` and return the maximum absolute value per field.
pub fn sup_many<S: Scalar>(fields: &[FieldExpr<S>], lattice: &Lattice<S>) -> Vec<f64> {
    let prog = Program::compile(fields);
    let vals = prog.eval_points(&lattice.points());
    let w = fields.len();
    let mut out = vec![0.0f64; w];
    for row in vals.chunks(w) {
        for (o, v) in out.iter_mut().zip(row) {
            let a = v.as_f64().abs();
            // NaN propagates so that broken fields are never reported as small
            if a.is_nan() || a > *o {
                *o = if o.is_nan() { *o } else { a };
            }
        }
    }
    out
}

/// Sampled sup norm on a rectangle.
pub fn sup_on<S: Scalar>(field: &FieldExpr<S>, rect: &Rect<S>, resolution: f64) -> NormEstimate {
    let lat = Lattice::with_resolution(*rect, resolution);
    NormEstimate { value: sup_many(std::slice::from_ref(field), &lat)[0], kind: NormKind::Sup, sample_resolution: lat.resolution() }
}

/// Sampled sup of the spectral norm of a symmetric matrix field.
pub fn sym_sup_on<S: Scalar>(m: &SymField<S>, lattice: &Lattice<S>) -> f64 {
    let prog = Program::compile(&[m.e11.clone(), m.e12.clone(), m.e22.clone()]);
    prog.map_points(&lattice.points(), |_, v| {
        crate::sym2::spectral([v[0].as_f64(), v[1].as_f64(), v[2].as_f64()])
    })
    .into_iter()
    .fold(0.0, |m, x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.max(x) })
}

fn holder_seminorm_values(vals: &[f64], lat: &Lattice<f64>, alpha: f64) -> f64 {
    let [nx, ny] = lat.n;
    let hx = lat.rect.width() / nx as f64;
    let hy = lat.rect.height() / ny as f64;
    let dirs: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (1, -1)];
    let mut best: f64 = 0.0;
    let max_steps = nx.max(ny);
    let mut d = 1usize;
    while d <= max_steps {
        for &(dx, dy) in &dirs {
            let dist = ((dx as f64 * d as f64 * hx).powi(2) + (dy as f64 * d as f64 * hy).powi(2)).sqrt();
            let denom = dist.powf(alpha);
            for i in 0..=nx {
                let i2 = i as isize + dx * d as isize;
                if i2 < 0 || i2 > nx as isize {
                    continue;
                }
                for j in 0..=ny {
                    let j2 = j as isize + dy * d as isize;
                    if j2 < 0 || j2 > ny as isize {
                        continue;
                    }
                    let a = vals[lat.index(i, j)];
                    let b = vals[lat.index(i2 as usize, j2 as usize)];
                    let q = (a - b).abs() / denom;
                    if q > best {
                        best = q;
                    }
                }
            }
        }
        d *= 2;
    }
    best
}

/// Sampled Holder seminorm `[f]_alpha` on a rectangle.
pub fn holder_on<S: Scalar>(field: &FieldExpr<S>, rect: &Rect<S>, alpha: f64, resolution: f64) -> NormEstimate {
    let lat = Lattice::with_resolution(*rect, resolution);
    let prog = Program::compile(std::slice::from_ref(field));
    let vals: Vec<f64> = prog.eval_points(&lat.points()).into_iter().map(|v| v.as_f64()).collect();
    let lat64 = Lattice {
        rect: Rect { min: [rect.min[0].as_f64(), rect.min[1].as_f64()], max: [rect.max[0].as_f64(), rect.max[1].as_f64()] },
        n: lat.n,
    };
    NormEstimate { value: holder_seminorm_values(&vals, &lat64, alpha), kind: NormKind::Holder(alpha), sample_resolution: lat.resolution() }
}

/// Sampled `C^m` norm on a rectangle.
pub fn cm_on<S: Scalar>(field: &FieldExpr<S>, rect: &Rect<S>, m: u32, resolution: f64) -> NormEstimate {
    let lat = Lattice::with_resolution(*rect, resolution);
    let mut fields = Vec::new();
    let mut order = Vec::new();
    for j in 0..=m as usize {
        for i in 0..=j {
            fields.push(field.derivative(j - i, i));
            order.push(j);
        }
    }
    let sups = sup_many(&fields, &lat);
    let mut per_order = vec![0.0f64; m as usize + 1];
    for (s, j) in sups.iter().zip(order) {
        per_order[j] = per_order[j].max(*s);
    }
    NormEstimate { value: per_order.iter().sum(), kind: NormKind::Cm(m), sample_resolution: lat.resolution() }
}

/// Sampled norm of `field` on the closure of the domain's rectangle.
pub fn norm_estimate<S: Scalar>(field: &FieldExpr<S>, domain: &Domain<S>, kind: NormKind, resolution: f64) -> Result<NormEstimate> {
    norm_on(field, &domain.rect, kind, resolution)
}

/// As [`norm_estimate`] on an arbitrary rectangle.
pub fn norm_on<S: Scalar>(field: &FieldExpr<S>, rect: &Rect<S>, kind: NormKind, resolution: f64) -> Result<NormEstimate> {
    if !(resolution >= 2.0) {
        return Err(Error::Parameter(format!("resolution must be at least 2 points per unit length, got {resolution}")));
    }
    Ok(match kind {
        NormKind::Sup => sup_on(field, rect, resolution),
        NormKind::Cm(m) => cm_on(field, rect, m, resolution),
        NormKind::Holder(a) => {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Parameter(format!("Holder exponent must lie in (0,1], got {a}")));
            }
            holder_on(field, rect, a, resolution)
        }
    })
}

/// A field together with the region on which it may be evaluated.
#[derive(Clone, Debug)]
pub struct RegionField<S: Scalar> {
    pub field: FieldExpr<S>,
    pub region: Rect<S>,
}

impl<S: Scalar> RegionField<S> {
    pub fn eval(&self, p: [S; 2]) -> Result<S> {
        if !self.region.contains(p) {
            return Err(Error::Domain { x: p[0].as_f64(), y: p[1].as_f64() });
        }
        Ok(self.field.eval(p))
    }

    pub fn norm(&self, kind: NormKind, resolution: f64) -> Result<NormEstimate> {
        norm_on(&self.field, &self.region, kind, resolution)
    }
}

/// Re-tag a closed-form field as admissible on the extended rectangle.
pub fn extend<S: Scalar>(field: &FieldExpr<S>, domain: &Domain<S>) -> RegionField<S> {
    RegionField { field: field.clone(), region: domain.extended() }
}

/// Evaluate after checking that `p` is in the extended rectangle.
pub fn evaluate<S: Scalar>(field: &FieldExpr<S>, domain: &Domain<S>, p: [S; 2]) -> Result<S> {
    domain.check_extended(p)?;
    Ok(field.eval(p))
}

/// Result of [`commutator_gap`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorGap {
    /// Sampled `sup |(fg)*phi_l - (f*phi_l)(g*phi_l)|` on the domain.
    pub gap: f64,
    /// `l^(2 alpha) ||f||_{0,alpha} ||g||_{0,alpha}` from the same lattice.
    pub reference: f64,
}

/// Commutator between mollification and multiplication.
pub fn commutator_gap<S: Scalar>(
    f: &FieldExpr<S>,
    g: &FieldExpr<S>,
    l: S,
    alpha: f64,
    domain: &Domain<S>,
    resolution: f64,
) -> Result<CommutatorGap> {
    use crate::field::mollify::Mollifier;
    domain.require_margin(l)?;
    if !(l > S::zero() && l < S::one()) {
        return Err(Error::Parameter(format!("mollification scale must lie in (0,1), got {l}")));
    }
    let k = Mollifier::new(l, crate::field::DEFAULT_QUAD_ORDER);
    let diff = k.apply(&f.mul(g)).sub(&k.apply(f).mul(&k.apply(g)));
    let gap = sup_on(&diff, &domain.rect, resolution).value;
    let hn = |h: &FieldExpr<S>| -> Result<f64> {
        Ok(sup_on(h, &domain.rect, resolution).value + norm_on(h, &domain.rect, NormKind::Holder(alpha), resolution)?.value)
    };
    let reference = l.as_f64().powf(2.0 * alpha) * hn(f)? * hn(g)?;
    Ok(CommutatorGap { gap, reference })
}

#[cfg(test)]
mod tests {
    use super::*;

    type F = FieldExpr<f64>;

    #[test]
    fn sup_of_constant_is_exact() {
        let d = Domain::unit_square(0.0);
        let e = norm_estimate(&F::constant(3.0), &d, NormKind::Sup, 8.0).unwrap();
        assert_eq!(e.value, 3.0);
    }

    #[test]
    fn lipschitz_constant_of_coordinate() {
        let d = Domain::unit_square(0.0);
        let e = norm_estimate(&F::x1(), &d, NormKind::Holder(1.0), 16.0).unwrap();
        assert!((e.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn extension_evaluates_in_margin() {
        let d = Domain::unit_square(0.2);
        let f = extend(&F::x1().square(), &d);
        assert!((f.eval([1.1, 0.0]).unwrap() - 1.21).abs() < 1e-14);
        assert!(f.eval([1.3, 0.0]).is_err());
        let s = f.norm(NormKind::Sup, 10.0).unwrap().value;
        assert!((s - 1.44).abs() < 1e-12);
    }
}
