//! Corrugation profiles and the single Nash-Kuiper step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::norm::sym_sup_on;
use crate::field::{Domain, FieldExpr, Lattice, NormEstimate, NormKind, Program, SymField, VecField};
use crate::Scalar;

/// Largest frequency tried by [`choose_lambda`].
pub const LAMBDA_CAP: f64 = (1u64 << 24) as f64;

/// `(Gamma1, Gamma2, d_t Gamma1, d_t Gamma2)` at amplitude `a` and phase `t`.
pub fn gamma<S: Scalar>(a: S, t: S) -> Result<[S; 4]> {
    if !(a >= S::zero()) {
        return Err(Error::Argument(format!("amplitude must be nonnegative, got {a}")));
    }
    let pi = S::PI();
    let tau = S::two_pi();
    let four = S::lit(4.0);
    let (s1, c1) = (tau * t).sin_cos();
    let (s2, c2) = (S::lit(2.0) * tau * t).sin_cos();
    Ok([a / pi * s1, -(a * a) / (four * pi) * s2, S::lit(2.0) * a * c1, -(a * a) * c2])
}

/// The profiles of one corrugation, as expressions in `x` with the fast
/// variable `t = lambda x . eta` substituted.
#[derive(Clone, Debug)]
pub struct CorrugationProfile<S: Scalar> {
    pub a: FieldExpr<S>,
    pub lambda: S,
    pub eta: [S; 2],
}

impl<S: Scalar> CorrugationProfile<S> {
    pub fn new(a: FieldExpr<S>, lambda: S, eta: [S; 2]) -> Self {
        Self { a, lambda, eta }
    }

    fn phase(&self, mult: f64) -> FieldExpr<S> {
        FieldExpr::phase(S::two_pi() * S::lit(mult) * self.lambda, self.eta)
    }

    /// `Gamma1 = (a/pi) sin(2 pi t)`.
    pub fn gamma1(&self) -> FieldExpr<S> {
        self.a.mul(&self.phase(1.0).sin()).scale(S::one() / S::PI())
    }

    /// `Gamma2 = -(a^2/(4 pi)) sin(4 pi t)`.
    pub fn gamma2(&self) -> FieldExpr<S> {
        self.a.square().mul(&self.phase(2.0).sin()).scale(-S::one() / (S::lit(4.0) * S::PI()))
    }

    /// `d_t Gamma1 = 2 a cos(2 pi t)`.
    pub fn dt_gamma1(&self) -> FieldExpr<S> {
        self.a.mul(&self.phase(1.0).cos()).scale(S::lit(2.0))
    }

    /// `d_t Gamma2 = -a^2 cos(4 pi t)`.
    pub fn dt_gamma2(&self) -> FieldExpr<S> {
        self.a.square().mul(&self.phase(2.0).cos()).neg()
    }
}

/// Where and how finely step residuals are measured.
#[derive(Clone, Copy, Debug)]
pub struct StepOptions<S> {
    pub domain: Domain<S>,
    /// Samples per oscillation period along each axis.
    pub samples_per_period: f64,
    /// Maximum lattice cells per side.
    pub lattice_cap: usize,
    /// Holder scale `l`; when set, `lambda * l > 1` is required.
    pub holder_scale: Option<S>,
}

impl<S: Scalar> StepOptions<S> {
    pub fn new(domain: Domain<S>) -> Self {
        Self { domain, samples_per_period: 6.0, lattice_cap: 512, holder_scale: None }
    }

    pub fn lattice(&self, lambda: f64) -> Lattice<S> {
        let r = &self.domain.rect;
        let cells = |len: S| {
            let want = (self.samples_per_period * lambda * len.as_f64()).ceil().max(8.0) as usize;
            want.next_power_of_two().min(self.lattice_cap.max(2))
        };
        Lattice::with_cells(*r, cells(r.width()), cells(r.height()))
    }
}

/// Result of one corrugation step.
#[derive(Clone, Debug)]
pub struct StepOutcome<S: Scalar> {
    pub v_new: FieldExpr<S>,
    pub w_new: VecField<S>,
    pub lambda: f64,
    pub residual: NormEstimate,
}

/// JSON-friendly summary of a step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub lambda: f64,
    pub residual: f64,
    pub eta: [f64; 2],
    pub amplitude_sup: f64,
}

/// The step ansatz `v + Gamma1/lambda`, `w - (Gamma1/lambda) grad v + (Gamma2/lambda) eta`.
pub fn corrugate<S: Scalar>(v: &FieldExpr<S>, w: &VecField<S>, a: &FieldExpr<S>, eta: [S; 2], lambda: S) -> (FieldExpr<S>, VecField<S>) {
    if a.is_zero() {
        return (v.clone(), w.clone());
    }
    let prof = CorrugationProfile::new(a.clone(), lambda, eta);
    let inv = S::one() / lambda;
    let g1 = prof.gamma1().scale(inv);
    let g2 = prof.gamma2().scale(inv);
    let gv = v.grad();
    let v_new = v.add(&g1);
    let w_new = [
        w[0].sub(&g1.mul(&gv[0])).add(&g2.scale(eta[0])),
        w[1].sub(&g1.mul(&gv[1])).add(&g2.scale(eta[1])),
    ];
    (v_new, w_new)
}

/// `induced(v_new, w_new) - (induced(v, w) + a^2 eta (x) eta)`.
pub fn step_mismatch<S: Scalar>(
    v: &FieldExpr<S>,
    w: &VecField<S>,
    a: &FieldExpr<S>,
    eta: [S; 2],
    v_new: &FieldExpr<S>,
    w_new: &VecField<S>,
) -> SymField<S> {
    SymField::induced(v_new, w_new)
        .sub(&SymField::induced(v, w))
        .sub(&SymField::rank_one(&a.square(), eta))
}

fn check_amplitude<S: Scalar>(a: &FieldExpr<S>, lattice: &Lattice<S>) -> Result<f64> {
    if let Some(c) = a.as_const() {
        if !(c >= S::zero()) {
            return Err(Error::Argument(format!("amplitude must be nonnegative, got {c}")));
        }
        return Ok(c.as_f64());
    }
    let prog = Program::compile(std::slice::from_ref(a));
    let vals = prog.map_points(&lattice.points(), |p, v| (p, v[0]));
    let mut sup: f64 = 0.0;
    for (p, v) in vals {
        if !(v >= S::zero()) {
            return Err(Error::Argument(format!("amplitude {v} at ({}, {}) is not a nonnegative number", p[0], p[1])));
        }
        sup = sup.max(v.as_f64());
    }
    Ok(sup)
}

/// One corrugation step along `eta` at frequency `lambda`, with the sampled
/// step residual.
pub fn step<S: Scalar>(
    v: &FieldExpr<S>,
    w: &VecField<S>,
    a: &FieldExpr<S>,
    eta: [S; 2],
    lambda: S,
    opts: &StepOptions<S>,
) -> Result<StepOutcome<S>> {
    if !(lambda > S::one()) {
        return Err(Error::Parameter(format!("frequency must exceed 1, got {lambda}")));
    }
    if let Some(l) = opts.holder_scale {
        if !(lambda * l > S::one()) {
            return Err(Error::Parameter(format!("frequency {lambda} must exceed 1/l = {}", S::one() / l)));
        }
    }
    let lat = opts.lattice(lambda.as_f64());
    check_amplitude(a, &lat)?;
    let (v_new, w_new) = corrugate(v, w, a, eta, lambda);
    let residual = if a.is_zero() {
        0.0
    } else {
        sym_sup_on(&step_mismatch(v, w, a, eta, &v_new, &w_new), &lat)
    };
    Ok(StepOutcome {
        v_new,
        w_new,
        lambda: lambda.as_f64(),
        residual: NormEstimate { value: residual, kind: NormKind::Sup, sample_resolution: lat.resolution() },
    })
}

/// Doubling search from `max(2, lambda_floor)` for the first frequency whose
/// measured step residual is within `budget`.
pub fn choose_lambda<S: Scalar>(
    v: &FieldExpr<S>,
    w: &VecField<S>,
    a: &FieldExpr<S>,
    eta: [S; 2],
    budget: f64,
    lambda_floor: f64,
    opts: &StepOptions<S>,
) -> Result<StepOutcome<S>> {
    let mut lambda = lambda_floor.max(2.0);
    if let Some(l) = opts.holder_scale {
        // the Holder regime needs lambda * l > 1
        while lambda * l.as_f64() <= 1.0 {
            lambda *= 2.0;
        }
    }
    let mut last = f64::NAN;
    while lambda <= LAMBDA_CAP {
        let out = step(v, w, a, eta, S::lit(lambda), opts)?;
        last = out.residual.value;
        if budget > 0.0 && last <= budget {
            return Ok(out);
        }
        if budget <= 0.0 && last > 0.0 {
            break;
        }
        lambda *= 2.0;
    }
    Err(Error::NonConvergence {
        reason: format!("step residual above budget {budget:e} up to frequency {}", lambda.min(LAMBDA_CAP)),
        last_residual: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_period_values() {
        let g = gamma(1.0f64, 0.25).unwrap();
        assert!((g[0] - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!(g[1].abs() < 1e-15 && g[2].abs() < 1e-15 && (g[3] - 1.0).abs() < 1e-15);
        assert!(gamma(-1.0f64, 0.0).is_err());
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let d = Domain::unit_square(0.0);
        let v = FieldExpr::<f64>::x1().square();
        let w = [FieldExpr::x2(), FieldExpr::zero()];
        let out = step(&v, &w, &FieldExpr::zero(), [1.0, 0.0], 8.0, &StepOptions::new(d)).unwrap();
        assert_eq!(out.v_new.ptr(), v.ptr());
        assert_eq!(out.residual.value, 0.0);
    }
}
