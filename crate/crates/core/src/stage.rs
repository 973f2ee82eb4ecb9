//! One stage of the iteration: the C^1 stage (decompose the defect, one step
//! per term) and the Holder stage (mollify, shift, three steps).

use serde::{Deserialize, Serialize};

use crate::analysis::defect;
use crate::decomp::{self, RankOneSystem};
use crate::error::{Error, Result};
use crate::field::norm::cm_on;
use crate::field::{Domain, FieldExpr, Lattice, Mollifier, NormEstimate, NormKind, Program, SymField, VecField};
use crate::oscillate::{choose_lambda, step, StepOptions, StepRecord, LAMBDA_CAP};
use crate::sym2;
use crate::Scalar;

/// Knobs shared by both stage kinds.
#[derive(Clone, Copy, Debug)]
pub struct StageParams<S> {
    pub domain: Domain<S>,
    /// Target defect of a C^1 stage.
    pub epsilon: f64,
    /// C^2 bound `M` of a Holder stage.
    pub m: f64,
    /// Frequency ratio `sigma > 1` of a Holder stage.
    pub sigma: f64,
    /// Upper bound on the incoming defect of a Holder stage.
    pub delta0: f64,
    pub quad_order: usize,
    /// Cells per side of the lattice on which defects are measured.
    pub verify_cells: usize,
    /// Points per unit length used to sample the defect range for decomposition.
    pub decomp_resolution: f64,
    pub step: StepOptions<S>,
}

impl<S: Scalar> StageParams<S> {
    pub fn new(domain: Domain<S>) -> Self {
        Self {
            domain,
            epsilon: 0.05,
            m: 10.0,
            sigma: 4.0,
            delta0: 0.1,
            quad_order: crate::field::DEFAULT_QUAD_ORDER,
            verify_cells: 64,
            decomp_resolution: 32.0,
            step: StepOptions::new(domain),
        }
    }

    pub fn verify_lattice(&self) -> Lattice<S> {
        Lattice::with_cells(self.domain.rect, self.verify_cells, self.verify_cells)
    }

    fn estimate(&self, value: f64) -> NormEstimate {
        NormEstimate { value, kind: NormKind::Sup, sample_resolution: self.verify_lattice().resolution() }
    }
}

/// Per-stage record, one JSON line in the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub kind: String,
    pub defect_before: NormEstimate,
    pub defect_after: NormEstimate,
    pub margin_before: f64,
    /// Smallest eigenvalue of the new defect on the verification lattice.
    pub c1_margin: f64,
    pub lambdas: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub n_terms: usize,
    pub n0: usize,
    pub patches: usize,
    /// `sup |grad v_new - grad v|`.
    pub grad_increment: f64,
    pub v_drift: f64,
    pub w_drift: f64,
    /// C^1 stage: the `delta` with `sum a_k^2 eta_k (x) eta_k = (1 - delta) D`.
    pub delta: Option<f64>,
    /// Holder stage: mollification scale.
    pub l: Option<f64>,
    /// Holder stage: magnitude `2(|D_l| + |D|)/r0` of the `w` shift.
    pub shift: f64,
    pub m: Option<f64>,
    pub sigma: Option<f64>,
    /// Holder stage: sup of the defect of the mollified fields.
    pub mollified_defect: Option<f64>,
    /// Holder stage: `max_m l^m |grad v_l|_m + max_{m,k} l^m |a_k|_m`.
    pub delta1: Option<f64>,
    /// Holder stage: `|v_new - v|_1`.
    pub v_c1_change: Option<f64>,
    /// Holder stage: `|v_new|_2`.
    pub v_c2: Option<f64>,
}

/// `(sup |D|, min eigenvalue of D)` over the lattice, spectral norm.
pub fn defect_stats<S: Scalar>(d: &SymField<S>, lattice: &Lattice<S>) -> (f64, f64) {
    let prog = Program::compile(&[d.e11.clone(), d.e12.clone(), d.e22.clone()]);
    prog.map_points(&lattice.points(), |_, v| {
        let g = [v[0].as_f64(), v[1].as_f64(), v[2].as_f64()];
        (sym2::spectral(g), sym2::min_eigenvalue(g))
    })
    .into_iter()
    .fold((0.0f64, f64::INFINITY), |(s, m), (a, b)| {
        (if a.is_nan() || s.is_nan() { f64::NAN } else { s.max(a) }, if b.is_nan() || m.is_nan() { f64::NAN } else { m.min(b) })
    })
}

/// Smallest eigenvalue of `D` over a lattice at `resolution` points per unit length.
pub fn pd_margin<S: Scalar>(d: &SymField<S>, domain: &Domain<S>, resolution: f64) -> f64 {
    defect_stats(d, &Lattice::with_resolution(domain.rect, resolution)).1
}

fn sup_vec<S: Scalar>(f: &[FieldExpr<S>], lattice: &Lattice<S>) -> f64 {
    let prog = Program::compile(f);
    prog.map_points(&lattice.points(), |_, v| v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt())
        .into_iter()
        .fold(0.0, f64::max)
}

fn drifts<S: Scalar>(v: &FieldExpr<S>, w: &VecField<S>, v_new: &FieldExpr<S>, w_new: &VecField<S>, lat: &Lattice<S>) -> (f64, f64, f64) {
    let dv = v_new.sub(v);
    (
        sup_vec(&dv.grad(), lat),
        sup_vec(std::slice::from_ref(&dv), lat),
        sup_vec(&[w_new[0].sub(&w[0]), w_new[1].sub(&w[1])], lat),
    )
}

fn vec_s<S: Scalar>(e: [S; 2]) -> [f64; 2] {
    [e[0].as_f64(), e[1].as_f64()]
}

/// C^1 stage: reduce a positive definite defect below `params.epsilon`.
pub fn stage_c1<S: Scalar>(
    v: &FieldExpr<S>,
    w: &VecField<S>,
    a: &SymField<S>,
    params: &StageParams<S>,
) -> Result<(FieldExpr<S>, VecField<S>, StageReport)> {
    let eps = params.epsilon;
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("stage target must be positive, got {eps}")));
    }
    let lat = params.verify_lattice();
    let d = defect(v, w, a);
    let (norm, margin) = defect_stats(&d, &lat);
    if !(margin > 0.0) {
        return Err(Error::Precondition(format!("defect is not positive definite: smallest eigenvalue {margin:e}")));
    }
    let sys: RankOneSystem<S> = decomp::decompose_field(&d, &params.domain, params.decomp_resolution)?;
    let delta = (eps / (2.0 * norm + 1e-12)).min(0.5);
    let n = sys.len();
    // each step may spend eps/(2N), and no more than it takes to keep
    // delta * D strictly positive definite
    let budget = (eps / (2.0 * n as f64)).min(delta * margin / (2.0 * n as f64));
    let scale = S::lit((1.0 - delta).sqrt());
    let (mut vk, mut wk) = (v.clone(), w.clone());
    let mut lambdas = Vec::new();
    let mut steps = Vec::new();
    let mut floor: f64 = 2.0;
    let drift_budget = eps / (2.0 * n as f64);
    for (i, (b, eta)) in sys.terms.iter().enumerate() {
        let ak = b.scale(scale);
        let amp = crate::field::norm::sup_many(std::slice::from_ref(&ak), &lat)[0];
        // |v_new - v| <= |a|/(pi lambda) and
        // |w_new - w| <= (|a| |grad v|/pi + |a|^2/(4 pi))/lambda
        let grad = sup_vec(&vk.grad(), &lat);
        let pi = std::f64::consts::PI;
        let drift = amp / pi * (1.0 + grad) + amp * amp / (4.0 * pi);
        floor = floor.max(drift / drift_budget);
        let out = choose_lambda(&vk, &wk, &ak, *eta, budget, floor, &params.step)
            .map_err(|e| match e {
                Error::NonConvergence { reason, last_residual } => {
                    Error::NonConvergence { reason: format!("term {}: {reason}", i + 1), last_residual }
                }
                other => other,
            })?;
        floor = out.lambda;
        lambdas.push(out.lambda);
        steps.push(StepRecord { lambda: out.lambda, residual: out.residual.value, eta: vec_s(*eta), amplitude_sup: amp });
        vk = out.v_new;
        wk = out.w_new;
    }
    let d_new = defect(&vk, &wk, a);
    let (after, c1_margin) = defect_stats(&d_new, &lat);
    let (grad_increment, v_drift, w_drift) = drifts(v, w, &vk, &wk, &lat);
    let report = StageReport {
        kind: "c1".into(),
        defect_before: params.estimate(norm),
        defect_after: params.estimate(after),
        margin_before: margin,
        c1_margin,
        lambdas,
        steps,
        n_terms: n,
        n0: sys.n0,
        patches: sys.patches,
        grad_increment,
        v_drift,
        w_drift,
        delta: Some(delta),
        l: None,
        shift: 0.0,
        m: None,
        sigma: None,
        mollified_defect: None,
        delta1: None,
        v_c1_change: None,
        v_c2: None,
    };
    if !(after < eps && c1_margin > 0.0) {
        return Err(Error::NonConvergence {
            reason: format!("stage contract failed: defect {after:e} (target {eps:e}), margin {c1_margin:e}"),
            last_residual: after,
        });
    }
    Ok((vk, wk, report))
}

/// Holder stage: mollify at `l = |D|^(1/2)/M`, shift `w`, and run three steps
/// with `lambda_k = sigma^k / l`.
pub fn stage_holder<S: Scalar>(
    v: &FieldExpr<S>,
    w: &VecField<S>,
    a: &SymField<S>,
    params: &StageParams<S>,
) -> Result<(FieldExpr<S>, VecField<S>, StageReport)> {
    if !(params.sigma > 1.0) {
        return Err(Error::Parameter(format!("sigma must exceed 1, got {}", params.sigma)));
    }
    let lat = params.verify_lattice();
    let res = lat.resolution();
    let d = defect(v, w, a);
    let (norm, margin) = defect_stats(&d, &lat);
    if !(norm > 0.0 && norm < params.delta0) {
        return Err(Error::Precondition(format!("defect norm {norm:e} must lie in (0, {})", params.delta0)));
    }
    let rect = params.domain.rect;
    let c2 = |f: &FieldExpr<S>| cm_on(f, &rect, 2, res).value;
    let bound = c2(v).max(c2(&w[0])).max(c2(&w[1])).max(1.0);
    if !(params.m > bound) {
        return Err(Error::Precondition(format!("M = {} must exceed max(|v|_2, |w|_2, 1) = {bound:e}", params.m)));
    }
    let l = norm.sqrt() / params.m;
    if !(l < 1.0) {
        return Err(Error::Parameter(format!("mollification scale {l} must be below 1")));
    }
    params.domain.require_margin(S::lit(l))?;
    let top = params.sigma.powi(3) / l;
    if top > LAMBDA_CAP {
        return Err(Error::NonConvergence {
            reason: format!("top frequency sigma^3/l = {top:e} exceeds the cap {LAMBDA_CAP:e}"),
            last_residual: norm,
        });
    }
    let kernel = Mollifier::new(S::lit(l), params.quad_order);
    let vl = kernel.apply(v);
    let wl = [kernel.apply(&w[0]), kernel.apply(&w[1])];
    let al = a.map(|e| kernel.apply(e));
    let dl = defect(&vl, &wl, &al);
    let (norm_l, _) = defect_stats(&dl, &lat);
    let r0 = decomp::calibrate_r0();
    let shift = 2.0 * (norm_l + norm) / r0;
    let ws = [
        wl[0].sub(&FieldExpr::coord(0).scale(S::lit(shift))),
        wl[1].sub(&FieldExpr::coord(1).scale(S::lit(shift))),
    ];
    // D' = shift * G with G = Id + D_l / shift
    let g = dl.scale(S::lit(1.0 / shift)).add(&SymField::identity_times(S::one()));
    let basis = decomp::basis_for(sym2::identity())?;
    let sys = decomp::single_ball(&g, &basis);
    let amps: Vec<(FieldExpr<S>, [S; 2])> =
        sys.terms.iter().map(|(b, eta)| (b.scale(S::lit(shift.sqrt())), *eta)).collect();
    let mut opts = params.step;
    opts.holder_scale = Some(S::lit(l));
    let (mut vk, mut wk) = (vl.clone(), ws);
    let mut lambdas = Vec::new();
    let mut steps = Vec::new();
    for (k, (ak, eta)) in amps.iter().enumerate() {
        let lambda = params.sigma.powi(k as i32 + 1) / l;
        let out = step(&vk, &wk, ak, *eta, S::lit(lambda), &opts)?;
        lambdas.push(lambda);
        let amp = crate::field::norm::sup_many(std::slice::from_ref(ak), &lat)[0];
        steps.push(StepRecord { lambda, residual: out.residual.value, eta: vec_s(*eta), amplitude_sup: amp });
        vk = out.v_new;
        wk = out.w_new;
    }
    let d_new = defect(&vk, &wk, a);
    let (after, c1_margin) = defect_stats(&d_new, &lat);
    let (grad_increment, v_drift, w_drift) = drifts(v, w, &vk, &wk, &lat);
    let coarse = (res / 4.0).max(8.0);
    let delta1 = {
        let gv = vl.grad();
        let dv = (1..=2)
            .map(|m| l.powi(m as i32) * cm_on(&gv[0], &rect, m, coarse).value.max(cm_on(&gv[1], &rect, m, coarse).value))
            .fold(0.0, f64::max);
        let da = amps
            .iter()
            .flat_map(|(ak, _)| (0..=3).map(move |m| (ak.clone(), m)))
            .map(|(ak, m)| l.powi(m as i32) * cm_on(&ak, &rect, m, coarse).value)
            .fold(0.0, f64::max);
        dv + da
    };
    let report = StageReport {
        kind: "holder".into(),
        defect_before: params.estimate(norm),
        defect_after: params.estimate(after),
        margin_before: margin,
        c1_margin,
        lambdas,
        steps,
        n_terms: 3,
        n0: 3,
        patches: 1,
        grad_increment,
        v_drift,
        w_drift,
        delta: None,
        l: Some(l),
        shift,
        m: Some(params.m),
        sigma: Some(params.sigma),
        mollified_defect: Some(norm_l),
        delta1: Some(delta1),
        v_c1_change: Some(cm_on(&vk.sub(v), &rect, 1, res).value),
        v_c2: Some(c2(&vk)),
    };
    Ok((vk, wk, report))
}
