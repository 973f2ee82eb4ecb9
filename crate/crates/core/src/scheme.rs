//! Iteration drivers: the C^1 scheme, the Holder scheme, the end-to-end
//! pipeline and the Poisson preprocessing of `f`.

use serde::{Deserialize, Serialize};

use crate::analysis::{bump_battery, defect, det_hessian, target_density, weak_hessian_residual, TestFunction};
use crate::error::{Error, Result};
use crate::field::norm::{cm_on, sup_many};
use crate::field::{solve_dirichlet, Domain, FieldExpr, Lattice, Mollifier, SymField, VecField};
use crate::stage::{defect_stats, stage_c1, stage_holder, StageParams, StageReport};

type Field = FieldExpr<f64>;
type Sym = SymField<f64>;

/// Admissibility of `(alpha, beta)` and the decay exponent chosen for it.
///
/// `ok` iff `0 < alpha < min(1/7, beta/2)`. The admissible decay exponents
/// form the interval `6 alpha/(1 - alpha) < s < min(1, 6 beta/(2 - beta))`;
/// `s` is its midpoint.
pub fn exponent_gate(alpha: f64, beta: f64) -> (bool, Option<f64>) {
    let ok = alpha > 0.0 && beta > 0.0 && beta < 1.0 + f64::EPSILON && alpha < (1.0 / 7.0f64).min(beta / 2.0);
    if !ok {
        return (false, None);
    }
    let (lo, hi) = s_interval(alpha, beta);
    (lo < hi, Some(0.5 * (lo + hi)).filter(|_| lo < hi))
}

/// Open interval of decay exponents `s` admissible for `(alpha, beta)`.
pub fn s_interval(alpha: f64, beta: f64) -> (f64, f64) {
    (6.0 * alpha / (1.0 - alpha), (6.0 * beta / (2.0 - beta)).min(1.0))
}

/// Whether `s` satisfies `0 < s < min(1, 6b/(2-b))` and `a(6+s) - s < 0`.
pub fn s_admissible(alpha: f64, beta: f64, s: f64) -> bool {
    s > 0.0 && s < 1.0f64.min(6.0 * beta / (2.0 - beta)) && alpha * (6.0 + s) - s < 0.0
}

/// Parameters of a run. Defaults: `alpha = 0.1`, `beta = 1`, `sigma = 8`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub m0: f64,
    /// Decay exponent; the gate's midpoint when unset.
    pub s: Option<f64>,
    /// Schedule constant in `M_k = (c (1 + |grad v0|) sigma^3)^k M0`.
    pub frak_c: f64,
    /// Geometric C^1 schedule `eps_k = epsilon0 * epsilon_ratio^k`.
    pub epsilon0: f64,
    pub epsilon_ratio: f64,
    /// Holder stage cap.
    pub max_stages: usize,
    /// C^1 stage cap.
    pub c1_max_stages: usize,
    pub target_defect: f64,
    pub seed: u64,
    pub delta0: f64,
    /// Refuse `sigma^s <= 4`. Only experiments that probe the failure of
    /// decay outside the admissible range switch this off.
    pub enforce_sigma_gate: bool,
    /// Set by the caller; configuration files describe it separately.
    #[serde(skip)]
    pub domain: Domain<f64>,
    pub quad_order: usize,
    pub verify_cells: usize,
    pub decomp_resolution: f64,
    pub samples_per_period: f64,
    pub lattice_cap: usize,
    pub poisson_modes: usize,
    pub c_extra: f64,
    /// Panels per axis for the weak-Hessian battery.
    pub weak_resolution: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 1.0,
            sigma: 8.0,
            m0: 10.0,
            s: None,
            frak_c: 4.0,
            epsilon0: 0.04,
            epsilon_ratio: 0.5,
            max_stages: 5,
            c1_max_stages: 8,
            target_defect: 1e-3,
            seed: 0,
            delta0: 0.1,
            enforce_sigma_gate: true,
            domain: Domain::unit_square(0.3),
            quad_order: crate::field::DEFAULT_QUAD_ORDER,
            verify_cells: 64,
            decomp_resolution: 32.0,
            samples_per_period: 6.0,
            lattice_cap: 512,
            poisson_modes: 64,
            c_extra: 0.05,
            weak_resolution: 32,
        }
    }
}

impl SchemeConfig {
    /// `eps_k`.
    pub fn epsilon(&self, k: usize) -> f64 {
        self.epsilon0 * self.epsilon_ratio.powi(k as i32)
    }

    /// `sum eps_k` over the whole geometric schedule.
    pub fn epsilon_sum(&self) -> f64 {
        self.epsilon0 / (1.0 - self.epsilon_ratio)
    }

    /// Checks the schedule and the C^1 knobs.
    pub fn validate_c1(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if !(self.epsilon0 > 0.0 && self.epsilon_ratio > 0.0 && self.epsilon_ratio < 1.0) {
            return bad(format!("schedule needs epsilon0 > 0 and ratio in (0,1), got {} and {}", self.epsilon0, self.epsilon_ratio));
        }
        let root_sum = self.epsilon0.sqrt() / (1.0 - self.epsilon_ratio.sqrt());
        if !(root_sum < 1.0) {
            return bad(format!("sum of sqrt(eps_k) is {root_sum}, must stay below 1"));
        }
        if !(self.target_defect > 0.0) {
            return bad(format!("target defect must be positive, got {}", self.target_defect));
        }
        if self.verify_cells < 2 || self.quad_order < 2 {
            return bad("verification lattice and quadrature need at least 2 points".into());
        }
        Ok(())
    }

    /// Checks the Holder parameters and returns the decay exponent in use.
    pub fn validate_holder(&self) -> Result<f64> {
        let bad = |m: String| Err(Error::Parameter(m));
        let (ok, mid) = exponent_gate(self.alpha, self.beta);
        if !ok {
            return bad(format!("alpha = {} must lie in (0, min(1/7, beta/2)) for beta = {}", self.alpha, self.beta));
        }
        let s = self.s.or(mid).unwrap_or(f64::NAN);
        if !s_admissible(self.alpha, self.beta, s) {
            let (lo, hi) = s_interval(self.alpha, self.beta);
            return bad(format!("decay exponent s = {s} outside ({lo}, {hi})"));
        }
        if !(self.sigma > 1.0) {
            return bad(format!("sigma must exceed 1, got {}", self.sigma));
        }
        if self.enforce_sigma_gate && !(self.sigma.powf(s) > 4.0) {
            return bad(format!("sigma^s = {} must exceed 4", self.sigma.powf(s)));
        }
        if !(self.m0 >= 1.0 && self.frak_c > 0.0 && self.delta0 > 0.0) {
            return bad("M0 >= 1, frak_c > 0 and delta0 > 0 are required".into());
        }
        Ok(s)
    }

    pub fn stage_params(&self) -> StageParams<f64> {
        let mut p = StageParams::new(self.domain);
        p.sigma = self.sigma;
        p.m = self.m0;
        p.delta0 = self.delta0;
        p.quad_order = self.quad_order;
        p.verify_cells = self.verify_cells;
        p.decomp_resolution = self.decomp_resolution;
        p.step.samples_per_period = self.samples_per_period;
        p.step.lattice_cap = self.lattice_cap;
        p
    }

    fn verify_lattice(&self) -> Lattice<f64> {
        self.stage_params().verify_lattice()
    }
}

/// `A0 = (lambda + c) Id` with `-Laplace lambda = f` on the extended rectangle,
/// `lambda = 0` on its boundary, and `c` large enough for a positive definite
/// start.
pub fn solve_a0_from_f(f: &Field, domain: &Domain<f64>, c_extra: f64, modes: usize) -> Result<Sym> {
    let lambda = solve_dirichlet(f, &domain.rect, &domain.extended(), modes)?;
    let lat = Lattice::with_cells(domain.rect, 64, 64);
    let min = crate::field::Program::compile(std::slice::from_ref(&lambda))
        .eval_points(&lat.points())
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let c = c_extra + (-min).max(0.0);
    Ok(SymField::scalar_identity(&lambda.add_const(c)))
}

/// A named slice of the stage list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseMark {
    pub phase: String,
    /// Index into `stage_reports` of the first stage of the phase.
    pub first_stage: usize,
}

/// Everything a run produced, including partial results of failed runs.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub v_final: Field,
    pub w_final: VecField<f64>,
    pub a0: Sym,
    pub stage_reports: Vec<StageReport>,
    /// Defect sup on the verification lattice: initial value, then after each
    /// stage (and, in the full pipeline, after the proxy mollification).
    pub defect_trace: Vec<f64>,
    /// What produced each trace entry: `initial`, `c1`, `proxy` or `holder`.
    pub trace_labels: Vec<String>,
    /// `v` at each trace entry.
    pub v_history: Vec<Field>,
    pub phases: Vec<PhaseMark>,
    /// `sup |grad v_k+1 - grad v_k|` per stage.
    pub grad_increments: Vec<f64>,
    /// `sup |v_final - v0|` over the verification lattice.
    pub v_drift: f64,
    /// Holder phase: `|v_final - v_start|_1`.
    pub c1_distance: Option<f64>,
    /// Mollification probes `(l, defect)` of the C^2-proxy search.
    pub proxy_probes: Vec<(f64, f64)>,
    /// Max weak-Hessian residual over the battery: at the start of the
    /// Holder phase, then after each Holder stage.
    pub weak_hessian_trace: Vec<f64>,
    /// The same battery applied to a smooth exact pair.
    pub weak_hessian_floor: Option<f64>,
    pub exports: Vec<std::path::PathBuf>,
}

impl RunArtifacts {
    fn start(v: &Field, w: &VecField<f64>, a: &Sym, d0: f64) -> Self {
        Self {
            v_final: v.clone(),
            w_final: w.clone(),
            a0: a.clone(),
            stage_reports: Vec::new(),
            defect_trace: vec![d0],
            trace_labels: vec!["initial".into()],
            v_history: vec![v.clone()],
            phases: Vec::new(),
            grad_increments: Vec::new(),
            v_drift: 0.0,
            c1_distance: None,
            proxy_probes: Vec::new(),
            weak_hessian_trace: Vec::new(),
            weak_hessian_floor: None,
            exports: Vec::new(),
        }
    }

    fn push(&mut self, v: Field, w: VecField<f64>, report: StageReport) {
        self.defect_trace.push(report.defect_after.value);
        self.trace_labels.push(report.kind.clone());
        self.v_history.push(v.clone());
        self.grad_increments.push(report.grad_increment);
        self.stage_reports.push(report);
        self.v_final = v;
        self.w_final = w;
    }
}

/// Artifacts plus the error that ended the run, if any.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub artifacts: RunArtifacts,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn into_result(self) -> Result<RunArtifacts> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.artifacts),
        }
    }
}

fn sup_diff(a: &Field, b: &Field, lat: &Lattice<f64>) -> f64 {
    sup_many(&[a.sub(b)], lat)[0]
}

/// Iterate C^1 stages with the `eps_k` schedule until the defect drops to
/// `config.target_defect`.
pub fn run_c1(v0: &Field, w0: &VecField<f64>, a0: &Sym, config: &SchemeConfig) -> Result<RunArtifacts> {
    run_c1_outcome(v0, w0, a0, config)?.into_result()
}

/// As [`run_c1`], keeping the completed stages when a later one fails.
/// Invalid configurations and preconditions still error out directly.
pub fn run_c1_outcome(v0: &Field, w0: &VecField<f64>, a0: &Sym, config: &SchemeConfig) -> Result<RunOutcome> {
    config.validate_c1()?;
    let lat = config.verify_lattice();
    let (d0, margin) = defect_stats(&defect(v0, w0, a0), &lat);
    if !(margin > 0.0) {
        return Err(Error::Precondition(format!("initial defect is not positive definite: smallest eigenvalue {margin:e}")));
    }
    let mut art = RunArtifacts::start(v0, w0, a0, d0);
    art.phases.push(PhaseMark { phase: "c1".into(), first_stage: 0 });
    let error = c1_loop(&mut art, a0, config, config.target_defect, 0);
    art.v_drift = sup_diff(&art.v_final, v0, &lat);
    Ok(RunOutcome { artifacts: art, error })
}

fn c1_loop(art: &mut RunArtifacts, a: &Sym, config: &SchemeConfig, target: f64, offset: usize) -> Option<Error> {
    let mut params = config.stage_params();
    for k in 0..config.c1_max_stages {
        if *art.defect_trace.last().unwrap() <= target {
            break;
        }
        params.epsilon = config.epsilon(k);
        match stage_c1(&art.v_final, &art.w_final, a, &params) {
            Ok((v, w, rep)) => art.push(v, w, rep),
            Err(e) => return Some(e.at_stage(offset + k + 1)),
        }
    }
    let last = *art.defect_trace.last().unwrap();
    if last > target {
        return Some(Error::NonConvergence {
            reason: format!("defect {last:e} above target {target:e} after {} C1 stages", config.c1_max_stages),
            last_residual: last,
        });
    }
    None
}

/// Iterate Holder stages with `M_k = (c (1 + |grad v|_0) sigma^3)^k M0` and
/// assert `|D_k| <= sigma^(-s k) |D_0|` after each stage.
pub fn run_holder(v: &Field, w: &VecField<f64>, a: &Sym, config: &SchemeConfig) -> Result<RunArtifacts> {
    run_holder_outcome(v, w, a, config)?.into_result()
}

/// As [`run_holder`], keeping the completed stages when a later one fails.
pub fn run_holder_outcome(v: &Field, w: &VecField<f64>, a: &Sym, config: &SchemeConfig) -> Result<RunOutcome> {
    let s = config.validate_holder()?;
    let lat = config.verify_lattice();
    let (d0, _) = defect_stats(&defect(v, w, a), &lat);
    if !(d0 > 0.0 && d0 < config.delta0) {
        return Err(Error::Precondition(format!("defect norm {d0:e} must lie in (0, {})", config.delta0)));
    }
    let mut art = RunArtifacts::start(v, w, a, d0);
    art.phases.push(PhaseMark { phase: "holder".into(), first_stage: 0 });
    let error = holder_loop(&mut art, a, config, config.m0, s, None);
    art.v_drift = sup_diff(&art.v_final, v, &lat);
    art.c1_distance = Some(cm_on(&art.v_final.sub(v), &config.domain.rect, 1, lat.resolution()).value);
    Ok(RunOutcome { artifacts: art, error })
}

/// Weak-Hessian battery: target density and the ten test bumps.
struct Battery {
    f: Field,
    bumps: Vec<TestFunction>,
}

impl Battery {
    fn max_residual(&self, v: &Field, config: &SchemeConfig) -> f64 {
        self.bumps
            .iter()
            .map(|phi| weak_hessian_residual(v, &self.f, phi, &config.domain, config.weak_resolution).unwrap_or(f64::NAN))
            .fold(0.0, |m, r| if r.is_nan() || m.is_nan() { f64::NAN } else { m.max(r) })
    }

    /// Residual of a smooth exact pair on the same battery and resolution.
    fn floor(&self, config: &SchemeConfig) -> f64 {
        let pi = std::f64::consts::PI;
        let v = FieldExpr::x1()
            .square()
            .add(&FieldExpr::x2().square())
            .scale(0.5)
            .add(&FieldExpr::phase(pi, [1.0, 0.0]).sin().mul(&FieldExpr::phase(pi, [0.0, 1.0]).sin()).scale(0.1));
        let f = det_hessian(&v);
        self.bumps
            .iter()
            .map(|phi| weak_hessian_residual(&v, &f, phi, &config.domain, config.weak_resolution).unwrap_or(f64::NAN))
            .fold(0.0, f64::max)
    }
}

fn holder_loop(
    art: &mut RunArtifacts,
    a: &Sym,
    config: &SchemeConfig,
    m0: f64,
    s: f64,
    battery: Option<&Battery>,
) -> Option<Error> {
    let first = art.stage_reports.len();
    let base = *art.defect_trace.last().unwrap();
    let lat = config.verify_lattice();
    let grad0 = {
        let g = art.v_final.grad();
        let prog = crate::field::Program::compile(&g);
        prog.map_points(&lat.points(), |_, o| o[0].hypot(o[1])).into_iter().fold(0.0, f64::max)
    };
    let growth = config.frak_c * (1.0 + grad0) * config.sigma.powi(3);
    let mut params = config.stage_params();
    let mut trace = vec![base];
    if let Some(b) = battery {
        art.weak_hessian_trace.push(b.max_residual(&art.v_final, config));
    }
    for k in 0..config.max_stages {
        params.m = growth.powi(k as i32) * m0;
        let stage = first + k + 1;
        match stage_holder(&art.v_final, &art.w_final, a, &params) {
            Ok((v, w, rep)) => art.push(v, w, rep),
            Err(e) => return Some(e.at_stage(stage)),
        }
        if let Some(b) = battery {
            art.weak_hessian_trace.push(b.max_residual(&art.v_final, config));
        }
        let measured = *art.defect_trace.last().unwrap();
        trace.push(measured);
        let bound = config.sigma.powf(-s * (k + 1) as f64) * base;
        if !(measured <= bound) {
            return Some(Error::DecayViolation { stage, measured, bound, trace });
        }
        if measured == 0.0 {
            break;
        }
    }
    None
}

/// End-to-end pipeline: optional Poisson preprocessing, C^1 phase down to
/// `delta0/4`, C^2 proxies by mollification, Holder phase.
pub fn run_full(v0: &Field, w0: &VecField<f64>, a0: Option<&Sym>, f: Option<&Field>, config: &SchemeConfig) -> Result<RunArtifacts> {
    run_full_outcome(v0, w0, a0, f, config)?.into_result()
}

/// As [`run_full`], keeping completed phases when a later one fails.
pub fn run_full_outcome(
    v0: &Field,
    w0: &VecField<f64>,
    a0: Option<&Sym>,
    f: Option<&Field>,
    config: &SchemeConfig,
) -> Result<RunOutcome> {
    config.validate_c1()?;
    let s = config.validate_holder()?;
    let a = match (a0, f) {
        (Some(a), _) => a.clone(),
        (None, Some(f)) => {
            solve_a0_from_f(f, &config.domain, config.c_extra, config.poisson_modes).map_err(|e| e.in_phase("poisson"))?
        }
        (None, None) => return Err(Error::Argument("either A0 or f must be given".into())),
    };
    let target_f = match f {
        Some(f) => f.clone(),
        None => target_density(&a),
    };
    let lat = config.verify_lattice();
    let (d0, margin) = defect_stats(&defect(v0, w0, &a), &lat);
    if !(margin > 0.0) {
        return Err(Error::Precondition(format!("initial defect is not positive definite: smallest eigenvalue {margin:e}")));
    }
    let mut art = RunArtifacts::start(v0, w0, &a, d0);
    let battery = Battery { f: target_f, bumps: bump_battery(&config.domain, config.seed) };
    art.weak_hessian_floor = Some(battery.floor(config));
    let finish = |mut art: RunArtifacts, error: Option<Error>| {
        art.v_drift = sup_diff(&art.v_final, v0, &lat);
        Ok(RunOutcome { artifacts: art, error })
    };

    art.phases.push(PhaseMark { phase: "c1".into(), first_stage: 0 });
    if let Some(e) = c1_loop(&mut art, &a, config, config.delta0 / 4.0, 0) {
        return finish(art, Some(e.in_phase("c1")));
    }

    // C^2 proxies: the largest mollification scale that keeps the
    // re-measured defect below delta0. The oscillations live at 1/lambda, so
    // the search bisects log l between 1e-3/lambda_max and the margin
    // (8 probes).
    let lambda_max = art.stage_reports.iter().flat_map(|r| r.lambdas.iter().copied()).fold(1.0, f64::max);
    let l_max = config.domain.margin.min(0.5);
    let (mut lo, mut hi) = ((1e-3 / lambda_max).min(l_max).ln(), l_max.ln());
    let mut best: Option<(f64, Field, VecField<f64>, f64)> = None;
    for probe in 0..8 {
        let l = if probe == 0 { l_max } else { (0.5 * (lo + hi)).exp() };
        let kernel = Mollifier::new(l, config.quad_order);
        let vl = kernel.apply(&art.v_final);
        let wl = [kernel.apply(&art.w_final[0]), kernel.apply(&art.w_final[1])];
        let (d, _) = defect_stats(&defect(&vl, &wl, &a), &lat);
        art.proxy_probes.push((l, d));
        if d < config.delta0 {
            best = Some((l, vl, wl, d));
            if probe == 0 {
                break;
            }
            lo = l.ln();
        } else {
            hi = l.ln();
        }
    }
    let Some((_, vl, wl, dl)) = best else {
        let last = art.proxy_probes.last().map_or(f64::NAN, |p| p.1);
        let e = Error::NonConvergence { reason: format!("no mollification scale keeps the defect below {}", config.delta0), last_residual: last };
        return finish(art, Some(e.in_phase("mollify")));
    };
    let holder_start = art.v_final.clone();
    art.v_final = vl;
    art.w_final = wl;
    art.defect_trace.push(dl);
    art.trace_labels.push("proxy".into());
    art.v_history.push(art.v_final.clone());

    // the proxies are smoother than the C^1 output but their C^2 norm is
    // whatever it is; M0 must dominate it
    let res = lat.resolution();
    let rect = config.domain.rect;
    let c2 = |g: &Field| cm_on(g, &rect, 2, res).value;
    let bound = c2(&art.v_final).max(c2(&art.w_final[0])).max(c2(&art.w_final[1])).max(1.0);
    let m0 = config.m0.max(1.5 * bound);

    art.phases.push(PhaseMark { phase: "holder".into(), first_stage: art.stage_reports.len() });
    let error = holder_loop(&mut art, &a, config, m0, s, Some(&battery)).map(|e| e.in_phase("holder"));
    art.c1_distance = Some(cm_on(&art.v_final.sub(&holder_start), &rect, 1, res).value);
    finish(art, error)
}
