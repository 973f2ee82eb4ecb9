//! Verification instruments: defects, very weak Hessians, degrees and
//! developability indicators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Domain, FieldExpr, Lattice, Program, Rect, SymField, VecField};
use crate::quadrature::gauss_legendre;
use crate::Scalar;

/// `A - (1/2 grad v (x) grad v + sym grad w)`.
pub fn defect<S: Scalar>(v: &FieldExpr<S>, w: &VecField<S>, a: &SymField<S>) -> SymField<S> {
    a.sub(&SymField::induced(v, w))
}

/// `d11 v d22 v - (d12 v)^2`.
pub fn det_hessian<S: Scalar>(v: &FieldExpr<S>) -> FieldExpr<S> {
    v.derivative(2, 0).mul(&v.derivative(0, 2)).sub(&v.derivative(1, 1).square())
}

/// `-curl curl A = -(d22 A11 + d11 A22 - 2 d12 A12)`, the right-hand side
/// `f` reached by any exact solution of `1/2 grad v (x) grad v + sym grad w = A`.
pub fn target_density<S: Scalar>(a: &SymField<S>) -> FieldExpr<S> {
    FieldExpr::sum([a.e11.derivative(0, 2), a.e22.derivative(2, 0), a.e12.derivative(1, 1).scale(S::lit(-2.0))]).neg()
}

/// Radial bump `amplitude * exp(-1/(1 - |x-c|^2/r^2))` with closed-form derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
}

impl TestFunction {
    pub fn new(center: [f64; 2], radius: f64, amplitude: f64) -> Self {
        Self { center, radius, amplitude }
    }

    /// `(phi, [d1, d2], [d11, d12, d22])` at `p`.
    pub fn derivatives(&self, p: [f64; 2]) -> (f64, [f64; 2], [f64; 3]) {
        let r2 = self.radius * self.radius;
        let dx = [p[0] - self.center[0], p[1] - self.center[1]];
        let q = (dx[0] * dx[0] + dx[1] * dx[1]) / r2;
        if q >= 1.0 {
            return (0.0, [0.0; 2], [0.0; 3]);
        }
        let u = 1.0 / (1.0 - q);
        let g = self.amplitude * (-u).exp();
        let g1 = -g * u * u;
        let g2 = g * (u.powi(4) - 2.0 * u.powi(3));
        let dq = [2.0 * dx[0] / r2, 2.0 * dx[1] / r2];
        let ddq = 2.0 / r2;
        (
            g,
            [g1 * dq[0], g1 * dq[1]],
            [g2 * dq[0] * dq[0] + g1 * ddq, g2 * dq[0] * dq[1], g2 * dq[1] * dq[1] + g1 * ddq],
        )
    }

    pub fn value(&self, p: [f64; 2]) -> f64 {
        self.derivatives(p).0
    }

    pub fn support(&self) -> Rect<f64> {
        let (c, r) = (self.center, self.radius);
        Rect { min: [c[0] - r, c[1] - r], max: [c[0] + r, c[1] + r] }
    }

    /// Whether the closed support disk lies inside `rect`.
    pub fn inside(&self, rect: &Rect<f64>) -> bool {
        let s = self.support();
        s.min[0] >= rect.min[0] && s.min[1] >= rect.min[1] && s.max[0] <= rect.max[0] && s.max[1] <= rect.max[1]
    }
}

/// Ten test bumps inside the domain, placed deterministically from `seed`.
pub fn bump_battery(domain: &Domain<f64>, seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = domain.rect;
    let short = r.width().min(r.height());
    (0..10)
        .map(|_| {
            let radius = short * rng.gen_range(0.1..0.25);
            let cx = rng.gen_range(r.min[0] + radius..r.max[0] - radius);
            let cy = rng.gen_range(r.min[1] + radius..r.max[1] - radius);
            TestFunction::new([cx, cy], radius, 1.0)
        })
        .collect()
}

/// Tensor Gauss-Legendre nodes on `rect` with `n x n` panels of order `order`.
fn panel_rule(rect: &Rect<f64>, n: usize, order: usize) -> Vec<([f64; 2], f64)> {
    let (x, w) = gauss_legendre(order);
    let hx = rect.width() / n as f64;
    let hy = rect.height() / n as f64;
    let mut out = Vec::with_capacity(n * n * order * order);
    for i in 0..n {
        for j in 0..n {
            let (x0, y0) = (rect.min[0] + i as f64 * hx, rect.min[1] + j as f64 * hy);
            for (a, wa) in x.iter().zip(&w) {
                for (b, wb) in x.iter().zip(&w) {
                    let p = [x0 + 0.5 * hx * (a + 1.0), y0 + 0.5 * hy * (b + 1.0)];
                    out.push((p, 0.25 * hx * hy * wa * wb));
                }
            }
        }
    }
    out
}

const PANEL_ORDER: usize = 6;

/// `|<Det D^2 v, phi> - int f phi|` with the very weak Hessian
/// `Det D^2 v = -1/2 curl curl (grad v (x) grad v)` paired against `phi`.
pub fn weak_hessian_residual(
    v: &FieldExpr<f64>,
    f: &FieldExpr<f64>,
    phi: &TestFunction,
    domain: &Domain<f64>,
    quad_resolution: usize,
) -> Result<f64> {
    if !phi.inside(&domain.rect) {
        return Err(Error::Argument(format!("test function support {:?} leaves the domain", phi.support())));
    }
    let rule = panel_rule(&phi.support(), quad_resolution.max(1), PANEL_ORDER);
    let prog = Program::compile(&[v.partial(0), v.partial(1), f.clone()]);
    let pts: Vec<[f64; 2]> = rule.iter().map(|r| r.0).collect();
    let terms = prog.map_points(&pts, |p, o| {
        let (ph, _, h) = phi.derivatives(p);
        if ph == 0.0 && h == [0.0; 3] {
            return (0.0, 0.0);
        }
        let (v1, v2) = (o[0], o[1]);
        let weak = -0.5 * (v1 * v1 * h[2] + v2 * v2 * h[0] - 2.0 * v1 * v2 * h[1]);
        (weak, o[2] * ph)
    });
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for ((a, b), (_, w)) in terms.iter().zip(&rule) {
        lhs += w * a;
        rhs += w * b;
    }
    Ok((lhs - rhs).abs())
}

/// [`weak_hessian_residual`] for sampled data: `grad_v` and `f` are plain
/// point functions (e.g. interpolated grids).
pub fn weak_hessian_residual_fn(
    grad_v: impl Fn([f64; 2]) -> [f64; 2],
    f: impl Fn([f64; 2]) -> f64,
    phi: &TestFunction,
    domain: &Domain<f64>,
    quad_resolution: usize,
) -> Result<f64> {
    if !phi.inside(&domain.rect) {
        return Err(Error::Argument(format!("test function support {:?} leaves the domain", phi.support())));
    }
    let rule = panel_rule(&phi.support(), quad_resolution.max(1), PANEL_ORDER);
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for (p, w) in &rule {
        let (ph, _, h) = phi.derivatives(*p);
        if ph == 0.0 && h == [0.0; 3] {
            continue;
        }
        let [v1, v2] = grad_v(*p);
        lhs += w * -0.5 * (v1 * v1 * h[2] + v2 * v2 * h[0] - 2.0 * v1 * v2 * h[1]);
        rhs += w * f(*p) * ph;
    }
    Ok((lhs - rhs).abs())
}

/// Subdomain boundary, target point and refinement policy for a degree query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeQuery {
    /// Counterclockwise vertices; the closing edge is implicit.
    pub polygon: Vec<[f64; 2]>,
    pub y: [f64; 2],
    /// Maximum number of adaptive refinement rounds.
    pub max_depth: usize,
}

impl DegreeQuery {
    pub fn new(polygon: Vec<[f64; 2]>, y: [f64; 2]) -> Self {
        Self { polygon, y, max_depth: 24 }
    }

    /// Regular `n`-gon approximating a circle.
    pub fn circle(center: [f64; 2], radius: f64, n: usize, y: [f64; 2]) -> Self {
        let poly = (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        Self::new(poly, y)
    }
}

/// Degree answer with the measured clearance of `y` from the boundary image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeResult {
    pub degree: i64,
    pub clearance: f64,
    pub tolerance: f64,
    pub segments: usize,
}

/// A closed curve `t -> u(gamma(t))` sampled along the boundary polygon.
struct BoundaryImage {
    params: Vec<f64>,
    images: Vec<[f64; 2]>,
}

const MAX_SEGMENTS: usize = 1 << 20;

struct BoundaryMap<'a> {
    prog: Program<f64>,
    polygon: &'a [[f64; 2]],
    shift: [f64; 2],
    delta: f64,
}

impl BoundaryMap<'_> {
    fn point(&self, t: f64) -> [f64; 2] {
        let n = self.polygon.len();
        let k = (t.floor() as usize).min(n - 1);
        let s = t - k as f64;
        let (a, b) = (self.polygon[k], self.polygon[(k + 1) % n]);
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }

    fn images(&self, ts: &[f64]) -> Vec<[f64; 2]> {
        let pts: Vec<[f64; 2]> = ts.iter().map(|&t| self.point(t)).collect();
        let vals = self.prog.eval_points(&pts);
        pts.iter()
            .zip(vals.chunks(2))
            .map(|(p, u)| [u[0] - self.delta * p[1] - self.shift[0], u[1] + self.delta * p[0] - self.shift[1]])
            .collect()
    }
}

fn angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1])
}

fn norm2(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm2([a[0] - b[0], a[1] - b[1]])
}

impl BoundaryImage {
    /// Refine until every segment turns by less than `pi/2` around the origin
    /// and its image is short compared with `clearance(images)`.
    fn build(map: &BoundaryMap, max_depth: usize, clearance: impl Fn(&[[f64; 2]]) -> f64) -> Self {
        let n = map.polygon.len();
        let mut params: Vec<f64> = (0..n * 64).map(|k| k as f64 / 64.0).collect();
        let mut images = map.images(&params);
        for _ in 0..max_depth {
            let c = clearance(&images);
            let m = params.len();
            let mut next_t = Vec::with_capacity(2 * m);
            let mut split = false;
            for k in 0..m {
                let (a, b) = (images[k], images[(k + 1) % m]);
                next_t.push(params[k]);
                let turn = angle(a, b).abs();
                if turn >= std::f64::consts::FRAC_PI_2 || dist(a, b) > 0.25 * c {
                    let t1 = if k + 1 == m { n as f64 } else { params[k + 1] };
                    next_t.push(0.5 * (params[k] + t1));
                    split = true;
                }
            }
            if !split || next_t.len() > MAX_SEGMENTS {
                break;
            }
            images = map.images(&next_t);
            params = next_t;
        }
        Self { params, images }
    }

    fn refined(&self, map: &BoundaryMap) -> Self {
        let n = map.polygon.len() as f64;
        let m = self.params.len();
        let mut params = Vec::with_capacity(2 * m);
        for k in 0..m {
            let t1 = if k + 1 == m { n } else { self.params[k + 1] };
            params.push(self.params[k]);
            params.push(0.5 * (self.params[k] + t1));
        }
        let images = map.images(&params);
        Self { params, images }
    }

    fn max_diameter(&self) -> f64 {
        let m = self.images.len();
        (0..m).map(|k| dist(self.images[k], self.images[(k + 1) % m])).fold(0.0, f64::max)
    }

    /// Winding number of the image polyline around `y` (images already
    /// shifted so that the default target is the origin).
    fn winding(&self, y: [f64; 2]) -> f64 {
        let m = self.images.len();
        let mut total = 0.0;
        for k in 0..m {
            let a = self.images[k];
            let b = self.images[(k + 1) % m];
            total += angle([a[0] - y[0], a[1] - y[1]], [b[0] - y[0], b[1] - y[1]]);
        }
        total / std::f64::consts::TAU
    }
}

fn degree_of_map(map: &BoundaryMap, max_depth: usize) -> Result<DegreeResult> {
    if map.polygon.len() < 3 {
        return Err(Error::Argument("degree polygon needs at least three vertices".into()));
    }
    let clearance = |im: &[[f64; 2]]| im.iter().map(|p| norm2(*p)).fold(f64::INFINITY, f64::min);
    let curve = BoundaryImage::build(map, max_depth, clearance);
    let c = clearance(&curve.images);
    let tol = 3.0 * curve.max_diameter();
    if !(c > tol) {
        return Err(Error::DegreeUndefined { clearance: c, tolerance: tol });
    }
    let w = curve.winding([0.0, 0.0]);
    let finer = curve.refined(map);
    let w2 = finer.winding([0.0, 0.0]);
    let (d1, d2) = (w.round(), w2.round());
    if d1 != d2 || (w - d1).abs() > 1e-6 {
        return Err(Error::DegreeUndefined { clearance: c, tolerance: tol });
    }
    Ok(DegreeResult { degree: d1 as i64, clearance: c, tolerance: tol, segments: curve.params.len() })
}

/// Brouwer degree of `grad_v` on the polygon at `y`, as a winding number.
pub fn brouwer_degree(grad_v: &VecField<f64>, query: &DegreeQuery) -> Result<DegreeResult> {
    let map = BoundaryMap { prog: Program::compile(grad_v), polygon: &query.polygon, shift: query.y, delta: 0.0 };
    degree_of_map(&map, query.max_depth)
}

/// Degree of `u_delta = grad v + delta (-x2, x1)`.
pub fn perturbed_degree(v: &FieldExpr<f64>, delta: f64, query: &DegreeQuery) -> Result<DegreeResult> {
    let map = BoundaryMap { prog: Program::compile(&v.grad()), polygon: &query.polygon, shift: query.y, delta };
    degree_of_map(&map, query.max_depth)
}

fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Both sides of `int_U (g o grad v) f = int g(y) deg(grad v, U, y) dy`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeFormula {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub clearance: f64,
}

/// Residual of the degree formula; `g` must stay away from `grad v(dU)`.
pub fn degree_formula_residual(
    v: &FieldExpr<f64>,
    f: &FieldExpr<f64>,
    query: &DegreeQuery,
    g: &TestFunction,
    quad_resolution: usize,
) -> Result<DegreeFormula> {
    let n = quad_resolution.max(1);
    let map = BoundaryMap { prog: Program::compile(&v.grad()), polygon: &query.polygon, shift: [0.0, 0.0], delta: 0.0 };
    // distance from the support disk of g to the boundary image
    let gap = |im: &[[f64; 2]]| im.iter().map(|p| dist(*p, g.center) - g.radius).fold(f64::INFINITY, f64::min);
    let curve = BoundaryImage::build(&map, query.max_depth, gap);
    let clearance = gap(&curve.images);
    let tol = 3.0 * curve.max_diameter();
    if !(clearance > tol) {
        return Err(Error::DegreeUndefined { clearance, tolerance: tol });
    }
    // left side over the bounding box of U
    let poly = &query.polygon;
    let mut bb = Rect { min: [f64::INFINITY; 2], max: [f64::NEG_INFINITY; 2] };
    for p in poly {
        for c in 0..2 {
            bb.min[c] = bb.min[c].min(p[c]);
            bb.max[c] = bb.max[c].max(p[c]);
        }
    }
    let rule = panel_rule(&bb, n, PANEL_ORDER);
    let prog = Program::compile(&[v.partial(0), v.partial(1), f.clone()]);
    let pts: Vec<[f64; 2]> = rule.iter().map(|r| r.0).collect();
    let vals = prog.map_points(&pts, |p, o| if point_in_polygon(p, poly) { g.value([o[0], o[1]]) * o[2] } else { 0.0 });
    let lhs: f64 = vals.iter().zip(&rule).map(|(v, (_, w))| v * w).sum();
    // right side: midpoint cells over the support of g
    let s = g.support();
    let (hx, hy) = (s.width() / n as f64, s.height() / n as f64);
    let mut rhs = 0.0;
    for i in 0..n {
        for j in 0..n {
            let y = [s.min[0] + (i as f64 + 0.5) * hx, s.min[1] + (j as f64 + 0.5) * hy];
            let gv = g.value(y);
            if gv == 0.0 {
                continue;
            }
            rhs += gv * curve.winding(y).round() * hx * hy;
        }
    }
    Ok(DegreeFormula { lhs, rhs, residual: (lhs - rhs).abs(), clearance })
}

/// Number of occupied cells when `grad v` on a `grid_n x grid_n` lattice is
/// binned into `grid_n x grid_n` cells over its bounding box.
pub fn gradient_image_boxcount(v: &FieldExpr<f64>, domain: &Domain<f64>, grid_n: usize) -> usize {
    let n = grid_n.max(1);
    let lat = Lattice::with_cells(domain.rect, n.max(2) - 1, n.max(2) - 1);
    let prog = Program::compile(&v.grad());
    let vals = prog.eval_points(&lat.points());
    let pts: Vec<[f64; 2]> = vals.chunks(2).map(|c| [c[0], c[1]]).collect();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &pts {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let bin = |x: f64, c: usize| -> usize {
        let w = hi[c] - lo[c];
        if !(w > 1e-12 * (1.0 + hi[c].abs())) {
            return 0;
        }
        (((x - lo[c]) / w * n as f64) as usize).min(n - 1)
    };
    let mut occupied = std::collections::HashSet::new();
    for p in &pts {
        occupied.insert((bin(p[0], 0), bin(p[1], 1)));
    }
    occupied.len()
}
