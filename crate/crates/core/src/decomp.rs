//! Rank-one decompositions of positive definite symmetric matrices and of
//! matrix fields.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Domain, FieldExpr, Lattice, Program, SymField};
use crate::sym2::{self, Sym2};
use crate::Scalar;

/// Upper limit for the positivity radius at the identity.
pub const R0_CAP: f64 = 0.125 - 1e-3;
/// Safety factor applied to the calibrated radius and to range fitting.
pub const SAFETY: f64 = 0.9;

/// The fixed vectors `zeta_1, zeta_2, zeta_3`.
pub fn zeta() -> [[f64; 2]; 3] {
    let s2 = std::f64::consts::SQRT_2;
    let c = 1.0 / 12f64.sqrt();
    [[c * (2.0 + s2), c * (-2.0 + s2)], [c * (-2.0 + s2), c * (2.0 + s2)], [1.0 / s2, 1.0 / s2]]
}

/// Rows `k = 0..3` hold the coefficients of `Psi_k` on `(G11, G12, G22)`,
/// where `G = sum_k Psi_k(G) zeta_k (x) zeta_k`.
pub fn psi_functionals() -> [[f64; 3]; 3] {
    static PSI: OnceLock<[[f64; 3]; 3]> = OnceLock::new();
    *PSI.get_or_init(|| {
        // columns: coordinates of zeta_k (x) zeta_k
        let z = zeta();
        let mut m = [[0.0; 3]; 3];
        for (k, zk) in z.iter().enumerate() {
            let o = sym2::outer(*zk);
            for r in 0..3 {
                m[r][k] = o[r];
            }
        }
        invert3(m).expect("zeta basis is non-singular")
    })
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det == 0.0 {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    Some(inv)
}

fn apply3(c: &[[f64; 3]; 3], g: Sym2) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = c[k][0] * g[0] + c[k][1] * g[1] + c[k][2] * g[2];
    }
    out
}

/// `Psi(G)`.
pub fn psi(g: Sym2) -> [f64; 3] {
    apply3(&psi_functionals(), g)
}

/// Unit directions `(cos t, sin t)`-style sample of the unit sphere in
/// `(G11, sqrt2 G12, G22)` coordinates, so that every point has Frobenius norm 1.
fn sphere_sample(n: usize) -> Vec<Sym2> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            [r * t.cos(), y / std::f64::consts::SQRT_2, r * t.sin()]
        })
        .collect()
}

fn min_psi_on_sphere(r: f64, dirs: &[Sym2]) -> f64 {
    dirs.iter()
        .map(|h| {
            let p = psi(sym2::add(sym2::identity(), sym2::scale(r, *h)));
            p[0].min(p[1]).min(p[2])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Positivity radius at the identity: the largest `r <= R0_CAP` with all
/// `Psi_k > 0` on a dense sample of the sphere `|G - Id| = r`, times
/// [`SAFETY`]. Computed once.
pub fn calibrate_r0() -> f64 {
    static R0: OnceLock<f64> = OnceLock::new();
    *R0.get_or_init(|| {
        let dirs = sphere_sample(20_000);
        let r = if min_psi_on_sphere(R0_CAP, &dirs) > 0.0 {
            R0_CAP
        } else {
            let (mut lo, mut hi) = (0.0, R0_CAP);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if min_psi_on_sphere(mid, &dirs) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        SAFETY * r
    })
}

/// Decomposition data adapted to a base point `G0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisTriple {
    pub zeta: [[f64; 2]; 3],
    pub xi: [[f64; 2]; 3],
    /// Rows: coefficients of `Phi_k` on `(G11, G12, G22)`.
    pub phi_coeffs: [[f64; 3]; 3],
    pub r0: f64,
    pub base: Sym2,
}

impl BasisTriple {
    pub fn phi(&self, g: Sym2) -> [f64; 3] {
        apply3(&self.phi_coeffs, g)
    }

    /// `sum_k Phi_k(G) xi_k (x) xi_k`.
    pub fn reconstruct(&self, g: Sym2) -> Sym2 {
        let p = self.phi(g);
        (0..3).fold([0.0; 3], |acc, k| sym2::add(acc, sym2::scale(p[k], sym2::outer(self.xi[k]))))
    }

    /// Radius `r0 / |G0^(-1/2)|^2` of the ball on which every `Phi_k > 0`.
    pub fn radius(&self) -> f64 {
        let n = sym2::frob(sym2::power(self.base, -0.5));
        self.r0 / (n * n)
    }
}

/// Basis adapted to a positive definite `G0`.
pub fn basis_for(g0: Sym2) -> Result<BasisTriple> {
    let ev = sym2::min_eigenvalue(g0);
    if !(ev > 0.0) {
        return Err(Error::NotPositiveDefinite { x: f64::NAN, y: f64::NAN, eigenvalue: ev });
    }
    let half = sym2::to_mat(sym2::power(g0, 0.5));
    let mhalf = sym2::to_mat(sym2::power(g0, -0.5));
    let z = zeta();
    let psi_c = psi_functionals();
    let mut xi = [[0.0; 2]; 3];
    let mut norms2 = [0.0; 3];
    for k in 0..3 {
        let v = sym2::apply(half, z[k]);
        let n = v[0].hypot(v[1]);
        xi[k] = [v[0] / n, v[1] / n];
        norms2[k] = n * n;
    }
    // Phi_k on the coordinate matrices E11, E12 + E21, E22
    let basis = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut phi_coeffs = [[0.0; 3]; 3];
    for (c, e) in basis.iter().enumerate() {
        let t = sym2::from_mat(sym2::mul(sym2::mul(mhalf, sym2::to_mat(*e)), mhalf));
        let p = apply3(&psi_c, t);
        for k in 0..3 {
            phi_coeffs[k][c] = norms2[k] * p[k];
        }
    }
    Ok(BasisTriple { zeta: z, xi, phi_coeffs, r0: calibrate_r0(), base: g0 })
}

/// `sum_k a_k^2 eta_k (x) eta_k` as a list of terms.
#[derive(Clone, Debug)]
pub struct RankOneSystem<S: Scalar> {
    pub terms: Vec<(FieldExpr<S>, [S; 2])>,
    /// Largest number of terms nonzero at one sampled point.
    pub n0: usize,
    /// Number of patches used (1 for the single-ball path).
    pub patches: usize,
}

impl<S: Scalar> RankOneSystem<S> {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The represented matrix field.
    pub fn assemble(&self) -> SymField<S> {
        self.terms
            .iter()
            .fold(SymField::zero(), |acc, (a, eta)| acc.add(&SymField::rank_one(&a.square(), *eta)))
    }
}

fn linear_in_entries<S: Scalar>(c: [f64; 3], d: &SymField<S>) -> FieldExpr<S> {
    FieldExpr::sum([d.e11.scale(S::lit(c[0])), d.e12.scale(S::lit(c[1])), d.e22.scale(S::lit(c[2]))])
}

/// Sample `D` on a lattice; fails on the first non-positive-definite point.
pub fn sample_pd<S: Scalar>(d: &SymField<S>, lattice: &Lattice<S>) -> Result<Vec<Sym2>> {
    let pts = lattice.points();
    let prog = Program::compile(&[d.e11.clone(), d.e12.clone(), d.e22.clone()]);
    let vals = prog.eval_points(&pts);
    let mut out = Vec::with_capacity(pts.len());
    for (p, v) in pts.iter().zip(vals.chunks(3)) {
        let g = [v[0].as_f64(), v[1].as_f64(), v[2].as_f64()];
        let ev = sym2::min_eigenvalue(g);
        if !(ev > 0.0) {
            return Err(Error::NotPositiveDefinite { x: p[0].as_f64(), y: p[1].as_f64(), eigenvalue: ev });
        }
        out.push(g);
    }
    Ok(out)
}

/// Decompose a positive definite matrix field into rank-one terms.
pub fn decompose_field<S: Scalar>(d: &SymField<S>, domain: &Domain<S>, resolution: f64) -> Result<RankOneSystem<S>> {
    let lattice = Lattice::with_resolution(domain.rect, resolution);
    let samples = sample_pd(d, &lattice)?;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for g in &samples {
        for c in 0..3 {
            lo[c] = lo[c].min(g[c]);
            hi[c] = hi[c].max(g[c]);
        }
    }
    let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
    let half_diag = sym2::frob([0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1]), 0.5 * (hi[2] - lo[2])]);
    if sym2::min_eigenvalue(mid) > 0.0 {
        let basis = basis_for(mid)?;
        if half_diag < SAFETY * basis.radius() {
            return Ok(single_ball(d, &basis));
        }
    }
    // the cover is built from samples, so refine until every cell stays
    // within a quarter patch width of a patch core holding one of its corners
    let mut lattice = lattice;
    let mut samples = samples;
    loop {
        let patches = greedy_patches(&samples);
        let (worst, jump) = cell_ratio(&samples, &lattice, &patches);
        if worst <= 0.25 {
            return Ok(covering(d, &samples, patches, jump));
        }
        let factor = (4.0 * worst).ceil().max(2.0) as usize;
        let n = [lattice.n[0] * factor, lattice.n[1] * factor];
        if n[0].max(n[1]) > MAX_COVER_CELLS {
            return Err(Error::NonConvergence {
                reason: format!(
                    "matrix field varies too fast to cover: a cell jump reaches {worst:.3} patch widths on {} cells",
                    lattice.n[0].max(lattice.n[1])
                ),
                last_residual: worst,
            });
        }
        lattice = Lattice::with_cells(domain.rect, n[0], n[1]);
        samples = sample_pd(d, &lattice)?;
    }
}

/// Largest cells per side used when refining samples for a cover.
const MAX_COVER_CELLS: usize = 2048;

/// Worst ratio of a cell's coordinate jump to the widest patch whose core
/// holds one of its corners, and the largest jump overall.
fn cell_ratio<S: Scalar>(samples: &[Sym2], lattice: &Lattice<S>, patches: &[Patch]) -> (f64, f64) {
    let ny = lattice.n[1] + 1;
    let at = |i: usize, j: usize| samples[i * ny + j];
    let diff = |a: Sym2, b: Sym2| (0..3).map(|c| (a[c] - b[c]).abs()).fold(0.0, f64::max);
    let width: Vec<f64> =
        samples.iter().map(|g| patches.iter().filter(|p| p.covers(*g)).map(|p| p.rho).fold(0.0, f64::max)).collect();
    let (mut worst, mut jump) = (0.0f64, 0.0f64);
    for i in 0..lattice.n[0] {
        for j in 0..lattice.n[1] {
            let c = [at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)];
            let cell = diff(c[0], c[1]).max(diff(c[0], c[2])).max(diff(c[0], c[3])).max(diff(c[1], c[2]));
            let k = [i * ny + j, (i + 1) * ny + j, i * ny + j + 1, (i + 1) * ny + j + 1];
            let rho = k.iter().map(|&k| width[k]).fold(0.0, f64::max);
            worst = worst.max(cell / rho);
            jump = jump.max(cell);
        }
    }
    (worst, jump)
}

/// Three terms `a_k = Phi_k(D)^(1/2)` along `xi_k`.
pub fn single_ball<S: Scalar>(d: &SymField<S>, basis: &BasisTriple) -> RankOneSystem<S> {
    let terms = (0..3)
        .map(|k| {
            let phi = linear_in_entries(basis.phi_coeffs[k], d);
            (phi.sqrt(), [S::lit(basis.xi[k][0]), S::lit(basis.xi[k][1])])
        })
        .collect();
    RankOneSystem { terms, n0: 3, patches: 1 }
}

/// Ratio between a patch bump's half-width and the positivity radius at
/// its centre. The bump box then lies inside the ball.
const PATCH_WIDTH: f64 = 1.0 / 2.2;

struct Patch {
    centre: Sym2,
    rho: f64,
    basis: BasisTriple,
}

impl Patch {
    fn reaches(&self, g: Sym2, slack: f64) -> bool {
        (0..3).all(|c| (g[c] - self.centre[c]).abs() < self.rho + slack)
    }

    fn covers(&self, g: Sym2) -> bool {
        (0..3).all(|c| (g[c] - self.centre[c]).abs() <= 0.5 * self.rho)
    }
}

/// Smooth covering: `a_{i,k} = theta_i Phi_{k,G_i}(D)^(1/2) / (sum_j theta_j^2)^(1/2)`
/// with tensor bumps `theta_i` in the matrix coordinates.
fn greedy_patches(samples: &[Sym2]) -> Vec<Patch> {
    let mut patches: Vec<Patch> = Vec::new();
    for g in samples {
        if patches.iter().any(|p| p.covers(*g)) {
            continue;
        }
        let basis = basis_for(*g).expect("samples are positive definite");
        let rho = PATCH_WIDTH * basis.radius();
        patches.push(Patch { centre: *g, rho, basis });
    }
    patches
}

fn covering<S: Scalar>(d: &SymField<S>, samples: &[Sym2], patches: Vec<Patch>, jump: f64) -> RankOneSystem<S> {
    // a patch may be active anywhere in a cell touching a sample within
    // `jump` of its support
    let n0 = samples
        .iter()
        .map(|g| patches.iter().filter(|p| p.reaches(*g, jump)).count())
        .max()
        .unwrap_or(0)
        * 3;
    let entries = [&d.e11, &d.e12, &d.e22];
    let thetas: Vec<FieldExpr<S>> = patches
        .iter()
        .map(|p| {
            FieldExpr::product((0..3).map(|c| {
                entries[c].add_const(S::lit(-p.centre[c])).scale(S::lit(1.0 / p.rho)).bump(0)
            }))
        })
        .collect();
    let norm = FieldExpr::sum(thetas.iter().map(|t| t.square())).powf(S::lit(-0.5));
    let mut terms = Vec::new();
    for (p, theta) in patches.iter().zip(&thetas) {
        let w = theta.mul(&norm);
        for k in 0..3 {
            let phi = linear_in_entries(p.basis.phi_coeffs[k], d);
            terms.push((w.mul(&phi.sqrt()), [S::lit(p.basis.xi[k][0]), S::lit(p.basis.xi[k][1])]));
        }
    }
    RankOneSystem { terms, n0, patches: patches.len() }
}
