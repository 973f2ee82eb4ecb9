//! Dirichlet Poisson solves on rectangles by double sine series.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{FieldExpr, Program, Rect};
use crate::Scalar;

/// `sum c_mn sin(m pi (x1-a1)/L1) sin(n pi (x2-a2)/L2)` over a sparse mode list.
#[derive(Debug)]
pub struct SineSeries<S> {
    rect: Rect<S>,
    modes: Vec<(u32, u32, S)>,
    max_mode: [u32; 2],
}

impl<S: Scalar> SineSeries<S> {
    pub fn new(rect: Rect<S>, modes: Vec<(u32, u32, S)>) -> Self {
        let max_mode = modes.iter().fold([0, 0], |acc, &(m, n, _)| [acc[0].max(m), acc[1].max(n)]);
        Self { rect, modes, max_mode }
    }

    pub fn modes(&self) -> &[(u32, u32, S)] {
        &self.modes
    }

    pub fn rect(&self) -> &Rect<S> {
        &self.rect
    }

    pub fn into_field(self) -> FieldExpr<S> {
        FieldExpr::sine_node(Arc::new(self), [0, 0])
    }

    fn axis_table(&self, axis: usize, x: S, order: u8) -> Vec<S> {
        let kmax = self.max_mode[axis] as usize;
        let len = self.rect.max[axis] - self.rect.min[axis];
        let theta = S::PI() * (x - self.rect.min[axis]) / len;
        let mut out = vec![S::zero(); kmax + 1];
        for (k, slot) in out.iter_mut().enumerate().skip(1) {
            let kk = S::from_usize(k).unwrap();
            let freq = kk * S::PI() / len;
            let (s, c) = (kk * theta).sin_cos();
            // derivatives of sin cycle through cos, -sin, -cos
            let base = match order % 4 {
                0 => s,
                1 => c,
                2 => -s,
                _ => -c,
            };
            *slot = base * freq.powi(order as i32);
        }
        out
    }

    pub fn eval_derivative(&self, p: [S; 2], deriv: [u8; 2]) -> S {
        let u = self.axis_table(0, p[0], deriv[0]);
        let v = self.axis_table(1, p[1], deriv[1]);
        self.modes.iter().map(|&(m, n, c)| c * u[m as usize] * v[n as usize]).sum()
    }
}

/// Cutoff close to 1 on `[lo, hi]` and close to 0 at `elo`, `ehi`: a
/// product of two Gaussian error-function steps centred in the margins, of
/// width `s` with `z = (margin/2)/s` standard widths on either side.
fn cutoff_1d(x: f64, lo: f64, hi: f64, elo: f64, ehi: f64, z: f64) -> f64 {
    let mut v = 1.0;
    if lo > elo {
        let s = (lo - elo) / (2.0 * z);
        v *= 0.5 * libm::erfc(-(x - 0.5 * (lo + elo)) / s);
    }
    if ehi > hi {
        let s = (ehi - hi) / (2.0 * z);
        v *= 0.5 * libm::erfc((x - 0.5 * (hi + ehi)) / s);
    }
    v
}

/// Steepness balancing the cutoff tail against the truncation at `k` modes.
fn cutoff_steepness(k: usize, len: f64, margin: f64) -> f64 {
    let omega = k as f64 * std::f64::consts::PI / len;
    (1.05 * (omega * margin / 4.0).sqrt()).clamp(2.0, 6.0)
}

/// Solves `-Lap u = f` on `outer` with `u = 0` on its boundary, keeping
/// `modes x modes` sine modes. When `outer` is strictly larger than `inner`,
/// `f` is first multiplied by a smooth cutoff that is 1 on `inner` up to a
/// tail balanced against the truncation error, which gives rapidly
/// decaying coefficients.
pub fn solve_dirichlet<S: Scalar>(f: &FieldExpr<S>, inner: &Rect<S>, outer: &Rect<S>, modes: usize) -> Result<FieldExpr<S>> {
    let k = modes.max(1);
    let n = (4 * k).max(256);
    let (a1, a2) = (outer.min[0].as_f64(), outer.min[1].as_f64());
    let (l1, l2) = (outer.width().as_f64(), outer.height().as_f64());
    let xs: Vec<f64> = (0..n).map(|i| a1 + l1 * (i as f64 + 0.5) / n as f64).collect();
    let ys: Vec<f64> = (0..n).map(|j| a2 + l2 * (j as f64 + 0.5) / n as f64).collect();
    let pts: Vec<[S; 2]> = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| [S::lit(x), S::lit(y)]))
        .collect();
    let prog = Program::compile(std::slice::from_ref(f));
    let vals = prog.eval_points(&pts);
    let m1 = (inner.min[0].as_f64() - a1).min(a1 + l1 - inner.max[0].as_f64());
    let m2 = (inner.min[1].as_f64() - a2).min(a2 + l2 - inner.max[1].as_f64());
    let z1 = cutoff_steepness(k, l1, m1);
    let z2 = cutoff_steepness(k, l2, m2);
    let cut = |x: f64, y: f64| {
        cutoff_1d(x, inner.min[0].as_f64(), inner.max[0].as_f64(), a1, a1 + l1, z1)
            * cutoff_1d(y, inner.min[1].as_f64(), inner.max[1].as_f64(), a2, a2 + l2, z2)
    };
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let v = vals[i * n + j].as_f64();
            if !v.is_finite() {
                return Err(Error::Input(format!("non-finite source value at ({}, {})", xs[i], ys[j])));
            }
            g[i * n + j] = v * cut(xs[i], ys[j]);
        }
    }
    let pi = std::f64::consts::PI;
    let s1: Vec<Vec<f64>> = (1..=k)
        .map(|m| (0..n).map(|i| (m as f64 * pi * (i as f64 + 0.5) / n as f64).sin()).collect())
        .collect();
    // t[m][j] = sum_i s1[m][i] g[i][j]
    let mut t = vec![vec![0.0; n]; k];
    for m in 0..k {
        for i in 0..n {
            let s = s1[m][i];
            let row = &g[i * n..(i + 1) * n];
            for (tj, gj) in t[m].iter_mut().zip(row) {
                *tj += s * gj;
            }
        }
    }
    let norm = 4.0 / (n * n) as f64;
    let mut coeffs = Vec::new();
    let mut cmax: f64 = 0.0;
    for m in 0..k {
        for nn in 0..k {
            let b: f64 = t[m].iter().zip(&s1[nn]).map(|(a, b)| a * b).sum::<f64>() * norm;
            let km = (m + 1) as f64 * pi / l1;
            let kn = (nn + 1) as f64 * pi / l2;
            let c = b / (km * km + kn * kn);
            cmax = cmax.max(c.abs());
            coeffs.push(((m + 1) as u32, (nn + 1) as u32, c));
        }
    }
    let kept = coeffs
        .into_iter()
        .filter(|&(_, _, c)| c.abs() > 1e-15 * cmax && c != 0.0)
        .map(|(m, nn, c)| (m, nn, S::lit(c)))
        .collect();
    Ok(SineSeries::new(*outer, kept).into_field())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenfunction_is_recovered() {
        let pi = std::f64::consts::PI;
        let r = Rect::<f64>::unit();
        let s = (FieldExpr::phase(pi, [1.0, 0.0]).sin()) * (FieldExpr::phase(pi, [0.0, 1.0]).sin());
        let f = s.scale(2.0 * pi * pi);
        let u = solve_dirichlet(&f, &r, &r, 16).unwrap();
        for p in [[0.3, 0.4], [0.5, 0.5], [0.9, 0.1]] {
            let exact = (pi * p[0]).sin() * (pi * p[1]).sin();
            assert!((u.eval(p) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_solution_matches_source_on_inner() {
        let inner = Rect::<f64>::unit();
        let outer = inner.inflate(0.3);
        let f = FieldExpr::<f64>::one();
        let u = solve_dirichlet(&f, &inner, &outer, 64).unwrap();
        let lap = u.derivative(2, 0).add(&u.derivative(0, 2));
        for p in [[0.1, 0.1], [0.5, 0.7], [0.95, 0.4]] {
            assert!((lap.eval(p) + 1.0).abs() < 1e-4, "{}", lap.eval(p));
        }
    }
}
