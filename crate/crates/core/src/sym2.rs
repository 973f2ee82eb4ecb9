//! Small helpers for symmetric 2x2 matrices stored as `[g11, g12, g22]`.

pub type Sym2 = [f64; 3];
pub type Mat2 = [[f64; 2]; 2];

pub fn to_mat(g: Sym2) -> Mat2 {
    [[g[0], g[1]], [g[1], g[2]]]
}

pub fn from_mat(m: Mat2) -> Sym2 {
    [m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]]
}

pub fn identity() -> Sym2 {
    [1.0, 0.0, 1.0]
}

/// Frobenius norm.
pub fn frob(g: Sym2) -> f64 {
    (g[0] * g[0] + 2.0 * g[1] * g[1] + g[2] * g[2]).sqrt()
}

/// Spectral norm `max |eigenvalue|`.
pub fn spectral(g: Sym2) -> f64 {
    let [a, b] = eigenvalues(g);
    a.abs().max(b.abs())
}

pub fn sub(a: Sym2, b: Sym2) -> Sym2 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Sym2, b: Sym2) -> Sym2 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(c: f64, a: Sym2) -> Sym2 {
    [c * a[0], c * a[1], c * a[2]]
}

/// Eigenvalues in ascending order.
pub fn eigenvalues(g: Sym2) -> [f64; 2] {
    let m = 0.5 * (g[0] + g[2]);
    let r = (0.5 * (g[0] - g[2])).hypot(g[1]);
    [m - r, m + r]
}

pub fn min_eigenvalue(g: Sym2) -> f64 {
    eigenvalues(g)[0]
}

/// `g^p` for positive definite `g` via the spectral decomposition.
pub fn power(g: Sym2, p: f64) -> Sym2 {
    let [l1, l2] = eigenvalues(g);
    let (f1, f2) = (l1.powf(p), l2.powf(p));
    if (l2 - l1).abs() <= 1e-15 * l2.abs().max(1.0) {
        return [f1, 0.0, f1];
    }
    // g^p = f1 P1 + f2 P2 with P1 = (g - l2)/(l1 - l2), P2 = (g - l1)/(l2 - l1)
    let c1 = f1 / (l1 - l2);
    let c2 = f2 / (l2 - l1);
    [
        c1 * (g[0] - l2) + c2 * (g[0] - l1),
        (c1 + c2) * g[1],
        c1 * (g[2] - l2) + c2 * (g[2] - l1),
    ]
}

pub fn mul(a: Mat2, b: Mat2) -> Mat2 {
    let mut o = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    o
}

pub fn apply(a: Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// `v (x) v` as a symmetric matrix.
pub fn outer(v: [f64; 2]) -> Sym2 {
    [v[0] * v[0], v[0] * v[1], v[1] * v[1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_root_squares_back() {
        let g = [4.0, 1.0, 2.0];
        let r = to_mat(power(g, 0.5));
        let back = from_mat(mul(r, r));
        for k in 0..3 {
            assert!((back[k] - g[k]).abs() < 1e-13);
        }
    }
}
