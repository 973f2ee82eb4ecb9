//! The compactly supported bump `b(s) = exp(-1/(1-s^2))` on `|s| < 1` and its
//! derivatives, written as `b^(k)(s) = P_k(s) (1-s^2)^(-2k) b(s)`.

use std::sync::OnceLock;

use crate::Scalar;

const MAX_ORDER: usize = 16;

/// Coefficients of `P_k` (ascending powers), `k = 0..=MAX_ORDER`.
fn polys() -> &'static Vec<Vec<f64>> {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        // P_{k+1} = P_k' (1-s^2)^2 + (4k s (1-s^2) - 2 s) P_k
        let mut out = vec![vec![1.0]];
        for k in 0..MAX_ORDER {
            let p = &out[k];
            let mut next = vec![0.0; p.len() + 3];
            for (j, &c) in p.iter().enumerate() {
                if j > 0 {
                    // derivative term j c s^(j-1) (1 - 2 s^2 + s^4)
                    let d = j as f64 * c;
                    next[j - 1] += d;
                    next[j + 1] -= 2.0 * d;
                    next[j + 3] += d;
                }
                // (4k - 2) s - 4k s^3
                next[j + 1] += (4.0 * k as f64 - 2.0) * c;
                next[j + 3] -= 4.0 * k as f64 * c;
            }
            while next.len() > 1 && *next.last().unwrap() == 0.0 {
                next.pop();
            }
            out.push(next);
        }
        out
    })
}

/// `b^(order)(s)`; exactly zero outside `(-1, 1)`.
pub fn bump_derivative<S: Scalar>(order: u32, s: S) -> S {
    let one = S::one();
    let q = one - s * s;
    if q <= S::zero() {
        return S::zero();
    }
    let k = order as usize;
    assert!(k <= MAX_ORDER, "bump derivative order {k} exceeds {MAX_ORDER}");
    let poly = &polys()[k];
    let mut acc = S::zero();
    for &c in poly.iter().rev() {
        acc = acc * s + S::lit(c);
    }
    if k == 0 {
        return (-one / q).exp();
    }
    let expo = -one / q - S::lit(2.0 * k as f64) * q.ln();
    acc * expo.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for k in 0..5u32 {
            for &s in &[-0.7, -0.2, 0.0, 0.31, 0.8] {
                let fd = (bump_derivative::<f64>(k, s + h) - bump_derivative::<f64>(k, s - h)) / (2.0 * h);
                let ex = bump_derivative::<f64>(k + 1, s);
                assert!((fd - ex).abs() <= 1e-6 * (1.0 + ex.abs()), "k={k} s={s}: {fd} vs {ex}");
            }
        }
    }

    #[test]
    fn vanishes_outside_support() {
        assert_eq!(bump_derivative::<f64>(0, 1.0), 0.0);
        assert_eq!(bump_derivative::<f64>(3, -1.5), 0.0);
        assert!((bump_derivative::<f64>(0, 0.0) - (-1.0f64).exp()).abs() < 1e-16);
    }
}
