use proptest::prelude::*;
use wforge_core::field::norm::{commutator_gap, evaluate, extend, norm_estimate};
use wforge_core::field::{differentiate, mollify, mollify::radial_moment, NormKind};
use wforge_core::{Domain, Error, Field};

const PI: f64 = std::f64::consts::PI;

#[test]
fn evaluate_examples() {
    let d = Domain::new([0.0, 0.0], [4.0, 1.0], 0.0).unwrap();
    assert_eq!(evaluate(&Field::x1().square(), &d, [3.0, 0.0]).unwrap(), 9.0);
    let u = Domain::unit_square(0.2);
    let m = mollify(&Field::constant(5.0), 0.15, 24, &u).unwrap();
    for p in [[0.1, 0.1], [0.5, 0.9], [0.99, 0.01]] {
        assert!((m.eval(p) - 5.0).abs() < 1e-13);
    }
    let s = Field::phase(2.0 * PI, [1.0, 0.0]).sin();
    assert!((s.eval([0.25, 0.7]) - 1.0).abs() < 1e-15);
    assert!(matches!(evaluate(&s, &u, [1.5, 0.5]), Err(Error::Domain { .. })));
}

#[test]
fn differentiate_examples() {
    let d = differentiate(&Field::x1().square(), (1, 0)).unwrap();
    assert_eq!(d.eval([2.0, 7.0]), 4.0);
    let d = differentiate(&Field::x1().mul(&Field::x2()), (1, 1)).unwrap();
    assert_eq!(d.eval([0.3, -2.0]), 1.0);
    assert!(matches!(differentiate(&Field::x1(), (2, 2)), Err(Error::UnsupportedOrder { .. })));

    let dom = Domain::unit_square(0.2);
    let m = mollify(&Field::x1(), 0.1, 24, &dom).unwrap();
    let dm = differentiate(&m, (1, 0)).unwrap();
    assert!((dm.eval([0.5, 0.5]) - 1.0).abs() < 1e-10);
    let h = 1e-5;
    let fd = (m.eval([0.5 + h, 0.5]) - m.eval([0.5 - h, 0.5])) / (2.0 * h);
    assert!((fd - 1.0).abs() < 1e-9);
    // a non-affine inner field takes the convolution path
    let m = mollify(&Field::x1().powi(3), 0.1, 24, &dom).unwrap();
    let fd = (m.eval([0.5 + h, 0.4]) - m.eval([0.5 - h, 0.4])) / (2.0 * h);
    assert!((m.partial(0).eval([0.5, 0.4]) - fd).abs() < 1e-8);
}

#[test]
fn mollify_examples() {
    let d = Domain::unit_square(0.25);
    let a = Field::affine(0.5, [2.0, -1.0]);
    let m = mollify(&a, 0.2, 24, &d).unwrap();
    assert!((m.eval([0.3, 0.8]) - a.eval([0.3, 0.8])).abs() < 1e-14);
    assert!(matches!(mollify(&Field::x1().sin(), 0.3, 24, &d), Err(Error::InsufficientExtension { .. })));

    // |f * phi_l - f|_0 <= C l |f|_{0,1} with one constant across l
    let f = Field::phase(2.0 * PI, [1.0, 0.0]).sin();
    let lip = norm_estimate(&f, &d, NormKind::Holder(1.0), 64.0).unwrap().value;
    let c: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&l| {
            let m = mollify(&f, l, 24, &d).unwrap();
            let gap = norm_estimate(&m.sub(&f), &d, NormKind::Sup, 64.0).unwrap().value;
            gap / (l * lip)
        })
        .collect();
    let cmax = c.iter().cloned().fold(0.0, f64::max);
    assert!(cmax < 1.0, "fitted constants {c:?}");
    // the attenuation is genuine
    assert!(c.iter().all(|&x| x > 0.0));
}

#[test]
fn norm_estimate_examples() {
    let d = Domain::unit_square(0.0);
    assert_eq!(norm_estimate(&Field::constant(3.0), &d, NormKind::Sup, 4.0).unwrap().value, 3.0);
    let h = norm_estimate(&Field::x1(), &d, NormKind::Holder(1.0), 32.0).unwrap().value;
    assert!((h - 1.0).abs() < 1e-9);
    let lambda = 64.0;
    let f = Field::phase(2.0 * PI * lambda, [1.0, 0.0]).sin();
    let s = norm_estimate(&f, &d, NormKind::Sup, 4.0 * lambda).unwrap().value;
    assert!(s >= 0.999);
    assert!(matches!(norm_estimate(&f, &d, NormKind::Sup, 1.0), Err(Error::Parameter(_))));
    assert!(matches!(norm_estimate(&f, &d, NormKind::Holder(1.5), 8.0), Err(Error::Parameter(_))));
}

#[test]
fn extend_examples() {
    let d = Domain::unit_square(0.2);
    let f = Field::x1().square();
    let e = extend(&f, &d);
    assert!(e.field.ptr_eq(&f));
    assert!((e.eval([1.1, 0.0]).unwrap() - 1.21).abs() < 1e-14);
    let outer = e.norm(NormKind::Sup, 10.0).unwrap().value;
    let inner = norm_estimate(&f, &d, NormKind::Sup, 10.0).unwrap().value;
    assert!((outer - 1.44).abs() < 1e-12 && outer >= inner && inner == 1.0);
}

#[test]
fn commutator_examples() {
    let d = Domain::unit_square(0.25);
    let g = commutator_gap(&Field::constant(2.0), &Field::x2().sin(), 0.1, 1.0, &d, 32.0).unwrap();
    assert!(g.gap < 1e-14);

    // f = g = x1: gap = l^2 <y1^2> = l^2 m2 / 2, up to the quadrature's moment error
    let l = 0.2;
    let g = commutator_gap(&Field::x1(), &Field::x1(), l, 1.0, &d, 16.0).unwrap();
    let exact = l * l * 0.5 * radial_moment(2);
    assert!((g.gap - exact).abs() < 2e-3 * exact, "gap {} exact {exact}", g.gap);
}

#[test]
fn commutator_slope_for_sine_pair() {
    let d = Domain::unit_square(0.25);
    let f = Field::phase(2.0 * PI, [1.0, 0.0]).sin();
    let ls = [0.2, 0.1, 0.05];
    let gaps: Vec<f64> = ls.iter().map(|&l| commutator_gap(&f, &f, l, 1.0, &d, 64.0).unwrap().gap).collect();
    let (mx, my) = (ls.iter().map(|l| l.ln()).sum::<f64>() / 3.0, gaps.iter().map(|g| g.ln()).sum::<f64>() / 3.0);
    let num: f64 = ls.iter().zip(&gaps).map(|(l, g)| (l.ln() - mx) * (g.ln() - my)).sum();
    let den: f64 = ls.iter().map(|l| (l.ln() - mx).powi(2)).sum();
    assert!(num / den >= 1.9, "slope {} gaps {gaps:?}", num / den);
}

fn leaf() -> impl Strategy<Value = Field> {
    prop_oneof![
        (-2.0..2.0f64).prop_map(Field::constant),
        Just(Field::x1()),
        Just(Field::x2()),
        ((0.5..6.0f64), (-1.0..1.0f64)).prop_map(|(l, t)| Field::phase(l, [t.cos(), t.sin()])),
    ]
}

fn tree() -> impl Strategy<Value = Field> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(&b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(&b)),
            (inner.clone(), -3.0..3.0f64).prop_map(|(a, c)| a.scale(c)),
            inner.clone().prop_map(|a| a.sin()),
            inner.clone().prop_map(|a| a.cos()),
            inner.clone().prop_map(|a| a.sin().exp()),
            inner.clone().prop_map(|a| a.powi(2)),
            inner.prop_map(|a| a.square().add_const(1.0).sqrt()),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn derivatives_match_central_differences(f in tree(), pts in prop::collection::vec((0.05..0.95f64, 0.05..0.95f64), 100)) {
        let h = 1e-5;
        let d = [f.partial(0), f.partial(1)];
        let d3 = [d[0].partial(0).partial(0), d[1].partial(1).partial(1)];
        for (x, y) in pts {
            for (axis, dfield) in d.iter().enumerate() {
                let e = if axis == 0 { [h, 0.0] } else { [0.0, h] };
                let fd = (f.eval([x + e[0], y + e[1]]) - f.eval([x - e[0], y - e[1]])) / (2.0 * h);
                let exact = dfield.eval([x, y]);
                // central differences carry h^2 f'''/6 truncation error
                let trunc = h * h / 6.0 * d3[axis].eval([x, y]).abs();
                let scale = 1.0 + exact.abs() + f.eval([x, y]).abs();
                prop_assert!((fd - exact).abs() <= 1e-6 * scale + 2.0 * trunc, "{fd} vs {exact} at ({x},{y})");
            }
        }
    }

    #[test]
    fn evaluation_is_pure(f in tree(), x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let a = f.eval([x, y]);
        let b = f.eval([x, y]);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn norm_estimates_are_monotone(f in tree(), k in 1u32..4) {
        let d = Domain::unit_square(0.0);
        let r = 4.0 * f64::from(k);
        for kind in [NormKind::Sup, NormKind::Cm(1), NormKind::Holder(0.5)] {
            let coarse = norm_estimate(&f, &d, kind, r).unwrap().value;
            let fine = norm_estimate(&f, &d, kind, 2.0 * r).unwrap().value;
            prop_assert!(fine >= coarse || (coarse.is_nan() && fine.is_nan()), "{kind:?}: {coarse} -> {fine}");
        }
    }
}

#[test]
fn mollified_norm_bounds_share_one_constant() {
    // |f * phi_l|_{k+j} <= C l^-k |f|_j, here with j = 0 and k = 1, 2
    let d = Domain::unit_square(0.25);
    let f = Field::phase(2.0 * PI, [1.0, 0.0]).sin().mul(&Field::x2().add_const(1.0));
    let f0 = norm_estimate(&f, &d, NormKind::Sup, 32.0).unwrap().value;
    for k in [1u32, 2] {
        let c: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&l| {
                let m = mollify(&f, l, 24, &d).unwrap();
                norm_estimate(&m, &d, NormKind::Cm(k), 32.0).unwrap().value * l.powi(k as i32) / f0
            })
            .collect();
        let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(hi < 20.0 && lo > 0.0, "k = {k}: constants {c:?}");
    }
}
