use wforge_core::analysis::*;
use wforge_core::{Domain, Error, Field, Sym as SymField};

fn half_norm2() -> Field {
    Field::x1().square().add(&Field::x2().square()).scale(0.5)
}

fn unit_disk_query(y: [f64; 2]) -> DegreeQuery {
    DegreeQuery::circle([0.5, 0.5], 0.4, 64, y)
}

#[test]
fn defect_of_zero_fields_is_a() {
    let a = SymField::constant([[0.3, 0.1], [0.1, 0.2]]);
    let d = defect(&Field::zero(), &[Field::zero(), Field::zero()], &a);
    assert_eq!(d.eval([0.2, 0.7]), [[0.3, 0.1], [0.1, 0.2]]);
}

#[test]
fn defect_vanishes_on_exact_data() {
    let v = Field::x1().sin().mul(&Field::x2());
    let w = [Field::x1().mul(&Field::x2()), Field::x2().cos()];
    let a = SymField::induced(&v, &w);
    let d = defect(&v, &w, &a);
    for p in [[0.1, 0.2], [0.5, 0.9], [0.77, 0.33]] {
        let m = d.eval(p);
        assert!(m.iter().flatten().all(|x| x.abs() < 1e-12));
    }
}

#[test]
fn det_hessian_examples() {
    assert_eq!(det_hessian(&half_norm2()).eval([0.3, 0.4]), 1.0);
    assert_eq!(det_hessian(&Field::x1().powi(3)).eval([0.3, 0.4]), 0.0);
    // d11 = d22 = 0 and d12 = 1 at the origin
    let v = Field::x1().sin().mul(&Field::x2().sin());
    assert!((det_hessian(&v).eval([0.0, 0.0]) + 1.0).abs() < 1e-15);
}

#[test]
fn weak_hessian_of_quadratics() {
    let d = Domain::unit_square(0.2);
    let phi = TestFunction::new([0.5, 0.5], 0.3, 1.0);
    let cases = [
        (half_norm2(), 1.0),
        (Field::x1().square().sub(&Field::x2().square()).scale(0.5), -1.0),
        (Field::x1().mul(&Field::x2()).add(&Field::x1().square().scale(0.5)), -1.0),
    ];
    for (v, f) in cases {
        let r = weak_hessian_residual(&v, &Field::constant(f), &phi, &d, 128).unwrap();
        assert!(r <= 1e-8, "residual {r}");
    }
}

#[test]
fn weak_hessian_rejects_escaping_support() {
    let d = Domain::unit_square(0.2);
    let phi = TestFunction::new([0.9, 0.5], 0.3, 1.0);
    let r = weak_hessian_residual(&half_norm2(), &Field::one(), &phi, &d, 16);
    assert!(matches!(r, Err(Error::Argument(_))));
}

#[test]
fn weak_hessian_converges_for_smooth_fields() {
    let d = Domain::unit_square(0.2);
    let v = Field::x1().sin().mul(&Field::x2().cos()).add(&Field::x1().powi(3));
    let f = det_hessian(&v);
    let phi = TestFunction::new([0.45, 0.55], 0.35, 1.0);
    let r: Vec<f64> = [16, 32, 64].iter().map(|&n| weak_hessian_residual(&v, &f, &phi, &d, n).unwrap()).collect();
    let order = (r[0] / r[1]).log2();
    assert!(order >= 2.0, "residuals {r:?}");
    assert!(r[2] < 1e-6, "residuals {r:?}");
}

#[test]
fn degree_of_linear_maps() {
    let id = half_norm2().grad();
    assert_eq!(brouwer_degree(&id, &unit_disk_query([0.5, 0.5])).unwrap().degree, 1);
    let refl = Field::x1().square().sub(&Field::x2().square()).scale(0.5).grad();
    assert_eq!(brouwer_degree(&refl, &unit_disk_query([0.5, -0.5])).unwrap().degree, -1);
}

#[test]
fn degree_of_developable_map_vanishes() {
    let v = Field::x1().sin();
    for y in [[0.9, 0.2], [0.5, -0.1], [2.0, 0.0]] {
        assert_eq!(brouwer_degree(&v.grad(), &unit_disk_query(y)).unwrap().degree, 0);
    }
}

#[test]
fn degree_refused_on_the_boundary_image() {
    let id = half_norm2().grad();
    let r = brouwer_degree(&id, &unit_disk_query([0.9, 0.5]));
    assert!(matches!(r, Err(Error::DegreeUndefined { .. })), "{r:?}");
}

#[test]
fn degree_is_independent_of_start_vertex() {
    let v = Field::x1().powi(3).add(&Field::x2().square()).add(&Field::x1().mul(&Field::x2()).scale(0.3));
    let mut q = unit_disk_query([0.6, 0.9]);
    let d0 = brouwer_degree(&v.grad(), &q).unwrap().degree;
    q.polygon.rotate_left(17);
    assert_eq!(brouwer_degree(&v.grad(), &q).unwrap().degree, d0);
}

#[test]
fn degree_is_additive() {
    let g = half_norm2().grad();
    let y = [0.45, 0.5];
    let whole = DegreeQuery::new(vec![[0.2, 0.2], [0.8, 0.2], [0.8, 0.8], [0.2, 0.8]], y);
    let left = DegreeQuery::new(vec![[0.2, 0.2], [0.6, 0.2], [0.6, 0.8], [0.2, 0.8]], y);
    let right = DegreeQuery::new(vec![[0.6, 0.2], [0.8, 0.2], [0.8, 0.8], [0.6, 0.8]], y);
    let d = |q: &DegreeQuery| brouwer_degree(&g, q).unwrap().degree;
    assert_eq!(d(&whole), d(&left) + d(&right));
    assert_eq!(d(&whole), 1);
}

#[test]
fn degree_formula_for_identity() {
    let q = unit_disk_query([0.0, 0.0]);
    let g = TestFunction::new([0.5, 0.5], 0.2, 1.0);
    let r = degree_formula_residual(&half_norm2(), &Field::one(), &q, &g, 128).unwrap();
    assert!(r.residual <= 1e-4, "{r:?}");
    let g2 = TestFunction::new([0.5, 0.5], 0.2, 2.0);
    let r2 = degree_formula_residual(&half_norm2(), &Field::one(), &q, &g2, 128).unwrap();
    assert!(r2.residual <= 2.0 * r.residual + 1e-15);
    assert!((r2.lhs - 2.0 * r.lhs).abs() < 1e-12);
}

#[test]
fn degree_formula_for_developable_field() {
    let q = unit_disk_query([0.0, 0.0]);
    let g = TestFunction::new([0.8, 0.5], 0.15, 1.0);
    let r = degree_formula_residual(&Field::x1().sin(), &Field::zero(), &q, &g, 64).unwrap();
    assert!(r.residual <= 1e-10, "{r:?}");
}

#[test]
fn perturbed_degree_examples() {
    let q = unit_disk_query([0.5, 0.5]);
    assert_eq!(perturbed_degree(&half_norm2(), 0.1, &q).unwrap().degree, 1);
    let v = Field::x1().mul(&Field::x2()).add(&Field::x1().powi(3));
    let y = [0.7, 0.4];
    assert_eq!(
        perturbed_degree(&v, 0.0, &DegreeQuery::circle([0.5, 0.5], 0.4, 64, y)).unwrap(),
        brouwer_degree(&v.grad(), &DegreeQuery::circle([0.5, 0.5], 0.4, 64, y)).unwrap()
    );
    // u_delta = (cos x1 - delta x2, delta x1) at the centre of U
    let dev = Field::x1().sin();
    let delta = 0.05;
    let c: [f64; 2] = [0.5, 0.5];
    let y = [c[0].cos() - delta * c[1], delta * c[0]];
    let d = perturbed_degree(&dev, delta, &DegreeQuery::circle(c, 0.3, 64, y)).unwrap();
    assert!(d.degree >= 1);
}

#[test]
fn boxcount_indicators() {
    let d = Domain::unit_square(0.1);
    let n = 256;
    assert!(gradient_image_boxcount(&Field::x1().sin(), &d, n) <= 4 * n);
    assert!(gradient_image_boxcount(&half_norm2(), &d, n) as f64 >= 0.5 * (n * n) as f64);
    assert_eq!(gradient_image_boxcount(&Field::constant(3.0), &d, n), 1);
}

#[test]
fn battery_is_deterministic_and_inside() {
    let d = Domain::unit_square(0.1);
    let a = bump_battery(&d, 7);
    assert_eq!(a, bump_battery(&d, 7));
    assert_eq!(a.len(), 10);
    assert!(a.iter().all(|t| t.inside(&d.rect)));
    assert_ne!(a, bump_battery(&d, 8));
}
