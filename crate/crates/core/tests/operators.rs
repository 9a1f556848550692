use std::sync::Arc;

use hfact_core::operators::{ialpha_at, partial_adjoint_at};
use hfact_core::*;
use proptest::prelude::*;

fn line(lo: f64, hi: f64, n: usize) -> Arc<Grid> {
    Grid::cube(1, lo, hi, n).unwrap()
}

/// `sum_k c_k exp(-(x - s_k)^2 / w_k^2)`.
fn gaussians(g: &Arc<Grid>, params: &[(f64, f64, f64)]) -> GridFunction {
    GridFunction::from_fn(g, |x| {
        params
            .iter()
            .map(|(c, s, w)| c * (-((x[0] - s) / w).powi(2)).exp())
            .sum()
    })
    .unwrap()
}

fn bump_params() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    proptest::collection::vec((-1.0f64..1.0, -6.0f64..6.0, 0.5f64..3.0), 1..4)
}

/// Brute-force `I_alpha(f_1, f_2)(x_i)` by an explicit double loop over all
/// node pairs, through `kernel_eval`.
fn brute_ialpha(kp: &KernelParams, f1: &GridFunction, f2: &GridFunction, i: usize) -> f64 {
    let g = f1.grid();
    let w = g.quadrature_weights();
    let x = g.coords(i);
    let mut acc = 0.0;
    for a in 0..g.len() {
        for b in 0..g.len() {
            if a == i && b == i {
                continue;
            }
            let (ya, yb) = (g.coords(a), g.coords(b));
            let k = kernel_eval(kp, &x, &[&ya, &yb]).unwrap();
            acc += k * f1.values()[a] * w[a] * f2.values()[b] * w[b];
        }
    }
    acc
}

#[test]
fn ialpha_matches_brute_force() {
    let g = line(-4.0, 4.0, 33);
    let kp = KernelParams::new(2, 1, 0.25).unwrap();
    let f1 = gaussians(&g, &[(1.0, -1.0, 1.0)]);
    let f2 = gaussians(&g, &[(0.5, 2.0, 0.7), (-0.3, 0.0, 1.5)]);
    let out = apply_ialpha(&kp, &[&f1, &f2]).unwrap();
    for i in [0, 7, 16, 25, 32] {
        let want = brute_ialpha(&kp, &f1, &f2, i);
        assert!((out.values()[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn translation_commutes_with_operators() {
    let g = line(-8.0, 8.0, 129);
    let kp = KernelParams::new(2, 1, 0.25).unwrap();
    let chi = |c: f64| ball_indicator(&g, &Ball::new(vec![c], 1.0)).unwrap();
    let shift = 16; // two units
    let out = apply_ialpha(&kp, &[&chi(-3.0), &chi(-1.0)]).unwrap();
    let moved = apply_ialpha(&kp, &[&chi(-1.0), &chi(1.0)]).unwrap();
    for i in 0..g.len() - shift {
        let (a, b) = (out.values()[i], moved.values()[i + shift]);
        assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-300), "node {i}: {a} vs {b}");
    }
}

#[test]
fn point_evaluation_agrees_off_grid() {
    let g = line(-4.0, 4.0, 65);
    let kp = KernelParams::new(2, 1, 0.5).unwrap();
    let f1 = gaussians(&g, &[(1.0, 0.0, 1.0)]);
    let f2 = gaussians(&g, &[(1.0, 1.0, 0.5)]);
    // Off-grid points: compare with a direct loop.
    let x = [0.3217];
    let got = ialpha_at(&kp, &[&f1, &f2], &x).unwrap();
    let w = g.quadrature_weights();
    let mut want = 0.0;
    for a in 0..g.len() {
        for b in 0..g.len() {
            let k = kernel_eval(&kp, &x, &[&g.coords(a), &g.coords(b)]).unwrap();
            want += k * f1.values()[a] * w[a] * f2.values()[b] * w[b];
        }
    }
    assert!((got - want).abs() <= 1e-12 * want.abs());
    let adj = partial_adjoint_at(1, &kp, &[&f1, &f2], &x).unwrap();
    assert!(adj.is_finite() && adj > 0.0);
}

#[test]
fn pi_and_commutator_errors() {
    let g = line(-4.0, 4.0, 33);
    let kp = KernelParams::new(2, 1, 0.25).unwrap();
    let f = gaussians(&g, &[(1.0, 0.0, 1.0)]);
    assert!(matches!(
        pi_l(2, &f, &[&f, &f], &kp),
        Err(Error::IndexOutOfRange { .. })
    ));
    assert!(matches!(
        commutator(0, &f, &[&f], &kp),
        Err(Error::IndexOutOfRange { .. })
    ));
    let other = GridFunction::zeros(&line(-4.0, 4.0, 17));
    assert!(apply_ialpha(&kp, &[&f, &other]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn adjoint_identity_holds(
        p1 in bump_params(), p2 in bump_params(), pg in bump_params(), l in 0usize..2,
    ) {
        let g = line(-8.0, 8.0, 129);
        let kp = KernelParams::new(2, 1, 0.25).unwrap();
        let fs = [gaussians(&g, &p1), gaussians(&g, &p2)];
        let h = gaussians(&g, &pg);
        let lhs = pairing(&apply_ialpha(&kp, &[&fs[0], &fs[1]]).unwrap(), &h).unwrap();
        let mut args = vec![&fs[0], &fs[1]];
        args[l] = &h;
        let rhs = pairing(&fs[l], &apply_partial_adjoint(l, &kp, &args).unwrap()).unwrap();
        let scale = fs[0].l1_norm() * fs[1].l1_norm() * h.l1_norm();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
    }

    #[test]
    fn pi_has_zero_integral(
        pg in bump_params(), p0 in bump_params(), p1 in bump_params(), l in 0usize..2,
    ) {
        let g = line(-8.0, 8.0, 129);
        let kp = KernelParams::new(2, 1, 0.25).unwrap();
        let gg = gaussians(&g, &pg);
        let hs = [gaussians(&g, &p0), gaussians(&g, &p1)];
        let pi = pi_l(l, &gg, &[&hs[0], &hs[1]], &kp).unwrap();
        prop_assert!(pi.integrate().abs() <= 1e-10 * pi.l1_norm().max(1e-300));
    }

    #[test]
    fn ialpha_is_multilinear(c in -3.0f64..3.0, p1 in bump_params(), p2 in bump_params()) {
        let g = line(-6.0, 6.0, 49);
        let kp = KernelParams::new(2, 1, 0.75).unwrap();
        let f1 = gaussians(&g, &p1);
        let f2 = gaussians(&g, &p2);
        let a = apply_ialpha(&kp, &[&f1, &f2]).unwrap();
        let b = apply_ialpha(&kp, &[&f1.scale(c), &f2]).unwrap();
        let diff = b.sub(&a.scale(c)).unwrap().max_abs();
        prop_assert!(diff <= 1e-12 * a.max_abs().max(1e-300) * c.abs().max(1.0));
    }
}

#[test]
fn commutator_matches_operator_difference() {
    let g = line(-6.0, 6.0, 97);
    let kp = KernelParams::new(2, 1, 0.25).unwrap();
    let f1 = gaussians(&g, &[(1.0, -1.0, 1.0)]);
    let f2 = gaussians(&g, &[(0.7, 1.5, 0.8)]);
    let b = GridFunction::from_fn(&g, |x| (x[0] / 3.0).sin()).unwrap();
    for l in 0..2 {
        let mut args = vec![&f1, &f2];
        let bf = b.mul(args[l]).unwrap();
        args[l] = &bf;
        let want = apply_ialpha(&kp, &args)
            .unwrap()
            .sub(&b.mul(&apply_ialpha(&kp, &[&f1, &f2]).unwrap()).unwrap())
            .unwrap();
        let got = commutator(l, &b, &[&f1, &f2], &kp).unwrap();
        let scale = apply_ialpha(&kp, &[&f1, &f2]).unwrap().max_abs();
        assert!(got.sub(&want).unwrap().max_abs() <= 1e-12 * scale);
    }
    let c = GridFunction::constant(&g, -1.25).unwrap();
    assert_eq!(commutator(0, &c, &[&f1, &f2], &kp).unwrap().max_abs(), 0.0);
}
