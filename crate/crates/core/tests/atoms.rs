use std::sync::Arc;

use hfact_core::atoms::{default_scales, dipole_atom};
use hfact_core::*;
use proptest::prelude::*;

fn line(lo: f64, hi: f64, n: usize) -> Arc<Grid> {
    Grid::cube(1, lo, hi, n).unwrap()
}

/// Plain-loop re-derivation of the coefficients of the two-bump scheme for
/// indicator bumps `f_1 = s_1 chi_{B_1}`, `f_2 = s_2 chi_{B_2}` in one
/// dimension.
fn oracle_lambdas(grid: &Grid, c1: f64, c2: f64, r: f64, s: [f64; 2], q: f64) -> Vec<f64> {
    let nodes: Vec<(f64, f64)> = (0..grid.len())
        .map(|i| (grid.coords(i)[0], grid.quadrature_weights()[i]))
        .collect();
    let inside = |x: f64, c: f64, rad: f64| (x - c).abs() <= rad * (1.0 + 1e-12);
    let measure = |c: f64, rad: f64| -> f64 {
        nodes.iter().filter(|(x, _)| inside(*x, c, rad)).map(|(_, w)| w).sum()
    };
    let lq = |f: &dyn Fn(f64) -> f64| -> f64 {
        nodes
            .iter()
            .map(|(x, w)| f(*x).abs().powf(q) * w)
            .sum::<f64>()
            .powf(1.0 / q)
    };
    let qc = q / (q - 1.0);
    let d = (c2 - c1).abs();
    let top = (d / r).log2().floor() as i32 + 1;
    let mid = 0.5 * (c1 + c2);
    let big = r * 2f64.powi(top + 1);
    let mut out = Vec::new();
    let mass1 = s[0] * measure(c1, r);
    let transfer = mass1 / measure(mid, big);
    for (i, (c, si)) in [(c1, s[0]), (c2, s[1])].into_iter().enumerate() {
        let mass = si * measure(c, r);
        let avg = |k: i32| mass / measure(c, r * 2f64.powi(k));
        // The mean-free part of an indicator bump vanishes.
        for k in 1..=top {
            let (a0, a1) = (avg(k - 1), avg(k));
            let (r0, r1) = (r * 2f64.powi(k - 1), r * 2f64.powi(k));
            let piece = move |x: f64| {
                (if inside(x, c, r0) { a0 } else { 0.0 }) - if inside(x, c, r1) { a1 } else { 0.0 }
            };
            out.push(lq(&piece) * measure(c, r1).powf(1.0 / qc));
        }
        let sign = if i == 0 { -1.0 } else { 1.0 };
        let (aj, rj) = (avg(top), r * 2f64.powi(top));
        let piece = move |x: f64| {
            (if inside(x, c, rj) { aj } else { 0.0 })
                + if inside(x, mid, big) { sign * transfer } else { 0.0 }
        };
        out.push(lq(&piece) * measure(mid, big).powf(1.0 / qc));
    }
    out
}

fn indicator_pair(g: &Arc<Grid>, c1: f64, c2: f64, r: f64) -> (GridFunction, GridFunction, Ball, Ball) {
    let b1 = Ball::new(vec![c1], r);
    let b2 = Ball::new(vec![c2], r);
    let f1 = ball_indicator(g, &b1).unwrap();
    let f2 = ball_indicator(g, &b2).unwrap().scale(-1.0);
    (f1, f2, b1, b2)
}

#[test]
fn two_bump_example_matches_oracle() {
    let g = line(-8.0, 17.0, 401);
    let (f1, f2, b1, b2) = indicator_pair(&g, 0.5, 8.5, 0.5);
    let d = two_bump_decompose(&f1, &f2, &b1, &b2, 2.0).unwrap();
    assert_eq!(d.levels, 5);
    let f = f1.add(&f2).unwrap();
    let err = d.reconstruct(&g).unwrap().sub(&f).unwrap().max_abs();
    assert!(err <= 1e-12 * f.max_abs(), "reconstruction error {err:e}");

    let oracle = oracle_lambdas(&g, 0.5, 8.5, 0.5, [1.0, -1.0], 2.0);
    assert_eq!(d.terms.len(), oracle.len());
    for ((lam, _), want) in d.terms.iter().zip(&oracle) {
        assert!((lam.abs() - want).abs() <= 1e-12 * want, "{lam} vs {want}");
    }
    let total: f64 = oracle.iter().sum();
    assert!((atomic_h1_bound(&d) - total).abs() <= 1e-12 * total);
    for (_, a) in &d.terms {
        let report = validate_atom(a);
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn separation_sweep_follows_log_shape() {
    let r = 0.5;
    let g = line(-4.0, 68.0, 1153);
    let mut prev = 0.0;
    let mut ratios = Vec::new();
    for ratio in [8.0f64, 16.0, 32.0, 64.0, 128.0] {
        let (f1, f2, b1, b2) = indicator_pair(&g, 0.0, ratio * r, r);
        let d = two_bump_decompose(&f1, &f2, &b1, &b2, 2.0).unwrap();
        let f = f1.add(&f2).unwrap();
        let err = d.reconstruct(&g).unwrap().sub(&f).unwrap().max_abs();
        assert!(err <= 1e-12);
        let bound = atomic_h1_bound(&d);
        assert!(bound >= prev, "sum |lambda| decreased at d/r = {ratio}");
        prev = bound;
        ratios.push(bound / ratio.log2());
    }
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi / lo <= 10.0, "ratio band {lo} .. {hi}");
}

#[test]
fn decomposition_is_homogeneous() {
    let g = line(-8.0, 17.0, 401);
    let (f1, f2, b1, b2) = indicator_pair(&g, 0.5, 8.5, 0.5);
    let d = two_bump_decompose(&f1, &f2, &b1, &b2, 2.0).unwrap();
    let c = -2.75;
    let dc = two_bump_decompose(&f1.scale(c), &f2.scale(c), &b1, &b2, 2.0).unwrap();
    assert_eq!(d.terms.len(), dc.terms.len());
    for ((l1, a1), (l2, a2)) in d.terms.iter().zip(&dc.terms) {
        assert!((l2 - c * l1).abs() <= 1e-12 * l2.abs());
        let diff = a1.values.sub(&a2.values).unwrap().max_abs();
        assert!(diff <= 1e-12 * a1.values.max_abs());
    }
    let bound = atomic_h1_bound(&d);
    assert!((atomic_h1_bound(&d.scaled(c)) - c.abs() * bound).abs() <= 1e-12 * bound);
}

#[test]
fn close_bumps_are_rejected() {
    let g = line(-8.0, 8.0, 257);
    let (f1, f2, b1, b2) = indicator_pair(&g, 0.0, 1.5, 0.5);
    assert!(matches!(
        two_bump_decompose(&f1, &f2, &b1, &b2, 2.0),
        Err(Error::SeparationTooSmall { .. })
    ));
}

#[test]
fn single_atom_bound_is_its_coefficient() {
    let g = line(-4.0, 4.0, 257);
    let a = dipole_atom(&g, &Ball::new(vec![0.0], 1.0), 4.0).unwrap();
    assert!(validate_atom(&a).passed());
    let d = AtomicDecomposition {
        terms: vec![(1.0, a)],
        source_note: String::new(),
        bump_size_constants: [0.0; 2],
        levels: 0,
    };
    assert_eq!(atomic_h1_bound(&d), 1.0);
}

#[test]
fn maximal_estimate_is_below_atomic_bound() {
    let g = line(-16.0, 16.0, 1025);
    let scales = default_scales(&g, 8);
    let mut worst: f64 = 0.0;
    for (c, r) in [(0.0, 0.5), (3.0, 1.0), (-5.0, 2.0)] {
        let a = dipole_atom(&g, &Ball::new(vec![c], r), 2.0).unwrap();
        let est = maximal_h1_estimate(&a.values, &scales).unwrap();
        assert!(est <= 50.0, "single atom estimate {est}");
        worst = worst.max(est);
    }
    let (f1, f2, b1, b2) = indicator_pair(&g, -4.0, 4.0, 0.5);
    let d = two_bump_decompose(&f1, &f2, &b1, &b2, 2.0).unwrap();
    let est = maximal_h1_estimate(&f1.add(&f2).unwrap(), &scales).unwrap();
    assert!(est <= 50.0 * atomic_h1_bound(&d));
    assert!(worst > 0.0);
}

#[test]
fn maximal_estimate_needs_scales() {
    let g = line(-4.0, 4.0, 65);
    let f = GridFunction::zeros(&g);
    assert!(matches!(maximal_h1_estimate(&f, &[]), Err(Error::EmptyScales)));
    assert!(matches!(
        maximal_h1_estimate(&f, &[1.0, -1.0, 2.0]),
        Err(Error::InvalidScales(_))
    ));
    assert_eq!(maximal_h1_estimate(&f, &default_scales(&g, 4)).unwrap(), 0.0);
}

#[test]
fn decomposition_files_round_trip() {
    let g = line(-8.0, 17.0, 401);
    let (f1, f2, b1, b2) = indicator_pair(&g, 0.5, 8.5, 0.5);
    let d = two_bump_decompose(&f1, &f2, &b1, &b2, 2.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    d.write(dir.path(), "two_bump").unwrap();
    let text = std::fs::read_to_string(dir.path().join("two_bump.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let terms = v["terms"].as_array().unwrap();
    assert_eq!(terms.len(), d.terms.len());
    let file = terms[0]["values_file"].as_str().unwrap();
    let back = GridFunction::load(&dir.path().join(file)).unwrap();
    assert_eq!(back.values(), d.terms[0].1.values.values());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_bumps_reconstruct_exactly(
        v1 in proptest::collection::vec(-1.0f64..1.0, 17),
        v2 in proptest::collection::vec(-1.0f64..1.0, 17),
        sep in 4usize..40,
        q in 1.5f64..6.0,
    ) {
        // Bumps of radius 0.5 sampled on h = 1/16: 17 nodes each.
        let g = line(-8.0, 40.0, 769);
        let r = 0.5;
        let c1 = 0.0;
        let c2 = sep as f64;
        let b1 = Ball::new(vec![c1], r);
        let b2 = Ball::new(vec![c2], r);
        let place = |c: f64, v: &[f64]| {
            let start = ((c - r + 8.0) * 16.0).round() as usize;
            let mut vals = vec![0.0; g.len()];
            vals[start..start + 17].copy_from_slice(v);
            GridFunction::new(g.clone(), vals).unwrap()
        };
        let f1 = place(c1, &v1);
        let raw = place(c2, &v2);
        // Fix the total mean with a multiple of the second indicator.
        let chi2 = ball_indicator(&g, &b2).unwrap();
        let shift = (f1.integrate() + raw.integrate()) / chi2.integrate();
        let f2 = raw.axpy(-shift, &chi2).unwrap();
        let d = two_bump_decompose(&f1, &f2, &b1, &b2, q).unwrap();
        let f = f1.add(&f2).unwrap();
        let err = d.reconstruct(&g).unwrap().sub(&f).unwrap().max_abs();
        prop_assert!(err <= 1e-12 * f.max_abs().max(1e-300));
        for (_, a) in &d.terms {
            prop_assert!(validate_atom(a).passed());
        }
    }
}
