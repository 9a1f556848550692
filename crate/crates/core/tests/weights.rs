use std::sync::Arc;

use hfact_core::weights::Cube;
use hfact_core::*;
use proptest::prelude::*;

/// Nodes of `cube` found by comparing physical coordinates.
fn members(grid: &Grid, cube: &Cube) -> Vec<usize> {
    let lo = cube.corner(grid);
    let n = grid.dim();
    (0..grid.len())
        .filter(|&i| {
            let x = grid.coords(i);
            (0..n).all(|d| {
                let h = grid.spacing()[d];
                let hi = lo[d] + cube.side_length(grid, d);
                x[d] >= lo[d] - 0.25 * h && x[d] <= hi + 0.25 * h
            })
        })
        .collect()
}

fn avg(v: &[f64], nodes: &[usize], f: impl Fn(f64) -> f64) -> f64 {
    nodes.iter().map(|&i| f(v[i])).sum::<f64>() / nodes.len() as f64
}

fn brute_ap(w: &GridFunction, p: f64, family: &CubeFamily) -> f64 {
    let v = w.values();
    let mut best = f64::NEG_INFINITY;
    for c in family.cubes() {
        let nodes = members(w.grid(), c);
        let a = avg(v, &nodes, |x| x);
        let b = avg(v, &nodes, |x| x.powf(-1.0 / (p - 1.0)));
        best = best.max(a * b.powf(p - 1.0));
    }
    best
}

fn brute_apq(omegas: &[GridFunction], cfg: &ExponentConfig, family: &CubeFamily) -> f64 {
    let grid = omegas[0].grid();
    let mut best = f64::NEG_INFINITY;
    for c in family.cubes() {
        let nodes = members(grid, c);
        let mu = nodes
            .iter()
            .map(|&i| omegas.iter().map(|w| w.values()[i].powf(cfg.q)).product::<f64>())
            .sum::<f64>()
            / nodes.len() as f64;
        let mut value = mu;
        for (w, p) in omegas.iter().zip(&cfg.p) {
            let pc = p / (p - 1.0);
            value *= avg(w.values(), &nodes, |x| x.powf(-pc)).powf(cfg.q / pc);
        }
        best = best.max(value);
    }
    best
}

fn brute_avecp(omegas: &[GridFunction], cfg: &ExponentConfig, family: &CubeFamily) -> f64 {
    let grid = omegas[0].grid();
    let p = 1.0 / cfg.p.iter().map(|p| 1.0 / p).sum::<f64>();
    let mut best = f64::NEG_INFINITY;
    for c in family.cubes() {
        let nodes = members(grid, c);
        let nu = nodes
            .iter()
            .map(|&i| {
                omegas
                    .iter()
                    .zip(&cfg.p)
                    .map(|(w, pi)| w.values()[i].powf(p / pi))
                    .product::<f64>()
            })
            .sum::<f64>()
            / nodes.len() as f64;
        let mut value = nu;
        for (w, pi) in omegas.iter().zip(&cfg.p) {
            let pc = pi / (pi - 1.0);
            value *= avg(w.values(), &nodes, |x| x.powf(1.0 - pc)).powf(p / pc);
        }
        best = best.max(value);
    }
    best
}

fn brute_bmo(b: &GridFunction, family: &CubeFamily) -> f64 {
    let v = b.values();
    let mut best = f64::NEG_INFINITY;
    for c in family.cubes() {
        let nodes = members(b.grid(), c);
        let m = avg(v, &nodes, |x| x);
        best = best.max(avg(v, &nodes, |x| (x - m).abs()));
    }
    best
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn line(lo: f64, hi: f64, n: usize) -> Arc<Grid> {
    Grid::cube(1, lo, hi, n).unwrap()
}

fn config() -> ExponentConfig {
    ExponentConfig::new(2, 1, 0.25, vec![4.0, 4.0], 4.0).unwrap()
}

fn power(grid: &Arc<Grid>, a: f64) -> GridFunction {
    let delta = grid.spacing()[0];
    GridFunction::from_fn(grid, |x| (x[0].abs() + delta).powf(a)).unwrap()
}

#[test]
fn exponent_relation_is_enforced() {
    assert!(ExponentConfig::new(2, 1, 0.25, vec![4.0, 4.0], 4.0).is_ok());
    assert!(matches!(
        ExponentConfig::new(2, 1, 0.3, vec![4.0, 4.0], 4.0),
        Err(Error::InvalidExponents(_))
    ));
    assert!(ExponentConfig::new(2, 1, 0.25, vec![1.0, 4.0], 4.0).is_err());
    let c = config();
    assert_eq!(c.q_conj(), 4.0 / 3.0);
    assert_eq!(c.p_harmonic(), 2.0);
}

#[test]
fn trivial_weights_give_one() {
    let g = line(-1.0, 1.0, 129);
    let family = CubeFamily::dyadic(&g);
    let one = GridFunction::constant(&g, 1.0).unwrap();
    for p in [1.5, 2.0, 4.0] {
        assert_eq!(ap_constant(&one, p, &family).unwrap(), 1.0);
    }
    let c = GridFunction::constant(&g, 5.0).unwrap();
    assert!((ap_constant(&c, 2.0, &family).unwrap() - 1.0).abs() < 1e-14);

    let unit = WeightVector::unit(&g, config()).unwrap();
    assert_eq!(apq_constant(&unit, &family).unwrap(), 1.0);
    assert_eq!(a_vecp_constant(&unit, &family).unwrap(), 1.0);

    let two_three = WeightVector::new(
        vec![
            GridFunction::constant(&g, 2.0).unwrap(),
            GridFunction::constant(&g, 3.0).unwrap(),
        ],
        config(),
    )
    .unwrap();
    assert!((apq_constant(&two_three, &family).unwrap() - 1.0).abs() < 1e-13);
    assert!((a_vecp_constant(&two_three, &family).unwrap() - 1.0).abs() < 1e-13);
}

#[test]
fn constants_match_brute_force() {
    let g = line(-1.0, 1.0, 129);
    let family = CubeFamily::dyadic(&g);
    let w = power(&g, 0.5);
    assert!(rel(ap_constant(&w, 2.0, &family).unwrap(), brute_ap(&w, 2.0, &family)) < 1e-12);

    let omegas = vec![power(&g, 0.1), GridFunction::constant(&g, 1.0).unwrap()];
    let wv = WeightVector::new(omegas.clone(), config()).unwrap();
    let apq = apq_constant(&wv, &family).unwrap();
    assert!(rel(apq, brute_apq(&omegas, &config(), &family)) < 1e-12);
    assert!(apq >= 1.0);
    let avp = a_vecp_constant(&wv, &family).unwrap();
    assert!(rel(avp, brute_avecp(&omegas, &config(), &family)) < 1e-12);
}

#[test]
fn moen_classes_are_finite_for_shipped_weights() {
    let g = line(-1.0, 1.0, 129);
    let family = CubeFamily::dyadic(&g);
    let cfg = config();
    let wv = WeightVector::new(vec![power(&g, 0.1), power(&g, -0.05)], cfg.clone()).unwrap();
    for i in 0..cfg.m {
        let v = ap_constant(wv.dual(i), cfg.m as f64 * cfg.p_conj(i), &family).unwrap();
        assert!(v.is_finite() && v <= 1e6);
    }
    let v = ap_constant(wv.mu(), cfg.m as f64 * cfg.q, &family).unwrap();
    assert!(v.is_finite() && v <= 1e6);
}

#[test]
fn weighted_norm_examples() {
    let g = line(0.0, 1.0, 4097);
    let one = GridFunction::constant(&g, 1.0).unwrap();
    assert!((weighted_lp_norm(&one, &one, 1.0).unwrap() - 1.0).abs() < 1e-14);
    let x = GridFunction::from_fn(&g, |x| x[0]).unwrap();
    let v = weighted_lp_norm(&one, &x, 2.0).unwrap();
    assert!((v - 0.5f64.sqrt()).abs() < 1e-3);
    let f = GridFunction::from_fn(&g, |x| (7.0 * x[0]).sin()).unwrap();
    let a = weighted_lp_norm(&f, &x, 3.0).unwrap();
    let b = weighted_lp_norm(&f.scale(2.0), &x, 3.0).unwrap();
    assert!((b - 2.0 * a).abs() <= 1e-12 * b);
    assert_eq!(weighted_lp_norm(&f, &x, f64::INFINITY).unwrap(), f.max_abs());
}

#[test]
fn doubling_of_lebesgue_measure() {
    let g = line(-1.0, 1.0, 129);
    let family = CubeFamily::dyadic(&g);
    for c in [1.0, 3.5] {
        let w = GridFunction::constant(&g, c).unwrap();
        let fit = doubling_exponents(&w, &family).unwrap();
        assert!((fit.epsilon_hat - 1.0).abs() < 1e-12);
        assert!((fit.l_hat - 1.0).abs() < 1e-12);
        assert!((fit.c_hat - 1.0).abs() < 1e-12);
    }
}

#[test]
fn doubling_of_power_weight_matches_pair_scan() {
    let g = line(-1.0, 1.0, 129);
    let family = CubeFamily::dyadic(&g);
    let w = power(&g, 0.5);
    let fit = doubling_exponents(&w, &family).unwrap();
    let (mut lo, mut hi, mut pairs) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for q in family.cubes() {
        let q_nodes = members(&g, q);
        let q_mass: f64 = q_nodes.iter().map(|&i| w.values()[i]).sum();
        let mut stack = vec![q.clone()];
        while let Some(c) = stack.pop() {
            for s in c.children() {
                if s.side < hfact_core::weights::MIN_CUBE_CELLS {
                    continue;
                }
                let s_nodes = members(&g, &s);
                let s_mass: f64 = s_nodes.iter().map(|&i| w.values()[i]).sum();
                let u = (s_nodes.len() as f64 / q_nodes.len() as f64).ln();
                let v = (s_mass / q_mass).ln();
                lo = lo.min(v / u);
                hi = hi.max(v / u);
                pairs += 1;
                stack.push(s);
            }
        }
    }
    assert_eq!(fit.pairs, pairs);
    assert!(rel(fit.epsilon_hat, lo) < 1e-12);
    assert!(rel(fit.l_hat, hi) < 1e-12);
    assert!(fit.epsilon_hat <= 1.0 && fit.l_hat >= 1.0);
    assert!(fit.c_hat >= 1.0);
}

#[test]
fn bmo_examples() {
    let g = line(0.0, 1.0, 4097);
    let c = GridFunction::constant(&g, 2.5).unwrap();
    assert_eq!(bmo_norm(&c, &CubeFamily::dyadic(&g)).unwrap(), 0.0);
    let x = GridFunction::from_fn(&g, |x| x[0]).unwrap();
    let v = bmo_norm(&x, &CubeFamily::whole(&g)).unwrap();
    assert!((v - 0.25).abs() < 1e-3);

    let g = line(-1.0, 1.0, 129);
    let family = CubeFamily::dyadic(&g);
    let delta = g.spacing()[0];
    let b = GridFunction::from_fn(&g, |x| (x[0].abs() + delta).ln()).unwrap();
    let v = bmo_norm(&b, &family).unwrap();
    assert!(rel(v, brute_bmo(&b, &family)) < 1e-12);
    let shifted = b.map(|t| t + 3.0).unwrap();
    assert!(rel(bmo_norm(&shifted, &family).unwrap(), v) < 1e-12);
    assert!(rel(bmo_norm(&b.scale(-4.0), &family).unwrap(), 4.0 * v) < 1e-12);
}

#[test]
fn empty_family_is_rejected() {
    let g = line(-1.0, 1.0, 33);
    let family = CubeFamily::from_cubes(&g, Vec::new()).unwrap();
    let one = GridFunction::constant(&g, 1.0).unwrap();
    assert!(matches!(ap_constant(&one, 2.0, &family), Err(Error::EmptyFamily)));
    assert!(matches!(bmo_norm(&one, &family), Err(Error::EmptyFamily)));
}

#[test]
fn weight_specs_sample() {
    let g = line(-2.0, 2.0, 65);
    let spec: FunctionSpec = serde_json::from_str(r#"{"kind":"power","a":0.5,"offset":"auto"}"#).unwrap();
    let w = spec.sample(&g, std::path::Path::new(".")).unwrap();
    assert_eq!(w.values(), power(&g, 0.5).values());
    let spec: FunctionSpec = serde_json::from_str(r#"{"kind":"constant","c":2.0}"#).unwrap();
    assert_eq!(spec.sample(&g, std::path::Path::new(".")).unwrap().min_value(), 2.0);
    let back: FunctionSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(back, spec);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ap_constant_is_at_least_one_and_scale_free(
        vals in proptest::collection::vec(0.01f64..100.0, 65),
        p in 1.2f64..6.0,
        c in prop_oneof![Just(0.1), Just(7.0), Just(100.0)],
    ) {
        let g = line(0.0, 1.0, 65);
        let family = CubeFamily::dyadic(&g);
        let w = GridFunction::new(g.clone(), vals).unwrap();
        let a = ap_constant(&w, p, &family).unwrap();
        prop_assert!(a >= 1.0 - 1e-12);
        let b = ap_constant(&w.scale(c), p, &family).unwrap();
        prop_assert!(rel(a, b) <= 1e-12);
    }

    #[test]
    fn apq_constant_is_at_least_one(
        v1 in proptest::collection::vec(0.05f64..20.0, 33),
        v2 in proptest::collection::vec(0.05f64..20.0, 33),
    ) {
        let g = line(0.0, 1.0, 33);
        let family = CubeFamily::dyadic(&g);
        let wv = WeightVector::new(
            vec![GridFunction::new(g.clone(), v1).unwrap(), GridFunction::new(g.clone(), v2).unwrap()],
            config(),
        ).unwrap();
        prop_assert!(apq_constant(&wv, &family).unwrap() >= 1.0 - 1e-12);
    }
}
