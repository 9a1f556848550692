use std::path::Path;

use hfact_core::atoms::dipole_atom;
use hfact_core::factorization::AtomApproxSummary;
use hfact_core::io::Table;
use hfact_core::weights::conjugate;
use hfact_core::*;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Prepared};
use crate::report::Report;
use crate::suite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Constants,
    Apply,
    AtomApprox,
    Factorize,
    Duality,
    BmoBound,
    Suite,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Constants => "constants",
            Subcommand::Apply => "apply",
            Subcommand::AtomApprox => "atom-approx",
            Subcommand::Factorize => "factorize",
            Subcommand::Duality => "duality",
            Subcommand::BmoBound => "bmo-bound",
            Subcommand::Suite => "suite",
        }
    }
}

/// Runs one subcommand and returns its report. `factorize` also writes the
/// term functions into `out`.
pub fn run_subcommand(
    cmd: Subcommand,
    cfg: &ExperimentConfig,
    prep: &Prepared,
    base: &Path,
    out: &Path,
) -> Result<Report> {
    match cmd {
        Subcommand::Constants => constants(cfg, prep),
        Subcommand::Apply => apply(cfg, prep, base),
        Subcommand::AtomApprox => atom_approx(cfg, prep),
        Subcommand::Factorize => factorize_cmd(cfg, prep, out),
        Subcommand::Duality => duality(cfg, prep, base),
        Subcommand::BmoBound => bmo_bound(cfg, prep, base),
        Subcommand::Suite => Ok(suite::run_all(cfg, prep).report()),
    }
}

fn constants(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Report> {
    let w = &prep.weights;
    let e = &cfg.exponents;
    let family = CubeFamily::dyadic(&prep.grid);
    let apq = apq_constant(w, &family)?;
    let avp = a_vecp_constant(w, &family)?;
    let mut table = Table::new(["i", "p_i", "ap_dual", "epsilon_hat", "l_hat", "c_hat"]);
    let mut per_weight = Vec::new();
    for i in 0..e.m {
        let exponent = e.m as f64 * e.p_conj(i);
        let ap_dual = ap_constant(w.dual(i), exponent, &family)?;
        let fit = doubling_exponents(w.dual(i), &family)?;
        table.push(vec![i as f64, e.p[i], ap_dual, fit.epsilon_hat, fit.l_hat, fit.c_hat]);
        per_weight.push(json!({
            "index": i,
            "ap_dual": ap_dual,
            "ap_dual_exponent": exponent,
            "doubling": fit,
        }));
    }
    let ap_mu = ap_constant(w.mu(), e.m as f64 * e.q, &family)?;
    let summary = json!({
        "apq_constant": apq,
        "a_vecp_constant": avp,
        "ap_mu": ap_mu,
        "ap_mu_exponent": e.m as f64 * e.q,
        "relation_gap": e.relation_gap(),
        "p_conj": (0..e.m).map(|i| e.p_conj(i)).collect::<Vec<_>>(),
        "q_conj": e.q_conj(),
        "cubes": family.len(),
        "weights": per_weight,
    });
    Ok(Report::new("constants", summary).table("constants", table))
}

fn apply(cfg: &ExperimentConfig, prep: &Prepared, base: &Path) -> Result<Report> {
    let grid = &prep.operator_grid;
    let kp = &prep.kernel;
    let fs = cfg
        .inputs
        .iter()
        .map(|s| s.sample(grid, base))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&GridFunction> = fs.iter().collect();
    let out = apply_ialpha(kp, &refs)?;
    // Adjoint identity with the first input as test function.
    let test = &fs[0];
    let lhs = pairing(&out, test)?;
    let mut gaps = Vec::new();
    let mut columns = vec!["x".to_string()];
    columns.extend((0..kp.m).map(|j| format!("f{j}")));
    columns.push("ialpha".into());
    let mut adjoints = Vec::new();
    for l in 0..kp.m {
        let mut args = refs.clone();
        args[l] = test;
        let adj = apply_partial_adjoint(l, kp, &args)?;
        let rhs = pairing(&fs[l], &adj)?;
        gaps.push(json!({"slot": l, "lhs": lhs, "rhs": rhs, "gap": (lhs - rhs).abs()}));
        columns.push(format!("adjoint{l}"));
        adjoints.push(adj);
    }
    let mut table = Table::new(columns);
    for i in 0..grid.len() {
        let mut row = grid.coords(i);
        row.extend(fs.iter().map(|f| f.values()[i]));
        row.push(out.values()[i]);
        row.extend(adjoints.iter().map(|a| a.values()[i]));
        table.push(row);
    }
    let summary = json!({
        "kernel": kp,
        "points": grid.len(),
        "ialpha_l1": out.l1_norm(),
        "ialpha_max": out.max_abs(),
        "adjoint_identity": gaps,
    });
    Ok(Report::new("apply", summary)
        .table("apply", table.clone())
        .series("apply", table))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn sweep(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Vec<AtomApproxSummary>> {
    let atom = dipole_atom(&prep.grid, &prep.b1, cfg.exponents.q)?;
    cfg.m_values
        .iter()
        .map(|&m| {
            approximate_atom(&atom, cfg.slot, &prep.weights, &prep.kernel, m).map(|a| a.summary())
        })
        .collect()
}

fn atom_approx(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Report> {
    let rows = sweep(cfg, prep)?;
    let mut table = Table::new([
        "M",
        "residual_h1",
        "norm_product",
        "bound_ratio",
        "size_constant",
        "lower_bound_constant",
        "normalizer",
        "normalizer_gap",
        "pi_integral",
        "pi_l1",
    ]);
    let mut series = Table::new(["M", "residual_h1"]);
    for r in &rows {
        table.push(vec![
            r.m_sep,
            r.residual_h1,
            r.norm_product,
            r.bound_ratio,
            r.size_constant,
            r.lower_bound_constant,
            r.normalizer,
            (r.normalizer - r.normalizer_direct).abs(),
            r.pi_integral,
            r.pi_l1,
        ]);
        series.push(vec![r.m_sep, r.residual_h1]);
    }
    let ms: Vec<f64> = rows.iter().map(|r| r.m_sep).collect();
    let nps: Vec<f64> = rows.iter().map(|r| r.norm_product).collect();
    let slope = if rows.len() >= 2 {
        Some(log_log_slope(&ms, &nps))
    } else {
        None
    };
    let summary = json!({
        "slot": cfg.slot,
        "norm_product_slope": slope,
        "runs": rows,
    });
    Ok(Report::new("atom_approx", summary)
        .table("atom_approx", table)
        .series("atom_approx_residual", series))
}

pub fn factorize_params(cfg: &ExperimentConfig) -> FactorizeParams {
    FactorizeParams {
        slot: cfg.slot,
        m_sep: cfg.factorize_m,
        k_max: cfg.k_max,
        prune_tol: cfg.prune_tol,
        atom_q: cfg.exponents.q,
    }
}

fn run_factorize(cfg: &ExperimentConfig, prep: &Prepared) -> Result<FactorizationResult> {
    factorize(
        &prep.f1,
        &prep.f2,
        &prep.b1,
        &prep.b2,
        &prep.weights,
        &prep.kernel,
        &factorize_params(cfg),
    )
}

fn factorize_cmd(cfg: &ExperimentConfig, prep: &Prepared, out: &Path) -> Result<Report> {
    let result = run_factorize(cfg, prep)?;
    std::fs::create_dir_all(out)?;
    result.write(out, "factorize_terms")?;
    let ratios: Vec<Value> = result
        .round_errors
        .windows(2)
        .map(|p| json!(p[1].l1_error / p[0].l1_error))
        .collect();
    let summary = json!({
        "params": result.params,
        "initial_l1": result.initial_l1,
        "initial_atomic": result.initial_atomic,
        "lambda_l1": result.lambda_l1,
        "pruned_mass": result.pruned_mass,
        "fitted_ratio": result.fitted_ratio,
        "successive_ratios": ratios,
        "num_terms": result.terms.len(),
        "round_errors": result.round_errors,
    });
    Ok(Report::new("factorize", summary)
        .table("factorize", result.rounds_table())
        .series("factorize", result.decay_table()))
}

fn duality(cfg: &ExperimentConfig, prep: &Prepared, base: &Path) -> Result<Report> {
    let result = run_factorize(cfg, prep)?;
    let f = prep.f1.add(&prep.f2)?;
    let family = CubeFamily::dyadic(&prep.grid);
    let mut table = Table::new(["symbol", "lhs", "rhs", "bound", "error_budget", "bmo_norm"]);
    let mut rows = Vec::new();
    for (i, spec) in cfg.symbols.iter().enumerate() {
        let b = spec.sample(&prep.grid, base)?;
        let d = duality_check(&b, &result, &f, &prep.weights, &prep.kernel)?;
        let bmo = bmo_norm(&b, &family)?;
        table.push(vec![i as f64, d.lhs, d.rhs, d.bound, d.error_budget, bmo]);
        rows.push(json!({
            "symbol": spec,
            "report": d,
            "bmo_norm": bmo,
            "identity_ok": (d.lhs - d.rhs).abs() <= d.error_budget + 1e-14,
            "holder_ok": d.rhs.abs() <= d.bound * (1.0 + 1e-12),
        }));
    }
    let summary = json!({
        "lambda_l1": result.lambda_l1,
        "final_l1_error": result.final_l1_error(),
        "symbols": rows,
    });
    Ok(Report::new("duality", summary).table("duality", table))
}

/// Commutator norm estimates and BMO norms of the configured symbols on
/// the operator grid; the ratio band is reported.
pub fn bmo_rows(cfg: &ExperimentConfig, prep: &Prepared, base: &Path) -> Result<Vec<(f64, f64)>> {
    let grid = &prep.operator_grid;
    let family = CubeFamily::dyadic(grid);
    let ensemble = cfg
        .ensemble
        .iter()
        .map(|t| t.iter().map(|s| s.sample(grid, base)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    cfg.symbols
        .iter()
        .map(|spec| {
            let b = spec.sample(grid, base)?;
            let est =
                commutator_norm_estimate(&b, cfg.slot, &prep.operator_weights, &prep.kernel, &ensemble)?;
            Ok((est, bmo_norm(&b, &family)?))
        })
        .collect()
}

fn bmo_bound(cfg: &ExperimentConfig, prep: &Prepared, base: &Path) -> Result<Report> {
    let rows = bmo_rows(cfg, prep, base)?;
    let mut table = Table::new(["symbol", "estimate", "bmo_norm", "ratio"]);
    let mut ratios = Vec::new();
    for (i, (est, bmo)) in rows.iter().enumerate() {
        let ratio = est / bmo;
        table.push(vec![i as f64, *est, *bmo, ratio]);
        ratios.push(ratio);
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let summary = json!({
        "symbols": cfg.symbols,
        "estimates": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
        "bmo_norms": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
        "band": [lo, hi],
        "q_conj": conjugate(cfg.exponents.q),
    });
    Ok(Report::new("bmo_bound", summary).table("bmo_bound", table))
}
