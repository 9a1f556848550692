//! Approximation of a single atom by one product `Pi_l(g, h)`, the iterated
//! weak factorization of two-bump functions, and the duality checks that
//! tie the factorization to the commutator `[b, I_alpha]_l`.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::{atomic_h1_bound, two_bump_decompose, validate_atom, Atom, AtomicDecomposition};
use crate::error::{Error, Result};
use crate::grid::{ball_indicator, Ball, Grid, GridFunction};
use crate::io::{self, Table};
use crate::operators::{
    apply_partial_adjoint, commutator, kernel_eval, pairing, pi_l,
    partial_adjoint_at, KernelParams,
};
use crate::weights::{doubling_exponents, CubeFamily, ExponentConfig, WeightVector};

/// Normalizers below this value are treated as a geometry error.
pub const MIN_NORMALIZER: f64 = 1e-14;

/// How the slot-`l` function divides the atom by
/// `A = (I^*)_l(h_1, .., g, .., h_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// `h_l = a / A(x_0)`: the residual keeps a part `a (1 - A/A(x_0))` on
    /// the atom's ball.
    #[default]
    AtCenter,
    /// `h_l = a / A` pointwise: the residual lives on `B(y_l, r)` alone.
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ApproxOptions {
    pub normalizer: Normalizer,
    /// Doubling exponent used in the norm-product bound; fitted on the
    /// dual weights over the dyadic family when absent.
    pub doubling_l: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AtomApprox {
    pub l: usize,
    pub m_sep: f64,
    pub x0: Vec<f64>,
    /// `B_j = B(y_j, r)`; `g` lives on `B_l`, `h_j` on `B_j` for `j != l`.
    pub bumps: Vec<Ball>,
    pub g: GridFunction,
    /// `h_l` is supported on the atom's ball.
    pub hs: Vec<GridFunction>,
    pub pi: GridFunction,
    pub normalizer_kind: Normalizer,
    /// `(I^*)_l(h_1, .., g, .., h_m)(x_0)`.
    pub normalizer: f64,
    /// The same quantity summed directly over `B_1 x .. x B_m`.
    pub normalizer_direct: f64,
    /// `normalizer / ((M r)^(alpha - mn) g(B_l) prod_{j != l} mu_j(B_j))`.
    pub lower_bound_constant: f64,
    /// Least `c` with `|residual| <= c/(M r^n) (chi_{B(x_0, r)} + g)`;
    /// infinite if the residual leaves both balls.
    pub size_constant: f64,
    pub g_norm: f64,
    pub h_norms: Vec<f64>,
    /// `|g_norm - |B_l| / mu(B_l)^(1/q)|` relative.
    pub g_norm_discrepancy: f64,
    /// `|h_norms[j] - mu_j(B_j)^(1/p_j)|` relative; zero for slot `l`.
    pub h_norm_discrepancies: Vec<f64>,
    pub norm_product: f64,
    pub doubling_l: f64,
    /// `mn (1 + L) - alpha`.
    pub bound_exponent: f64,
    /// `norm_product / M^bound_exponent`.
    pub bound_ratio: f64,
    pub residual: GridFunction,
    /// `|integral residual| / ||residual||_1`.
    pub residual_mean_ratio: f64,
    /// `integral |residual|` outside `B(x_0, r) u B(y_l, r)`.
    pub residual_leak: f64,
    pub residual_h1: f64,
    pub residual_decomposition: AtomicDecomposition,
}

/// Serializable summary of an [`AtomApprox`] without grid data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomApproxSummary {
    pub l: usize,
    pub m_sep: f64,
    pub x0: Vec<f64>,
    pub bumps: Vec<Ball>,
    pub normalizer_kind: Normalizer,
    pub normalizer: f64,
    pub normalizer_direct: f64,
    pub lower_bound_constant: f64,
    pub size_constant: f64,
    pub g_norm: f64,
    pub h_norms: Vec<f64>,
    pub g_norm_discrepancy: f64,
    pub h_norm_discrepancies: Vec<f64>,
    pub norm_product: f64,
    pub doubling_l: f64,
    pub bound_exponent: f64,
    pub bound_ratio: f64,
    pub residual_mean_ratio: f64,
    pub residual_leak: f64,
    pub residual_h1: f64,
    pub pi_l1: f64,
    pub pi_integral: f64,
}

impl AtomApprox {
    pub fn summary(&self) -> AtomApproxSummary {
        AtomApproxSummary {
            l: self.l,
            m_sep: self.m_sep,
            x0: self.x0.clone(),
            bumps: self.bumps.clone(),
            normalizer_kind: self.normalizer_kind,
            normalizer: self.normalizer,
            normalizer_direct: self.normalizer_direct,
            lower_bound_constant: self.lower_bound_constant,
            size_constant: self.size_constant,
            g_norm: self.g_norm,
            h_norms: self.h_norms.clone(),
            g_norm_discrepancy: self.g_norm_discrepancy,
            h_norm_discrepancies: self.h_norm_discrepancies.clone(),
            norm_product: self.norm_product,
            doubling_l: self.doubling_l,
            bound_exponent: self.bound_exponent,
            bound_ratio: self.bound_ratio,
            residual_mean_ratio: self.residual_mean_ratio,
            residual_leak: self.residual_leak,
            residual_h1: self.residual_h1,
            pi_l1: self.pi.l1_norm(),
            pi_integral: self.pi.integrate(),
        }
    }
}

/// Centers `y_j` of the bumps. `y_l = x_0 + s M r / sqrt(n)` per
/// coordinate, with `s` pointing toward the box center; the remaining slots,
/// in index order, continue the chain from `x_0` on the opposite side, each
/// offset by `M r / sqrt(n)` per coordinate from the previous center.
///
/// Placing every bump on the same side of `x_0` would make
/// `|x - y_0| + |x - y_1|` constant for `x` between them when `n = 1`.
fn bump_centers(grid: &Grid, x0: &[f64], l: usize, m: usize, step: f64) -> Vec<Vec<f64>> {
    let center = grid.center();
    let dir: Vec<f64> = x0
        .iter()
        .zip(&center)
        .map(|(x, c)| if x <= c { 1.0 } else { -1.0 })
        .collect();
    let mut ys = vec![Vec::new(); m];
    ys[l] = x0.iter().zip(&dir).map(|(x, d)| x + d * step).collect();
    let mut prev = x0.to_vec();
    for j in (0..m).filter(|&j| j != l) {
        prev = prev.iter().zip(&dir).map(|(p, d)| p - d * step).collect();
        ys[j] = prev.clone();
    }
    ys
}

/// `(I^*)_l(args)(x)` by a plain loop over the nodes of the given balls,
/// through [`kernel_eval`].
fn direct_normalizer(
    kp: &KernelParams,
    l: usize,
    x: &[f64],
    args: &[&GridFunction],
    balls: &[Ball],
) -> Result<f64> {
    let grid = args[0].grid();
    let w = grid.quadrature_weights();
    let nodes: Vec<Vec<usize>> = balls.iter().map(|b| grid.ball_nodes(b)).collect();
    let coords: Vec<Vec<Vec<f64>>> = nodes
        .iter()
        .map(|ns| ns.iter().map(|&i| grid.coords(i)).collect())
        .collect();
    let m = kp.m;
    let mut idx = vec![0usize; m];
    let mut total = 0.0;
    if nodes.iter().any(|ns| ns.is_empty()) {
        return Ok(0.0);
    }
    loop {
        // Slot l carries the integration variable z = the output point of
        // I_alpha; the kernel is evaluated at z with x in slot l.
        let z = &coords[l][idx[l]];
        let ys: Vec<&[f64]> = (0..m)
            .map(|j| if j == l { x } else { coords[j][idx[j]].as_slice() })
            .collect();
        let weight: f64 = (0..m)
            .map(|j| {
                let i = nodes[j][idx[j]];
                args[j].values()[i] * w[i]
            })
            .product();
        if weight != 0.0 {
            match kernel_eval(kp, z, &ys) {
                Ok(k) => total += k * weight,
                Err(Error::SingularPoint) => {}
                Err(e) => return Err(e),
            }
        }
        let mut d = m;
        loop {
            if d == 0 {
                return Ok(total);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < nodes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn max_doubling_l(w: &WeightVector) -> Result<f64> {
    let family = CubeFamily::dyadic(w.grid());
    w.duals()
        .iter()
        .map(|mu| doubling_exponents(mu, &family).map(|fit| fit.l_hat))
        .try_fold(f64::NEG_INFINITY, |acc, l| l.map(|l| acc.max(l)))
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Approximates an atom by `Pi_l(g, h)` with the default options.
pub fn approximate_atom(
    a: &Atom,
    l: usize,
    w: &WeightVector,
    kp: &KernelParams,
    m_sep: f64,
) -> Result<AtomApprox> {
    approximate_atom_with(a, l, w, kp, m_sep, &ApproxOptions::default())
}

pub fn approximate_atom_with(
    a: &Atom,
    l: usize,
    w: &WeightVector,
    kp: &KernelParams,
    m_sep: f64,
    opts: &ApproxOptions,
) -> Result<AtomApprox> {
    kp.validate()?;
    let cfg = w.config();
    cfg.validate()?;
    if cfg.m != kp.m || cfg.n != kp.n || cfg.alpha != kp.alpha {
        return Err(Error::InvalidExponents(
            "kernel parameters differ from the weight configuration".into(),
        ));
    }
    if l >= kp.m {
        return Err(Error::IndexOutOfRange { index: l, arity: kp.m });
    }
    if !(m_sep >= 4.0 && m_sep.is_finite()) {
        return Err(Error::InvalidAtom(format!("separation M = {m_sep} must be at least 4")));
    }
    let grid = w.grid().clone();
    if !Arc::ptr_eq(&grid, a.values.grid()) && **a.values.grid() != *grid {
        return Err(Error::GridMismatch);
    }
    let report = validate_atom(a);
    if !report.passed() {
        return Err(Error::InvalidAtom(format!("{report:?}")));
    }

    let (m, n) = (kp.m, kp.n);
    let r = a.ball.radius;
    let x0 = a.ball.center.clone();
    let home = Ball::new(x0.clone(), r);
    let step = m_sep * r / (n as f64).sqrt();
    let bumps: Vec<Ball> = bump_centers(&grid, &x0, l, m, step)
        .into_iter()
        .map(|y| Ball::new(y, r))
        .collect();
    for (slot, b) in bumps.iter().enumerate() {
        if !grid.contains_ball(b) {
            return Err(Error::BumpOutsideBox {
                slot,
                center: b.center.clone(),
                radius: r,
            });
        }
    }

    let mu = w.mu();
    let chi_l = ball_indicator(&grid, &bumps[l])?;
    let measure_l = chi_l.integrate();
    let mu_l = chi_l.mul(mu)?.integrate();
    let g = mu
        .scale(measure_l / mu_l)
        .power(1.0 / cfg.q)?
        .mul(&chi_l)?;
    let mut hs: Vec<GridFunction> = Vec::with_capacity(m);
    let mut dual_masses = vec![0.0; m];
    for (j, b) in bumps.iter().enumerate() {
        let chi = ball_indicator(&grid, b)?;
        let h = w.dual(j).mul(&chi)?;
        dual_masses[j] = h.integrate();
        hs.push(h);
    }

    // A = (I^*)_l(h_1, .., g, .., h_m); slot l of `hs` is not read.
    let mut args: Vec<&GridFunction> = hs.iter().collect();
    args[l] = &g;
    let normalizer = partial_adjoint_at(l, kp, &args, &x0)?;
    let normalizer_direct = direct_normalizer(kp, l, &x0, &args, &bumps)?;
    if !(normalizer > MIN_NORMALIZER) {
        return Err(Error::NormalizerTooSmall { value: normalizer });
    }
    let h_l = match opts.normalizer {
        Normalizer::AtCenter => a.values.scale(1.0 / normalizer),
        Normalizer::Pointwise => {
            let adj = apply_partial_adjoint(l, kp, &args)?;
            let support = a.values.support();
            if let Some(value) = support
                .iter()
                .map(|&i| adj.values()[i])
                .find(|v| !(*v > MIN_NORMALIZER))
            {
                return Err(Error::NormalizerTooSmall { value });
            }
            a.values.zip_with(&adj, |v, d| if v == 0.0 { 0.0 } else { v / d })?
        }
    };
    hs[l] = h_l;

    let h_refs: Vec<&GridFunction> = hs.iter().collect();
    let pi = pi_l(l, &g, &h_refs, kp)?;
    let residual = a.values.sub(&pi)?;

    let g_mass = g.integrate();
    let others: f64 = (0..m).filter(|&j| j != l).map(|j| dual_masses[j]).product();
    let lower_bound_constant = normalizer / ((m_sep * r).powf(kp.exponent()) * g_mass * others);

    let chi_home = ball_indicator(&grid, &home)?;
    let envelope = chi_home.add(&g)?.scale(1.0 / (m_sep * r.powi(n as i32)));
    let size_constant = residual
        .values()
        .iter()
        .zip(envelope.values())
        .map(|(res, env)| {
            if *env > 0.0 {
                res.abs() / env
            } else if *res != 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);

    let g_norm = w.dual_output_norm(&g)?;
    let g_closed = measure_l / mu_l.powf(1.0 / cfg.q);
    let mut h_norms = Vec::with_capacity(m);
    let mut h_norm_discrepancies = Vec::with_capacity(m);
    for (j, h) in hs.iter().enumerate() {
        let norm = w.input_norm(j, h)?;
        h_norms.push(norm);
        h_norm_discrepancies.push(if j == l {
            0.0
        } else {
            relative_gap(norm, dual_masses[j].powf(1.0 / cfg.p[j]))
        });
    }
    let norm_product = g_norm * h_norms.iter().product::<f64>();
    let doubling_l = match opts.doubling_l {
        Some(v) => v,
        None => max_doubling_l(w)?,
    };
    let bound_exponent = (m * n) as f64 * (1.0 + doubling_l) - kp.alpha;

    let w1 = residual.mul(&chi_home)?;
    let chi_y = ball_indicator(&grid, &bumps[l])?;
    let w2 = residual.mul(&chi_y)?;
    let residual_leak = residual.sub(&w1)?.sub(&w2)?.l1_norm();
    let res_l1 = residual.l1_norm();
    let residual_mean_ratio = if res_l1 > 0.0 {
        residual.integrate().abs() / res_l1
    } else {
        0.0
    };
    let residual_decomposition = two_bump_decompose(&w1, &w2, &home, &bumps[l], a.q)?;
    let residual_h1 = atomic_h1_bound(&residual_decomposition);

    Ok(AtomApprox {
        l,
        m_sep,
        x0,
        bumps,
        g,
        hs,
        pi,
        normalizer_kind: opts.normalizer,
        normalizer,
        normalizer_direct,
        lower_bound_constant,
        size_constant,
        g_norm,
        h_norms,
        g_norm_discrepancy: relative_gap(g_norm, g_closed),
        h_norm_discrepancies,
        norm_product,
        doubling_l,
        bound_exponent,
        bound_ratio: norm_product / m_sep.powf(bound_exponent),
        residual,
        residual_mean_ratio,
        residual_leak,
        residual_h1,
        residual_decomposition,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizeParams {
    /// 0-based slot `l`.
    pub slot: usize,
    pub m_sep: f64,
    pub k_max: usize,
    pub prune_tol: f64,
    /// Size exponent of the atoms.
    pub atom_q: f64,
}

#[derive(Debug, Clone)]
pub struct FactorizationTerm {
    pub round: usize,
    pub index: usize,
    pub lambda: f64,
    pub l: usize,
    pub g: GridFunction,
    pub hs: Vec<GridFunction>,
    pub pi: GridFunction,
    pub bumps: Vec<Ball>,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundError {
    pub k: usize,
    pub num_terms: usize,
    /// `sum |lambda|` over the atoms left for the next round plus pruned mass.
    pub atomic_error: f64,
    /// `||f - sum lambda Pi||_1` after this round.
    pub l1_error: f64,
    /// Running `sum |lambda|` over all terms so far.
    pub lambda_l1: f64,
}

#[derive(Debug, Clone)]
pub struct FactorizationResult {
    pub terms: Vec<FactorizationTerm>,
    pub round_errors: Vec<RoundError>,
    pub initial_l1: f64,
    pub initial_atomic: f64,
    /// `sum |lambda|` of atoms dropped below `prune_tol`.
    pub pruned_mass: f64,
    pub lambda_l1: f64,
    /// `(e_K / e_0)^(1/K)` on the `L^1` errors.
    pub fitted_ratio: Option<f64>,
    pub params: FactorizeParams,
    pub kernel: KernelParams,
    pub config: ExponentConfig,
}

#[derive(Serialize)]
struct TermRecord<'a> {
    round: usize,
    index: usize,
    lambda: f64,
    l: usize,
    x0: &'a [f64],
    bumps: &'a [Ball],
    g_file: String,
    h_files: Vec<String>,
}

#[derive(Serialize)]
struct ResultRecord<'a> {
    params: &'a FactorizeParams,
    kernel: &'a KernelParams,
    config: &'a ExponentConfig,
    initial_l1: f64,
    initial_atomic: f64,
    pruned_mass: f64,
    lambda_l1: f64,
    fitted_ratio: Option<f64>,
    round_errors: &'a [RoundError],
    terms: Vec<TermRecord<'a>>,
}

impl FactorizationResult {
    /// `sum lambda Pi_l(g, h)` over all terms.
    pub fn reconstruct(&self, grid: &Arc<Grid>) -> Result<GridFunction> {
        self.terms
            .iter()
            .try_fold(GridFunction::zeros(grid), |acc, t| acc.axpy(t.lambda, &t.pi))
    }

    pub fn final_l1_error(&self) -> f64 {
        self.round_errors.last().map_or(0.0, |e| e.l1_error)
    }

    /// Per-round summary table: k, num_terms, atomic_error, l1_error,
    /// lambda_l1.
    pub fn rounds_table(&self) -> Table {
        let mut t = Table::new(["k", "num_terms", "atomic_error", "l1_error", "lambda_l1"]);
        for e in &self.round_errors {
            t.push(vec![
                e.k as f64,
                e.num_terms as f64,
                e.atomic_error,
                e.l1_error,
                e.lambda_l1,
            ]);
        }
        t
    }

    /// Decay table with the initial error as `k = 0`.
    pub fn decay_table(&self) -> Table {
        let mut t = Table::new(["k", "error"]);
        if !self.round_errors.is_empty() {
            t.push(vec![0.0, self.initial_l1]);
        }
        for e in &self.round_errors {
            t.push(vec![e.k as f64, e.l1_error]);
        }
        t
    }

    /// Writes `<stem>.json`, `<stem>_rounds.csv`, `<stem>_decay.dat` and the
    /// term functions as CSV files into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let tag = format!("{stem}_r{:02}_t{:04}", t.round, t.index);
            let g_file = format!("{tag}_g.csv");
            t.g.save(&dir.join(&g_file))?;
            let mut h_files = Vec::with_capacity(t.hs.len());
            for (j, h) in t.hs.iter().enumerate() {
                let file = format!("{tag}_h{j}.csv");
                h.save(&dir.join(&file))?;
                h_files.push(file);
            }
            terms.push(TermRecord {
                round: t.round,
                index: t.index,
                lambda: t.lambda,
                l: t.l,
                x0: &t.x0,
                bumps: &t.bumps,
                g_file,
                h_files,
            });
        }
        let record = ResultRecord {
            params: &self.params,
            kernel: &self.kernel,
            config: &self.config,
            initial_l1: self.initial_l1,
            initial_atomic: self.initial_atomic,
            pruned_mass: self.pruned_mass,
            lambda_l1: self.lambda_l1,
            fitted_ratio: self.fitted_ratio,
            round_errors: &self.round_errors,
            terms,
        };
        io::write_json(&dir.join(format!("{stem}.json")), &record)?;
        std::fs::write(dir.join(format!("{stem}_rounds.csv")), self.rounds_table().to_csv())?;
        std::fs::write(dir.join(format!("{stem}_decay.dat")), self.decay_table().to_dat())?;
        Ok(())
    }
}

/// Iterated weak factorization of `f1 + f2`.
///
/// Round 1 decomposes `f` into atoms; every atom is replaced by
/// `lambda Pi_l(g, h)` with the pointwise normalizer, and the residuals,
/// each a mean-zero function on two balls, are decomposed again for the
/// next round. Atoms with `|lambda| < prune_tol ||f||` are dropped and
/// counted in `pruned_mass`.
#[allow(clippy::too_many_arguments)]
pub fn factorize(
    f1: &GridFunction,
    f2: &GridFunction,
    b1: &Ball,
    b2: &Ball,
    w: &WeightVector,
    kp: &KernelParams,
    params: &FactorizeParams,
) -> Result<FactorizationResult> {
    if params.k_max == 0 {
        return Err(Error::InvalidAtom("k_max must be at least 1".into()));
    }
    if !(params.prune_tol >= 0.0) {
        return Err(Error::InvalidAtom(format!(
            "prune_tol = {} must be nonnegative",
            params.prune_tol
        )));
    }
    let grid = f1.grid().clone();
    let f = f1.add(f2)?;
    let mut result = FactorizationResult {
        terms: Vec::new(),
        round_errors: Vec::new(),
        initial_l1: f.l1_norm(),
        initial_atomic: 0.0,
        pruned_mass: 0.0,
        lambda_l1: 0.0,
        fitted_ratio: None,
        params: *params,
        kernel: *kp,
        config: w.config().clone(),
    };
    if f.max_abs() == 0.0 {
        return Ok(result);
    }
    let initial = two_bump_decompose(f1, f2, b1, b2, params.atom_q)?;
    result.initial_atomic = atomic_h1_bound(&initial);
    let threshold = params.prune_tol * result.initial_atomic;
    let opts = ApproxOptions {
        normalizer: Normalizer::Pointwise,
        doubling_l: Some(max_doubling_l(w)?),
    };

    let mut atoms: Vec<(f64, Atom)> = initial.terms;
    let mut partial = GridFunction::zeros(&grid);
    let mut previous = result.initial_l1;
    for k in 1..=params.k_max {
        let (kept, dropped): (Vec<_>, Vec<_>) =
            atoms.into_iter().partition(|(lam, _)| lam.abs() >= threshold);
        result.pruned_mass += dropped.iter().map(|(lam, _)| lam.abs()).sum::<f64>();
        if kept.is_empty() {
            break;
        }
        let approx: Vec<AtomApprox> = kept
            .par_iter()
            .map(|(_, a)| approximate_atom_with(a, params.slot, w, kp, params.m_sep, &opts))
            .collect::<Result<_>>()?;
        let mut next = Vec::new();
        for (index, ((lambda, _), ap)) in kept.iter().zip(approx).enumerate() {
            partial = partial.axpy(*lambda, &ap.pi)?;
            result.lambda_l1 += lambda.abs();
            next.extend(
                ap.residual_decomposition
                    .terms
                    .into_iter()
                    .map(|(mu, atom)| (lambda * mu, atom)),
            );
            result.terms.push(FactorizationTerm {
                round: k,
                index,
                lambda: *lambda,
                l: ap.l,
                g: ap.g,
                hs: ap.hs,
                pi: ap.pi,
                bumps: ap.bumps,
                x0: ap.x0,
            });
        }
        let l1_error = f.sub(&partial)?.l1_norm();
        let atomic_error =
            next.iter().map(|(lam, _): &(f64, Atom)| lam.abs()).sum::<f64>() + result.pruned_mass;
        result.round_errors.push(RoundError {
            k,
            num_terms: kept.len(),
            atomic_error,
            l1_error,
            lambda_l1: result.lambda_l1,
        });
        if l1_error > previous {
            return Err(Error::DivergingRounds {
                round: k,
                previous,
                current: l1_error,
            });
        }
        previous = l1_error;
        atoms = next;
        if l1_error <= params.prune_tol * result.initial_l1 {
            break;
        }
    }
    if let Some(last) = result.round_errors.last() {
        result.fitted_ratio =
            Some((last.l1_error / result.initial_l1).powf(1.0 / last.k as f64));
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `<b, f>`.
    pub lhs: f64,
    /// `sum lambda <g, [b, I_alpha]_l(h)>`.
    pub rhs: f64,
    /// `sum |lambda| ||g||_{L^q'(mu^(1-q'))} ||[b, I_alpha]_l(h)||_{L^q(mu)}`.
    pub bound: f64,
    /// `||b||_inf ||f - sum lambda Pi||_1`, an upper bound for `|lhs - rhs|`.
    pub error_budget: f64,
}

pub fn duality_check(
    b: &GridFunction,
    result: &FactorizationResult,
    f: &GridFunction,
    w: &WeightVector,
    kp: &KernelParams,
) -> Result<DualityReport> {
    b.ensure_same_grid(f)?;
    let lhs = pairing(b, f)?;
    let per_term: Vec<(f64, f64)> = result
        .terms
        .par_iter()
        .map(|t| {
            let hs: Vec<&GridFunction> = t.hs.iter().collect();
            let comm = commutator(t.l, b, &hs, kp)?;
            let value = t.lambda * pairing(&t.g, &comm)?;
            let holder = t.lambda.abs() * w.dual_output_norm(&t.g)? * w.output_norm(&comm)?;
            Ok((value, holder))
        })
        .collect::<Result<_>>()?;
    let rhs = per_term.iter().map(|p| p.0).sum();
    let bound = per_term.iter().map(|p| p.1).sum();
    let remainder = f.sub(&result.reconstruct(f.grid())?)?.l1_norm();
    Ok(DualityReport {
        lhs,
        rhs,
        bound,
        error_budget: b.max_abs() * remainder,
    })
}

/// `max` over the ensemble of
/// `||[b, I_alpha]_l(f)||_{L^q(mu)} / prod ||f_j||_{L^{p_j}(omega_j^{p_j})}`.
pub fn commutator_norm_estimate(
    b: &GridFunction,
    l: usize,
    w: &WeightVector,
    kp: &KernelParams,
    ensemble: &[Vec<GridFunction>],
) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let ratios: Vec<f64> = ensemble
        .par_iter()
        .enumerate()
        .map(|(index, fs)| {
            let mut denom = 1.0;
            for (j, f) in fs.iter().enumerate() {
                denom *= w.input_norm(j, f)?;
            }
            if !(denom > 0.0) {
                return Err(Error::ZeroDenominator(index));
            }
            let refs: Vec<&GridFunction> = fs.iter().collect();
            Ok(w.output_norm(&commutator(l, b, &refs, kp)?)? / denom)
        })
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}
