//! Multilinear fractional integral, its partial adjoints, the multiplication
//! operators `Pi_l`, commutators with a symbol `b`, and the `L^2` pairing.
//!
//! All operators are evaluated by direct quadrature over m-tuples of grid
//! nodes, restricted to the nonzero samples of each argument. The single
//! tuple where every node coincides with the evaluation point is skipped.
//! Distances between nodes are computed from integer index differences, so
//! the discrete operators commute exactly with grid translations and
//! reflections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

/// Kernel `(|x - y_1| + ... + |x - y_m|)^(alpha - m n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
}

impl KernelParams {
    pub fn new(m: usize, n: usize, alpha: f64) -> Result<Self> {
        let kp = KernelParams { m, n, alpha };
        kp.validate()?;
        Ok(kp)
    }

    pub fn validate(&self) -> Result<()> {
        let top = (self.m * self.n) as f64;
        if self.m == 0 || self.n == 0 || !(self.alpha > 0.0 && self.alpha < top) {
            return Err(Error::InvalidExponents(format!(
                "kernel needs m, n >= 1 and 0 < alpha < mn, got m={} n={} alpha={}",
                self.m, self.n, self.alpha
            )));
        }
        Ok(())
    }

    /// `alpha - m n`, negative.
    pub fn exponent(&self) -> f64 {
        self.alpha - (self.m * self.n) as f64
    }
}

pub fn kernel_eval(kp: &KernelParams, x: &[f64], ys: &[&[f64]]) -> Result<f64> {
    kp.validate()?;
    if ys.len() != kp.m || x.len() != kp.n || ys.iter().any(|y| y.len() != kp.n) {
        return Err(Error::IndexOutOfRange {
            index: ys.len(),
            arity: kp.m,
        });
    }
    let s: f64 = ys
        .iter()
        .map(|y| {
            x.iter()
                .zip(y.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    if s == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(s.powf(kp.exponent()))
}

/// Nonzero samples of one argument, premultiplied by quadrature weights.
/// Positions are stored in index units (`(x - min) / h` per axis).
struct Support {
    pos: Vec<f64>,
    val: Vec<f64>,
}

impl Support {
    fn new(f: &GridFunction) -> Support {
        let g = f.grid();
        let n = g.dim();
        let w = g.quadrature_weights();
        let mut pos = Vec::new();
        let mut val = Vec::new();
        for (i, &v) in f.values().iter().enumerate() {
            if v != 0.0 {
                for d in 0..n {
                    pos.push(g.axis_index(i, d) as f64);
                }
                val.push(v * w[i]);
            }
        }
        Support { pos, val }
    }

    fn len(&self) -> usize {
        self.val.len()
    }
}

#[inline]
fn dist(h: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..h.len() {
        let t = (a[d] - b[d]) * h[d];
        s += t * t;
    }
    s.sqrt()
}

/// Sum over tuples drawn from `slots` of `(base + sum_j |center - y_j|)^e *
/// prod v_j`, skipping the tuple whose total distance is exactly zero.
fn tuple_sum(h: &[f64], center: &[f64], slots: &[&Support], base: f64, e: f64) -> f64 {
    let n = h.len();
    match slots {
        [] => {
            if base == 0.0 {
                0.0
            } else {
                base.powf(e)
            }
        }
        [last] => {
            let mut acc = 0.0;
            for k in 0..last.len() {
                let s = base + dist(h, center, &last.pos[k * n..(k + 1) * n]);
                if s != 0.0 {
                    acc += s.powf(e) * last.val[k];
                }
            }
            acc
        }
        [first, rest @ ..] => {
            let mut acc = 0.0;
            for k in 0..first.len() {
                let d = dist(h, center, &first.pos[k * n..(k + 1) * n]);
                acc += first.val[k] * tuple_sum(h, center, rest, base + d, e);
            }
            acc
        }
    }
}

fn check_args(kp: &KernelParams, fs: &[&GridFunction]) -> Result<()> {
    kp.validate()?;
    if fs.len() != kp.m {
        return Err(Error::IndexOutOfRange {
            index: fs.len(),
            arity: kp.m,
        });
    }
    for f in fs {
        f.ensure_same_grid(fs[0])?;
    }
    if fs[0].grid().dim() != kp.n {
        return Err(Error::InvalidExponents(format!(
            "kernel dimension {} on a {}-dimensional grid",
            kp.n,
            fs[0].grid().dim()
        )));
    }
    Ok(())
}

fn index_position(grid: &Grid, flat: usize) -> Vec<f64> {
    (0..grid.dim()).map(|d| grid.axis_index(flat, d) as f64).collect()
}

fn point_position(grid: &Grid, x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(d, xd)| {
            // Points that sit on a node up to rounding are snapped to it.
            let t = (xd - grid.min()[d]) / grid.spacing()[d];
            if (t - t.round()).abs() <= 1e-9 {
                t.round()
            } else {
                t
            }
        })
        .collect()
}

/// Evaluates `eval(position)` at the listed nodes (all nodes when `None`),
/// zero elsewhere, and rejects non-finite output.
fn evaluate_on(
    grid: &std::sync::Arc<Grid>,
    nodes: Option<&[usize]>,
    eval: impl Fn(&[f64]) -> f64 + Sync,
    context: &str,
) -> Result<GridFunction> {
    let mut values = vec![0.0; grid.len()];
    match nodes {
        None => values
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = eval(&index_position(grid, i))),
        Some(list) => {
            let computed: Vec<f64> = list
                .par_iter()
                .map(|&i| eval(&index_position(grid, i)))
                .collect();
            for (&i, v) in list.iter().zip(computed) {
                values[i] = v;
            }
        }
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResult {
            index,
            context: format!("{context} at node {:?}", grid.coords(index)),
        });
    }
    GridFunction::new(grid.clone(), values)
}

fn ialpha_on(kp: &KernelParams, fs: &[&GridFunction], nodes: Option<&[usize]>) -> Result<GridFunction> {
    check_args(kp, fs)?;
    let grid = fs[0].grid();
    let supports: Vec<Support> = fs.iter().map(|f| Support::new(f)).collect();
    let slots: Vec<&Support> = supports.iter().collect();
    let h = grid.spacing();
    let e = kp.exponent();
    evaluate_on(grid, nodes, |x| tuple_sum(h, x, &slots, 0.0, e), "I_alpha")
}

fn adjoint_value(h: &[f64], x: &[f64], l: usize, supports: &[Support], e: f64) -> f64 {
    let n = h.len();
    let inner = &supports[l];
    let others: Vec<&Support> = supports
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != l)
        .map(|(_, s)| s)
        .collect();
    let mut acc = 0.0;
    for k in 0..inner.len() {
        let z = &inner.pos[k * n..(k + 1) * n];
        acc += inner.val[k] * tuple_sum(h, z, &others, dist(h, z, x), e);
    }
    acc
}

fn adjoint_on(
    l: usize,
    kp: &KernelParams,
    args: &[&GridFunction],
    nodes: Option<&[usize]>,
) -> Result<GridFunction> {
    check_args(kp, args)?;
    if l >= kp.m {
        return Err(Error::IndexOutOfRange { index: l, arity: kp.m });
    }
    let grid = args[0].grid();
    let supports: Vec<Support> = args.iter().map(|f| Support::new(f)).collect();
    let h = grid.spacing();
    let e = kp.exponent();
    evaluate_on(
        grid,
        nodes,
        |x| adjoint_value(h, x, l, &supports, e),
        "partial adjoint",
    )
}

/// `I_alpha(f_1, ..., f_m)` at every node.
pub fn apply_ialpha(kp: &KernelParams, fs: &[&GridFunction]) -> Result<GridFunction> {
    ialpha_on(kp, fs, None)
}

/// `I_alpha(f_1, ..., f_m)(x)` at an arbitrary point `x`.
pub fn ialpha_at(kp: &KernelParams, fs: &[&GridFunction], x: &[f64]) -> Result<f64> {
    check_args(kp, fs)?;
    let grid = fs[0].grid();
    let supports: Vec<Support> = fs.iter().map(|f| Support::new(f)).collect();
    let slots: Vec<&Support> = supports.iter().collect();
    Ok(tuple_sum(
        grid.spacing(),
        &point_position(grid, x),
        &slots,
        0.0,
        kp.exponent(),
    ))
}

/// The `l`-th partial adjoint (0-based slot), defined by
/// `<I_alpha(f), g> = <f_l, (I_alpha^*)_l(f_1, .., g, .., f_m)>` with `g` in
/// slot `l` of `args`:
///
/// `(I^*)_l(args)(x) = sum over z, y_j (j != l) of
///   (|z - x| + sum_{j != l} |z - y_j|)^(alpha - mn) args_l(z) prod_{j != l} args_j(y_j)`.
///
/// For `m = 1` the kernel is symmetric and this coincides bit for bit with
/// [`apply_ialpha`]; for `m >= 2` it is a different operator.
pub fn apply_partial_adjoint(
    l: usize,
    kp: &KernelParams,
    args: &[&GridFunction],
) -> Result<GridFunction> {
    adjoint_on(l, kp, args, None)
}

/// `(I_alpha^*)_l(args)(x)` at an arbitrary point `x`.
pub fn partial_adjoint_at(
    l: usize,
    kp: &KernelParams,
    args: &[&GridFunction],
    x: &[f64],
) -> Result<f64> {
    check_args(kp, args)?;
    if l >= kp.m {
        return Err(Error::IndexOutOfRange { index: l, arity: kp.m });
    }
    let grid = args[0].grid();
    let supports: Vec<Support> = args.iter().map(|f| Support::new(f)).collect();
    Ok(adjoint_value(
        grid.spacing(),
        &point_position(grid, x),
        l,
        &supports,
        kp.exponent(),
    ))
}

/// `<f, g> = integral f g`.
pub fn pairing(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    Ok(f.mul(g)?.integrate())
}

fn with_slot<'a>(hs: &[&'a GridFunction], l: usize, g: &'a GridFunction) -> Vec<&'a GridFunction> {
    let mut args = hs.to_vec();
    args[l] = g;
    args
}

/// `Pi_l(g, h) = h_l (I^*)_l(h_1, .., g, .., h_m) - g I_alpha(h_1, .., h_m)`.
///
/// Each operator is evaluated only where its multiplier is nonzero.
pub fn pi_l(
    l: usize,
    g: &GridFunction,
    hs: &[&GridFunction],
    kp: &KernelParams,
) -> Result<GridFunction> {
    if l >= hs.len() || l >= kp.m {
        return Err(Error::IndexOutOfRange { index: l, arity: kp.m });
    }
    check_args(kp, hs)?;
    g.ensure_same_grid(hs[0])?;
    let adj = adjoint_on(l, kp, &with_slot(hs, l, g), Some(&hs[l].support()))?;
    let direct = ialpha_on(kp, hs, Some(&g.support()))?;
    hs[l].mul(&adj)?.sub(&g.mul(&direct)?)
}

/// `[b, I_alpha]_l(f) = I_alpha(f_1, .., b f_l, .., f_m) - b I_alpha(f)`,
/// summed as one quadrature with the factor `b(y_l) - b(x)` in the kernel.
pub fn commutator(
    l: usize,
    b: &GridFunction,
    fs: &[&GridFunction],
    kp: &KernelParams,
) -> Result<GridFunction> {
    if l >= fs.len() || l >= kp.m {
        return Err(Error::IndexOutOfRange { index: l, arity: kp.m });
    }
    check_args(kp, fs)?;
    b.ensure_same_grid(fs[0])?;
    let grid = fs[0].grid();
    let supports: Vec<Support> = fs.iter().map(|f| Support::new(f)).collect();
    // b at the support nodes of f_l, in support order.
    let b_on_support: Vec<f64> = fs[l]
        .values()
        .iter()
        .zip(b.values())
        .filter(|(v, _)| **v != 0.0)
        .map(|(_, bv)| *bv)
        .collect();
    let h = grid.spacing();
    let e = kp.exponent();
    let bv = b.values();
    let mut values = vec![0.0; grid.len()];
    values.par_iter_mut().enumerate().for_each(|(i, out)| {
        // The factor b(y_l) - b(x) vanishes identically for constant b.
        let bx = bv[i];
        let shifted = Support {
            pos: supports[l].pos.clone(),
            val: supports[l]
                .val
                .iter()
                .zip(&b_on_support)
                .map(|(v, by)| v * (by - bx))
                .collect(),
        };
        let slots: Vec<&Support> = (0..kp.m)
            .map(|j| if j == l { &shifted } else { &supports[j] })
            .collect();
        *out = tuple_sum(h, &index_position(grid, i), &slots, 0.0, e);
    });
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResult {
            index,
            context: "commutator".into(),
        });
    }
    GridFunction::new(grid.clone(), values)
}
