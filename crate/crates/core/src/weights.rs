//! Muckenhoupt-type weight constants, weighted norms, doubling exponents and
//! BMO norms.
//!
//! Suprema over all cubes of the box are replaced by a finite
//! [`CubeFamily`]: the dyadic cubes of the grid down to four cells per side,
//! plus their translates by half a side. Averages over a cube are plain
//! means over the grid nodes it contains, so every constant reported here is
//! a lower bound for the corresponding supremum over all cubes.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

const RELATION_TOL: f64 = 1e-12;

/// Arity, dimension, order and Lebesgue exponents of a multilinear
/// fractional integral, tied by `sum 1/p_i - 1/q = alpha/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentConfig {
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    pub p: Vec<f64>,
    pub q: f64,
}

impl ExponentConfig {
    pub fn new(m: usize, n: usize, alpha: f64, p: Vec<f64>, q: f64) -> Result<Self> {
        let cfg = ExponentConfig { m, n, alpha, p, q };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidExponents(msg));
        if self.m == 0 || self.n == 0 {
            return bad(format!("m = {} and n = {} must be positive", self.m, self.n));
        }
        if self.p.len() != self.m {
            return bad(format!("{} exponents p_i for arity {}", self.p.len(), self.m));
        }
        if let Some(p) = self.p.iter().find(|p| !(**p > 1.0 && p.is_finite())) {
            return bad(format!("p_i = {p} outside (1, inf)"));
        }
        if !(self.q > 1.0 && self.q.is_finite()) {
            return bad(format!("q = {} outside (1, inf)", self.q));
        }
        let top = (self.m * self.n) as f64;
        if !(self.alpha > 0.0 && self.alpha < top) {
            return bad(format!("alpha = {} outside (0, {top})", self.alpha));
        }
        let gap = self.relation_gap();
        if gap.abs() > RELATION_TOL {
            return bad(format!("sum 1/p_i - 1/q - alpha/n = {gap:e}"));
        }
        Ok(())
    }

    /// `sum 1/p_i - 1/q - alpha/n`, zero for an admissible configuration.
    pub fn relation_gap(&self) -> f64 {
        self.p.iter().map(|p| 1.0 / p).sum::<f64>() - 1.0 / self.q - self.alpha / self.n as f64
    }

    pub fn p_conj(&self, i: usize) -> f64 {
        conjugate(self.p[i])
    }

    pub fn q_conj(&self) -> f64 {
        conjugate(self.q)
    }

    /// `p` with `1/p = sum 1/p_i`.
    pub fn p_harmonic(&self) -> f64 {
        1.0 / self.p.iter().map(|p| 1.0 / p).sum::<f64>()
    }
}

pub fn conjugate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Offset added to `|x - center|` before taking a power or logarithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Offset {
    /// `"auto"`: one grid spacing.
    Auto(AutoOffset),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoOffset {
    Auto,
}

impl Default for Offset {
    fn default() -> Self {
        Offset::Auto(AutoOffset::Auto)
    }
}

impl Offset {
    fn resolve(&self, grid: &Grid) -> f64 {
        match self {
            Offset::Auto(_) => grid.spacing().iter().copied().fold(f64::INFINITY, f64::min),
            Offset::Value(v) => *v,
        }
    }
}

/// Function specification used in configuration files.
///
/// ```json
/// {"kind":"constant","c":2.0}
/// {"kind":"power","a":0.5,"offset":"auto"}
/// {"kind":"log","offset":"auto"}
/// {"kind":"gaussian","center":[0.0],"width":1.0,"amplitude":1.0}
/// {"kind":"indicator","center":[0.0],"radius":0.5}
/// {"kind":"file","path":"omega1.csv"}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FunctionSpec {
    Constant {
        c: f64,
    },
    /// `(|x - center| + offset)^a`.
    Power {
        a: f64,
        #[serde(default)]
        offset: Offset,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    /// `ln(|x - center| + offset)`.
    Log {
        #[serde(default)]
        offset: Offset,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    /// `amplitude exp(-|x - center|^2 / width^2)`.
    Gaussian {
        center: Vec<f64>,
        width: f64,
        #[serde(default = "unit_amplitude")]
        amplitude: f64,
    },
    /// Indicator of the closed ball `B(center, radius)`.
    Indicator {
        center: Vec<f64>,
        radius: f64,
    },
    File {
        path: String,
    },
}

fn unit_amplitude() -> f64 {
    1.0
}

impl FunctionSpec {
    /// Samples the function on `grid`; relative file paths resolve against
    /// `base_dir`.
    pub fn sample(&self, grid: &Arc<Grid>, base_dir: &Path) -> Result<GridFunction> {
        let radial = |center: &Option<Vec<f64>>, offset: &Offset, f: &dyn Fn(f64) -> f64| {
            let c = center.clone().unwrap_or_else(|| vec![0.0; grid.dim()]);
            if c.len() != grid.dim() {
                return Err(Error::Parse(format!(
                    "center has {} coordinates, grid has {}",
                    c.len(),
                    grid.dim()
                )));
            }
            let delta = offset.resolve(grid);
            GridFunction::from_fn(grid, |x| {
                let r = x
                    .iter()
                    .zip(&c)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                f(r + delta)
            })
        };
        match self {
            FunctionSpec::Constant { c } => GridFunction::constant(grid, *c),
            FunctionSpec::Power { a, offset, center } => radial(center, offset, &|t| t.powf(*a)),
            FunctionSpec::Log { offset, center } => radial(center, offset, &|t| t.ln()),
            FunctionSpec::Gaussian {
                center,
                width,
                amplitude,
            } => {
                if center.len() != grid.dim() || !(*width > 0.0) {
                    return Err(Error::Parse(format!(
                        "gaussian needs a {}-dimensional center and a positive width",
                        grid.dim()
                    )));
                }
                GridFunction::from_fn(grid, |x| {
                    let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                    amplitude * (-d2 / (width * width)).exp()
                })
            }
            FunctionSpec::Indicator { center, radius } => {
                if center.len() != grid.dim() {
                    return Err(Error::Parse(format!(
                        "indicator center has {} coordinates, grid has {}",
                        center.len(),
                        grid.dim()
                    )));
                }
                crate::grid::ball_indicator(grid, &crate::grid::Ball::new(center.clone(), *radius))
            }
            FunctionSpec::File { path } => {
                let f = GridFunction::load(&base_dir.join(path))?;
                if **f.grid() != **grid {
                    return Err(Error::GridMismatch);
                }
                Ok(GridFunction::new(grid.clone(), f.into_values())?)
            }
        }
    }
}

/// Vector weight `(omega_1, ..., omega_m)` with its derived weights
/// `mu = prod omega_i^q` and `mu_i = omega_i^(-p_i')`.
#[derive(Debug, Clone)]
pub struct WeightVector {
    omegas: Vec<GridFunction>,
    config: ExponentConfig,
    mu: GridFunction,
    duals: Vec<GridFunction>,
}

impl WeightVector {
    pub fn new(omegas: Vec<GridFunction>, config: ExponentConfig) -> Result<Self> {
        config.validate()?;
        if omegas.len() != config.m {
            return Err(Error::InvalidExponents(format!(
                "{} weights for arity {}",
                omegas.len(),
                config.m
            )));
        }
        for (index, w) in omegas.iter().enumerate() {
            w.ensure_same_grid(&omegas[0])?;
            let min = w.min_value();
            if !(min > 0.0) {
                return Err(Error::NonPositiveWeight { index, min });
            }
        }
        let mut mu = GridFunction::constant(omegas[0].grid(), 1.0)?;
        for w in &omegas {
            mu = mu.mul(&w.power(config.q)?)?;
        }
        let duals = omegas
            .iter()
            .enumerate()
            .map(|(i, w)| w.power(-config.p_conj(i)))
            .collect::<Result<Vec<_>>>()?;
        for (index, d) in duals.iter().chain(std::iter::once(&mu)).enumerate() {
            let min = d.min_value();
            if !(min > 0.0) {
                return Err(Error::NonPositiveWeight { index, min });
            }
        }
        Ok(WeightVector {
            omegas,
            config,
            mu,
            duals,
        })
    }

    /// All weights identically one.
    pub fn unit(grid: &Arc<Grid>, config: ExponentConfig) -> Result<Self> {
        let one = GridFunction::constant(grid, 1.0)?;
        WeightVector::new(vec![one; config.m], config)
    }

    pub fn omegas(&self) -> &[GridFunction] {
        &self.omegas
    }

    pub fn config(&self) -> &ExponentConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.omegas[0].grid()
    }

    /// `mu = prod omega_i^q`.
    pub fn mu(&self) -> &GridFunction {
        &self.mu
    }

    /// `mu_i = omega_i^(-p_i')`.
    pub fn dual(&self, i: usize) -> &GridFunction {
        &self.duals[i]
    }

    pub fn duals(&self) -> &[GridFunction] {
        &self.duals
    }

    /// `nu = prod omega_i^(p/p_i)` with `1/p = sum 1/p_i`.
    pub fn nu(&self) -> Result<GridFunction> {
        let p = self.config.p_harmonic();
        let mut nu = GridFunction::constant(self.grid(), 1.0)?;
        for (w, pi) in self.omegas.iter().zip(&self.config.p) {
            nu = nu.mul(&w.power(p / pi)?)?;
        }
        Ok(nu)
    }

    /// `||f||_{L^{p_i}(omega_i^{p_i})}`.
    pub fn input_norm(&self, i: usize, f: &GridFunction) -> Result<f64> {
        let p = self.config.p[i];
        weighted_lp_norm(f, &self.omegas[i].power(p)?, p)
    }

    /// `||g||_{L^{q'}(mu^{1-q'})}`.
    pub fn dual_output_norm(&self, g: &GridFunction) -> Result<f64> {
        let qc = self.config.q_conj();
        weighted_lp_norm(g, &self.mu.power(1.0 - qc)?, qc)
    }

    /// `||F||_{L^q(mu)}`.
    pub fn output_norm(&self, f: &GridFunction) -> Result<f64> {
        weighted_lp_norm(f, &self.mu, self.config.q)
    }
}

/// Axis-aligned cube given by its lowest node and its side in cells; it
/// holds the nodes `lo[d] ..= lo[d] + side` on every axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cube {
    pub lo: Vec<usize>,
    pub side: usize,
}

impl Cube {
    /// Flat indices of the nodes in the cube, row-major.
    pub fn nodes(&self, grid: &Grid) -> Vec<usize> {
        let n = grid.dim();
        let per_axis = self.side + 1;
        let total = per_axis.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = self.lo.clone();
        for _ in 0..total {
            out.push(grid.flat_index(&idx));
            for d in (0..n).rev() {
                if idx[d] < self.lo[d] + self.side {
                    idx[d] += 1;
                    break;
                }
                idx[d] = self.lo[d];
            }
        }
        out
    }

    /// The `2^n` children of half the side, if the side is even.
    pub fn children(&self) -> Vec<Cube> {
        if self.side % 2 != 0 || self.side < 2 {
            return Vec::new();
        }
        let half = self.side / 2;
        let n = self.lo.len();
        (0..1usize << n)
            .map(|mask| Cube {
                lo: (0..n)
                    .map(|d| self.lo[d] + if mask >> d & 1 == 1 { half } else { 0 })
                    .collect(),
                side: half,
            })
            .collect()
    }

    pub fn corner(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.dim()).map(|d| grid.axis_coord(d, self.lo[d])).collect()
    }

    pub fn side_length(&self, grid: &Grid, axis: usize) -> f64 {
        self.side as f64 * grid.spacing()[axis]
    }
}

/// Finite family of cubes standing in for "all cubes".
#[derive(Debug, Clone)]
pub struct CubeFamily {
    grid: Arc<Grid>,
    cubes: Vec<Cube>,
}

/// Smallest cube side, in cells, used by [`CubeFamily::dyadic`].
pub const MIN_CUBE_CELLS: usize = 4;

impl CubeFamily {
    /// Dyadic cubes of the grid's box down to [`MIN_CUBE_CELLS`] cells per
    /// side, plus every translate by half a side that stays in the box.
    ///
    /// The top-level cube has `min(points) - 1` cells per side, anchored at
    /// the lowest corner; on non-cubic grids the dyadic tiling therefore
    /// covers the box only partially, and the half-side translates are
    /// extended along each axis to the end of the box.
    pub fn dyadic(grid: &Arc<Grid>) -> CubeFamily {
        let n = grid.dim();
        let cells: Vec<usize> = grid.points().iter().map(|p| p - 1).collect();
        let mut side = *cells.iter().min().unwrap();
        let mut cubes = Vec::new();
        while side >= MIN_CUBE_CELLS {
            // Starts along each axis: multiples of side/2 (side/2 shifts
            // included), cube fully inside.
            let step = if side % 2 == 0 { side / 2 } else { side };
            let starts: Vec<Vec<usize>> = (0..n)
                .map(|d| (0..).map(|k| k * step).take_while(|s| s + side <= cells[d]).collect())
                .collect();
            let mut idx = vec![0usize; n];
            'outer: loop {
                cubes.push(Cube {
                    lo: (0..n).map(|d| starts[d][idx[d]]).collect(),
                    side,
                });
                for d in (0..n).rev() {
                    if idx[d] + 1 < starts[d].len() {
                        idx[d] += 1;
                        continue 'outer;
                    }
                    idx[d] = 0;
                }
                break;
            }
            if side % 2 != 0 {
                break;
            }
            side /= 2;
        }
        CubeFamily {
            grid: grid.clone(),
            cubes,
        }
    }

    pub fn from_cubes(grid: &Arc<Grid>, cubes: Vec<Cube>) -> Result<CubeFamily> {
        for c in &cubes {
            let fits = c.lo.len() == grid.dim()
                && c.side >= 1
                && (0..grid.dim()).all(|d| c.lo[d] + c.side < grid.points()[d]);
            if !fits {
                return Err(Error::InvalidGrid(format!("cube {c:?} does not fit the grid")));
            }
        }
        Ok(CubeFamily {
            grid: grid.clone(),
            cubes,
        })
    }

    /// The single cube spanning the box (square grids) or its lower corner.
    pub fn whole(grid: &Arc<Grid>) -> CubeFamily {
        let side = grid.points().iter().min().unwrap() - 1;
        CubeFamily {
            grid: grid.clone(),
            cubes: vec![Cube {
                lo: vec![0; grid.dim()],
                side,
            }],
        }
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if self.cubes.is_empty() {
            return Err(Error::EmptyFamily);
        }
        if !(Arc::ptr_eq(&self.grid, f.grid()) || *self.grid == **f.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Max over cubes of `score(nodes)`, evaluated in parallel; the
    /// reduction is order-independent.
    fn sup(&self, score: impl Fn(&[usize]) -> f64 + Sync) -> f64 {
        self.cubes
            .par_iter()
            .map(|c| score(&c.nodes(&self.grid)))
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }
}

fn mean_over(values: &[f64], nodes: &[usize]) -> f64 {
    nodes.iter().map(|&i| values[i]).sum::<f64>() / nodes.len() as f64
}

fn mean_pow(values: &[f64], nodes: &[usize], e: f64) -> f64 {
    nodes.iter().map(|&i| values[i].powf(e)).sum::<f64>() / nodes.len() as f64
}

fn check_positive(w: &GridFunction, index: usize) -> Result<()> {
    let min = w.min_value();
    if min > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveWeight { index, min })
    }
}

/// `max_Q avg_Q(w) * avg_Q(w^(-1/(p-1)))^(p-1)`.
pub fn ap_constant(w: &GridFunction, p: f64, family: &CubeFamily) -> Result<f64> {
    family.check(w)?;
    check_positive(w, 0)?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidExponents(format!("A_p needs 1 < p < inf, got {p}")));
    }
    let v = w.values();
    let e = -1.0 / (p - 1.0);
    Ok(family.sup(|nodes| mean_over(v, nodes) * mean_pow(v, nodes, e).powf(p - 1.0)))
}

/// `max_Q avg_Q(prod w_i^q) * prod_i avg_Q(w_i^(-p_i'))^(q/p_i')`.
pub fn apq_constant(w: &WeightVector, family: &CubeFamily) -> Result<f64> {
    family.check(w.mu())?;
    let cfg = w.config();
    let mu = w.mu().values();
    let duals: Vec<(&[f64], f64)> = (0..cfg.m)
        .map(|i| (w.dual(i).values(), cfg.q / cfg.p_conj(i)))
        .collect();
    Ok(family.sup(|nodes| {
        duals
            .iter()
            .fold(mean_over(mu, nodes), |acc, (d, e)| acc * mean_over(d, nodes).powf(*e))
    }))
}

/// `max_Q avg_Q(nu) * prod_i avg_Q(w_i^(1-p_i'))^(p/p_i')`.
pub fn a_vecp_constant(w: &WeightVector, family: &CubeFamily) -> Result<f64> {
    let nu = w.nu()?;
    family.check(&nu)?;
    let cfg = w.config();
    let p = cfg.p_harmonic();
    let factors = (0..cfg.m)
        .map(|i| {
            let pc = cfg.p_conj(i);
            Ok((w.omegas()[i].power(1.0 - pc)?, p / pc))
        })
        .collect::<Result<Vec<_>>>()?;
    let nu = nu.values();
    Ok(family.sup(|nodes| {
        factors.iter().fold(mean_over(nu, nodes), |acc, (f, e)| {
            acc * mean_over(f.values(), nodes).powf(*e)
        })
    }))
}

/// `(integral |f|^p w)^(1/p)`; `p = inf` gives the max norm and ignores `w`.
pub fn weighted_lp_norm(f: &GridFunction, w: &GridFunction, p: f64) -> Result<f64> {
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidExponents(format!("L^p norm needs p >= 1, got {p}")));
    }
    let integrand = f.zip_with(w, |v, wt| v.abs().powf(p) * wt)?;
    Ok(integrand.integrate().powf(1.0 / p))
}

/// Fitted doubling exponents of a weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingFit {
    /// Greatest `eps` with `w(S)/w(Q) <= (|S|/|Q|)^eps` on every tested pair.
    pub epsilon_hat: f64,
    /// Least `L` with `(|S|/|Q|)^L <= w(S)/w(Q)` on every tested pair.
    pub l_hat: f64,
    /// `exp` of the worst deviation from the least-squares log-log line
    /// through the origin; `>= 1`.
    pub c_hat: f64,
    /// Least-squares slope of `ln(w(S)/w(Q))` against `ln(|S|/|Q|)`.
    pub slope: f64,
    pub pairs: usize,
}

/// Fits doubling exponents over all pairs `(S, Q)` with `Q` in the family
/// and `S` a dyadic descendant of `Q` with at least [`MIN_CUBE_CELLS`] cells
/// per side. Measures are node counts and node sums.
pub fn doubling_exponents(w: &GridFunction, family: &CubeFamily) -> Result<DoublingFit> {
    family.check(w)?;
    check_positive(w, 0)?;
    let grid = family.grid();
    let v = w.values();
    let pairs: Vec<(f64, f64)> = family
        .cubes()
        .par_iter()
        .flat_map_iter(|q| {
            let q_nodes = q.nodes(grid);
            let q_mass: f64 = q_nodes.iter().map(|&i| v[i]).sum();
            let q_count = q_nodes.len() as f64;
            let mut out = Vec::new();
            let mut frontier = q.children();
            while let Some(s) = frontier.pop() {
                if s.side < MIN_CUBE_CELLS {
                    continue;
                }
                let s_nodes = s.nodes(grid);
                let s_mass: f64 = s_nodes.iter().map(|&i| v[i]).sum();
                out.push(((s_nodes.len() as f64 / q_count).ln(), (s_mass / q_mass).ln()));
                frontier.extend(s.children());
            }
            out
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let (mut eps, mut l) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut suv, mut suu) = (0.0, 0.0);
    for &(u, val) in &pairs {
        let ratio = val / u;
        eps = eps.min(ratio);
        l = l.max(ratio);
        suv += u * val;
        suu += u * u;
    }
    let slope = suv / suu;
    let worst = pairs
        .iter()
        .map(|&(u, val)| (val - slope * u).abs())
        .fold(0.0, f64::max);
    Ok(DoublingFit {
        epsilon_hat: eps,
        l_hat: l,
        c_hat: worst.exp(),
        slope,
        pairs: pairs.len(),
    })
}

/// `max_Q avg_Q |b - avg_Q b|`.
pub fn bmo_norm(b: &GridFunction, family: &CubeFamily) -> Result<f64> {
    family.check(b)?;
    let v = b.values();
    Ok(family.sup(|nodes| {
        // Shifting by one sample makes constants oscillate by exactly zero.
        let base = v[nodes[0]];
        let avg = nodes.iter().map(|&i| v[i] - base).sum::<f64>() / nodes.len() as f64;
        nodes
            .iter()
            .map(|&i| (v[i] - base - avg).abs())
            .sum::<f64>()
            / nodes.len() as f64
    }))
}
