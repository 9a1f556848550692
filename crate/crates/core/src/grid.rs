//! Uniform grids on truncation boxes, sampled functions, pointwise algebra and
//! quadrature.
//!
//! Every function in the crate is a [`GridFunction`]: one value per node of a
//! [`Grid`], stored in row-major order (the last axis varies fastest). Grids
//! are shared behind an [`Arc`] so that functions built from the same grid
//! can be combined cheaply.
//!
//! Integrals use product trapezoid weights: interior nodes carry the full
//! cell volume `h^n`, nodes on a face of the box carry half of it per face
//! they lie on. For functions that vanish on the boundary of the box (every
//! function built by the factorization) this is exactly `sum(values) * h^n`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of grid nodes.
pub const MAX_POINTS: usize = 1 << 24;

/// Relative slack used by the closed ball membership test so that nodes at
/// distance exactly `r` are included regardless of rounding in `min + i*h`.
const BALL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    min: Vec<f64>,
    max: Vec<f64>,
    points: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(min: Vec<f64>, max: Vec<f64>, points: Vec<usize>) -> Result<Arc<Grid>> {
        let n = points.len();
        if n == 0 || min.len() != n || max.len() != n {
            return Err(Error::InvalidGrid(format!(
                "axis arrays disagree: min {}, max {}, points {}",
                min.len(),
                max.len(),
                n
            )));
        }
        let mut spacing = Vec::with_capacity(n);
        for d in 0..n {
            if points[d] < 4 {
                return Err(Error::InvalidGrid(format!(
                    "axis {d} has {} points, need at least 4",
                    points[d]
                )));
            }
            if !(min[d].is_finite() && max[d].is_finite() && max[d] > min[d]) {
                return Err(Error::InvalidGrid(format!(
                    "axis {d} has empty extent [{}, {}]",
                    min[d], max[d]
                )));
            }
            spacing.push((max[d] - min[d]) / (points[d] - 1) as f64);
        }
        let total = points
            .iter()
            .try_fold(1usize, |acc, &p| acc.checked_mul(p))
            .filter(|&t| t <= MAX_POINTS)
            .ok_or_else(|| Error::InvalidGrid(format!("more than {MAX_POINTS} points")))?;

        let mut strides = vec![1; n];
        for d in (0..n.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * points[d + 1];
        }
        let cell: f64 = spacing.iter().product();
        let mut weights = vec![cell; total];
        for (flat, w) in weights.iter_mut().enumerate() {
            for d in 0..n {
                let i = (flat / strides[d]) % points[d];
                if i == 0 || i == points[d] - 1 {
                    *w *= 0.5;
                }
            }
        }
        Ok(Arc::new(Grid {
            min,
            max,
            points,
            spacing,
            strides,
            weights,
        }))
    }

    /// Grid on the cube `[lo, hi]^n` with `points` nodes per axis.
    pub fn cube(n: usize, lo: f64, hi: f64, points: usize) -> Result<Arc<Grid>> {
        Grid::new(vec![lo; n], vec![hi; n], vec![points; n])
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Volume `h^n` of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Quadrature weight of every node, row-major.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.points[axis]
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        (0..self.dim()).map(|d| self.axis_index(flat, d)).collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        self.min[axis] + i as f64 * self.spacing[axis]
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|d| self.axis_coord(d, self.axis_index(flat, d)))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Whether the closed ball lies entirely inside the box.
    pub fn contains_ball(&self, ball: &Ball) -> bool {
        ball.center.len() == self.dim()
            && (0..self.dim()).all(|d| {
                ball.center[d] - ball.radius >= self.min[d] - BALL_SLACK * ball.radius
                    && ball.center[d] + ball.radius <= self.max[d] + BALL_SLACK * ball.radius
            })
    }

    /// Flat indices of the nodes inside a closed ball, in row-major order.
    pub fn ball_nodes(&self, ball: &Ball) -> Vec<usize> {
        let n = self.dim();
        if ball.center.len() != n {
            return Vec::new();
        }
        // Scan only the bounding box of the ball.
        let mut lo = vec![0usize; n];
        let mut hi = vec![0usize; n];
        for d in 0..n {
            let a = ((ball.center[d] - ball.radius - self.min[d]) / self.spacing[d]).floor() - 1.0;
            let b = ((ball.center[d] + ball.radius - self.min[d]) / self.spacing[d]).ceil() + 1.0;
            let last = (self.points[d] - 1) as f64;
            if b < 0.0 || a > last {
                return Vec::new();
            }
            lo[d] = a.clamp(0.0, last) as usize;
            hi[d] = b.clamp(0.0, last) as usize;
        }
        let mut out = Vec::new();
        let mut idx = lo.clone();
        let mut x = vec![0.0; n];
        loop {
            for d in 0..n {
                x[d] = self.axis_coord(d, idx[d]);
            }
            if ball.contains(&x) {
                out.push(self.flat_index(&idx));
            }
            // Odometer over the bounding box, last axis fastest.
            let mut d = n;
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                if idx[d] < hi[d] {
                    idx[d] += 1;
                    break;
                }
                idx[d] = lo[d];
            }
        }
    }

    fn header(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let pts = self
            .points
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "# grid n={} min={} max={} pts={}",
            self.dim(),
            join(&self.min),
            join(&self.max),
            pts
        )
    }

    fn parse_header(line: &str) -> Result<Arc<Grid>> {
        let body = line
            .trim()
            .strip_prefix("# grid")
            .ok_or_else(|| Error::Parse(format!("missing '# grid' header: {line:?}")))?;
        let mut n = None;
        let mut min = None;
        let mut max = None;
        let mut pts = None;
        for field in body.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field {field:?}")))?;
            let floats = || -> Result<Vec<f64>> {
                value
                    .split(',')
                    .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{key}: {e}"))))
                    .collect()
            };
            match key {
                "n" => n = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                "min" => min = Some(floats()?),
                "max" => max = Some(floats()?),
                "pts" => {
                    pts = Some(
                        value
                            .split(',')
                            .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string())))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                _ => return Err(Error::Parse(format!("unknown header field {key:?}"))),
            }
        }
        let (n, min, max, pts) = match (n, min, max, pts) {
            (Some(n), Some(a), Some(b), Some(p)) => (n, a, b, p),
            _ => return Err(Error::Parse("incomplete grid header".into())),
        };
        // A single value stands for every axis.
        let widen = |v: Vec<f64>| if v.len() == 1 { vec![v[0]; n] } else { v };
        let pts = if pts.len() == 1 { vec![pts[0]; n] } else { pts };
        let grid = Grid::new(widen(min), widen(max), pts)?;
        if grid.dim() != n {
            return Err(Error::Parse(format!("header says n={n}, axes give {}", grid.dim())));
        }
        Ok(grid)
    }
}

/// Closed Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d2 <= self.radius * self.radius * (1.0 + BALL_SLACK)
    }

    /// Concentric ball with radius multiplied by `factor`.
    pub fn dilate(&self, factor: f64) -> Ball {
        Ball::new(self.center.clone(), self.radius * factor)
    }

    pub fn distance_to(&self, other: &Ball) -> f64 {
        self.center
            .iter()
            .zip(&other.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A real function sampled on every node of a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        check_finite(&values, "construction")?;
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Result<Self> {
        GridFunction::new(grid.clone(), vec![c; grid.len()])
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|flat| {
                for (d, xd) in x.iter_mut().enumerate() {
                    *xd = grid.axis_coord(d, grid.axis_index(flat, d));
                }
                f(&x)
            })
            .collect();
        GridFunction::new(grid.clone(), values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn ensure_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Composite quadrature with the grid's node weights, summed pairwise in
    /// a fixed tree so the result does not depend on the thread count.
    pub fn integrate(&self) -> f64 {
        weighted_pairwise_sum(&self.values, self.grid.quadrature_weights())
    }

    pub fn l1_norm(&self) -> f64 {
        self.abs().integrate()
    }

    /// Unweighted `L^q` norm; `q = inf` gives the max norm.
    pub fn lq_norm(&self, q: f64) -> f64 {
        if q.is_infinite() {
            return self.max_abs();
        }
        let powered: Vec<f64> = self.values.iter().map(|v| v.abs().powf(q)).collect();
        weighted_pairwise_sum(&powered, self.grid.quadrature_weights()).powf(1.0 / q)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        check_finite(&values, "map")?;
        Ok(GridFunction {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction> {
        self.ensure_same_grid(other)?;
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        check_finite(&values, "zip")?;
        Ok(GridFunction {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn abs(&self) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.abs()).collect(),
        }
    }

    /// Pointwise power. Negative bases are only allowed for integer exponents.
    pub fn power(&self, exponent: f64) -> Result<GridFunction> {
        let integral = exponent.fract() == 0.0;
        let values: Vec<f64> = self
            .values
            .iter()
            .map(|&v| {
                if v < 0.0 && !integral {
                    f64::NAN
                } else if integral && exponent.abs() <= i32::MAX as f64 {
                    v.powi(exponent as i32)
                } else {
                    v.powf(exponent)
                }
            })
            .collect();
        check_finite(&values, "power")?;
        Ok(GridFunction {
            grid: self.grid.clone(),
            values,
        })
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + c * b)
    }

    /// Restriction to the closed index box `lo..=hi`, as a function on the
    /// corresponding sub-grid.
    pub fn restrict(&self, lo: &[usize], hi: &[usize]) -> Result<GridFunction> {
        let g = &self.grid;
        let n = g.dim();
        if lo.len() != n || hi.len() != n || (0..n).any(|d| lo[d] > hi[d] || hi[d] >= g.points[d]) {
            return Err(Error::InvalidGrid("bad restriction box".into()));
        }
        let sub = Grid::new(
            (0..n).map(|d| g.axis_coord(d, lo[d])).collect(),
            (0..n).map(|d| g.axis_coord(d, hi[d])).collect(),
            (0..n).map(|d| hi[d] - lo[d] + 1).collect(),
        )?;
        let values = (0..sub.len())
            .map(|flat| {
                let idx: Vec<usize> = (0..n).map(|d| lo[d] + sub.axis_index(flat, d)).collect();
                self.values[g.flat_index(&idx)]
            })
            .collect();
        GridFunction::new(sub, values)
    }

    /// Flat indices where the function is nonzero.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(self.values.len() * 26 + 64);
        buf.push_str(&self.grid.header());
        buf.push('\n');
        for v in &self.values {
            let _ = writeln!(buf, "{v:.16e}");
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<GridFunction> {
        let mut lines = BufReader::new(input).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty grid function file".into()))??;
        let grid = Grid::parse_header(&header)?;
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            values.push(
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("value {t:?}: {e}")))?,
            );
        }
        GridFunction::new(grid, values)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path) -> Result<GridFunction> {
        GridFunction::read_csv(std::fs::File::open(path)?)
    }
}

/// Indicator of a closed ball. Fails when no node of the grid lies inside.
pub fn ball_indicator(grid: &Arc<Grid>, ball: &Ball) -> Result<GridFunction> {
    let nodes = grid.ball_nodes(ball);
    if nodes.is_empty() {
        return Err(Error::DegenerateBall {
            center: ball.center.clone(),
            radius: ball.radius,
        });
    }
    let mut values = vec![0.0; grid.len()];
    for i in nodes {
        values[i] = 1.0;
    }
    Ok(GridFunction {
        grid: grid.clone(),
        values,
    })
}

/// Discrete measure of a ball: the integral of its indicator.
pub fn ball_measure(grid: &Arc<Grid>, ball: &Ball) -> Result<f64> {
    Ok(ball_indicator(grid, ball)?.integrate())
}

/// Pointwise operation selector for [`pointwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointwiseOp {
    Add,
    Sub,
    Mul,
    Scale(f64),
    Power(f64),
}

/// Applies a pointwise operation; binary operations take two arguments,
/// `Scale` and `Power` take one.
pub fn pointwise(op: PointwiseOp, args: &[&GridFunction]) -> Result<GridFunction> {
    let arity = match op {
        PointwiseOp::Add | PointwiseOp::Sub | PointwiseOp::Mul => 2,
        PointwiseOp::Scale(_) | PointwiseOp::Power(_) => 1,
    };
    if args.len() != arity {
        return Err(Error::IndexOutOfRange {
            index: args.len(),
            arity,
        });
    }
    match op {
        PointwiseOp::Add => args[0].add(args[1]),
        PointwiseOp::Sub => args[0].sub(args[1]),
        PointwiseOp::Mul => args[0].mul(args[1]),
        PointwiseOp::Scale(c) => {
            let out = args[0].scale(c);
            check_finite(&out.values, "scale")?;
            Ok(out)
        }
        PointwiseOp::Power(e) => args[0].power(e),
    }
}

fn check_finite(values: &[f64], context: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteResult {
            index,
            context: context.to_string(),
        }),
        None => Ok(()),
    }
}

const PAIRWISE_BLOCK: usize = 128;
const PARALLEL_CUTOFF: usize = 1 << 15;

/// `sum(values[i] * weights[i])` over a fixed binary tree.
pub(crate) fn weighted_pairwise_sum(values: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().zip(weights).map(|(v, w)| v * w).sum();
    }
    let mid = values.len() / 2;
    let (lv, rv) = values.split_at(mid);
    let (lw, rw) = weights.split_at(mid);
    if values.len() >= PARALLEL_CUTOFF {
        let (a, b) = rayon::join(
            || weighted_pairwise_sum(lv, lw),
            || weighted_pairwise_sum(rv, rw),
        );
        a + b
    } else {
        weighted_pairwise_sum(lv, lw) + weighted_pairwise_sum(rv, rw)
    }
}
