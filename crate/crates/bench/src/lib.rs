//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use hfact_core::atoms::dipole_atom;
use hfact_core::{Atom, Ball, Grid, GridFunction, KernelParams, Result, WeightVector};

/// Smooth bilinear input on `[-8, 8]` with `points` nodes.
pub fn operator_inputs(points: usize) -> Result<(KernelParams, GridFunction, GridFunction)> {
    let g = Grid::cube(1, -8.0, 8.0, points)?;
    let f1 = GridFunction::from_fn(&g, |x| (-(x[0] + 1.0).powi(2)).exp())?;
    let f2 = GridFunction::from_fn(&g, |x| (-((x[0] - 1.5) / 0.75).powi(2)).exp())?;
    Ok((KernelParams::new(2, 1, 0.25)?, f1, f2))
}

/// The default atom-approximation setting: unit weights on `[-64, 64]`,
/// a dipole atom of radius 0.5 at -4.
pub fn atom_setting() -> Result<(Arc<Grid>, Atom, WeightVector, KernelParams)> {
    let g = Grid::cube(1, -64.0, 64.0, 1025)?;
    let e = hfact_core::ExponentConfig::new(2, 1, 0.25, vec![4.0, 4.0], 4.0)?;
    let w = WeightVector::unit(&g, e)?;
    let atom = dipole_atom(&g, &Ball::new(vec![-4.0], 0.5), 4.0)?;
    Ok((g, atom, w, KernelParams::new(2, 1, 0.25)?))
}
