//! Experiment configuration: a JSON document describing the grid, the
//! exponents, the weights and the geometry of every run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use hfact_core::{Ball, ExponentConfig, FunctionSpec, Grid, GridFunction, KernelParams, WeightVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    pub fn line(lo: f64, hi: f64, points: usize) -> GridSpec {
        GridSpec {
            min: vec![lo],
            max: vec![hi],
            points: vec![points],
        }
    }

    pub fn build(&self) -> hfact_core::Result<Arc<Grid>> {
        Grid::new(self.min.clone(), self.max.clone(), self.points.clone())
    }
}

/// The two bumps of the input `f = f_1 + f_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub centers: [Vec<f64>; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Dat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Grid for the atom constructions and the factorization.
    pub grid: GridSpec,
    /// Grid for operators applied to functions with full support.
    pub operator_grid: GridSpec,
    pub exponents: ExponentConfig,
    pub weights: Vec<FunctionSpec>,
    pub bumps: BumpSpec,
    /// Separation parameters for the atom-approximation sweep.
    pub m_values: Vec<f64>,
    /// Separation parameter of the factorization.
    pub factorize_m: f64,
    pub k_max: usize,
    pub prune_tol: f64,
    /// 0-based slot `l`.
    pub slot: usize,
    /// Inputs of `apply`, one per slot, sampled on `operator_grid`.
    pub inputs: Vec<FunctionSpec>,
    /// Symbols `b` for `duality` and `bmo-bound`.
    pub symbols: Vec<FunctionSpec>,
    /// Tuples of test functions for the commutator norm estimate.
    pub ensemble: Vec<Vec<FunctionSpec>>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub formats: Vec<Format>,
    pub seed: u64,
}

fn gaussian(c: f64, w: f64, a: f64) -> FunctionSpec {
    FunctionSpec::Gaussian {
        center: vec![c],
        width: w,
        amplitude: a,
    }
}

fn indicator(c: f64, r: f64) -> FunctionSpec {
    FunctionSpec::Indicator {
        center: vec![c],
        radius: r,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridSpec::line(-64.0, 64.0, 1025),
            operator_grid: GridSpec::line(-8.0, 8.0, 129),
            exponents: ExponentConfig {
                m: 2,
                n: 1,
                alpha: 0.25,
                p: vec![4.0, 4.0],
                q: 4.0,
            },
            weights: vec![FunctionSpec::Constant { c: 1.0 }; 2],
            bumps: BumpSpec {
                centers: [vec![-4.0], vec![4.0]],
                radius: 0.5,
            },
            m_values: vec![8.0, 16.0, 32.0, 64.0],
            factorize_m: 32.0,
            k_max: 4,
            prune_tol: 1e-14,
            slot: 0,
            inputs: vec![gaussian(-1.0, 1.0, 1.0), gaussian(1.5, 0.75, 1.0)],
            symbols: vec![
                FunctionSpec::Log {
                    offset: Default::default(),
                    center: None,
                },
                FunctionSpec::Power {
                    a: 0.5,
                    offset: Default::default(),
                    center: None,
                },
                gaussian(0.0, 2.0, 1.0),
                indicator(0.0, 2.0),
                FunctionSpec::Power {
                    a: 1.0,
                    offset: Default::default(),
                    center: Some(vec![1.0]),
                },
            ],
            ensemble: vec![
                vec![indicator(-2.0, 1.0), indicator(-2.0, 1.0)],
                vec![indicator(0.0, 0.5), indicator(1.0, 0.5)],
                vec![indicator(0.0, 4.0), indicator(0.0, 4.0)],
                vec![gaussian(0.0, 1.0, 1.0), gaussian(0.5, 2.0, 1.0)],
                vec![gaussian(-3.0, 0.5, 1.0), gaussian(3.0, 0.5, 1.0)],
                vec![indicator(2.0, 0.25), gaussian(2.0, 1.0, 1.0)],
            ],
            out_dir: None,
            threads: None,
            formats: vec![Format::Json, Format::Csv, Format::Dat],
            seed: 20131017,
        }
    }
}

/// Everything sampled from a validated configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: Arc<Grid>,
    pub operator_grid: Arc<Grid>,
    pub weights: WeightVector,
    pub operator_weights: WeightVector,
    pub kernel: KernelParams,
    pub f1: GridFunction,
    pub f2: GridFunction,
    pub b1: Ball,
    pub b2: Ball,
    /// Directory that relative file paths resolve against.
    pub base: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e.into()))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(path, hfact_core::Error::Parse(e.to_string())))
    }

    pub fn to_json(&self) -> String {
        hfact_core::io::to_json_string(self).expect("configuration serializes")
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn weight_vector(
        &self,
        grid: &Arc<Grid>,
        base: &Path,
    ) -> hfact_core::Result<WeightVector> {
        let omegas = self
            .weights
            .iter()
            .map(|w| w.sample(grid, base))
            .collect::<hfact_core::Result<Vec<_>>>()?;
        WeightVector::new(omegas, self.exponents.clone())
    }

    /// Checks every nested invariant and samples the inputs. `base` is the
    /// directory relative file paths resolve against.
    pub fn prepare(&self, base: &Path) -> hfact_core::Result<Prepared> {
        use hfact_core::Error;
        self.exponents.validate()?;
        let grid = self.grid.build()?;
        let operator_grid = self.operator_grid.build()?;
        let weights = self.weight_vector(&grid, base)?;
        let operator_weights = self.weight_vector(&operator_grid, base)?;
        let e = &self.exponents;
        let kernel = KernelParams::new(e.m, e.n, e.alpha)?;
        if grid.dim() != e.n || operator_grid.dim() != e.n {
            return Err(Error::InvalidGrid(format!("grids must have dimension n = {}", e.n)));
        }
        if self.slot >= e.m {
            return Err(Error::IndexOutOfRange {
                index: self.slot,
                arity: e.m,
            });
        }
        if self.k_max == 0 {
            return Err(Error::InvalidAtom("k_max must be at least 1".into()));
        }
        if !(self.prune_tol >= 0.0 && self.prune_tol < 1.0) {
            return Err(Error::InvalidAtom(format!("prune_tol = {} outside [0, 1)", self.prune_tol)));
        }
        if self.m_values.is_empty() {
            return Err(Error::InvalidAtom("m_values is empty".into()));
        }
        if let Some(m) = self
            .m_values
            .iter()
            .chain(std::iter::once(&self.factorize_m))
            .find(|m| !(**m >= 4.0 && m.is_finite()))
        {
            return Err(Error::InvalidAtom(format!("separation M = {m} must be at least 4")));
        }
        if self.inputs.len() != e.m {
            return Err(Error::InvalidExponents(format!(
                "{} inputs for arity {}",
                self.inputs.len(),
                e.m
            )));
        }
        if let Some(t) = self.ensemble.iter().find(|t| t.len() != e.m) {
            return Err(Error::InvalidExponents(format!(
                "ensemble tuple of length {} for arity {}",
                t.len(),
                e.m
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidGrid("threads must be positive".into()));
        }

        let r = self.bumps.radius;
        let h = grid.spacing().iter().copied().fold(0.0, f64::max);
        if !(r >= 2.0 * h) {
            return Err(Error::InvalidAtom(format!(
                "bump radius {r} below two grid spacings ({})",
                2.0 * h
            )));
        }
        let b1 = Ball::new(self.bumps.centers[0].clone(), r);
        let b2 = Ball::new(self.bumps.centers[1].clone(), r);
        for b in [&b1, &b2] {
            if b.center.len() != e.n || !grid.contains_ball(b) {
                return Err(Error::BumpOutsideBox {
                    slot: 0,
                    center: b.center.clone(),
                    radius: r,
                });
            }
        }
        // Every chain that the sweep and the factorization can build must
        // fit: the chain of slot l runs toward the box center, the others
        // run from the atom center the other way.
        let center = grid.center();
        let longest = self
            .m_values
            .iter()
            .copied()
            .fold(self.factorize_m, f64::max);
        let step = longest * r / (e.n as f64).sqrt();
        let others = (e.m - 1) as f64;
        for b in [&b1, &b2] {
            for (slot, reach) in [(self.slot, 1.0), ((self.slot + 1) % e.m, -others)] {
                if e.m == 1 && reach < 0.0 {
                    continue;
                }
                let y: Vec<f64> = b
                    .center
                    .iter()
                    .zip(&center)
                    .map(|(x, c)| x + reach * step * if x <= c { 1.0 } else { -1.0 })
                    .collect();
                let ball = Ball::new(y, r);
                if !grid.contains_ball(&ball) {
                    return Err(Error::BumpOutsideBox {
                        slot,
                        center: ball.center,
                        radius: r,
                    });
                }
            }
        }
        let (f1, f2, b1, b2) = hfact_core::atoms::canonical_two_bump(
            &grid,
            &b1.center,
            &b2.center,
            r,
            self.exponents.q,
        )?;
        Ok(Prepared {
            grid,
            operator_grid,
            weights,
            operator_weights,
            kernel,
            f1,
            f2,
            b1,
            b2,
            base: base.to_path_buf(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        let text = c.to_json();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn default_is_valid() {
        ExperimentConfig::default().prepare(Path::new(".")).unwrap();
    }

    #[test]
    fn missing_fields_take_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"k_max": 3}"#).unwrap();
        assert_eq!(c.k_max, 3);
        assert_eq!(c.grid, ExperimentConfig::default().grid);
    }

    #[test]
    fn rejects_chain_outside_box() {
        let c = ExperimentConfig {
            m_values: vec![8.0, 256.0],
            ..Default::default()
        };
        assert!(matches!(
            c.prepare(Path::new(".")),
            Err(hfact_core::Error::BumpOutsideBox { .. })
        ));
    }

    #[test]
    fn rejects_bad_exponents() {
        let mut c = ExperimentConfig::default();
        c.exponents.q = 3.0;
        assert!(c.prepare(Path::new(".")).is_err());
        let c: Result<ExperimentConfig, _> = serde_json::from_str(r#"{"unknown": 1}"#);
        assert!(c.is_err());
    }
}
