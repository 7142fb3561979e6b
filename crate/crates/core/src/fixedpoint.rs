//! Damped fixed-point iteration for the full-station probabilities.
//!
//! The map `F(pi)_i` is the probability that station `i` is full under the
//! product form built at `pi`. Iterates are `pi <- (1-d) pi + d F(pi)`,
//! clamped away from 0 and 1 so the routing matrix stays irreducible. The
//! damping factor halves whenever the residual grows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BikeShareModel;
use crate::pathgraph::{build_path_graph, is_irreducible};
use crate::productform::{ProductFormContext, RoadFactorConvention};
use crate::statespace::DEFAULT_MAX_STATES;

/// Iterates are kept inside `[PI_CLAMP, 1 - PI_CLAMP]`.
pub const PI_CLAMP: f64 = 1e-9;

const MIN_DAMPING: f64 = 1.0 / 1024.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub damping: f64,
    pub max_iter: usize,
    /// Starting point; all stations start at 0.1 when absent.
    pub init: Option<Vec<f64>>,
    pub convention: RoadFactorConvention,
    pub max_states: u128,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            damping: 0.5,
            max_iter: 500,
            init: None,
            convention: RoadFactorConvention::Multinomial,
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self, stations: usize) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tol = {} must be positive", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!(
                "damping = {} must lie in (0, 1]",
                self.damping
            )));
        }
        if let Some(init) = &self.init {
            if init.len() != stations {
                return Err(Error::Dimension {
                    expected: stations,
                    found: init.len(),
                });
            }
            if init.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
                return Err(Error::Config("initial probabilities must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub pi: Vec<f64>,
    /// `max_i |pi_i - F(pi)_i|` at the returned `pi`.
    pub residual: f64,
    /// Number of evaluations of `F`.
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn clamp(x: f64) -> f64 {
    x.clamp(PI_CLAMP, 1.0 - PI_CLAMP)
}

fn full_probabilities(model: &BikeShareModel, ctx: &ProductFormContext) -> Vec<f64> {
    let k = model.capacity() as usize;
    (0..model.station_count())
        .map(|i| ctx.station_marginal(i)[k])
        .collect()
}

/// `F(pi)`: full-station probabilities under the product form built at `pi`.
pub fn evaluate_map(
    model: &BikeShareModel,
    pi: &[f64],
    convention: RoadFactorConvention,
    max_states: u128,
) -> Result<Vec<f64>> {
    let ctx = ProductFormContext::at(model, pi, convention, max_states)?;
    Ok(full_probabilities(model, &ctx))
}

pub fn solve_fixed_point(model: &BikeShareModel, cfg: &FixedPointConfig) -> Result<FixedPointResult> {
    solve_with_context(model, cfg).map(|(r, _)| r)
}

/// Like [`solve_fixed_point`] but also hands back the product form at the
/// returned point, so measures need no second pass.
pub fn solve_with_context(
    model: &BikeShareModel,
    cfg: &FixedPointConfig,
) -> Result<(FixedPointResult, ProductFormContext)> {
    cfg.validate(model.station_count())?;
    if !is_irreducible(&build_path_graph(model)) {
        return Err(Error::ReducibleMatrix("path graph is not strongly connected".into()));
    }
    let n = model.station_count();
    let mut pi: Vec<f64> = cfg
        .init
        .clone()
        .unwrap_or_else(|| vec![0.1; n])
        .into_iter()
        .map(clamp)
        .collect();
    let mut damping = cfg.damping;
    let mut trace = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;

    for iter in 1..=cfg.max_iter {
        let ctx = ProductFormContext::at(model, &pi, cfg.convention, cfg.max_states)?;
        let f = full_probabilities(model, &ctx);
        let residual = pi
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if trace.last().is_some_and(|&prev| residual > prev) {
            damping = (damping * 0.5).max(MIN_DAMPING);
        }
        trace.push(residual);
        if best.as_ref().is_none_or(|(r, _)| residual < *r) {
            best = Some((residual, pi.clone()));
        }
        if residual <= cfg.tol {
            let result = FixedPointResult {
                pi,
                residual,
                iterations: iter,
                trace,
                converged: true,
            };
            return Ok((result, ctx));
        }
        for (p, fi) in pi.iter_mut().zip(&f) {
            *p = clamp((1.0 - damping) * *p + damping * fi);
        }
    }

    let (residual, pi) = best.unwrap_or((f64::INFINITY, pi));
    Err(Error::NoConvergence {
        best: Box::new(FixedPointResult {
            pi,
            residual,
            iterations: cfg.max_iter,
            trace,
            converged: false,
        }),
    })
}

/// Solves from every starting point and groups the converged solutions:
/// points within `agreement` (max-norm) of an earlier one are merged. More
/// than one group means the fixed point is not unique for this model.
pub fn solve_multistart(
    model: &BikeShareModel,
    cfg: &FixedPointConfig,
    starts: &[Vec<f64>],
    agreement: f64,
) -> Result<Vec<FixedPointResult>> {
    let mut distinct: Vec<FixedPointResult> = Vec::new();
    for start in starts {
        let run = FixedPointConfig {
            init: Some(start.clone()),
            ..cfg.clone()
        };
        let result = solve_fixed_point(model, &run)?;
        let seen = distinct.iter().any(|d| {
            d.pi.iter()
                .zip(&result.pi)
                .all(|(a, b)| (a - b).abs() <= agreement)
        });
        if !seen {
            distinct.push(result);
        }
    }
    Ok(distinct)
}
