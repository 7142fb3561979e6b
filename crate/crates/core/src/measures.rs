//! Performance measures read off a product form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BikeShareModel;
use crate::productform::ProductFormContext;

/// Expected number of problematic (empty or full) stations,
/// `sum_i P{n_i = 0} + P{n_i = K}`. Ranges over `[0, N]`.
pub fn problematic_measure(ctx: &ProductFormContext) -> f64 {
    let k = ctx.layout().capacity() as usize;
    (0..ctx.layout().station_count())
        .map(|i| {
            let m = ctx.station_marginal(i);
            m[0] + m[k]
        })
        .sum()
}

/// Mean number of bikes parked at `station`.
pub fn mean_station_queue(ctx: &ProductFormContext, station: usize) -> f64 {
    ctx.station_marginal(station)
        .iter()
        .enumerate()
        .map(|(k, p)| k as f64 * p)
        .sum()
}

/// Mean number of bikes riding `from -> to`, both classes together.
pub fn mean_road_queue(
    model: &BikeShareModel,
    ctx: &ProductFormContext,
    from: usize,
    to: usize,
) -> Result<f64> {
    let r = model
        .road_index(from, to)
        .ok_or(Error::UnknownRoad { from, to })?;
    Ok(ctx.road_mean(r, 0) + ctx.road_mean(r, 1))
}

/// Per-road means. Station ids are one-based, as in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadMean {
    pub from: usize,
    pub to: usize,
    pub first: f64,
    pub retrial: f64,
    pub total: f64,
}

/// Per-station rows use one-based ids in the CSV rendering only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    /// Expected count of problematic stations (not a probability).
    pub problematic: f64,
    /// `problematic / N`.
    pub problematic_fraction: f64,
    pub empty_prob: Vec<f64>,
    pub full_prob: Vec<f64>,
    pub mean_station: Vec<f64>,
    pub mean_road: Vec<RoadMean>,
    pub pi: Vec<f64>,
    #[serde(rename = "logG")]
    pub log_g: f64,
}

impl PerformanceReport {
    pub fn new(model: &BikeShareModel, ctx: &ProductFormContext, pi: &[f64]) -> Self {
        let n = model.station_count();
        let k = model.capacity() as usize;
        let problematic = problematic_measure(ctx);
        let mean_road = model
            .roads()
            .iter()
            .enumerate()
            .map(|(r, road)| {
                let (first, retrial) = (ctx.road_mean(r, 0), ctx.road_mean(r, 1));
                RoadMean {
                    from: road.from + 1,
                    to: road.to + 1,
                    first,
                    retrial,
                    total: first + retrial,
                }
            })
            .collect();
        Self {
            problematic,
            problematic_fraction: problematic / n as f64,
            empty_prob: (0..n).map(|i| ctx.station_marginal(i)[0]).collect(),
            full_prob: (0..n).map(|i| ctx.station_marginal(i)[k]).collect(),
            mean_station: (0..n).map(|i| mean_station_queue(ctx, i)).collect(),
            mean_road,
            pi: pi.to_vec(),
            log_g: ctx.log_g(),
        }
    }

    /// Bikes accounted for by the means; equals the fleet for a valid report.
    pub fn total_bikes(&self) -> f64 {
        self.mean_station.iter().sum::<f64>() + self.mean_road.iter().map(|r| r.total).sum::<f64>()
    }

    /// `station,empty_prob,full_prob,mean_bikes,pi`
    pub fn station_csv(&self) -> String {
        let mut out = String::from("station,empty_prob,full_prob,mean_bikes,pi\n");
        for i in 0..self.full_prob.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                self.empty_prob[i],
                self.full_prob[i],
                self.mean_station[i],
                self.pi[i]
            ));
        }
        out
    }
}

/// `station,bikes,probability` rows for every station's marginal.
pub fn marginals_csv(ctx: &ProductFormContext) -> String {
    let mut out = String::from("station,bikes,probability\n");
    for i in 0..ctx.layout().station_count() {
        for (k, p) in ctx.station_marginal(i).iter().enumerate() {
            out.push_str(&format!("{},{k},{p}\n", i + 1));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::fixedpoint::{solve_with_context, FixedPointConfig};
    use crate::model::validate_model;

    #[test]
    fn symmetric_pair_measures() {
        let model = validate_model(&catalog::symmetric_pair()).unwrap();
        let (fp, ctx) = solve_with_context(&model, &FixedPointConfig::default()).unwrap();
        let rep = PerformanceReport::new(&model, &ctx, &fp.pi);
        let m0 = ctx.station_marginal(0);
        let k = model.capacity() as usize;
        assert!((rep.problematic - 2.0 * (m0[0] + m0[k])).abs() < 1e-10);
        assert!((rep.mean_station[0] - rep.mean_station[1]).abs() < 1e-10);
        let q12 = mean_road_queue(&model, &ctx, 0, 1).unwrap();
        let q21 = mean_road_queue(&model, &ctx, 1, 0).unwrap();
        assert!((q12 - q21).abs() < 1e-10);
    }

    #[test]
    fn bounds_and_conservation() {
        let model = validate_model(&catalog::example_four(5.0)).unwrap();
        let (fp, ctx) = solve_with_context(&model, &FixedPointConfig::default()).unwrap();
        let rep = PerformanceReport::new(&model, &ctx, &fp.pi);
        assert!((0.0..=2.0).contains(&rep.problematic));
        assert!((rep.problematic_fraction - rep.problematic / 2.0).abs() < 1e-15);
        for q in &rep.mean_station {
            assert!((0.0..=3.0).contains(q));
        }
        for r in &rep.mean_road {
            assert!(r.first >= 0.0 && r.retrial >= 0.0);
        }
        assert!((rep.total_bikes() - 4.0).abs() < 1e-9);
        for i in 0..2 {
            assert!((rep.full_prob[i] - fp.pi[i]).abs() <= 1e-8);
        }
        // Full-station part of the problematic measure is the fixed point itself.
        let empty: f64 = rep.empty_prob.iter().sum();
        assert!((rep.problematic - empty - fp.pi.iter().sum::<f64>()).abs() < 1e-8);
    }

    #[test]
    fn unknown_road() {
        let model = validate_model(&catalog::example_two()).unwrap();
        let (_, ctx) = solve_with_context(&model, &FixedPointConfig::default()).unwrap();
        assert!(matches!(
            mean_road_queue(&model, &ctx, 1, 0),
            Err(Error::UnknownRoad { from: 1, to: 0 })
        ));
    }

    #[test]
    fn csv_shapes() {
        let model = validate_model(&catalog::example_four(5.0)).unwrap();
        let (fp, ctx) = solve_with_context(&model, &FixedPointConfig::default()).unwrap();
        let rep = PerformanceReport::new(&model, &ctx, &fp.pi);
        assert_eq!(rep.station_csv().lines().count(), 3);
        assert_eq!(marginals_csv(&ctx).lines().count(), 1 + 2 * 4);
    }
}
