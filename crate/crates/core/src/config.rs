//! JSON model configuration.
//!
//! Station ids in files are one-based; routing keys are written `"i->j"`.
//!
//! ```json
//! {
//!   "stations": {"count": 2, "capacity": 3, "initial_bikes": 2,
//!                "arrivals": [{"lambda": [5, 7]},
//!                             {"map": {"C": [[-3, 1], [1, -4]], "D": [[2, 0], [1, 2]]}}]},
//!   "roads": [{"from": 1, "to": 2, "mu": 2, "xi": 4}, {"from": 2, "to": 1, "mu": 3, "xi": 5}],
//!   "p": {"1->2": 1, "2->1": 1},
//!   "alpha": {"1->2": 1, "2->1": 1},
//!   "solver": {"tol": 1e-8},
//!   "sim": {"events": 100000, "seed": 3}
//! }
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationErrors, Violation};
use crate::fixedpoint::FixedPointConfig;
use crate::model::{ArrivalProcess, MapDescriptor, ModelSpec, RoadSpec};
use crate::productform::RoadFactorConvention;
use crate::simulator::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfigFile {
    pub stations: StationsSection,
    pub roads: Vec<RoadEntry>,
    pub p: BTreeMap<String, f64>,
    pub alpha: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationsSection {
    pub count: usize,
    pub capacity: u32,
    pub initial_bikes: u32,
    pub arrivals: Vec<ArrivalEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArrivalEntry {
    Lambda(LambdaEntry),
    Map(MapEntry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaEntry {
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapEntry {
    pub map: MapMatrices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapMatrices {
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadEntry {
    pub from: usize,
    pub to: usize,
    pub mu: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub road_factor_convention: Option<RoadFactorConvention>,
}

impl SolverSection {
    /// Overlays the fields present in the file onto `cfg`.
    pub fn apply(&self, cfg: &mut FixedPointConfig) {
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(d) = self.damping {
            cfg.damping = d;
        }
        if let Some(m) = self.max_iter {
            cfg.max_iter = m;
        }
        if let Some(init) = &self.init {
            cfg.init = Some(init.clone());
        }
        if let Some(c) = self.road_factor_convention {
            cfg.convention = c;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
}

impl SimSection {
    pub fn apply(&self, cfg: &mut SimConfig) {
        if let Some(e) = self.events {
            cfg.events = e;
        }
        if let Some(w) = self.warmup {
            cfg.warmup = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
    }
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parses a configuration document. Malformed JSON, unknown keys and
/// structurally inconsistent sections are all reported as [`Error::Config`].
pub fn parse_config(text: &str) -> Result<ModelConfigFile> {
    let file: ModelConfigFile = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    if file.stations.arrivals.len() != file.stations.count {
        return Err(schema(format!(
            "stations.count = {} but {} arrival entries given",
            file.stations.count,
            file.stations.arrivals.len()
        )));
    }
    for key in file.p.keys().chain(file.alpha.keys()) {
        parse_key(key, file.stations.count)?;
    }
    for r in &file.roads {
        for id in [r.from, r.to] {
            if id == 0 || id > file.stations.count {
                return Err(schema(format!("road endpoint {id} outside 1..={}", file.stations.count)));
            }
        }
    }
    Ok(file)
}

/// `"i->j"` with one-based ids, returned zero-based.
fn parse_key(key: &str, count: usize) -> Result<(usize, usize)> {
    let bad = || schema(format!("routing key {key:?} is not of the form \"i->j\" with ids in 1..={count}"));
    let (a, b) = key.split_once("->").ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b == 0 || a > count || b > count {
        return Err(bad());
    }
    Ok((a - 1, b - 1))
}

fn routing(map: &BTreeMap<String, f64>, count: usize) -> Result<BTreeMap<(usize, usize), f64>> {
    map.iter()
        .map(|(k, &v)| parse_key(k, count).map(|ij| (ij, v)))
        .collect()
}

impl ModelConfigFile {
    /// Converts to an unvalidated [`ModelSpec`]. Malformed MAP matrices are
    /// model violations rather than schema errors.
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let count = self.stations.count;
        let mut violations = Vec::new();
        let mut stations = Vec::with_capacity(count);
        for (i, a) in self.stations.arrivals.iter().enumerate() {
            match a {
                ArrivalEntry::Lambda(l) => stations.push(ArrivalProcess::Rates(l.lambda.clone())),
                ArrivalEntry::Map(m) => match MapDescriptor::from_rows(&m.map.c, &m.map.d) {
                    Ok(map) => stations.push(ArrivalProcess::Map(map)),
                    Err(source) => violations.push(Violation::Arrivals { station: i, source }),
                },
            }
        }
        if !violations.is_empty() {
            return Err(ValidationErrors(violations).into());
        }
        Ok(ModelSpec {
            initial_bikes: self.stations.initial_bikes,
            capacity: self.stations.capacity,
            stations,
            roads: self
                .roads
                .iter()
                .map(|r| RoadSpec {
                    from: r.from - 1,
                    to: r.to - 1,
                    mu: r.mu,
                    xi: r.xi,
                })
                .collect(),
            first_ride: routing(&self.p, count)?,
            retrial: routing(&self.alpha, count)?,
        })
    }

    pub fn from_spec(spec: &ModelSpec) -> Self {
        let key = |&(i, j): &(usize, usize)| format!("{}->{}", i + 1, j + 1);
        Self {
            stations: StationsSection {
                count: spec.stations.len(),
                capacity: spec.capacity,
                initial_bikes: spec.initial_bikes,
                arrivals: spec
                    .stations
                    .iter()
                    .map(|a| match a {
                        ArrivalProcess::Rates(l) => ArrivalEntry::Lambda(LambdaEntry { lambda: l.clone() }),
                        ArrivalProcess::Map(m) => ArrivalEntry::Map(MapEntry {
                            map: MapMatrices {
                                c: m.hidden_rows(),
                                d: m.arrival_rows(),
                            },
                        }),
                    })
                    .collect(),
            },
            roads: spec
                .roads
                .iter()
                .map(|r| RoadEntry {
                    from: r.from + 1,
                    to: r.to + 1,
                    mu: r.mu,
                    xi: r.xi,
                })
                .collect(),
            p: spec.first_ride.iter().map(|(k, &v)| (key(k), v)).collect(),
            alpha: spec.retrial.iter().map(|(k, &v)| (key(k), v)).collect(),
            solver: None,
            sim: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::validate_model;

    const EXAMPLE: &str = r#"{
        "stations": {"count": 2, "capacity": 3, "initial_bikes": 2,
                     "arrivals": [{"lambda": [5, 7]},
                                  {"map": {"C": [[-3, 1], [1, -4]], "D": [[2, 0], [1, 2]]}}]},
        "roads": [{"from": 1, "to": 2, "mu": 2, "xi": 4}, {"from": 2, "to": 1, "mu": 3, "xi": 5}],
        "p": {"1->2": 1, "2->1": 1},
        "alpha": {"1->2": 1, "2->1": 1},
        "solver": {"tol": 1e-9, "road_factor_convention": "bcmp"},
        "sim": {"events": 1000}
    }"#;

    #[test]
    fn parses_both_arrival_forms() {
        let file = parse_config(EXAMPLE).unwrap();
        let spec = file.to_spec().unwrap();
        assert!(matches!(spec.stations[0], ArrivalProcess::Rates(_)));
        assert!(matches!(spec.stations[1], ArrivalProcess::Map(_)));
        assert_eq!(spec.first_ride[&(0, 1)], 1.0);
        let mut cfg = FixedPointConfig::default();
        file.solver.as_ref().unwrap().apply(&mut cfg);
        assert_eq!(cfg.tol, 1e-9);
        assert_eq!(cfg.convention, RoadFactorConvention::Bcmp);
        assert_eq!(cfg.damping, 0.5);
        let mut sim = SimConfig::default();
        file.sim.as_ref().unwrap().apply(&mut sim);
        assert_eq!(sim.events, 1000);
        validate_model(&spec).unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = EXAMPLE.replace("\"sim\"", "\"simulation\"");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
        let bad = EXAMPLE.replace("\"xi\": 4", "\"xi\": 4, \"len\": 1");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
        let bad = EXAMPLE.replace("[{\"lambda\": [5, 7]}", "[{\"rates\": [5, 7]}");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn structural_errors() {
        let bad = EXAMPLE.replace("\"count\": 2", "\"count\": 3");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
        let bad = EXAMPLE.replace("\"1->2\": 1, \"2->1\": 1}", "\"1->3\": 1, \"2->1\": 1}");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
        let bad = EXAMPLE.replace("\"from\": 1,", "\"from\": 0,");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn bad_map_is_a_model_violation() {
        let bad = EXAMPLE.replace("[[2, 0], [1, 2]]", "[[3, 0], [1, 2]]");
        let file = parse_config(&bad).unwrap();
        assert!(matches!(file.to_spec(), Err(Error::Invalid(_))));
    }

    #[test]
    fn echo_round_trip() {
        for spec in [
            parse_config(EXAMPLE).unwrap().to_spec().unwrap(),
            catalog::example_three(0.4, 0.7),
            catalog::example_four(6.0),
        ] {
            let model = validate_model(&spec).unwrap();
            let text = ModelConfigFile::from_spec(&model.to_spec()).to_json();
            let again = validate_model(&parse_config(&text).unwrap().to_spec().unwrap()).unwrap();
            assert_eq!(model, again);
        }
    }
}
