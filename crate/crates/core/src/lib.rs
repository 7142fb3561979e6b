//! Closed queueing network analysis of bike-sharing systems with Markovian
//! arrival processes and a retrial mechanism for full stations.
//!
//! The pipeline: [`model::validate_model`] a [`ModelSpec`], build the
//! routing matrix at a guess of the full-station probabilities, solve the
//! traffic equations, evaluate the product form over the state space, and
//! iterate the full-station probabilities to a fixed point
//! ([`fixedpoint::solve_fixed_point`]). [`simulator::simulate`] runs the
//! physical system directly as an independent check.

pub mod catalog;
pub mod config;
pub mod error;
pub mod fixedpoint;
pub mod measures;
pub mod model;
pub mod pathgraph;
pub mod productform;
pub mod routing;
pub mod simulator;
pub mod statespace;

pub use config::{parse_config, ModelConfigFile};
pub use error::{Error, MapError, Result, ValidationErrors, Violation};
pub use fixedpoint::{solve_fixed_point, solve_with_context, FixedPointConfig, FixedPointResult};
pub use measures::PerformanceReport;
pub use model::{
    validate_model, ArrivalProcess, BikeShareModel, MapDescriptor, ModelSpec, PhaseRates, RoadSpec,
};
pub use pathgraph::{build_path_graph, is_irreducible, PathGraph, PathNode};
pub use productform::{ProductFormContext, RoadFactorConvention};
pub use routing::{build_routing_matrix, solve_relative_rates, RelativeArrivalRates, RideClass, RoutingMatrix};
pub use simulator::{simulate, SimConfig, SimReport};
pub use statespace::{state_count, NetworkState, StateLayout, DEFAULT_MAX_STATES};
