//! `cqn`: validate, solve and simulate bike-sharing network configurations.
//!
//! Exit codes: 0 success, 1 schema or usage error, 2 model invariant
//! violation, 3 reducible path graph, 4 fixed point did not converge,
//! 5 state space larger than the cap.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cqn::measures::marginals_csv;
use cqn::pathgraph::build_path_graph_from_specs;
use cqn::{
    build_path_graph, build_routing_matrix, is_irreducible, parse_config, simulate, solve_with_context,
    validate_model, BikeShareModel, Error, FixedPointConfig, ModelConfigFile, PerformanceReport,
    RoadFactorConvention, SimConfig, SimReport,
};

#[derive(Parser)]
#[command(name = "cqn", version, about = "Bike-sharing closed queueing network solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and report path-graph irreducibility.
    Validate {
        config: PathBuf,
        /// Print the configuration back in normalized form.
        #[arg(long)]
        echo_config: bool,
    },
    /// Solve for the full-station probabilities and performance measures.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the routing matrix at the solution as CSV.
        #[arg(long, value_name = "FILE")]
        dump_routing: Option<PathBuf>,
        /// Write every station's marginal distribution as CSV.
        #[arg(long, value_name = "FILE")]
        marginals: Option<PathBuf>,
    },
    /// Simulate the physical system.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Also solve analytically and report the gaps.
        #[arg(long)]
        compare: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and print the performance report only.
    Report {
        config: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, env = "CQN_MAX_STATES")]
    max_states: Option<u128>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(RoadFactorConvention))]
    road_factor_convention: Option<RoadFactorConvention>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    events: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    warmup: Option<f64>,
}

/// A failure with its exit code already decided.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Invalid(_) | Error::Map(_) => 2,
            Error::ReducibleMatrix(_) => 3,
            Error::NoConvergence { .. } => 4,
            Error::StateSpaceTooLarge { .. } => 5,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn load(path: &Path) -> Result<ModelConfigFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(parse_config(&text)?)
}

fn load_model(path: &Path) -> Result<(ModelConfigFile, BikeShareModel), Failure> {
    let file = load(path)?;
    let model = validate_model(&file.to_spec()?).map_err(Error::from)?;
    Ok((file, model))
}

fn emit(text: &str, out: Option<&Path>) -> CmdResult {
    match out {
        Some(p) => fs::write(p, text)?,
        None => match writeln!(io::stdout().lock(), "{text}") {
            // A closed pipe (`cqn solve ... | head`) is not an error.
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(e.into()),
            _ => {}
        },
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

fn solver_config(file: &ModelConfigFile, args: &SolverArgs) -> FixedPointConfig {
    let mut cfg = FixedPointConfig::default();
    if let Some(s) = &file.solver {
        s.apply(&mut cfg);
    }
    if let Some(m) = args.max_states {
        cfg.max_states = m;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if let Some(d) = args.damping {
        cfg.damping = d;
    }
    if let Some(m) = args.max_iter {
        cfg.max_iter = m;
    }
    if let Some(c) = args.road_factor_convention {
        cfg.convention = c;
    }
    cfg
}

fn cmd_validate(path: &Path, echo: bool) -> CmdResult {
    let file = load(path)?;
    let spec = file.to_spec()?;
    match validate_model(&spec) {
        Ok(model) => {
            let irreducible = is_irreducible(&build_path_graph(&model));
            if echo {
                emit(&ModelConfigFile::from_spec(&model.to_spec()).to_json(), None)?;
            } else {
                println!("model: valid");
                println!("path graph: {}", if irreducible { "irreducible" } else { "reducible" });
            }
            if irreducible {
                Ok(())
            } else {
                Err(Failure {
                    code: 3,
                    message: "path graph is not strongly connected".into(),
                })
            }
        }
        Err(errs) => {
            for v in errs.violations() {
                println!("violation: {v}");
            }
            // A missing in- or out-road is a connectivity defect; report it as
            // such when nothing else is wrong with the model.
            let reducible = !is_irreducible(&build_path_graph_from_specs(spec.stations.len(), &spec.roads));
            let only_connectivity = errs.violations().iter().all(|v| v.is_connectivity());
            if reducible && only_connectivity {
                println!("path graph: reducible");
                Err(Failure {
                    code: 3,
                    message: "path graph is not strongly connected".into(),
                })
            } else {
                Err(Error::from(errs).into())
            }
        }
    }
}

#[derive(Serialize)]
struct SolveOutput {
    pi: Vec<f64>,
    residual: f64,
    iterations: usize,
    #[serde(rename = "logG")]
    log_g: f64,
    report: PerformanceReport,
}

fn solve(file: &ModelConfigFile, model: &BikeShareModel, args: &SolverArgs) -> Result<(SolveOutput, cqn::ProductFormContext), Failure> {
    let cfg = solver_config(file, args);
    let (fp, ctx) = solve_with_context(model, &cfg).map_err(|e| {
        if let Error::NoConvergence { best } = &e {
            eprintln!("best iterate: {}", serde_json::to_string(best).expect("serializes"));
        }
        Failure::from(e)
    })?;
    let report = PerformanceReport::new(model, &ctx, &fp.pi);
    let out = SolveOutput {
        log_g: ctx.log_g(),
        pi: fp.pi,
        residual: fp.residual,
        iterations: fp.iterations,
        report,
    };
    Ok((out, ctx))
}

fn cmd_solve(
    path: &Path,
    args: &SolverArgs,
    out: Option<&Path>,
    dump_routing: Option<&Path>,
    marginals: Option<&Path>,
) -> CmdResult {
    let (file, model) = load_model(path)?;
    let (result, ctx) = solve(&file, &model, args)?;
    if let Some(p) = dump_routing {
        fs::write(p, build_routing_matrix(&model, &result.pi)?.to_csv())?;
    }
    if let Some(p) = marginals {
        fs::write(p, marginals_csv(&ctx))?;
    }
    emit(&to_json(&result), out)
}

fn cmd_report(path: &Path, args: &SolverArgs, format: Format, out: Option<&Path>) -> CmdResult {
    let (file, model) = load_model(path)?;
    let (result, _) = solve(&file, &model, args)?;
    match format {
        Format::Json => emit(&to_json(&result.report), out),
        Format::Csv => emit(result.report.station_csv().trim_end(), out),
    }
}

#[derive(Serialize)]
struct GapRow {
    station: usize,
    analytic_full_prob: f64,
    empirical_full_prob: f64,
    full_gap: f64,
    analytic_empty_prob: f64,
    empirical_empty_prob: f64,
    empty_gap: f64,
}

#[derive(Serialize)]
struct Comparison {
    simulation: SimReport,
    analytic: SolveOutput,
    gaps: Vec<GapRow>,
    max_full_gap: f64,
}

fn cmd_simulate(path: &Path, sim: &SimArgs, compare: bool, solver: &SolverArgs, out: Option<&Path>) -> CmdResult {
    let (file, model) = load_model(path)?;
    let mut cfg = SimConfig::default();
    if let Some(s) = &file.sim {
        s.apply(&mut cfg);
    }
    if let Some(s) = sim.seed {
        cfg.seed = s;
    }
    if let Some(e) = sim.events {
        cfg.events = e;
    }
    if let Some(r) = sim.replications {
        cfg.replications = r;
    }
    if let Some(w) = sim.warmup {
        cfg.warmup = w;
    }
    let report = simulate(&model, &cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !compare {
        return emit(&to_json(&report), out);
    }
    let (analytic, _) = solve(&file, &model, solver)?;
    let gaps: Vec<GapRow> = (0..model.station_count())
        .map(|i| {
            let (af, ef) = (analytic.report.full_prob[i], report.full_prob[i].mean);
            let (ae, ee) = (analytic.report.empty_prob[i], report.empty_prob[i].mean);
            GapRow {
                station: i + 1,
                analytic_full_prob: af,
                empirical_full_prob: ef,
                full_gap: (af - ef).abs(),
                analytic_empty_prob: ae,
                empirical_empty_prob: ee,
                empty_gap: (ae - ee).abs(),
            }
        })
        .collect();
    let max_full_gap = gaps.iter().map(|g| g.full_gap).fold(0.0, f64::max);
    emit(
        &to_json(&Comparison {
            simulation: report,
            analytic,
            gaps,
            max_full_gap,
        }),
        out,
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own usage errors would exit 2, which is reserved here.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Validate { config, echo_config } => cmd_validate(config, *echo_config),
        Command::Solve {
            config,
            solver,
            out,
            dump_routing,
            marginals,
        } => cmd_solve(config, solver, out.as_deref(), dump_routing.as_deref(), marginals.as_deref()),
        Command::Simulate {
            config,
            sim,
            compare,
            solver,
            out,
        } => cmd_simulate(config, sim, *compare, solver, out.as_deref()),
        Command::Report {
            config,
            solver,
            format,
            out,
        } => cmd_report(config, solver, *format, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
