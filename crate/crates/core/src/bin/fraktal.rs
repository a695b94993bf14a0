use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use fraktal::discretization::{build_mesh, default_spacing, DomainMesh};
use fraktal::geometry::{build_prefractal, domain_area, PrefractalDomain};
use fraktal::harness::output::{cell_file_name, write_cell_csv};
use fraktal::harness::{
    emit_outputs, level_mesh, limit_problem, problem_spec, run_n_sweep, run_p_sweep, CellSolution,
    ExperimentConfig, HarnessError, PValue, RunMetadata, SweepTable,
};
use fraktal::limit::solve_limit;
use fraktal::obstacle::{
    assemble_on, kkt_diagnostics, lewy_stampacchia_report, solve_assembled, SolveError, SolveReport,
};

#[derive(Parser)]
#[command(name = "fraktal", version, about = "Obstacle problems for the regional fractional p-Laplacian on Koch pre-fractals")]
struct Cli {
    /// INI config, or a JSON config echo / sweep.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for sweeps, output file for the other commands.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "FRAKTAL_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Vertex list of the level-n curve and a JSON summary.
    Geometry {
        #[arg(long)]
        level: Option<u32>,
    },
    /// One finite-p obstacle solve.
    Solve {
        #[arg(long)]
        level: Option<u32>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        bsub: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-iteration energy CSV.
        #[arg(long)]
        dump_energy_trace: Option<PathBuf>,
        /// node_index,kind,x,y,weight
        #[arg(long)]
        dump_mesh: Option<PathBuf>,
    },
    /// Finite-p solves and the p = ∞ limit on one level.
    SweepP,
    /// Every configured level at one exponent.
    SweepN {
        /// A finite exponent or `inf`; defaults to the first configured p.
        #[arg(long)]
        p: Option<PValue>,
    },
    /// The p = ∞ maximization on one level.
    Limit {
        #[arg(long)]
        level: Option<u32>,
        #[arg(long = "C1")]
        c1: Option<f64>,
        #[arg(long = "C2")]
        c2: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Cell(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(e) => Failure::Config(e.to_string()),
            HarnessError::Setup(e) => Failure::Config(e),
            other => Failure::Cell(other.to_string()),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Cell(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Cell(e.to_string()))?;
    fs::write(path, text).map_err(io(path))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.solver.seed = seed;
    }
    Ok(config)
}

fn geometry(cli: &Cli, config: &ExperimentConfig, level: Option<u32>) -> Result<(), Failure> {
    let n = level.unwrap_or(config.geometry.level_min);
    let curve = build_prefractal(n).map_err(|e| Failure::Config(e.to_string()))?;
    let summary = json!({
        "level": n,
        "segments": curve.segment_count(),
        "segment_length": curve.segment_length(),
        "perimeter": curve.perimeter(),
        "area": domain_area(&curve),
        "delta_n": curve.delta(),
    });
    match &cli.out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Cell(e.to_string()))?;
            let cell = |e: csv::Error| Failure::Cell(e.to_string());
            w.write_record(["index", "x", "y"]).map_err(cell)?;
            for (i, v) in curve.vertices().iter().enumerate() {
                w.write_record([i.to_string(), format!("{:?}", v.x), format!("{:?}", v.y)])
                    .map_err(cell)?;
            }
            w.flush().map_err(io(path))?;
            write_json(&path.with_extension("json"), &summary)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&summary).unwrap()),
    }
    Ok(())
}

fn dump_mesh(mesh: &DomainMesh, path: &Path) -> Result<(), Failure> {
    let cell = |e: csv::Error| Failure::Cell(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(cell)?;
    w.write_record(["node_index", "kind", "x", "y", "weight"]).map_err(cell)?;
    let interior = mesh.interior_nodes().iter().zip(mesh.interior_weights());
    let boundary = mesh.boundary_nodes().iter().zip(mesh.boundary_weights());
    let rows = interior
        .map(|r| ("interior", r))
        .chain(boundary.map(|r| ("boundary", r)));
    for (i, (kind, (pt, wt))) in rows.enumerate() {
        w.write_record([
            i.to_string(),
            kind.to_string(),
            format!("{:?}", pt.x),
            format!("{:?}", pt.y),
            format!("{wt:?}"),
        ])
        .map_err(cell)?;
    }
    w.flush().map_err(io(path))
}

#[allow(clippy::too_many_arguments)]
fn solve(
    cli: &Cli,
    config: &ExperimentConfig,
    level: Option<u32>,
    h: Option<f64>,
    bsub: Option<usize>,
    p: Option<f64>,
    report_path: Option<&Path>,
    trace_path: Option<&Path>,
    mesh_path: Option<&Path>,
) -> Result<(), Failure> {
    let n = level.unwrap_or(config.geometry.level_min);
    let p = p
        .or_else(|| config.finite_p().first().copied())
        .ok_or_else(|| Failure::Config("no finite p configured".into()))?;
    let mut spec = problem_spec(config, n, p, cli.workers)?;
    if let Some(h) = h {
        spec.spacing = h;
    }
    if let Some(b) = bsub {
        spec.boundary_subdiv = b;
    }
    let domain = PrefractalDomain::new(n).map_err(|e| Failure::Config(e.to_string()))?;
    let mesh = build_mesh(&domain, spec.spacing, spec.boundary_subdiv)
        .map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(path) = mesh_path {
        dump_mesh(&mesh, path)?;
    }
    let problem = assemble_on(&spec, mesh).map_err(|e| match e {
        SolveError::Energy(_) | SolveError::Infeasible { .. } | SolveError::Invalid(_) => {
            Failure::Config(e.to_string())
        }
        other => Failure::Cell(other.to_string()),
    })?;
    let (report, failure): (SolveReport, Option<String>) = match solve_assembled(&problem, None) {
        Ok(r) => (r, None),
        Err(SolveError::NotConverged { report, .. }) => {
            let msg = format!("not converged: KKT residual {:e}", report.kkt_residual);
            (*report, Some(msg))
        }
        Err(e) => return Err(Failure::Cell(e.to_string())),
    };
    if let Some(path) = trace_path {
        let cell = |e: csv::Error| Failure::Cell(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(cell)?;
        w.write_record(["iteration", "energy", "step", "kkt_residual"]).map_err(cell)?;
        for (k, t) in report.trace.iter().enumerate() {
            w.write_record([k.to_string(), format!("{:?}", t.energy), format!("{:?}", t.step), format!("{:?}", t.residual)])
                .map_err(cell)?;
        }
        w.flush().map_err(io(path))?;
    }
    let mesh = problem.mesh();
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("solution.csv"));
    let cell = CellSolution {
        n,
        p: PValue::Finite(p),
        nodes: mesh.interior_nodes().to_vec(),
        values: report.solution.values().to_vec(),
        classes: Some(report.classes.clone()),
    };
    write_cell_csv(&cell, &out)?;
    let kkt = kkt_diagnostics(&problem, &report).map_err(|e| Failure::Cell(e.to_string()))?;
    let ls = lewy_stampacchia_report(&problem, &report).map_err(|e| Failure::Cell(e.to_string()))?;
    let summary = json!({
        "level": n,
        "p": p,
        "s": spec.s,
        "nodes": mesh.interior_len(),
        "iterations": report.iterations,
        "energy": report.final_energy,
        "kkt_residual": report.kkt_residual,
        "converged": report.converged,
        "classes": {
            "inactive": report.inactive.len(),
            "lower": report.active_lower.len(),
            "upper": report.active_upper.len(),
        },
        "kkt": kkt,
        "lewy_stampacchia": { "tol": ls.tol, "counts": ls.counts },
    });
    match report_path {
        Some(path) => write_json(path, &summary)?,
        None => println!("{}", serde_json::to_string_pretty(&summary).unwrap()),
    }
    match failure {
        Some(msg) => Err(Failure::Cell(msg)),
        None => Ok(()),
    }
}

fn limit(
    cli: &Cli,
    config: &mut ExperimentConfig,
    level: Option<u32>,
    c1: Option<f64>,
    c2: Option<f64>,
    report_path: Option<&Path>,
) -> Result<(), Failure> {
    let n = level.unwrap_or(config.geometry.level_min);
    if let Some(c) = c1 {
        config.limit.c1 = c;
    }
    if let Some(c) = c2 {
        config.limit.c2 = c;
    }
    let h = config.geometry.h.unwrap_or_else(|| default_spacing(n));
    let mesh = level_mesh(config, n, h)?;
    let (f, set) = limit_problem(config, n, &mesh)?;
    let report = solve_limit(&mesh, &f, &set, config.limit.tol, config.limit.max_iters)
        .map_err(|e| Failure::Cell(e.to_string()))?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("maximizer.csv"));
    let cell = CellSolution {
        n,
        p: PValue::Infinite,
        nodes: mesh.interior_nodes().to_vec(),
        values: report.maximizer.values().to_vec(),
        classes: None,
    };
    write_cell_csv(&cell, &out)?;
    let mut value = serde_json::to_value(&report).map_err(|e| Failure::Cell(e.to_string()))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("maximizer");
    }
    match report_path {
        Some(path) => write_json(path, &value)?,
        None => println!("{}", serde_json::to_string_pretty(&value).unwrap()),
    }
    Ok(())
}

fn emit(cli: &Cli, config: &ExperimentConfig, table: &SweepTable, command: &str) -> Result<(), Failure> {
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    let meta = RunMetadata::now(config, cli.workers, command);
    let files = emit_outputs(table, config, &meta, &dir)?;
    for row in &table.rows {
        let sol = table.solution(row.n, row.p).map(|c| cell_file_name(c.n, &c.p.label()));
        log::info!("{:?} n={} p={} {:?} {}", row.kind, row.n, row.p, row.status, sol.unwrap_or_default());
    }
    eprintln!("wrote {} files to {}", files.len(), dir.display());
    if table.all_ok() {
        Ok(())
    } else {
        let failed = table.rows.iter().filter(|r| r.status == fraktal::harness::Status::Failed).count();
        Err(Failure::Cell(format!("{failed} failed cell(s)")))
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut config = load_config(cli)?;
    match &cli.command {
        Command::Geometry { level } => geometry(cli, &config, *level),
        Command::Solve {
            level,
            h,
            bsub,
            p,
            report,
            dump_energy_trace,
            dump_mesh,
        } => solve(
            cli,
            &config,
            *level,
            *h,
            *bsub,
            *p,
            report.as_deref(),
            dump_energy_trace.as_deref(),
            dump_mesh.as_deref(),
        ),
        Command::SweepP => {
            let table = run_p_sweep(&config, cli.workers)?;
            emit(cli, &config, &table, "sweep-p")
        }
        Command::SweepN { p } => {
            let p = match p.or_else(|| config.problem.p.first().copied()) {
                Some(p) => p,
                None => return Err(Failure::Config("no p configured".into())),
            };
            let table = run_n_sweep(&config, p, cli.workers)?;
            emit(cli, &config, &table, "sweep-n")
        }
        Command::Limit {
            level,
            c1,
            c2,
            report,
        } => limit(cli, &mut config, *level, *c1, *c2, report.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Cell(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
