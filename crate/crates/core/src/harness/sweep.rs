//! p-sweeps at a fixed level and n-sweeps at a fixed exponent.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::discretization::{
    build_mesh, default_spacing, sample_field, shared_nodes, DomainMesh, GridFunction,
};
use crate::field_expr::parse_field;
use crate::geometry::{Point, PrefractalDomain};
use crate::limit::{holder_excess, mcshane_extend, solve_limit, HolderConstraintSet};
use crate::obstacle::{assemble_on, solve_assembled, NodeClass, ProblemSpec};

use super::config::{ExperimentConfig, PValue};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Finite,
    Limit,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
    Warning,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::Finite => "finite",
            RowKind::Limit => "limit",
            RowKind::Warning => "warning",
        }
    }
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Failed => "failed",
            Status::Warning => "warning",
        }
    }
}

/// One `(n, p)` cell.
///
/// * `objective`: `Σ w_i f_i u_i`.
/// * `sup_diff_to_next`: n-sweeps only. For finite p, the sup-norm of
///   `u_{n+1} − u_n` on the nodes both levels share. For p = ∞, the sup-norm
///   of the difference of the two McShane extensions on the finest mesh.
/// * `sup_diff_to_limit`, p-sweeps: `‖u_p − u_∞‖_∞` on the interior nodes.
/// * `objective_gap`: `|obj(u_p) − obj(u_∞)|` in p-sweeps and
///   `|obj_{n+1} − obj_n|` in n-sweeps.
/// * `holder_excess`, p = ∞ n-sweeps: the largest
///   `|ũ_i − ũ_j| − C₂ d_ij^s` of the extension on the finest mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: RowKind,
    pub n: u32,
    pub p: PValue,
    pub status: Status,
    pub node_count: usize,
    pub iterations: Option<usize>,
    pub energy: Option<f64>,
    pub objective: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub sup_diff_to_next: Option<f64>,
    pub sup_diff_to_limit: Option<f64>,
    pub objective_gap: Option<f64>,
    pub holder_excess: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl SweepRow {
    fn new(kind: RowKind, n: u32, p: PValue) -> Self {
        Self {
            kind,
            n,
            p,
            status: Status::Ok,
            node_count: 0,
            iterations: None,
            energy: None,
            objective: None,
            kkt_residual: None,
            sup_diff_to_next: None,
            sup_diff_to_limit: None,
            objective_gap: None,
            holder_excess: None,
            seconds: 0.0,
            error: None,
        }
    }

    fn fail(mut self, error: impl std::fmt::Display) -> Self {
        self.status = Status::Failed;
        self.error = Some(error.to_string());
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// Nodal values of one solved cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub n: u32,
    pub p: PValue,
    pub nodes: Vec<Point>,
    pub values: Vec<f64>,
    pub classes: Option<Vec<NodeClass>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub sweep: String,
    pub rows: Vec<SweepRow>,
    #[serde(skip)]
    pub solutions: Vec<CellSolution>,
}

impl SweepTable {
    pub fn new(sweep: &str) -> Self {
        Self {
            sweep: sweep.to_string(),
            rows: Vec::new(),
            solutions: Vec::new(),
        }
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.status != Status::Failed)
    }

    pub fn row(&self, kind: RowKind, n: u32, p: PValue) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.kind == kind && r.n == n && r.p == p)
    }

    pub fn solution(&self, n: u32, p: PValue) -> Option<&CellSolution> {
        self.solutions.iter().find(|c| c.n == n && c.p == p)
    }

    fn warn_duplicates(&mut self, config: &ExperimentConfig, n: u32) {
        for &p in &config.dropped_p {
            let mut row = SweepRow::new(RowKind::Warning, n, p);
            row.status = Status::Warning;
            row.error = Some(format!("duplicate p = {p} ignored"));
            self.rows.push(row);
        }
    }
}

fn objective(mesh: &DomainMesh, f: &[f64], u: &[f64]) -> f64 {
    mesh.interior_weights()
        .iter()
        .zip(f)
        .zip(u)
        .map(|((w, f), u)| w * f * u)
        .sum()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn level_mesh(config: &ExperimentConfig, n: u32, h: f64) -> Result<DomainMesh, HarnessError> {
    let domain = PrefractalDomain::new(n).map_err(|e| HarnessError::Setup(e.to_string()))?;
    build_mesh(&domain, h, config.geometry.bsub).map_err(|e| HarnessError::Setup(e.to_string()))
}

/// The finite-p problem of `config` on level `n`.
pub fn problem_spec(config: &ExperimentConfig, n: u32, p: f64, workers: usize) -> Result<ProblemSpec, HarnessError> {
    let pr = &config.problem;
    let field = |t: &str| parse_field(t).map_err(|e| HarnessError::Setup(format!("{t:?}: {e}")));
    let (phi1, phi2) = config.obstacles_at(n).map_err(|e| HarnessError::Setup(e.to_string()))?;
    let mut spec = ProblemSpec::new(n, pr.s, p, field(&pr.f)?, field(&pr.b)?, phi1, phi2);
    if let Some(h) = config.geometry.h {
        spec.spacing = h;
    }
    spec.boundary_subdiv = config.geometry.bsub;
    spec.tol = config.solver.tol;
    spec.max_iters = config.solver.max_iters;
    spec.seed = config.solver.seed;
    spec.accelerate = config.solver.accel;
    spec.init = config.solver.init;
    spec.delta_n = pr.delta_n;
    spec.workers = workers;
    Ok(spec)
}

/// Load and constraint set of the p = ∞ problem of `config` on `mesh`.
pub fn limit_problem(
    config: &ExperimentConfig,
    n: u32,
    mesh: &DomainMesh,
) -> Result<(GridFunction, HolderConstraintSet), HarnessError> {
    let setup = |e: &dyn std::fmt::Display| HarnessError::Setup(e.to_string());
    let f = parse_field(&config.problem.f).map_err(|e| setup(&e))?;
    let f = sample_field(&f, mesh).map_err(|e| setup(&e))?;
    let (phi1, phi2) = config.obstacles_at(n).map_err(|e| setup(&e))?;
    let lo = sample_field(&phi1, mesh).map_err(|e| setup(&e))?;
    let hi = sample_field(&phi2, mesh).map_err(|e| setup(&e))?;
    let set = HolderConstraintSet::new(mesh, config.problem.s, config.limit.c1, config.limit.c2, &lo, &hi)
        .map_err(|e| setup(&e))?;
    Ok((f, set))
}

struct FiniteCell {
    row: SweepRow,
    solution: Option<CellSolution>,
}

fn finite_cell(config: &ExperimentConfig, n: u32, p: f64, mesh: &DomainMesh, workers: usize) -> FiniteCell {
    let start = Instant::now();
    let mut row = SweepRow::new(RowKind::Finite, n, PValue::Finite(p));
    row.node_count = mesh.interior_len();
    let result = problem_spec(config, n, p, workers).map_err(|e| e.to_string()).and_then(|mut spec| {
        spec.spacing = mesh.spacing();
        let problem = assemble_on(&spec, mesh.clone()).map_err(|e| e.to_string())?;
        let report = solve_assembled(&problem, None).map_err(|e| e.to_string())?;
        Ok((problem, report))
    });
    row.seconds = start.elapsed().as_secs_f64();
    match result {
        Ok((problem, report)) => {
            let u = report.solution.values();
            row.iterations = Some(report.iterations);
            row.energy = Some(report.final_energy);
            row.kkt_residual = Some(report.kkt_residual);
            row.objective = Some(objective(problem.mesh(), problem.f.values(), u));
            FiniteCell {
                row,
                solution: Some(CellSolution {
                    n,
                    p: PValue::Finite(p),
                    nodes: mesh.interior_nodes().to_vec(),
                    values: u.to_vec(),
                    classes: Some(report.classes.clone()),
                }),
            }
        }
        Err(e) => {
            log::warn!("cell n={n} p={p} failed: {e}");
            FiniteCell {
                row: row.fail(e),
                solution: None,
            }
        }
    }
}

struct LimitCell {
    row: SweepRow,
    maximizer: Option<GridFunction>,
}

fn limit_cell(config: &ExperimentConfig, n: u32, mesh: &DomainMesh) -> LimitCell {
    let start = Instant::now();
    let mut row = SweepRow::new(RowKind::Limit, n, PValue::Infinite);
    row.node_count = mesh.interior_len();
    let result = limit_problem(config, n, mesh).map_err(|e| e.to_string()).and_then(|(f, set)| {
        solve_limit(mesh, &f, &set, config.limit.tol, config.limit.max_iters).map_err(|e| e.to_string())
    });
    row.seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(report) => {
            row.iterations = Some(report.iterations);
            row.objective = Some(report.objective);
            LimitCell {
                row,
                maximizer: Some(report.maximizer),
            }
        }
        Err(e) => {
            log::warn!("limit cell n={n} failed: {e}");
            LimitCell {
                row: row.fail(e),
                maximizer: None,
            }
        }
    }
}

fn single_level(config: &ExperimentConfig) -> Result<u32, HarnessError> {
    let g = &config.geometry;
    if g.level_min != g.level_max {
        return Err(HarnessError::Setup(format!(
            "a p-sweep needs a single level, got {}..{}",
            g.level_min, g.level_max
        )));
    }
    Ok(g.level_min)
}

/// Finite-p solves for every configured exponent and one p = ∞ solve on the
/// same mesh.
pub fn run_p_sweep(config: &ExperimentConfig, workers: usize) -> Result<SweepTable, HarnessError> {
    let n = single_level(config)?;
    let h = config.geometry.h.unwrap_or_else(|| default_spacing(n));
    let mesh = level_mesh(config, n, h)?;
    let mut table = SweepTable::new("p");

    let limit = limit_cell(config, n, &mesh);
    let limit_values = limit.maximizer.as_ref().map(|m| m.values().to_vec());
    let limit_objective = limit.row.objective;

    for p in config.finite_p() {
        let mut cell = finite_cell(config, n, p, &mesh, workers);
        if let (Some(sol), Some(lim)) = (&cell.solution, &limit_values) {
            cell.row.sup_diff_to_limit = Some(sup_diff(&sol.values, lim));
        }
        if let (Some(obj), Some(lim)) = (cell.row.objective, limit_objective) {
            cell.row.objective_gap = Some((obj - lim).abs());
        }
        table.rows.push(cell.row);
        table.solutions.extend(cell.solution);
    }
    table.rows.push(limit.row);
    if let Some(values) = limit_values {
        table.solutions.push(CellSolution {
            n,
            p: PValue::Infinite,
            nodes: mesh.interior_nodes().to_vec(),
            values,
            classes: None,
        });
    }
    table.warn_duplicates(config, n);
    Ok(table)
}

/// Solves on every level `n₀..n₁` at one shared grid pitch.
pub fn run_n_sweep(config: &ExperimentConfig, p: PValue, workers: usize) -> Result<SweepTable, HarnessError> {
    let top = config.geometry.level_max;
    let h = config.geometry.h.unwrap_or_else(|| 3f64.powi(-(top as i32)));
    let meshes: Vec<(u32, DomainMesh)> = config
        .levels()
        .map(|n| level_mesh(config, n, h).map(|m| (n, m)))
        .collect::<Result<_, _>>()?;
    match p {
        PValue::Finite(p) => Ok(n_sweep_finite(config, p, &meshes, workers)),
        PValue::Infinite => Ok(n_sweep_limit(config, &meshes)),
    }
}

fn n_sweep_finite(config: &ExperimentConfig, p: f64, meshes: &[(u32, DomainMesh)], workers: usize) -> SweepTable {
    let mut table = SweepTable::new("n");
    let cells: Vec<FiniteCell> = meshes
        .iter()
        .map(|(n, mesh)| finite_cell(config, *n, p, mesh, workers))
        .collect();
    for k in 0..cells.len() {
        let mut row = cells[k].row.clone();
        if let (Some(next), Some(here)) = (cells.get(k + 1), &cells[k].solution) {
            if let Some(fine) = &next.solution {
                match shared_nodes(&meshes[k + 1].1, &meshes[k].1) {
                    Ok(shared) => {
                        let d = shared
                            .iter()
                            .enumerate()
                            .map(|(i, &j)| (here.values[i] - fine.values[j]).abs())
                            .fold(0.0, f64::max);
                        row.sup_diff_to_next = Some(d);
                    }
                    Err(e) => row = row.fail(e),
                }
            }
            if let (Some(a), Some(b)) = (row.objective, next.row.objective) {
                row.objective_gap = Some((b - a).abs());
            }
        }
        table.rows.push(row);
    }
    table.solutions = cells.into_iter().filter_map(|c| c.solution).collect();
    table.warn_duplicates(config, config.geometry.level_min);
    table
}

fn n_sweep_limit(config: &ExperimentConfig, meshes: &[(u32, DomainMesh)]) -> SweepTable {
    let mut table = SweepTable::new("n");
    let finest = &meshes.last().expect("at least one level").1;
    let (s, c2) = (config.problem.s, config.limit.c2);
    let mut cells = Vec::new();
    let mut extensions = Vec::new();
    for (n, mesh) in meshes {
        let mut cell = limit_cell(config, *n, mesh);
        let ext = cell.maximizer.as_ref().map(|u| mcshane_extend(u, mesh, finest, c2, s));
        let ext = match ext {
            Some(Ok(e)) => {
                cell.row.holder_excess = Some(holder_excess(finest.interior_nodes(), e.values(), c2, s));
                Some(e)
            }
            Some(Err(e)) => {
                cell.row = cell.row.fail(e);
                None
            }
            None => None,
        };
        if let Some(u) = &cell.maximizer {
            table.solutions.push(CellSolution {
                n: *n,
                p: PValue::Infinite,
                nodes: mesh.interior_nodes().to_vec(),
                values: u.values().to_vec(),
                classes: None,
            });
        }
        extensions.push(ext);
        cells.push(cell);
    }
    for k in 0..cells.len() {
        let mut row = cells[k].row.clone();
        if k + 1 < cells.len() {
            if let (Some(a), Some(b)) = (&extensions[k], &extensions[k + 1]) {
                row.sup_diff_to_next = Some(sup_diff(a.values(), b.values()));
            }
            if let (Some(a), Some(b)) = (row.objective, cells[k + 1].row.objective) {
                row.objective_gap = Some((b - a).abs());
            }
        }
        table.rows.push(row);
    }
    table.warn_duplicates(config, config.geometry.level_min);
    table
}
