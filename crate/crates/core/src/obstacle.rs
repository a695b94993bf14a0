//! Discrete double-obstacle problem `min J_{p,n}` over `φ₁ ≤ u ≤ φ₂`.
//!
//! The unknowns are the interior values; boundary entries are always the
//! nearest-node trace, so the solver minimizes `u ↦ J(u, trace u)` with the
//! reduced gradient from [`EnergyContext::energy_and_reduced_gradient`].

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::{
    build_mesh, default_spacing, sample_field, DomainMesh, GridFunction, MeshError,
    DEFAULT_BOUNDARY_SUBDIV,
};
use crate::field_expr::ScalarField;
use crate::geometry::{delta_n, GeometryError, PrefractalDomain};
use crate::nonlocal_energy::{EnergyContext, EnergyError};

pub const ARMIJO_SIGMA: f64 = 1e-4;
pub const ARMIJO_SHRINK: f64 = 0.5;
/// Relative round-off allowance in the sufficient-decrease test.
pub const ENERGY_SLACK: f64 = 1e-14;
const MAX_BACKTRACKS: usize = 80;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("obstacles cross at node {index}: phi1 = {lower} > phi2 = {upper}")]
    Infeasible {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("argument is not feasible: node {index} value {value} outside [{lower}, {upper}]")]
    InfeasibleArgument {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("no convergence after {iterations} iterations: KKT residual {residual:e}")]
    NotConverged {
        iterations: usize,
        residual: f64,
        report: Box<SolveReport>,
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    #[default]
    Midpoint,
    Lower,
    Upper,
    /// Uniform in the box, seeded by [`ProblemSpec::seed`].
    Random,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub level: u32,
    pub s: f64,
    pub p: f64,
    pub spacing: f64,
    pub boundary_subdiv: usize,
    pub f: ScalarField,
    pub b: ScalarField,
    pub phi1: ScalarField,
    pub phi2: ScalarField,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub accelerate: bool,
    pub init: InitStrategy,
    /// Overrides `δ_n = (3/4)^n`.
    pub delta_n: Option<f64>,
    pub workers: usize,
}

impl ProblemSpec {
    pub fn new(
        level: u32,
        s: f64,
        p: f64,
        f: ScalarField,
        b: ScalarField,
        phi1: ScalarField,
        phi2: ScalarField,
    ) -> Self {
        Self {
            level,
            s,
            p,
            spacing: default_spacing(level),
            boundary_subdiv: DEFAULT_BOUNDARY_SUBDIV,
            f,
            b,
            phi1,
            phi2,
            tol: 1e-6,
            max_iters: 20_000,
            seed: 0,
            accelerate: false,
            init: InitStrategy::Midpoint,
            delta_n: None,
            workers: 1,
        }
    }
}

/// A [`ProblemSpec`] sampled on its mesh.
#[derive(Debug)]
pub struct AssembledProblem {
    pub spec: ProblemSpec,
    pub ctx: EnergyContext,
    pub lower: GridFunction,
    pub upper: GridFunction,
    pub f: GridFunction,
}

impl AssembledProblem {
    pub fn mesh(&self) -> &DomainMesh {
        self.ctx.mesh()
    }

    pub fn midpoint(&self) -> GridFunction {
        let mid = self
            .lower
            .values()
            .iter()
            .zip(self.upper.values())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        self.traced(mid)
    }

    /// Interior values with boundary values copied by the trace rule.
    pub fn traced(&self, values: Vec<f64>) -> GridFunction {
        let boundary = self.mesh().trace(&values);
        GridFunction::from_raw(self.mesh().id(), values, boundary)
    }

    fn clamp_values(&self, u: &mut [f64]) {
        for ((x, &lo), &hi) in u
            .iter_mut()
            .zip(self.lower.values())
            .zip(self.upper.values())
        {
            *x = x.clamp(lo, hi);
        }
    }

    pub fn check_feasible(&self, u: &GridFunction, slack: f64) -> Result<(), SolveError> {
        u.check_mesh(self.mesh())?;
        for (index, ((&value, &lower), &upper)) in u
            .values()
            .iter()
            .zip(self.lower.values())
            .zip(self.upper.values())
            .enumerate()
        {
            if value < lower - slack || value > upper + slack {
                return Err(SolveError::InfeasibleArgument {
                    index,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }

    /// Sup-norm of `u − clamp(u − G)` with `G` the reduced gradient.
    pub fn kkt_residual(&self, u: &[f64], g: &[f64]) -> f64 {
        u.iter()
            .zip(g)
            .zip(self.lower.values().iter().zip(self.upper.values()))
            .map(|((&u, &g), (&lo, &hi))| (u - (u - g).clamp(lo, hi)).abs())
            .fold(0.0, f64::max)
    }

    /// Classes from the projected point `u − G`.
    pub fn classify(&self, u: &[f64], g: &[f64]) -> Vec<NodeClass> {
        u.iter()
            .zip(g)
            .zip(self.lower.values().iter().zip(self.upper.values()))
            .map(|((&u, &g), (&lo, &hi))| {
                let z = u - g;
                if z <= lo {
                    NodeClass::Lower
                } else if z >= hi {
                    NodeClass::Upper
                } else {
                    NodeClass::Inactive
                }
            })
            .collect()
    }

    pub fn initial_guess(&self, strategy: InitStrategy) -> GridFunction {
        match strategy {
            InitStrategy::Midpoint => self.midpoint(),
            InitStrategy::Lower => self.traced(self.lower.values().to_vec()),
            InitStrategy::Upper => self.traced(self.upper.values().to_vec()),
            InitStrategy::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
                let v = self
                    .lower
                    .values()
                    .iter()
                    .zip(self.upper.values())
                    .map(|(&a, &b)| a + (b - a) * rng.gen::<f64>())
                    .collect();
                self.traced(v)
            }
        }
    }
}

pub fn assemble(spec: &ProblemSpec) -> Result<AssembledProblem, SolveError> {
    let domain = PrefractalDomain::new(spec.level)?;
    let mesh = build_mesh(&domain, spec.spacing, spec.boundary_subdiv)?;
    assemble_on(spec, mesh)
}

pub fn assemble_on(spec: &ProblemSpec, mesh: DomainMesh) -> Result<AssembledProblem, SolveError> {
    if !(spec.tol > 0.0) {
        return Err(SolveError::Invalid(format!(
            "tol must be positive, got {}",
            spec.tol
        )));
    }
    let delta = spec.delta_n.unwrap_or_else(|| delta_n(spec.level));
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SolveError::Invalid(format!(
            "delta_n must be positive, got {delta}"
        )));
    }
    let mesh = Arc::new(mesh.with_delta(delta));
    let f = sample_field(&spec.f, &mesh)?;
    let b = sample_field(&spec.b, &mesh)?;
    let lower = sample_field(&spec.phi1, &mesh)?;
    let upper = sample_field(&spec.phi2, &mesh)?;
    for (index, (&lo, &hi)) in lower.values().iter().zip(upper.values()).enumerate() {
        if lo > hi {
            return Err(SolveError::Infeasible {
                index,
                lower: lo,
                upper: hi,
            });
        }
    }
    let ctx = EnergyContext::new(mesh, spec.s, spec.p, &f, &b, spec.workers)?;
    Ok(AssembledProblem {
        spec: spec.clone(),
        ctx,
        lower,
        upper,
        f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    Inactive,
    Lower,
    Upper,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Inactive => "inactive",
            NodeClass::Lower => "lower",
            NodeClass::Upper => "upper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub energy: f64,
    pub step: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub iterations: usize,
    pub final_energy: f64,
    pub kkt_residual: f64,
    pub classes: Vec<NodeClass>,
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
    pub inactive: Vec<usize>,
    pub trace: Vec<TraceEntry>,
    /// Reduced gradient at the solution.
    pub gradient: Vec<f64>,
    pub converged: bool,
}

/// Componentwise median of `(lower, u, upper)`, boundary entries included.
pub fn project_box(
    u: &GridFunction,
    lower: &GridFunction,
    upper: &GridFunction,
) -> Result<GridFunction, SolveError> {
    if u.mesh_id() != lower.mesh_id() || u.mesh_id() != upper.mesh_id() {
        return Err(MeshError::MeshMismatch.into());
    }
    let clamp = |u: &[f64], lo: &[f64], hi: &[f64]| -> Result<Vec<f64>, SolveError> {
        u.iter()
            .zip(lo.iter().zip(hi))
            .enumerate()
            .map(|(index, (&u, (&lo, &hi)))| {
                if lo > hi {
                    Err(SolveError::Infeasible {
                        index,
                        lower: lo,
                        upper: hi,
                    })
                } else {
                    Ok(u.clamp(lo, hi))
                }
            })
            .collect()
    };
    let values = clamp(u.values(), lower.values(), upper.values())?;
    let boundary = clamp(
        u.boundary_values(),
        lower.boundary_values(),
        upper.boundary_values(),
    )?;
    Ok(GridFunction::from_raw(u.mesh_id(), values, boundary))
}

pub fn solve_obstacle(
    spec: &ProblemSpec,
    init: Option<&GridFunction>,
) -> Result<SolveReport, SolveError> {
    let problem = assemble(spec)?;
    solve_assembled(&problem, init)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn solve_assembled(
    problem: &AssembledProblem,
    init: Option<&GridFunction>,
) -> Result<SolveReport, SolveError> {
    let start = match init {
        Some(g) => {
            g.check_mesh(problem.mesh())?;
            g.clone()
        }
        None => problem.initial_guess(problem.spec.init),
    };
    let mut u = start.into_values();
    problem.clamp_values(&mut u);
    if problem.spec.accelerate {
        accelerated(problem, u)
    } else {
        monotone(problem, u)
    }
}

fn finish(
    problem: &AssembledProblem,
    u: Vec<f64>,
    energy: f64,
    gradient: Vec<f64>,
    iterations: usize,
    trace: Vec<TraceEntry>,
) -> Result<SolveReport, SolveError> {
    let residual = problem.kkt_residual(&u, &gradient);
    let classes = problem.classify(&u, &gradient);
    let pick = |c: NodeClass| -> Vec<usize> {
        classes
            .iter()
            .enumerate()
            .filter(|(_, &k)| k == c)
            .map(|(i, _)| i)
            .collect()
    };
    let converged = residual <= problem.spec.tol;
    let report = SolveReport {
        active_lower: pick(NodeClass::Lower),
        active_upper: pick(NodeClass::Upper),
        inactive: pick(NodeClass::Inactive),
        classes,
        solution: problem.traced(u),
        iterations,
        final_energy: energy,
        kkt_residual: residual,
        trace,
        gradient,
        converged,
    };
    if converged {
        Ok(report)
    } else {
        Err(SolveError::NotConverged {
            iterations,
            residual,
            report: Box::new(report),
        })
    }
}

fn monotone(problem: &AssembledProblem, mut u: Vec<f64>) -> Result<SolveReport, SolveError> {
    let ctx = &problem.ctx;
    let tol = problem.spec.tol;
    let (mut energy, mut grad) = ctx.energy_and_reduced_gradient(&u)?;
    let mut residual = problem.kkt_residual(&u, &grad);
    let mut trace = vec![TraceEntry {
        energy,
        step: 0.0,
        residual,
    }];
    let mut alpha = 1.0;
    let mut iterations = 0;
    let mut trial = vec![0.0; u.len()];
    while residual > tol && iterations < problem.spec.max_iters {
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for ((t, &x), &g) in trial.iter_mut().zip(&u).zip(&grad) {
                *t = x - alpha * g;
            }
            problem.clamp_values(&mut trial);
            let decrease: f64 = grad
                .iter()
                .zip(trial.iter().zip(&u))
                .map(|(g, (t, x))| g * (t - x))
                .sum();
            match ctx.energy_and_reduced_gradient(&trial) {
                // Convexity gives J(x) − J(u) ≤ ∇J(x)·(x − u), which certifies
                // sufficient decrease once energy differences are round-off.
                Ok((e, g))
                    if e <= energy + ARMIJO_SIGMA * decrease + ENERGY_SLACK * energy.abs()
                        || g.iter()
                            .zip(trial.iter().zip(&u))
                            .map(|(g, (t, x))| g * (t - x))
                            .sum::<f64>()
                            <= ARMIJO_SIGMA * decrease =>
                {
                    accepted = Some((e, g));
                    break;
                }
                Ok(_) | Err(EnergyError::Overflow { .. }) => alpha *= ARMIJO_SHRINK,
                Err(e) => return Err(e.into()),
            }
        }
        let Some((e_new, g_new)) = accepted else {
            log::warn!("line search stalled at iteration {iterations}, residual {residual:e}");
            break;
        };
        let step: Vec<f64> = trial.iter().zip(&u).map(|(t, x)| t - x).collect();
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &y);
        let ss = dot(&step, &step);
        let used = alpha;
        alpha = if sy > 0.0 && ss > 0.0 {
            (ss / sy).clamp(1e-12, 1e12)
        } else {
            (alpha * 2.0).min(1e12)
        };
        std::mem::swap(&mut u, &mut trial);
        energy = e_new;
        grad = g_new;
        residual = problem.kkt_residual(&u, &grad);
        iterations += 1;
        trace.push(TraceEntry {
            energy,
            step: used,
            residual,
        });
    }
    finish(problem, u, energy, grad, iterations, trace)
}

/// Projected accelerated gradient with backtracking and restart whenever the
/// energy increases.
fn accelerated(problem: &AssembledProblem, mut u: Vec<f64>) -> Result<SolveReport, SolveError> {
    let ctx = &problem.ctx;
    let tol = problem.spec.tol;
    let (mut energy, mut grad) = ctx.energy_and_reduced_gradient(&u)?;
    let mut residual = problem.kkt_residual(&u, &grad);
    let mut trace = vec![TraceEntry {
        energy,
        step: 0.0,
        residual,
    }];
    let mut y = u.clone();
    let (mut ey, mut gy) = (energy, grad.clone());
    let mut momentum = 1.0f64;
    let mut alpha = 1.0;
    let mut iterations = 0;
    let mut trial = vec![0.0; u.len()];
    while residual > tol && iterations < problem.spec.max_iters {
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for ((t, &x), &g) in trial.iter_mut().zip(&y).zip(&gy) {
                *t = x - alpha * g;
            }
            problem.clamp_values(&mut trial);
            let d: Vec<f64> = trial.iter().zip(&y).map(|(t, x)| t - x).collect();
            let dd = dot(&d, &d);
            let bound = ey + dot(&gy, &d) + dd / (2.0 * alpha);
            match ctx.energy_and_reduced_gradient(&trial) {
                // For convex J, (∇J(x) − ∇J(y))·d ≤ |d|²/2α implies the
                // quadratic bound and stays meaningful below energy round-off.
                Ok((e, g))
                    if e <= bound
                        || g.iter()
                            .zip(&gy)
                            .zip(&d)
                            .map(|((a, b), d)| (a - b) * d)
                            .sum::<f64>()
                            <= dd / (2.0 * alpha) =>
                {
                    accepted = Some((e, g));
                    break;
                }
                Ok(_) | Err(EnergyError::Overflow { .. }) => alpha *= ARMIJO_SHRINK,
                Err(e) => return Err(e.into()),
            }
        }
        let Some((e_new, g_new)) = accepted else {
            log::warn!("line search stalled at iteration {iterations}, residual {residual:e}");
            break;
        };
        let used = alpha;
        let gradient_restart = y
            .iter()
            .zip(&trial)
            .zip(&u)
            .map(|((y, x), xp)| (y - x) * (x - xp))
            .sum::<f64>()
            > 0.0;
        let restart = e_new > energy + ENERGY_SLACK * energy.abs() || gradient_restart;
        let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = if restart {
            0.0
        } else {
            (momentum - 1.0) / next
        };
        momentum = if restart { 1.0 } else { next };
        let previous = std::mem::replace(&mut u, trial.clone());
        energy = e_new;
        grad = g_new;
        residual = problem.kkt_residual(&u, &grad);
        iterations += 1;
        trace.push(TraceEntry {
            energy,
            step: used,
            residual,
        });
        if beta == 0.0 {
            y.copy_from_slice(&u);
            ey = energy;
            gy.copy_from_slice(&grad);
        } else {
            for ((yv, &x), &xp) in y.iter_mut().zip(&u).zip(&previous) {
                *yv = x + beta * (x - xp);
            }
            problem.clamp_values(&mut y);
            match ctx.energy_and_reduced_gradient(&y) {
                Ok((e, g)) => {
                    ey = e;
                    gy = g;
                }
                Err(EnergyError::Overflow { .. }) => {
                    y.copy_from_slice(&u);
                    ey = energy;
                    gy.copy_from_slice(&grad);
                    momentum = 1.0;
                }
                Err(e) => return Err(e.into()),
            }
        }
        // Allow the step to grow back after conservative backtracking.
        alpha = (alpha * 2.0).min(1e12);
    }
    finish(problem, u, energy, grad, iterations, trace)
}

/// `a_{p,n}(u, v − u) − Σ w_i f_i (v_i − u_i)`.
pub fn vi_residual(
    problem: &AssembledProblem,
    u: &GridFunction,
    v: &GridFunction,
) -> Result<f64, SolveError> {
    problem.check_feasible(u, 1e-12)?;
    problem.check_feasible(v, 1e-12)?;
    let diff = GridFunction::from_raw(
        u.mesh_id(),
        v.values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| a - b)
            .collect(),
        v.boundary_values()
            .iter()
            .zip(u.boundary_values())
            .map(|(a, b)| a - b)
            .collect(),
    );
    let a = problem.ctx.form_a(u, &diff)?;
    let load: f64 = diff
        .values()
        .iter()
        .zip(problem.mesh().interior_weights())
        .zip(problem.f.values())
        .map(|((d, w), f)| d * w * f)
        .sum();
    Ok(a - load)
}

/// Worst-case KKT quantities of a solve, measured on `2 w_i L_i − w_i f_i`
/// plus the Robin coupling at nodes that feed boundary traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktDiagnostics {
    pub tol: f64,
    pub inactive_max_abs: f64,
    pub lower_min: f64,
    pub upper_max: f64,
    pub violations: usize,
    pub nodes: usize,
}

impl KktDiagnostics {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

pub fn kkt_diagnostics(
    problem: &AssembledProblem,
    report: &SolveReport,
) -> Result<KktDiagnostics, SolveError> {
    let u = report.solution.values();
    let l = problem.ctx.operator_values(u)?;
    let coupling = problem.ctx.boundary_coupling(u);
    let tol = problem.spec.tol;
    let mut d = KktDiagnostics {
        tol,
        inactive_max_abs: 0.0,
        lower_min: f64::INFINITY,
        upper_max: f64::NEG_INFINITY,
        violations: 0,
        nodes: u.len(),
    };
    for (i, &class) in report.classes.iter().enumerate() {
        let w = problem.mesh().interior_weights()[i];
        let r = 2.0 * w * l[i] - w * problem.f.values()[i] + coupling[i];
        let ok = match class {
            NodeClass::Inactive => {
                d.inactive_max_abs = d.inactive_max_abs.max(r.abs());
                r.abs() <= tol
            }
            NodeClass::Lower => {
                d.lower_min = d.lower_min.min(r);
                r >= -tol
            }
            NodeClass::Upper => {
                d.upper_max = d.upper_max.max(r);
                r <= tol
            }
        };
        if !ok {
            d.violations += 1;
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LsClass {
    Inactive,
    Lower,
    Upper,
    /// `φ₁ = φ₂` at the node.
    Equality,
}

impl LsClass {
    pub const ALL: [LsClass; 4] = [
        LsClass::Inactive,
        LsClass::Lower,
        LsClass::Upper,
        LsClass::Equality,
    ];
    pub fn as_str(self) -> &'static str {
        match self {
            LsClass::Inactive => "inactive",
            LsClass::Lower => "lower",
            LsClass::Upper => "upper",
            LsClass::Equality => "equality",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LsRow {
    pub node: usize,
    pub class: LsClass,
    pub lu: f64,
    pub lphi1: f64,
    pub lphi2: f64,
    /// `f` as seen by the collocated operator: `(f_i − B_i / w_i) / 2`, with
    /// `B_i` the Robin coupling.
    pub f_eff: f64,
    pub printed: bool,
    pub mirrored: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LsCount {
    pub class: String,
    pub nodes: usize,
    pub printed_holds: usize,
    pub mirrored_holds: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LsReport {
    pub tol: f64,
    pub rows: Vec<LsRow>,
    pub counts: Vec<LsCount>,
}

/// Per-node Lewy–Stampacchia sandwich in both orientations:
/// printed `L φ₂ ∨ f ≤ L u ≤ L φ₁ ∧ f`, mirrored `L φ₂ ∧ f ≤ L u ≤ L φ₁ ∨ f`.
pub fn lewy_stampacchia_report(
    problem: &AssembledProblem,
    report: &SolveReport,
) -> Result<LsReport, SolveError> {
    let ctx = &problem.ctx;
    let u = report.solution.values();
    let lu = ctx.operator_values(u)?;
    let l1 = ctx.operator_values(problem.lower.values())?;
    let l2 = ctx.operator_values(problem.upper.values())?;
    let coupling = ctx.boundary_coupling(u);
    let fmax = problem
        .f
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-3 * fmax;
    let w = problem.mesh().interior_weights();
    let mut rows = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let class = if problem.lower.values()[i] == problem.upper.values()[i] {
            LsClass::Equality
        } else {
            match report.classes[i] {
                NodeClass::Inactive => LsClass::Inactive,
                NodeClass::Lower => LsClass::Lower,
                NodeClass::Upper => LsClass::Upper,
            }
        };
        let f_eff = 0.5 * (problem.f.values()[i] - coupling[i] / w[i]);
        let printed = l2[i].max(f_eff) <= lu[i] + tol && lu[i] <= l1[i].min(f_eff) + tol;
        let mirrored = l2[i].min(f_eff) <= lu[i] + tol && lu[i] <= l1[i].max(f_eff) + tol;
        rows.push(LsRow {
            node: i,
            class,
            lu: lu[i],
            lphi1: l1[i],
            lphi2: l2[i],
            f_eff,
            printed,
            mirrored,
        });
    }
    let counts = LsClass::ALL
        .iter()
        .map(|&c| {
            let mine = rows.iter().filter(|r| r.class == c);
            LsCount {
                class: c.as_str().to_string(),
                nodes: mine.clone().count(),
                printed_holds: mine.clone().filter(|r| r.printed).count(),
                mirrored_holds: mine.filter(|r| r.mirrored).count(),
            }
        })
        .collect();
    Ok(LsReport { tol, rows, counts })
}

/// `(seminorm + boundary sum) / ‖u‖_∞^p`, the ratio bounded below by the
/// norm equivalence on each mesh. `None` for `u ≡ 0`.
pub fn norm_equivalence_ratio(
    ctx: &EnergyContext,
    u: &GridFunction,
) -> Result<Option<f64>, SolveError> {
    let sup = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup == 0.0 {
        return Ok(None);
    }
    let (pairs, boundary) = ctx.norm_parts(u)?;
    Ok(Some((pairs + boundary) / sup.powf(ctx.p())))
}
