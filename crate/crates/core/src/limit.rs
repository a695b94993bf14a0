//! The p = ∞ limit problems: maximize `Σ w_i f_i v_i` over the discrete
//! Hölder ball intersected with the obstacles, plus McShane extensions,
//! obstacle envelopes and lattice clipping.

use serde::Serialize;
use thiserror::Error;

use crate::discretization::{DomainMesh, GridFunction, MeshError, MeshId};
use crate::geometry::Point;

/// Slack allowed when checking that inputs satisfy the Hölder bounds.
pub const HOLDER_CHECK_SLACK: f64 = 1e-9;

const CHECK_EVERY: usize = 100;

#[derive(Debug, Error)]
pub enum LimitError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("constraints are infeasible: {0}")]
    Infeasible(String),
    #[error("source is not {c2}-Hölder: |u_{i} - u_{j}| exceeds the bound by {excess:e}")]
    NotHolder {
        c2: f64,
        i: usize,
        j: usize,
        excess: f64,
    },
    #[error("PDHG did not converge in {iterations} iterations (gap {gap:e}, violation {violation:e})")]
    NotConverged {
        iterations: usize,
        gap: f64,
        violation: f64,
        report: Box<LimitSolveReport>,
    },
    #[error("invalid limit problem: {0}")]
    Invalid(String),
}

/// Packed index of the pair `i < j` among `m` nodes.
#[inline]
fn pair_offset(m: usize, i: usize) -> usize {
    i * m - i * (i + 1) / 2
}

/// Feasible set `{φ₁ ≤ v ≤ φ₂, |v_i| ≤ C₁, |v_i − v_j| ≤ c_ij}`.
#[derive(Debug, Clone)]
pub struct HolderConstraintSet {
    mesh_id: MeshId,
    nodes: Vec<Point>,
    s: f64,
    c1: f64,
    c2: f64,
    /// `c_ij` for `i < j`, row-major.
    pair_bounds: Vec<f64>,
    phi1: GridFunction,
    phi2: GridFunction,
}

impl HolderConstraintSet {
    /// `c_ij = C₂ d_ij^s` and sup bound `C₁`.
    pub fn new(
        mesh: &DomainMesh,
        s: f64,
        c1: f64,
        c2: f64,
        phi1: &GridFunction,
        phi2: &GridFunction,
    ) -> Result<Self, LimitError> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(LimitError::Invalid(format!("Hölder exponent must lie in (0, 1], got {s}")));
        }
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(LimitError::Invalid(format!(
                "C1 and C2 must be positive, got {c1}, {c2}"
            )));
        }
        if c1 + c2 > 1.0 + 1e-12 {
            log::debug!("C1 + C2 = {} exceeds 1", c1 + c2);
        }
        let nodes = mesh.interior_nodes();
        let m = nodes.len();
        let mut pair_bounds = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                pair_bounds.push(c2 * nodes[i].dist(nodes[j]).powf(s));
            }
        }
        Self::assemble(mesh, s, c1, c2, pair_bounds, phi1, phi2)
    }

    /// The single bound `‖v‖_{s,∞} ≤ 1` split as `C₁ = C₂ = 1/2`.
    pub fn legacy(
        mesh: &DomainMesh,
        s: f64,
        phi1: &GridFunction,
        phi2: &GridFunction,
    ) -> Result<Self, LimitError> {
        Self::new(mesh, s, 0.5, 0.5, phi1, phi2)
    }

    /// Explicit pair bounds (row-major over `i < j`), for crafted instances.
    pub fn with_pair_bounds(
        mesh: &DomainMesh,
        sup_bound: f64,
        pair_bounds: Vec<f64>,
        phi1: &GridFunction,
        phi2: &GridFunction,
    ) -> Result<Self, LimitError> {
        let m = mesh.interior_len();
        if pair_bounds.len() != m * m.saturating_sub(1) / 2 {
            return Err(LimitError::Invalid(format!(
                "expected {} pair bounds, got {}",
                m * m.saturating_sub(1) / 2,
                pair_bounds.len()
            )));
        }
        if pair_bounds.iter().any(|&c| !(c >= 0.0)) {
            return Err(LimitError::Invalid("pair bounds must be nonnegative".into()));
        }
        Self::assemble(mesh, f64::NAN, sup_bound, f64::NAN, pair_bounds, phi1, phi2)
    }

    fn assemble(
        mesh: &DomainMesh,
        s: f64,
        c1: f64,
        c2: f64,
        pair_bounds: Vec<f64>,
        phi1: &GridFunction,
        phi2: &GridFunction,
    ) -> Result<Self, LimitError> {
        phi1.check_mesh(mesh)?;
        phi2.check_mesh(mesh)?;
        Ok(Self {
            mesh_id: mesh.id(),
            nodes: mesh.interior_nodes().to_vec(),
            s,
            c1,
            c2,
            pair_bounds,
            phi1: phi1.clone(),
            phi2: phi2.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }
    pub fn c1(&self) -> f64 {
        self.c1
    }
    /// `NaN` for explicit pair bounds.
    pub fn c2(&self) -> f64 {
        self.c2
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn obstacles(&self) -> (&GridFunction, &GridFunction) {
        (&self.phi1, &self.phi2)
    }

    pub fn pair_bound(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.pair_bounds[pair_offset(self.len(), i) + j - i - 1]
    }

    /// `[max(φ₁, −C₁), min(φ₂, C₁)]` per node.
    pub fn effective_box(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.phi1.values().iter().map(|&v| v.max(-self.c1)).collect();
        let hi = self.phi2.values().iter().map(|&v| v.min(self.c1)).collect();
        (lo, hi)
    }

    /// `max_{i<j} (|v_i − v_j| − c_ij)⁺`.
    pub fn holder_violation(&self, v: &[f64]) -> f64 {
        worst_pair(v, self.len(), |i, j| self.pair_bound(i, j))
            .map_or(0.0, |(_, _, e)| e.max(0.0))
    }

    pub fn box_violation(&self, v: &[f64]) -> f64 {
        let (lo, hi) = self.effective_box();
        v.iter()
            .zip(lo.iter().zip(&hi))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Checks that both obstacles satisfy all pair bounds and that the
    /// effective box is nonempty, which makes the set nonempty.
    pub fn check_feasible(&self) -> Result<(), LimitError> {
        for (name, phi) in [("phi1", &self.phi1), ("phi2", &self.phi2)] {
            if let Some((i, j, excess)) =
                worst_pair(phi.values(), self.len(), |i, j| self.pair_bound(i, j))
            {
                if excess > HOLDER_CHECK_SLACK {
                    return Err(LimitError::Infeasible(format!(
                        "{name} violates the pair bound at nodes ({i}, {j}) by {excess:e}"
                    )));
                }
            }
        }
        let (lo, hi) = self.effective_box();
        if let Some(i) = (0..self.len()).find(|&i| lo[i] > hi[i] + HOLDER_CHECK_SLACK) {
            return Err(LimitError::Infeasible(format!(
                "empty box at node {i}: [{}, {}]",
                lo[i], hi[i]
            )));
        }
        Ok(())
    }

    /// Maps a nearly feasible `v` into the set: average of the upper and
    /// lower McShane regularizations, clipped to the effective box. Exact for
    /// pair bounds that form a metric and box bounds that satisfy them.
    pub fn repair(&self, v: &[f64]) -> Vec<f64> {
        let m = self.len();
        let mut upper = v.to_vec();
        let mut lower = v.to_vec();
        for i in 0..m {
            for j in i + 1..m {
                let c = self.pair_bound(i, j);
                upper[i] = upper[i].min(v[j] + c);
                upper[j] = upper[j].min(v[i] + c);
                lower[i] = lower[i].max(v[j] - c);
                lower[j] = lower[j].max(v[i] - c);
            }
        }
        let (lo, hi) = self.effective_box();
        (0..m)
            .map(|i| (0.5 * (upper[i] + lower[i])).max(lo[i]).min(hi[i]))
            .collect()
    }
}

fn worst_pair(v: &[f64], m: usize, bound: impl Fn(usize, usize) -> f64) -> Option<(usize, usize, f64)> {
    let mut worst: Option<(usize, usize, f64)> = None;
    for i in 0..m {
        for j in i + 1..m {
            let e = (v[i] - v[j]).abs() - bound(i, j);
            if worst.map_or(true, |(_, _, w)| e > w) {
                worst = Some((i, j, e));
            }
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitSolveReport {
    pub maximizer: GridFunction,
    pub objective: f64,
    pub max_holder_violation: f64,
    pub max_box_violation: f64,
    pub iterations: usize,
    /// Primal-dual gap in objective units; an upper bound on the distance of
    /// `objective` from the optimum.
    pub duality_gap: f64,
    pub converged: bool,
}

/// Maximizes `Σ w_i f_i v_i` over `constraints` by primal-dual hybrid
/// gradient on `min −⟨w f, v⟩ + ι_box(v) + ι_{|Kv| ≤ c}` with `K` the pair
/// difference operator.
pub fn solve_limit(
    mesh: &DomainMesh,
    f_vals: &GridFunction,
    constraints: &HolderConstraintSet,
    tol: f64,
    max_iters: usize,
) -> Result<LimitSolveReport, LimitError> {
    f_vals.check_mesh(mesh)?;
    if constraints.mesh_id != mesh.id() {
        return Err(MeshError::MeshMismatch.into());
    }
    if !(tol > 0.0) {
        return Err(LimitError::Invalid(format!("tol must be positive, got {tol}")));
    }
    constraints.check_feasible()?;
    let m = mesh.interior_len();
    let (lo, hi) = constraints.effective_box();
    let weighted: Vec<f64> = f_vals
        .values()
        .iter()
        .zip(mesh.interior_weights())
        .map(|(f, w)| w * f)
        .collect();
    let objective = |v: &[f64]| -> f64 { weighted.iter().zip(v).map(|(a, b)| a * b).sum() };
    let build = |v: Vec<f64>, iterations: usize, gap: f64, converged: bool| {
        let boundary = mesh.trace(&v);
        LimitSolveReport {
            objective: objective(&v),
            max_holder_violation: constraints.holder_violation(&v),
            max_box_violation: constraints.box_violation(&v),
            maximizer: GridFunction::from_raw(mesh.id(), v, boundary),
            iterations,
            duality_gap: gap,
            converged,
        }
    };
    let scale = weighted.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let start = constraints.repair(&(0..m).map(|i| 0.0f64.max(lo[i]).min(hi[i])).collect::<Vec<_>>());
    if scale == 0.0 || m < 2 {
        // Any feasible point is optimal; for m = 1 only the box binds.
        let v = if m == 1 {
            vec![if weighted[0] > 0.0 { hi[0] } else if weighted[0] < 0.0 { lo[0] } else { start[0] }]
        } else {
            start
        };
        return Ok(build(v, 0, 0.0, true));
    }
    let cost: Vec<f64> = weighted.iter().map(|v| -v / scale).collect();

    let norm = operator_norm(m);
    let bounds = &constraints.pair_bounds;
    let kkt_error = |x: &[f64], y: &[f64], kty: &[f64]| -> (f64, f64) {
        let primal: f64 = cost.iter().zip(x).map(|(a, b)| a * b).sum();
        let dual = dual_objective(y, kty, &cost, &lo, &hi, bounds);
        let mut infeasible = 0.0;
        let mut k = 0;
        for i in 0..m {
            for j in i + 1..m {
                let e = (x[i] - x[j]).abs() - bounds[k];
                if e > 0.0 {
                    infeasible += e * e;
                }
                k += 1;
            }
        }
        (infeasible.sqrt() + (primal - dual).abs(), primal - dual)
    };

    let mut omega = 1.0;
    let mut x = start;
    let mut x_prev = x.clone();
    let mut y = vec![0.0; bounds.len()];
    let mut kty = vec![0.0; m];
    let mut x_sum = vec![0.0; m];
    let mut y_sum = vec![0.0; bounds.len()];
    let mut kty_sum = vec![0.0; m];
    let mut averaged = 0usize;
    let mut anchor_x = x.clone();
    let mut anchor_y = y.clone();
    let mut anchor_error = kkt_error(&x, &y, &kty).0;
    let mut previous_error = anchor_error;
    let mut since_restart = 0usize;
    let mut last_objective = objective(&x);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    let mut violation = f64::INFINITY;
    while iterations < max_iters {
        let tau = 1.0 / (omega * norm);
        let sigma = omega / norm;
        // Dual step at the extrapolated point 2x − x_prev.
        kty.iter_mut().for_each(|v| *v = 0.0);
        let mut k = 0;
        for i in 0..m {
            let xi = 2.0 * x[i] - x_prev[i];
            let mut acc = 0.0;
            for j in i + 1..m {
                let z = y[k] + sigma * (xi - (2.0 * x[j] - x_prev[j]));
                let t = sigma * bounds[k];
                let yk = if z > t {
                    z - t
                } else if z < -t {
                    z + t
                } else {
                    0.0
                };
                y[k] = yk;
                acc += yk;
                kty[j] -= yk;
                k += 1;
            }
            kty[i] += acc;
        }
        x_prev.copy_from_slice(&x);
        for i in 0..m {
            x[i] = (x[i] - tau * (kty[i] + cost[i])).max(lo[i]).min(hi[i]);
        }
        for (s, v) in x_sum.iter_mut().zip(&x) {
            *s += v;
        }
        for (s, v) in y_sum.iter_mut().zip(&y) {
            *s += v;
        }
        for (s, v) in kty_sum.iter_mut().zip(&kty) {
            *s += v;
        }
        averaged += 1;
        iterations += 1;
        since_restart += 1;

        if iterations % CHECK_EVERY != 0 && iterations != max_iters {
            continue;
        }
        // Restart candidate: the current iterate or the running average,
        // whichever has the smaller KKT error. `kty` belongs to `y`, so the
        // current pair is consistent.
        let inv = 1.0 / averaged as f64;
        let x_avg: Vec<f64> = x_sum.iter().map(|v| v * inv).collect();
        let y_avg: Vec<f64> = y_sum.iter().map(|v| v * inv).collect();
        let kty_avg: Vec<f64> = kty_sum.iter().map(|v| v * inv).collect();
        let (err_cur, _) = kkt_error(&x, &y, &kty);
        let (err_avg, _) = kkt_error(&x_avg, &y_avg, &kty_avg);
        let use_avg = err_avg < err_cur;
        let err = err_cur.min(err_avg);
        let (cx, cy, ckty) = if use_avg {
            (&x_avg, &y_avg, &kty_avg)
        } else {
            (&x, &y, &kty)
        };

        let repaired = constraints.repair(cx);
        let primal: f64 = cost.iter().zip(&repaired).map(|(a, b)| a * b).sum();
        let dual = dual_objective(cy, ckty, &cost, &lo, &hi, bounds);
        gap = (primal - dual).max(0.0) * scale;
        violation = constraints.holder_violation(cx);
        let obj = objective(cx);
        let change = (obj - last_objective).abs();
        last_objective = obj;
        let obj_repaired = -primal * scale;
        if best.as_ref().map_or(true, |(g, _)| gap < *g) {
            best = Some((gap, repaired.clone()));
        }
        log::debug!(
            "pdhg {iterations}: objective {obj_repaired:.12e} gap {gap:.3e} violation {violation:.3e} omega {omega:.3e}"
        );
        let rel = tol * (1.0 + obj_repaired.abs());
        if gap <= rel || (violation <= tol && change <= rel && gap <= 1e3 * rel) {
            return Ok(build(repaired, iterations, gap, true));
        }

        let restart = err <= 0.2 * anchor_error
            || (err <= 0.8 * anchor_error && err > previous_error)
            || since_restart >= (0.36 * iterations as f64) as usize + 10 * CHECK_EVERY;
        previous_error = err;
        if restart {
            let (nx, ny, nkty) = (cx.clone(), cy.clone(), ckty.clone());
            let dx = dist(&nx, &anchor_x);
            let dy = dist(&ny, &anchor_y);
            if dx > 1e-14 && dy > 1e-14 {
                // Primal weight: geometric smoothing towards ‖Δy‖/‖Δx‖.
                omega = (0.5 * (dy / dx).ln() + 0.5 * omega.ln()).exp().clamp(1e-6, 1e6);
            }
            x = nx;
            y = ny;
            kty = nkty;
            x_prev.copy_from_slice(&x);
            anchor_x.copy_from_slice(&x);
            anchor_y.copy_from_slice(&y);
            anchor_error = err;
            previous_error = err;
            x_sum.iter_mut().for_each(|v| *v = 0.0);
            y_sum.iter_mut().for_each(|v| *v = 0.0);
            kty_sum.iter_mut().for_each(|v| *v = 0.0);
            averaged = 0;
            since_restart = 0;
        }
    }
    let (gap_best, v) = best.unwrap_or((gap, constraints.repair(&x)));
    let report = build(v, iterations, gap_best, false);
    Err(LimitError::NotConverged {
        iterations,
        gap: gap_best,
        violation,
        report: Box::new(report),
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `‖K‖` for the pair difference operator on `m` nodes, by power iteration
/// on `KᵀK = m I − 11ᵀ` with a small safety factor.
fn operator_norm(m: usize) -> f64 {
    let mut x: Vec<f64> = (0..m).map(|i| ((i * 7919) % 97) as f64 - 48.0).collect();
    let mut lambda = 0.0;
    for _ in 0..50 {
        let mean: f64 = x.iter().sum::<f64>();
        let y: Vec<f64> = x.iter().map(|v| m as f64 * v - mean).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm / x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
    }
    (lambda * 1.01).min(2.0 * (m as f64 - 1.0)).max(1.0).sqrt()
}

/// Dual objective of the scaled LP at multipliers `y`:
/// `−Σ c_ij |y_ij| + Σ_i min_{x_i ∈ box} (Kᵀy + cost)_i x_i`.
fn dual_objective(y: &[f64], kty: &[f64], cost: &[f64], lo: &[f64], hi: &[f64], c: &[f64]) -> f64 {
    let pair: f64 = y.iter().zip(c).map(|(y, c)| c * y.abs()).sum();
    let boxed: f64 = (0..cost.len())
        .map(|i| {
            let r = kty[i] + cost[i];
            (r * lo[i]).min(r * hi[i])
        })
        .sum();
    boxed - pair
}

/// Checks `|u_i − u_j| ≤ C₂ d_ij^s` on all pairs within [`HOLDER_CHECK_SLACK`].
pub fn check_holder(nodes: &[Point], values: &[f64], c2: f64, s: f64) -> Result<(), LimitError> {
    if let Some((i, j, excess)) = worst_pair(values, nodes.len(), |i, j| c2 * nodes[i].dist(nodes[j]).powf(s)) {
        if excess > HOLDER_CHECK_SLACK {
            return Err(LimitError::NotHolder { c2, i, j, excess });
        }
    }
    Ok(())
}

/// Largest `|u_i − u_j| − C₂ d_ij^s` over all pairs (0 for fewer than two
/// nodes).
pub fn holder_excess(nodes: &[Point], values: &[f64], c2: f64, s: f64) -> f64 {
    worst_pair(values, nodes.len(), |i, j| c2 * nodes[i].dist(nodes[j]).powf(s))
        .map_or(0.0, |(_, _, e)| e)
}

fn sup_envelope(nodes: &[Point], values: &[f64], at: Point, c2: f64, s: f64) -> f64 {
    nodes
        .iter()
        .zip(values)
        .map(|(y, &v)| v - c2 * at.dist(*y).powf(s))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn inf_envelope(nodes: &[Point], values: &[f64], at: Point, c2: f64, s: f64) -> f64 {
    nodes
        .iter()
        .zip(values)
        .map(|(y, &v)| v + c2 * at.dist(*y).powf(s))
        .fold(f64::INFINITY, f64::min)
}

/// `ũ(x) = max_y {u(y) − C₂ |x − y|^s}` over the interior nodes of `source`,
/// evaluated at the interior and boundary nodes of `target`.
pub fn mcshane_extend(
    u: &GridFunction,
    source: &DomainMesh,
    target: &DomainMesh,
    c2: f64,
    s: f64,
) -> Result<GridFunction, LimitError> {
    u.check_mesh(source)?;
    if source.interior_len() == 0 {
        return Err(MeshError::EmptyMesh { h: source.spacing() }.into());
    }
    let nodes = source.interior_nodes();
    check_holder(nodes, u.values(), c2, s)?;
    let eval = |pts: &[Point]| -> Vec<f64> {
        pts.iter()
            .map(|&x| sup_envelope(nodes, u.values(), x, c2, s))
            .collect()
    };
    Ok(GridFunction::from_raw(
        target.id(),
        eval(target.interior_nodes()),
        eval(target.boundary_nodes()),
    ))
}

/// `φ̃₁ = max_y {φ₁(y) − C₂|x−y|^s}` and `φ̃₂ = min_y {φ₂(y) + C₂|x−y|^s}`
/// over the interior nodes of `mesh`.
pub fn envelopes(
    phi1: &GridFunction,
    phi2: &GridFunction,
    mesh: &DomainMesh,
    c2: f64,
    s: f64,
) -> Result<(GridFunction, GridFunction), LimitError> {
    phi1.check_mesh(mesh)?;
    phi2.check_mesh(mesh)?;
    let nodes = mesh.interior_nodes();
    let lower = |pts: &[Point]| -> Vec<f64> {
        pts.iter()
            .map(|&x| sup_envelope(nodes, phi1.values(), x, c2, s))
            .collect()
    };
    let upper = |pts: &[Point]| -> Vec<f64> {
        pts.iter()
            .map(|&x| inf_envelope(nodes, phi2.values(), x, c2, s))
            .collect()
    };
    Ok((
        GridFunction::from_raw(mesh.id(), lower(nodes), lower(mesh.boundary_nodes())),
        GridFunction::from_raw(mesh.id(), upper(nodes), upper(mesh.boundary_nodes())),
    ))
}

/// Componentwise `min(upper, max(w, lower))`.
pub fn lattice_clip(
    w: &GridFunction,
    lower: &GridFunction,
    upper: &GridFunction,
) -> Result<GridFunction, LimitError> {
    if w.mesh_id() != lower.mesh_id() || w.mesh_id() != upper.mesh_id() {
        return Err(MeshError::MeshMismatch.into());
    }
    let clip = |w: &[f64], lo: &[f64], hi: &[f64]| -> Vec<f64> {
        w.iter()
            .zip(lo.iter().zip(hi))
            .map(|(&w, (&lo, &hi))| hi.min(w.max(lo)))
            .collect()
    };
    Ok(GridFunction::from_raw(
        w.mesh_id(),
        clip(w.values(), lower.values(), upper.values()),
        clip(
            w.boundary_values(),
            lower.boundary_values(),
            upper.boundary_values(),
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_mesh;
    use crate::geometry::PrefractalDomain;

    fn tiny(points: &[(f64, f64)]) -> DomainMesh {
        let nodes = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
        DomainMesh::from_parts(0, 0.1, nodes, vec![1.0; points.len()], vec![], vec![], 1.0).unwrap()
    }

    #[test]
    fn two_node_hand_lp() {
        let mesh = tiny(&[(0.1, 0.1), (0.3, 0.1)]);
        let f = GridFunction::new(&mesh, vec![1.0, -1.0], vec![]).unwrap();
        let lo = GridFunction::constant(&mesh, -1.0);
        let hi = GridFunction::constant(&mesh, 1.0);
        let set = HolderConstraintSet::with_pair_bounds(&mesh, 1.0, vec![0.5], &lo, &hi).unwrap();
        let r = solve_limit(&mesh, &f, &set, 1e-10, 200_000).unwrap();
        assert!((r.objective - 0.5).abs() < 1e-6, "{}", r.objective);
        assert!(r.max_holder_violation <= 1e-12);
        let v = r.maximizer.values();
        assert!((v[0] - v[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn nonnegative_load_saturates_sup_bound() {
        let mesh = build_mesh(&PrefractalDomain::new(1).unwrap(), 1.0 / 9.0, 1).unwrap();
        let f = GridFunction::constant(&mesh, 1.0);
        let lo = GridFunction::constant(&mesh, -1.0);
        let hi = GridFunction::constant(&mesh, 1.0);
        let set = HolderConstraintSet::legacy(&mesh, 0.8, &lo, &hi).unwrap();
        let r = solve_limit(&mesh, &f, &set, 1e-9, 100_000).unwrap();
        for &v in r.maximizer.values() {
            assert!((v - 0.5).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn non_holder_obstacles_rejected() {
        let mesh = tiny(&[(0.1, 0.1), (0.2, 0.1)]);
        let f = GridFunction::constant(&mesh, 1.0);
        let lo = GridFunction::new(&mesh, vec![0.0, 0.9], vec![]).unwrap();
        let hi = GridFunction::constant(&mesh, 1.0);
        let set = HolderConstraintSet::legacy(&mesh, 0.8, &lo, &hi).unwrap();
        assert!(matches!(
            solve_limit(&mesh, &f, &set, 1e-8, 100),
            Err(LimitError::Infeasible(_))
        ));
    }

    #[test]
    fn single_source_extension() {
        let src = tiny(&[(0.2, 0.2)]);
        let target = tiny(&[(0.2, 0.2), (0.5, 0.6), (0.0, 0.0)]);
        let u = GridFunction::new(&src, vec![0.0], vec![]).unwrap();
        let e = mcshane_extend(&u, &src, &target, 0.7, 0.8).unwrap();
        for (x, v) in target.interior_nodes().iter().zip(e.values()) {
            let d = x.dist(Point::new(0.2, 0.2));
            assert_eq!(*v, -0.7 * d.powf(0.8));
        }
    }

    #[test]
    fn lattice_identity() {
        let mesh = tiny(&[(0.1, 0.1), (0.2, 0.1), (0.3, 0.3), (0.5, 0.2)]);
        let g = |v: Vec<f64>| GridFunction::new(&mesh, v, vec![]).unwrap();
        let w = g(vec![0.3, -0.4, 0.0, 2.0]);
        let lo = g(vec![-0.1, -0.2, 0.1, 0.0]);
        let hi = g(vec![0.2, 0.3, 0.4, 0.5]);
        let c = lattice_clip(&w, &lo, &hi).unwrap();
        for i in 0..4 {
            let (w, lo, hi) = (w.values()[i], lo.values()[i], hi.values()[i]);
            let a = w + (lo - w).max(0.0);
            let id = a - (a - hi).max(0.0);
            assert_eq!(c.values()[i], id);
        }
    }
}
