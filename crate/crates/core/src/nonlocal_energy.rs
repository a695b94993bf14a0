//! Discrete energy `J_{p,n}`, its gradient, the collocated regional
//! fractional p-Laplacian and the form `a_{p,n}`.
//!
//! With interior weights `w_i`, pair kernel `k_ij = w_i w_j / d_ij^{2+sp}`
//! and `ψ(t) = |t|^{p-2} t`:
//!
//! ```text
//! J(u)    = (1/p) Σ_{i≠j} k_ij |u_i - u_j|^p - Σ_i w_i f_i u_i
//!           + (δ_n/p) Σ_k ℓ_k b_k |u^∂_k|^p
//! L_i(u)  = Σ_{j≠i} w_j ψ(u_i - u_j) / d_ij^{2+sp}
//! ∂J/∂u_i = 2 w_i L_i(u) - w_i f_i
//! ∂J/∂u^∂_k = δ_n ℓ_k b_k ψ(u^∂_k)
//! ```
//!
//! Pairs are processed in tiles of [`TILE`] nodes. Tile row `I` covers the
//! tiles `J ≥ I` and owns a private accumulator; the accumulators are summed
//! in tile order afterwards, so results are bit-identical for any worker
//! count.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::discretization::{DomainMesh, GridFunction, MeshError};

pub const TILE: usize = 128;

/// Partial sums above this magnitude abort the evaluation.
pub const OVERFLOW_LIMIT: f64 = 1e300;

/// Kernels with more pairs than this are recomputed on the fly instead of
/// being cached (8 bytes per pair).
pub const MAX_CACHED_PAIRS: usize = 40_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("exponents violate 2 < s·p < p with 0 < s < 1 (s = {s}, p = {p})")]
    InvalidExponents { s: f64, p: f64 },
    #[error("b must be positive at every boundary node; b = {value} at node {index}")]
    NonPositiveB { index: usize, value: f64 },
    #[error("non-finite or overflowing partial sum in {what}")]
    Overflow { what: &'static str },
    #[error("grid function length {got} does not match the mesh ({expected})")]
    Length { got: usize, expected: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// `|t|^{q} t` with fast paths for small integer `q`.
#[derive(Debug, Clone, Copy)]
enum SignedPower {
    Int(i32),
    Real(f64),
}

impl SignedPower {
    fn new(q: f64) -> Self {
        if q.fract() == 0.0 && (0.0..=64.0).contains(&q) {
            SignedPower::Int(q as i32)
        } else {
            SignedPower::Real(q)
        }
    }

    #[inline(always)]
    fn apply(self, t: f64) -> f64 {
        match self {
            SignedPower::Int(0) => t,
            SignedPower::Int(1) => t.abs() * t,
            SignedPower::Int(2) => t * t * t,
            SignedPower::Int(q) => t.abs().powi(q) * t,
            SignedPower::Real(q) => {
                if t == 0.0 {
                    0.0
                } else {
                    t.abs().powf(q) * t
                }
            }
        }
    }
}

enum KernelStore {
    /// Blocks for tile pairs `(I, J)` with `J ≥ I`, row-major.
    Cached(Vec<Vec<f64>>),
    OnTheFly,
}

pub struct EnergyContext {
    mesh: Arc<DomainMesh>,
    s: f64,
    p: f64,
    f: Vec<f64>,
    b: Vec<f64>,
    psi: SignedPower,
    tiles: Vec<(usize, usize)>,
    kernel: KernelStore,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for EnergyContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnergyContext")
            .field("nodes", &self.mesh.interior_len())
            .field("s", &self.s)
            .field("p", &self.p)
            .field("workers", &self.workers())
            .finish()
    }
}

/// Checks the standing assumption `2 < s·p < p`, `0 < s < 1`.
pub fn check_exponents(s: f64, p: f64) -> Result<(), EnergyError> {
    let sp = s * p;
    if s > 0.0 && s < 1.0 && p.is_finite() && sp > 2.0 && sp < p {
        Ok(())
    } else {
        Err(EnergyError::InvalidExponents { s, p })
    }
}

impl EnergyContext {
    pub fn new(
        mesh: Arc<DomainMesh>,
        s: f64,
        p: f64,
        f: &GridFunction,
        b: &GridFunction,
        workers: usize,
    ) -> Result<Self, EnergyError> {
        check_exponents(s, p)?;
        Self::new_unchecked(mesh, s, p, f, b, workers)
    }

    /// Skips the exponent guard. For linear-case checks at `p = 2`.
    pub(crate) fn new_unchecked(
        mesh: Arc<DomainMesh>,
        s: f64,
        p: f64,
        f: &GridFunction,
        b: &GridFunction,
        workers: usize,
    ) -> Result<Self, EnergyError> {
        f.check_mesh(&mesh)?;
        b.check_mesh(&mesh)?;
        if let Some((index, &value)) = b
            .boundary_values()
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0))
        {
            return Err(EnergyError::NonPositiveB { index, value });
        }
        let m = mesh.interior_len();
        let tiles = (0..m)
            .step_by(TILE)
            .map(|start| (start, (start + TILE).min(m)))
            .collect();
        let pool = if workers > 1 {
            Some(Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| EnergyError::ThreadPool(e.to_string()))?,
            ))
        } else {
            None
        };
        let mut ctx = Self {
            mesh,
            s,
            p,
            f: f.values().to_vec(),
            b: b.boundary_values().to_vec(),
            psi: SignedPower::new(p - 2.0),
            tiles,
            kernel: KernelStore::OnTheFly,
            pool,
        };
        if m * (m - 1) / 2 <= MAX_CACHED_PAIRS {
            let blocks = ctx.run_tiles(|ti| {
                (ti..ctx.tiles.len())
                    .map(|tj| ctx.kernel_block(ti, tj))
                    .collect::<Vec<_>>()
            });
            ctx.kernel = KernelStore::Cached(blocks.into_iter().flatten().collect());
        }
        Ok(ctx)
    }

    pub fn mesh(&self) -> &DomainMesh {
        &self.mesh
    }
    pub fn mesh_arc(&self) -> &Arc<DomainMesh> {
        &self.mesh
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn f_values(&self) -> &[f64] {
        &self.f
    }
    pub fn b_values(&self) -> &[f64] {
        &self.b
    }
    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    /// Kernel exponent `2 + s·p`.
    pub fn kernel_exponent(&self) -> f64 {
        2.0 + self.s * self.p
    }

    /// `w_i w_j / d_ij^{2+sp}` for `i ≠ j`.
    pub fn pair_kernel(&self, i: usize, j: usize) -> f64 {
        let nodes = self.mesh.interior_nodes();
        let w = self.mesh.interior_weights();
        let half = -0.5 * self.kernel_exponent();
        w[i] * w[j] * nodes[i].dist2(nodes[j]).powf(half)
    }

    fn kernel_block(&self, ti: usize, tj: usize) -> Vec<f64> {
        let (a0, a1) = self.tiles[ti];
        let (b0, b1) = self.tiles[tj];
        let mut block = Vec::with_capacity((a1 - a0) * (b1 - b0));
        for a in a0..a1 {
            for b in b0..b1 {
                block.push(if a == b { 0.0 } else { self.pair_kernel(a, b) });
            }
        }
        block
    }

    fn block_index(&self, ti: usize, tj: usize) -> usize {
        let t = self.tiles.len();
        ti * t - ti * ti.saturating_sub(1) / 2 + (tj - ti)
    }

    fn run_tiles<T, F>(&self, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let n = self.tiles.len();
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&task).collect()),
            None => (0..n).map(task).collect(),
        }
    }

    /// One sweep over all pairs, returning `S = Σ_{i<j} k_ij |Δ_ij|^p` and
    /// the row sums `R_i = Σ_{j≠i} k_ij ψ(u_i - u_j)`.
    fn pair_pass(&self, u: &[f64]) -> Result<(f64, Vec<f64>), EnergyError> {
        let m = self.mesh.interior_len();
        if u.len() != m {
            return Err(EnergyError::Length {
                got: u.len(),
                expected: m,
            });
        }
        let psi = self.psi;
        let partials = self.run_tiles(|ti| {
            let (a0, a1) = self.tiles[ti];
            let mut local = vec![0.0; m - a0];
            let mut energy = 0.0;
            for tj in ti..self.tiles.len() {
                let (b0, b1) = self.tiles[tj];
                let width = b1 - b0;
                let scratch;
                let block: &[f64] = match &self.kernel {
                    KernelStore::Cached(blocks) => &blocks[self.block_index(ti, tj)],
                    KernelStore::OnTheFly => {
                        scratch = self.kernel_block(ti, tj);
                        &scratch
                    }
                };
                for a in a0..a1 {
                    let row = &block[(a - a0) * width..(a - a0 + 1) * width];
                    let ua = u[a];
                    let start = if ti == tj { a + 1 } else { b0 };
                    let mut row_sum = 0.0;
                    let mut row_energy = 0.0;
                    for b in start..b1 {
                        let d = ua - u[b];
                        let t = row[b - b0] * psi.apply(d);
                        row_sum += t;
                        row_energy += t * d;
                        local[b - a0] -= t;
                    }
                    local[a - a0] += row_sum;
                    energy += row_energy;
                }
            }
            (energy, local)
        });
        let mut rows = vec![0.0; m];
        let mut total = 0.0;
        for (ti, (energy, local)) in partials.into_iter().enumerate() {
            let a0 = self.tiles[ti].0;
            total += energy;
            for (r, l) in rows[a0..].iter_mut().zip(&local) {
                *r += l;
            }
        }
        if !total.is_finite() || total.abs() > OVERFLOW_LIMIT {
            return Err(EnergyError::Overflow {
                what: "pair energy",
            });
        }
        if rows
            .iter()
            .any(|r| !r.is_finite() || r.abs() > OVERFLOW_LIMIT)
        {
            return Err(EnergyError::Overflow {
                what: "pair gradient",
            });
        }
        Ok((total, rows))
    }

    fn boundary_energy(&self, trace: &[f64]) -> Result<f64, EnergyError> {
        let mesh = &self.mesh;
        let sum: f64 = trace
            .iter()
            .zip(mesh.boundary_weights())
            .zip(&self.b)
            .map(|((&v, &l), &b)| l * b * self.psi.apply(v) * v)
            .sum();
        let e = mesh.delta_n() * sum / self.p;
        if !e.is_finite() || e.abs() > OVERFLOW_LIMIT {
            return Err(EnergyError::Overflow {
                what: "boundary energy",
            });
        }
        Ok(e)
    }

    fn boundary_gradient(&self, trace: &[f64]) -> Vec<f64> {
        let delta = self.mesh.delta_n();
        trace
            .iter()
            .zip(self.mesh.boundary_weights())
            .zip(&self.b)
            .map(|((&v, &l), &b)| delta * l * b * self.psi.apply(v))
            .collect()
    }

    fn load(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(self.mesh.interior_weights())
            .zip(&self.f)
            .map(|((&u, &w), &f)| w * f * u)
            .sum()
    }

    fn energy_parts(&self, u: &[f64], trace: &[f64]) -> Result<(f64, Vec<f64>), EnergyError> {
        let (pairs, rows) = self.pair_pass(u)?;
        let e = 2.0 * pairs / self.p - self.load(u) + self.boundary_energy(trace)?;
        if !e.is_finite() {
            return Err(EnergyError::Overflow { what: "energy" });
        }
        Ok((e, rows))
    }

    fn check(&self, u: &GridFunction) -> Result<(), EnergyError> {
        u.check_mesh(&self.mesh)?;
        Ok(())
    }

    pub fn energy(&self, u: &GridFunction) -> Result<f64, EnergyError> {
        self.check(u)?;
        Ok(self.energy_parts(u.values(), u.boundary_values())?.0)
    }

    /// Gradient with respect to the interior values and, separately, the
    /// boundary values of `u`.
    pub fn gradient(&self, u: &GridFunction) -> Result<GridFunction, EnergyError> {
        self.check(u)?;
        let (_, rows) = self.pair_pass(u.values())?;
        let interior = self.interior_gradient(&rows);
        let boundary = self.boundary_gradient(u.boundary_values());
        Ok(GridFunction::from_raw(self.mesh.id(), interior, boundary))
    }

    fn interior_gradient(&self, rows: &[f64]) -> Vec<f64> {
        rows.iter()
            .zip(self.mesh.interior_weights())
            .zip(&self.f)
            .map(|((&r, &w), &f)| 2.0 * r - w * f)
            .collect()
    }

    /// Collocated `(-Δ_p)^s_{Ω_n} u` at the interior nodes.
    pub fn discrete_operator(&self, u: &GridFunction) -> Result<Vec<f64>, EnergyError> {
        self.check(u)?;
        self.operator_values(u.values())
    }

    pub(crate) fn operator_values(&self, u: &[f64]) -> Result<Vec<f64>, EnergyError> {
        let (_, rows) = self.pair_pass(u)?;
        Ok(rows
            .iter()
            .zip(self.mesh.interior_weights())
            .map(|(&r, &w)| r / w)
            .collect())
    }

    /// `a_{p,n}(u, v)`.
    pub fn form_a(&self, u: &GridFunction, v: &GridFunction) -> Result<f64, EnergyError> {
        self.check(u)?;
        self.check(v)?;
        let (_, rows) = self.pair_pass(u.values())?;
        let pair: f64 = rows
            .iter()
            .zip(v.values())
            .map(|(&r, &v)| 2.0 * r * v)
            .sum();
        let boundary: f64 = self
            .boundary_gradient(u.boundary_values())
            .iter()
            .zip(v.boundary_values())
            .map(|(g, v)| g * v)
            .sum();
        let a = pair + boundary;
        if !a.is_finite() {
            return Err(EnergyError::Overflow { what: "form" });
        }
        Ok(a)
    }

    /// `Σ_{i≠j} k_ij |u_i - u_j|^p` and `δ_n Σ_k ℓ_k b_k |u^∂_k|^p`.
    pub fn norm_parts(&self, u: &GridFunction) -> Result<(f64, f64), EnergyError> {
        self.check(u)?;
        let (pairs, _) = self.pair_pass(u.values())?;
        let boundary = self.boundary_energy(u.boundary_values())? * self.p;
        Ok((2.0 * pairs, boundary))
    }

    /// Energy and gradient of `u ↦ J(u, trace(u))` as a function of the
    /// interior values alone: boundary partial derivatives are added to the
    /// interior node each boundary node copies.
    pub fn energy_and_reduced_gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>), EnergyError> {
        let trace = self.mesh.trace(u);
        let (e, rows) = self.energy_parts(u, &trace)?;
        let mut g = self.interior_gradient(&rows);
        for (&src, gb) in self
            .mesh
            .trace_source()
            .iter()
            .zip(self.boundary_gradient(&trace))
        {
            g[src] += gb;
        }
        Ok((e, g))
    }

    /// Robin coupling `Σ_{k→i} δ_n ℓ_k b_k ψ(u^∂_k)` collected on each
    /// interior node.
    pub fn boundary_coupling(&self, u: &[f64]) -> Vec<f64> {
        let trace = self.mesh.trace(u);
        let mut c = vec![0.0; u.len()];
        for (&src, gb) in self
            .mesh
            .trace_source()
            .iter()
            .zip(self.boundary_gradient(&trace))
        {
            c[src] += gb;
        }
        c
    }

    pub fn reduced_energy(&self, u: &[f64]) -> Result<f64, EnergyError> {
        let trace = self.mesh.trace(u);
        Ok(self.energy_parts(u, &trace)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_mesh;
    use crate::geometry::{Point, PrefractalDomain};

    fn two_node_ctx(s: f64, p: f64) -> EnergyContext {
        let mesh = DomainMesh::from_parts(
            0,
            0.1,
            vec![Point::new(0.05, 0.05), Point::new(0.35, 0.45)],
            vec![0.01, 0.01],
            vec![],
            vec![],
            1.0,
        )
        .unwrap();
        let zero = GridFunction::constant(&mesh, 0.0);
        let one = GridFunction::constant(&mesh, 1.0);
        EnergyContext::new(Arc::new(mesh), s, p, &zero, &one, 1).unwrap()
    }

    #[test]
    fn exponent_guard() {
        assert!(check_exponents(0.8, 3.0).is_ok());
        assert!(check_exponents(0.5, 3.0).is_err());
        assert!(check_exponents(1.0, 3.0).is_err());
        assert!(check_exponents(0.9, 2.1).is_err());
    }

    #[test]
    fn two_node_energy_formula() {
        let ctx = two_node_ctx(0.8, 3.0);
        let u = GridFunction::new(ctx.mesh(), vec![0.3, -0.2], vec![]).unwrap();
        let d = 0.5f64;
        let expected = 2.0 / 3.0 * 0.01 * 0.01 * 0.5f64.powi(3) / d.powf(2.0 + 2.4);
        let e = ctx.energy(&u).unwrap();
        assert!(
            (e - expected).abs() <= 1e-15 * expected.abs(),
            "{e} vs {expected}"
        );
    }

    #[test]
    fn signed_power_paths_agree() {
        for q in [0.0, 1.0, 2.0, 5.0, 30.0] {
            let fast = SignedPower::new(q);
            for t in [-1.7f64, -0.3, 0.0, 0.2, 2.5] {
                let slow = if t == 0.0 { 0.0 } else { t.abs().powf(q) * t };
                let v = fast.apply(t);
                assert!(
                    (v - slow).abs() <= 1e-13 * slow.abs().max(1e-300),
                    "q={q} t={t}"
                );
            }
        }
    }

    #[test]
    fn block_index_covers_upper_triangle() {
        let mesh = build_mesh(&PrefractalDomain::new(1).unwrap(), 1.0 / 40.0, 1).unwrap();
        let mesh = Arc::new(mesh);
        let zero = GridFunction::constant(&mesh, 0.0);
        let one = GridFunction::constant(&mesh, 1.0);
        let ctx = EnergyContext::new(mesh, 0.8, 3.0, &zero, &one, 1).unwrap();
        let t = ctx.tiles.len();
        assert!(t > 3);
        let mut seen = Vec::new();
        for i in 0..t {
            for j in i..t {
                seen.push(ctx.block_index(i, j));
            }
        }
        let expected: Vec<usize> = (0..t * (t + 1) / 2).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn constant_function_has_no_pair_energy() {
        let mesh = Arc::new(build_mesh(&PrefractalDomain::new(1).unwrap(), 1.0 / 12.0, 2).unwrap());
        let f = GridFunction::constant(&mesh, 2.0);
        let b = GridFunction::constant(&mesh, 1.5);
        let ctx = EnergyContext::new(mesh.clone(), 0.8, 3.0, &f, &b, 1).unwrap();
        let c: f64 = -0.7;
        let u = GridFunction::constant(&mesh, c);
        let load: f64 = mesh.interior_weights().iter().map(|w| w * 2.0).sum();
        let bnd: f64 =
            mesh.boundary_weights().iter().map(|l| l * 1.5).sum::<f64>() * mesh.delta_n() / 3.0
                * c.abs().powi(3);
        let e = ctx.energy(&u).unwrap();
        assert!((e - (-c * load + bnd)).abs() < 1e-14);
        let g = ctx.gradient(&u).unwrap();
        for (gi, w) in g.values().iter().zip(mesh.interior_weights()) {
            assert_eq!(*gi, -w * 2.0);
        }
        assert!(ctx.discrete_operator(&u).unwrap().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn gradient_is_linear_at_p_two() {
        let mesh = Arc::new(build_mesh(&PrefractalDomain::new(1).unwrap(), 1.0 / 12.0, 2).unwrap());
        let zero = GridFunction::constant(&mesh, 0.0);
        let one = GridFunction::constant(&mesh, 1.0);
        let ctx = EnergyContext::new_unchecked(mesh.clone(), 0.8, 2.0, &zero, &one, 1).unwrap();
        let m = mesh.interior_len();
        let u: Vec<f64> = (0..m).map(|i| (i as f64 * 0.37).sin()).collect();
        let v: Vec<f64> = (0..m).map(|i| (i as f64 * 1.3).cos()).collect();
        let (a, b) = (0.7, -1.9);
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let grad = |x: &[f64]| {
            let g = GridFunction::from_interior(&mesh, x.to_vec()).unwrap();
            ctx.gradient(&g).unwrap().into_values()
        };
        let (gu, gv, gm) = (grad(&u), grad(&v), grad(&mix));
        let scale = gm.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..m {
            let lin = a * gu[i] + b * gv[i];
            assert!((gm[i] - lin).abs() <= 1e-12 * scale, "node {i}");
        }
    }

    #[test]
    fn cached_and_streamed_kernels_agree_bitwise() {
        let mesh = Arc::new(build_mesh(&PrefractalDomain::new(1).unwrap(), 1.0 / 20.0, 2).unwrap());
        let f = GridFunction::constant(&mesh, 0.3);
        let b = GridFunction::constant(&mesh, 1.0);
        let cached = EnergyContext::new(mesh.clone(), 0.8, 3.0, &f, &b, 1).unwrap();
        assert!(matches!(cached.kernel, KernelStore::Cached(_)));
        let mut streamed = EnergyContext::new(mesh.clone(), 0.8, 3.0, &f, &b, 1).unwrap();
        streamed.kernel = KernelStore::OnTheFly;
        let u: Vec<f64> = (0..mesh.interior_len()).map(|i| (i as f64).sqrt().sin()).collect();
        let (ea, ga) = cached.energy_and_reduced_gradient(&u).unwrap();
        let (eb, gb) = streamed.energy_and_reduced_gradient(&u).unwrap();
        assert_eq!(ea.to_bits(), eb.to_bits());
        assert_eq!(ga, gb);
    }
}
