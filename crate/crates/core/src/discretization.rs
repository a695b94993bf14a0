//! Collocation meshes on `Ω_n` and grid functions over them.
//!
//! Interior nodes are the cell centers `((i + 1/2) h, (j + 1/2) h)` of one
//! global square grid with origin `(0, 0)`, kept when they lie strictly
//! inside `Ω_n`. Since the grid does not depend on the level, meshes of
//! different levels built with the same pitch share nodes exactly, and
//! `nodes(Ω_n) ⊆ nodes(Ω_{n+1})`.
//!
//! Boundary nodes are midpoints of `boundary_subdiv` equal pieces of each
//! segment of `K_n`. They carry the trace of a grid function, which is the
//! value at the nearest interior node.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field_expr::{FieldError, ScalarField};
use crate::geometry::{Point, PrefractalDomain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("no interior node found at spacing {h}")]
    EmptyMesh { h: f64 },
    #[error("spacing {h} is coarser than the level-{level} segment length {max}")]
    SpacingTooCoarse { h: f64, level: u32, max: f64 },
    #[error("spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("boundary subdivision must be at least 1")]
    InvalidSubdivision,
    #[error("meshes do not share a grid pitch ({fine} vs {coarse})")]
    PitchMismatch { fine: f64, coarse: f64 },
    #[error("coarse node {index} at ({x}, {y}) has no counterpart on the fine mesh")]
    NotNested { index: usize, x: f64, y: f64 },
    #[error("grid function belongs to a different mesh")]
    MeshMismatch,
    #[error("grid function has {got} {kind} values, mesh has {expected}")]
    LengthMismatch {
        kind: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("non-finite {kind} value at node {index}")]
    NonFinite { kind: &'static str, index: usize },
    #[error("field `{source_text}` at {kind} node {index}: {error}")]
    Field {
        source_text: String,
        kind: &'static str,
        index: usize,
        error: FieldError,
    },
}

/// Identity of a mesh; grid functions remember which mesh they live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeshId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Interior,
    Boundary,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Interior => "interior",
            NodeKind::Boundary => "boundary",
        }
    }
}

/// Trace sources are searched within this many pitches before falling back
/// to the global nearest interior node.
pub const TRACE_RADIUS_PITCHES: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct DomainMesh {
    id: MeshId,
    level: u32,
    spacing: f64,
    interior_nodes: Vec<Point>,
    interior_weights: Vec<f64>,
    grid_index: Vec<(i64, i64)>,
    boundary_nodes: Vec<Point>,
    boundary_weights: Vec<f64>,
    trace_source: Vec<usize>,
    delta_n: f64,
}

impl DomainMesh {
    /// Assembles a mesh from explicit node data. Grid indices are recovered
    /// from the coordinates, and trace sources by the nearest-node rule.
    pub fn from_parts(
        level: u32,
        spacing: f64,
        interior_nodes: Vec<Point>,
        interior_weights: Vec<f64>,
        boundary_nodes: Vec<Point>,
        boundary_weights: Vec<f64>,
        delta_n: f64,
    ) -> Result<Self, MeshError> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(MeshError::InvalidSpacing(spacing));
        }
        if interior_nodes.is_empty() {
            return Err(MeshError::EmptyMesh { h: spacing });
        }
        if interior_weights.len() != interior_nodes.len() {
            return Err(MeshError::LengthMismatch {
                kind: "interior weight",
                got: interior_weights.len(),
                expected: interior_nodes.len(),
            });
        }
        if boundary_weights.len() != boundary_nodes.len() {
            return Err(MeshError::LengthMismatch {
                kind: "boundary weight",
                got: boundary_weights.len(),
                expected: boundary_nodes.len(),
            });
        }
        let grid_index = interior_nodes
            .iter()
            .map(|p| {
                (
                    (p.x / spacing - 0.5).round() as i64,
                    (p.y / spacing - 0.5).round() as i64,
                )
            })
            .collect();
        let mut mesh = Self {
            id: MeshId(0),
            level,
            spacing,
            interior_nodes,
            interior_weights,
            grid_index,
            boundary_nodes,
            boundary_weights,
            trace_source: Vec::new(),
            delta_n,
        };
        mesh.trace_source = mesh.compute_trace_sources();
        mesh.id = mesh.fingerprint();
        Ok(mesh)
    }

    pub fn id(&self) -> MeshId {
        self.id
    }
    pub fn level(&self) -> u32 {
        self.level
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn interior_nodes(&self) -> &[Point] {
        &self.interior_nodes
    }
    pub fn interior_weights(&self) -> &[f64] {
        &self.interior_weights
    }
    pub fn grid_index(&self) -> &[(i64, i64)] {
        &self.grid_index
    }
    pub fn boundary_nodes(&self) -> &[Point] {
        &self.boundary_nodes
    }
    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }
    /// Interior node whose value each boundary node carries.
    pub fn trace_source(&self) -> &[usize] {
        &self.trace_source
    }
    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }
    pub fn interior_len(&self) -> usize {
        self.interior_nodes.len()
    }
    pub fn boundary_len(&self) -> usize {
        self.boundary_nodes.len()
    }

    /// Copy of this mesh with a different boundary renormalization factor.
    pub fn with_delta(mut self, delta_n: f64) -> Self {
        self.delta_n = delta_n;
        self.id = self.fingerprint();
        self
    }

    /// Boundary values obtained from interior values by the nearest-node rule.
    pub fn trace(&self, interior: &[f64]) -> Vec<f64> {
        self.trace_source.iter().map(|&i| interior[i]).collect()
    }

    /// True for interior nodes that carry at least one boundary value.
    pub fn is_trace_source(&self) -> Vec<bool> {
        let mut mark = vec![false; self.interior_len()];
        for &i in &self.trace_source {
            mark[i] = true;
        }
        mark
    }

    /// Map from grid index to interior node position.
    pub fn index_map(&self) -> HashMap<(i64, i64), usize> {
        self.grid_index
            .iter()
            .enumerate()
            .map(|(k, &g)| (g, k))
            .collect()
    }

    fn compute_trace_sources(&self) -> Vec<usize> {
        let map = self.index_map();
        let h = self.spacing;
        self.boundary_nodes
            .iter()
            .map(|&q| {
                let reach = (TRACE_RADIUS_PITCHES.ceil() as i64) + 1;
                let ci = (q.x / h - 0.5).round() as i64;
                let cj = (q.y / h - 0.5).round() as i64;
                let mut best: Option<(f64, usize)> = None;
                for dj in -reach..=reach {
                    for di in -reach..=reach {
                        if let Some(&k) = map.get(&(ci + di, cj + dj)) {
                            let d2 = self.interior_nodes[k].dist2(q);
                            if d2 <= (TRACE_RADIUS_PITCHES * h).powi(2) {
                                best = pick_nearest(best, d2, k);
                            }
                        }
                    }
                }
                best.map(|(_, k)| k).unwrap_or_else(|| {
                    let mut best = None;
                    for (k, p) in self.interior_nodes.iter().enumerate() {
                        best = pick_nearest(best, p.dist2(q), k);
                    }
                    best.expect("mesh has interior nodes").1
                })
            })
            .collect()
    }

    fn fingerprint(&self) -> MeshId {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        self.level.hash(&mut hasher);
        self.spacing.to_bits().hash(&mut hasher);
        self.delta_n.to_bits().hash(&mut hasher);
        self.interior_nodes.len().hash(&mut hasher);
        self.boundary_nodes.len().hash(&mut hasher);
        for p in self.interior_nodes.iter().chain(&self.boundary_nodes) {
            p.x.to_bits().hash(&mut hasher);
            p.y.to_bits().hash(&mut hasher);
        }
        for w in self.interior_weights.iter().chain(&self.boundary_weights) {
            w.to_bits().hash(&mut hasher);
        }
        MeshId(hasher.finish())
    }
}

fn pick_nearest(best: Option<(f64, usize)>, d2: f64, k: usize) -> Option<(f64, usize)> {
    match best {
        Some((bd, bk)) if bd < d2 || (bd == d2 && bk < k) => Some((bd, bk)),
        _ => Some((d2, k)),
    }
}

/// Default spacing `3^{-n}/4`.
pub fn default_spacing(level: u32) -> f64 {
    3f64.powi(-(level as i32)) / 4.0
}

pub const DEFAULT_BOUNDARY_SUBDIV: usize = 2;

pub fn build_mesh(
    domain: &PrefractalDomain,
    h: f64,
    boundary_subdiv: usize,
) -> Result<DomainMesh, MeshError> {
    let curve = domain.curve();
    let level = curve.level();
    if !(h > 0.0 && h.is_finite()) {
        return Err(MeshError::InvalidSpacing(h));
    }
    let max = curve.segment_length();
    if h > max * (1.0 + 1e-12) {
        return Err(MeshError::SpacingTooCoarse { h, level, max });
    }
    if boundary_subdiv == 0 {
        return Err(MeshError::InvalidSubdivision);
    }

    let (lo, hi) = curve.bounding_box();
    let i0 = (lo.x / h - 0.5).floor() as i64;
    let i1 = (hi.x / h - 0.5).ceil() as i64;
    let j0 = (lo.y / h - 0.5).floor() as i64;
    let j1 = (hi.y / h - 0.5).ceil() as i64;
    let mut interior = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let p = Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            if domain.contains(p) {
                interior.push(p);
            }
        }
    }
    if interior.is_empty() {
        return Err(MeshError::EmptyMesh { h });
    }
    let weights = vec![h * h; interior.len()];

    let piece = max / boundary_subdiv as f64;
    let mut boundary = Vec::with_capacity(curve.segment_count() * boundary_subdiv);
    for k in 0..curve.segment_count() {
        let (a, b) = curve.segment(k);
        for m in 0..boundary_subdiv {
            let t = (m as f64 + 0.5) / boundary_subdiv as f64;
            boundary.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
    }
    let bweights = vec![piece; boundary.len()];
    DomainMesh::from_parts(
        level,
        h,
        interior,
        weights,
        boundary,
        bweights,
        curve.delta(),
    )
}

/// Values on the interior and boundary nodes of one mesh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    mesh_id: MeshId,
    values: Vec<f64>,
    boundary_values: Vec<f64>,
}

impl GridFunction {
    pub fn new(
        mesh: &DomainMesh,
        values: Vec<f64>,
        boundary_values: Vec<f64>,
    ) -> Result<Self, MeshError> {
        if values.len() != mesh.interior_len() {
            return Err(MeshError::LengthMismatch {
                kind: "interior",
                got: values.len(),
                expected: mesh.interior_len(),
            });
        }
        if boundary_values.len() != mesh.boundary_len() {
            return Err(MeshError::LengthMismatch {
                kind: "boundary",
                got: boundary_values.len(),
                expected: mesh.boundary_len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite {
                kind: "interior",
                index,
            });
        }
        if let Some(index) = boundary_values.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite {
                kind: "boundary",
                index,
            });
        }
        Ok(Self {
            mesh_id: mesh.id(),
            values,
            boundary_values,
        })
    }

    /// Interior values with boundary values filled in by the trace rule.
    pub fn from_interior(mesh: &DomainMesh, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != mesh.interior_len() {
            return Err(MeshError::LengthMismatch {
                kind: "interior",
                got: values.len(),
                expected: mesh.interior_len(),
            });
        }
        let boundary = mesh.trace(&values);
        Self::new(mesh, values, boundary)
    }

    pub fn constant(mesh: &DomainMesh, c: f64) -> Self {
        Self {
            mesh_id: mesh.id(),
            values: vec![c; mesh.interior_len()],
            boundary_values: vec![c; mesh.boundary_len()],
        }
    }

    pub(crate) fn from_raw(mesh_id: MeshId, values: Vec<f64>, boundary_values: Vec<f64>) -> Self {
        Self {
            mesh_id,
            values,
            boundary_values,
        }
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn boundary_values(&self) -> &[f64] {
        &self.boundary_values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_mesh(&self, mesh: &DomainMesh) -> Result<(), MeshError> {
        if self.mesh_id == mesh.id() {
            Ok(())
        } else {
            Err(MeshError::MeshMismatch)
        }
    }

    /// Interior sup-norm distance to another function on the same mesh.
    pub fn sup_diff(&self, other: &GridFunction) -> Result<f64, MeshError> {
        if self.mesh_id != other.mesh_id {
            return Err(MeshError::MeshMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

pub fn sample_field(field: &ScalarField, mesh: &DomainMesh) -> Result<GridFunction, MeshError> {
    let eval = |kind: &'static str, nodes: &[Point]| {
        nodes
            .iter()
            .enumerate()
            .map(|(index, &p)| {
                field.eval(p).map_err(|error| MeshError::Field {
                    source_text: field.source().to_string(),
                    kind,
                    index,
                    error,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let values = eval("interior", mesh.interior_nodes())?;
    let boundary = eval("boundary", mesh.boundary_nodes())?;
    Ok(GridFunction::from_raw(mesh.id(), values, boundary))
}

fn check_pitch(fine: &DomainMesh, coarse: &DomainMesh) -> Result<(), MeshError> {
    if fine.spacing().to_bits() != coarse.spacing().to_bits() {
        return Err(MeshError::PitchMismatch {
            fine: fine.spacing(),
            coarse: coarse.spacing(),
        });
    }
    Ok(())
}

/// For every coarse node, the position of the same grid cell on the fine mesh.
pub fn shared_nodes(fine: &DomainMesh, coarse: &DomainMesh) -> Result<Vec<usize>, MeshError> {
    check_pitch(fine, coarse)?;
    let map = fine.index_map();
    coarse
        .grid_index()
        .iter()
        .enumerate()
        .map(|(index, g)| {
            let k = *map.get(g).ok_or_else(|| {
                let p = coarse.interior_nodes()[index];
                MeshError::NotNested {
                    index,
                    x: p.x,
                    y: p.y,
                }
            })?;
            let (a, b) = (fine.interior_nodes()[k], coarse.interior_nodes()[index]);
            if a.dist(b) > 1e-12 {
                return Err(MeshError::NotNested {
                    index,
                    x: b.x,
                    y: b.y,
                });
            }
            Ok(k)
        })
        .collect()
}

/// Restricts a fine-level function to the nodes of a coarser mesh sharing
/// its grid. Boundary values on the coarse mesh come from its trace rule.
pub fn restrict(
    fine: &GridFunction,
    fine_mesh: &DomainMesh,
    coarse_mesh: &DomainMesh,
) -> Result<GridFunction, MeshError> {
    fine.check_mesh(fine_mesh)?;
    let shared = shared_nodes(fine_mesh, coarse_mesh)?;
    let values = shared.iter().map(|&k| fine.values()[k]).collect();
    GridFunction::from_interior(coarse_mesh, values)
}

/// Extends a coarse-level function to a finer mesh: shared nodes keep their
/// value, new nodes take the value of the nearest coarse node.
pub fn inject(
    coarse: &GridFunction,
    coarse_mesh: &DomainMesh,
    fine_mesh: &DomainMesh,
) -> Result<GridFunction, MeshError> {
    coarse.check_mesh(coarse_mesh)?;
    let shared = shared_nodes(fine_mesh, coarse_mesh)?;
    let mut owner: Vec<Option<usize>> = vec![None; fine_mesh.interior_len()];
    for (c, &f) in shared.iter().enumerate() {
        owner[f] = Some(c);
    }
    let values = fine_mesh
        .interior_nodes()
        .iter()
        .zip(&owner)
        .map(|(p, o)| match o {
            Some(c) => coarse.values()[*c],
            None => {
                let mut best = None;
                for (k, q) in coarse_mesh.interior_nodes().iter().enumerate() {
                    best = pick_nearest(best, q.dist2(*p), k);
                }
                coarse.values()[best.expect("non-empty").1]
            }
        })
        .collect();
    GridFunction::from_interior(fine_mesh, values)
}
