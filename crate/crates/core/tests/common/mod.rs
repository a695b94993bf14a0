#![allow(dead_code)]

use std::sync::Arc;

use fraktal::discretization::{build_mesh, DomainMesh, GridFunction};
use fraktal::field_expr::{parse_field, ScalarField};
use fraktal::geometry::{Point, PrefractalDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn field(text: &str) -> ScalarField {
    parse_field(text).unwrap()
}

pub fn mesh(level: u32, h: f64) -> Arc<DomainMesh> {
    Arc::new(build_mesh(&PrefractalDomain::new(level).unwrap(), h, 2).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// A mesh made of loose points with no boundary, for LP and extension checks.
pub fn point_mesh(points: Vec<Point>, weights: Vec<f64>) -> DomainMesh {
    DomainMesh::from_parts(0, 0.1, points, weights, vec![], vec![], 1.0).unwrap()
}

pub fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn psi(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.abs().powf(p - 2.0) * t
    }
}

/// `(1/p) Σ_i Σ_{j≠i} w_i w_j |u_i − u_j|^p / d^{2+sp} − Σ w f u + (δ/p) Σ ℓ b |u^∂|^p`,
/// one pair at a time in the plainest order.
pub fn naive_energy(mesh: &DomainMesh, s: f64, p: f64, f: &[f64], b: &[f64], u: &GridFunction) -> f64 {
    let x = mesh.interior_nodes();
    let w = mesh.interior_weights();
    let v = u.values();
    let m = x.len();
    let mut pair = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let d = x[i].dist(x[j]);
                pair += w[i] * w[j] * (v[i] - v[j]).abs().powf(p) / d.powf(2.0 + s * p);
            }
        }
    }
    let mut load = 0.0;
    for i in 0..m {
        load += w[i] * f[i] * v[i];
    }
    let mut bnd = 0.0;
    for (k, &l) in mesh.boundary_weights().iter().enumerate() {
        bnd += l * b[k] * u.boundary_values()[k].abs().powf(p);
    }
    pair / p - load + mesh.delta_n() / p * bnd
}

/// Interior partial derivatives `2 Σ_j k_ij ψ(u_i − u_j) − w_i f_i`.
pub fn naive_interior_gradient(mesh: &DomainMesh, s: f64, p: f64, f: &[f64], u: &[f64]) -> Vec<f64> {
    let x = mesh.interior_nodes();
    let w = mesh.interior_weights();
    let m = x.len();
    let mut g = vec![0.0; m];
    for i in 0..m {
        let mut r = 0.0;
        for j in 0..m {
            if i != j {
                let d = x[i].dist(x[j]);
                r += w[i] * w[j] * psi(u[i] - u[j], p) / d.powf(2.0 + s * p);
            }
        }
        g[i] = 2.0 * r - w[i] * f[i];
    }
    g
}

/// `max c·v` over `lo ≤ v ≤ hi`, `|v_i − v_j| ≤ bounds[(i, j)]` (row-major,
/// `i < j`), by solving every square system of active constraints and keeping
/// the best feasible vertex.
pub fn lp_oracle(c: &[f64], lo: &[f64], hi: &[f64], bounds: &[f64]) -> (f64, Vec<f64>) {
    let m = c.len();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..m {
        let mut a = vec![0.0; m];
        a[i] = 1.0;
        rows.push((a.clone(), hi[i]));
        a[i] = -1.0;
        rows.push((a, -lo[i]));
    }
    let mut k = 0;
    for i in 0..m {
        for j in i + 1..m {
            let mut a = vec![0.0; m];
            a[i] = 1.0;
            a[j] = -1.0;
            rows.push((a.clone(), bounds[k]));
            a[i] = -1.0;
            a[j] = 1.0;
            rows.push((a, bounds[k]));
            k += 1;
        }
    }
    let feasible = |v: &[f64]| {
        rows.iter()
            .all(|(a, r)| a.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() <= r + 1e-9)
    };
    let mut best = (f64::NEG_INFINITY, vec![]);
    let mut pick = Vec::with_capacity(m);
    fn recurse(
        start: usize,
        pick: &mut Vec<usize>,
        rows: &[(Vec<f64>, f64)],
        m: usize,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if pick.len() == m {
            visit(pick);
            return;
        }
        for r in start..rows.len() {
            if rows.len() - r < m - pick.len() {
                break;
            }
            pick.push(r);
            recurse(r + 1, pick, rows, m, visit);
            pick.pop();
        }
    }
    let mut visit = |sel: &[usize]| {
        let mut a: Vec<Vec<f64>> = sel.iter().map(|&r| rows[r].0.clone()).collect();
        let mut rhs: Vec<f64> = sel.iter().map(|&r| rows[r].1).collect();
        if let Some(v) = gauss(&mut a, &mut rhs) {
            if feasible(&v) {
                let obj: f64 = c.iter().zip(&v).map(|(x, y)| x * y).sum();
                if obj > best.0 {
                    best = (obj, v);
                }
            }
        }
    };
    recurse(0, &mut pick, &rows, m, &mut visit);
    best
}

fn gauss(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[r][k] -= factor * a[col][k];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    Some(x)
}

pub struct Crafted {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub f: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bounds: Vec<f64>,
    pub sup: f64,
}

pub fn holder_bounds(points: &[Point], c: f64, s: f64) -> Vec<f64> {
    let mut b = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            b.push(c * points[i].dist(points[j]).powf(s));
        }
    }
    b
}

/// Small LP instances: the two-node and three-node hand cases, then random
/// points with metric Hölder pair bounds.
pub fn crafted() -> Vec<Crafted> {
    let mut out = vec![
        Crafted {
            points: vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)],
            weights: vec![1.0, 1.0],
            f: vec![1.0, -1.0],
            lo: vec![-1.0; 2],
            hi: vec![1.0; 2],
            bounds: vec![0.5],
            sup: 1.0,
        },
        Crafted {
            points: vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            weights: vec![1.0, 1.0, 1.0],
            f: vec![1.0, 1.0, -1.0],
            lo: vec![-1.0; 3],
            hi: vec![1.0; 3],
            bounds: vec![0.3, 0.5, 0.6],
            sup: 1.0,
        },
    ];
    let mut r = rng(2024);
    for m in [3usize, 4, 5, 6, 6] {
        let points: Vec<Point> = (0..m).map(|_| Point::new(r.gen_range(0.0..1.0), r.gen_range(0.0..1.0))).collect();
        let weights = uniform(&mut r, m, 0.5, 1.5);
        let f = uniform(&mut r, m, -1.0, 1.0);
        let lo = vec![-0.4 - r.gen_range(0.0..0.3); m];
        let hi = vec![0.3 + r.gen_range(0.0..0.3); m];
        let bounds = holder_bounds(&points, 0.6, 0.8);
        out.push(Crafted { points, weights, f, lo, hi, bounds, sup: 0.5 });
    }
    out
}
