mod common;

use common::*;
use fraktal::discretization::{sample_field, GridFunction};
use fraktal::geometry::Point;
use fraktal::limit::{
    envelopes, holder_excess, lattice_clip, mcshane_extend, solve_limit, HolderConstraintSet, LimitError,
};
use rand::Rng;

#[test]
fn matches_exhaustive_lp_on_crafted_instances() {
    for (k, inst) in crafted().into_iter().enumerate() {
        let mesh = point_mesh(inst.points.clone(), inst.weights.clone());
        let f = GridFunction::new(&mesh, inst.f.clone(), vec![]).unwrap();
        let lo = GridFunction::new(&mesh, inst.lo.clone(), vec![]).unwrap();
        let hi = GridFunction::new(&mesh, inst.hi.clone(), vec![]).unwrap();
        let c = HolderConstraintSet::with_pair_bounds(&mesh, inst.sup, inst.bounds.clone(), &lo, &hi).unwrap();
        let report = solve_limit(&mesh, &f, &c, 1e-10, 400_000).unwrap();
        let obj: Vec<f64> = inst.f.iter().zip(&inst.weights).map(|(f, w)| f * w).collect();
        let lo_eff: Vec<f64> = inst.lo.iter().map(|v| v.max(-inst.sup)).collect();
        let hi_eff: Vec<f64> = inst.hi.iter().map(|v| v.min(inst.sup)).collect();
        let (oracle, _) = lp_oracle(&obj, &lo_eff, &hi_eff, &inst.bounds);
        assert!((report.objective - oracle).abs() <= 1e-6, "instance {k}: {} vs {oracle}", report.objective);
        assert!(report.max_holder_violation <= 1e-8 && report.max_box_violation <= 1e-8);
        assert!(c.holder_violation(report.maximizer.values()) <= 1e-8);
        if k == 0 {
            let v = report.maximizer.values();
            assert!((v[0] - 0.25).abs() < 1e-6 && (v[1] + 0.25).abs() < 1e-6);
            assert!((report.objective - 0.5).abs() < 1e-6);
        }
    }
}

#[test]
fn nonnegative_load_fills_the_legacy_ball() {
    let mesh = mesh(1, 1.0 / 9.0);
    let f = sample_field(&field("1 + x^2"), &mesh).unwrap();
    let lo = GridFunction::constant(&mesh, -1.0);
    let hi = GridFunction::constant(&mesh, 1.0);
    let c = HolderConstraintSet::legacy(&mesh, 0.8, &lo, &hi).unwrap();
    let report = solve_limit(&mesh, &f, &c, 1e-9, 400_000).unwrap();
    assert!(report.maximizer.values().iter().all(|v| (v - 0.5).abs() < 1e-6));
}

#[test]
fn maximizer_is_feasible_and_not_beaten_by_feasible_points() {
    let mesh = mesh(1, 1.0 / 9.0);
    let f = sample_field(&field("x - 0.5 + 0.3*y"), &mesh).unwrap();
    let lo = GridFunction::constant(&mesh, -0.2);
    let hi = GridFunction::constant(&mesh, 0.2);
    let c = HolderConstraintSet::new(&mesh, 0.8, 1.0, 1.0, &lo, &hi).unwrap();
    let report = solve_limit(&mesh, &f, &c, 1e-10, 400_000).unwrap();
    assert!(report.converged);
    assert!(c.holder_violation(report.maximizer.values()) <= 1e-12);
    assert!(c.box_violation(report.maximizer.values()) <= 1e-12);
    let obj = |v: &[f64]| -> f64 {
        mesh.interior_weights().iter().zip(f.values()).zip(v).map(|((w, f), v)| w * f * v).sum()
    };
    let mut r = rng(9);
    for _ in 0..20 {
        let v = c.repair(&uniform(&mut r, mesh.interior_len(), -0.3, 0.3));
        assert!(c.holder_violation(&v) <= 1e-12 && c.box_violation(&v) <= 1e-12);
        assert!(obj(&v) <= report.objective + 1e-9);
    }
}

#[test]
fn infeasible_constraints_are_rejected() {
    let mesh = mesh(1, 1.0 / 9.0);
    let f = GridFunction::constant(&mesh, 1.0);
    let steep = sample_field(&field("10*x"), &mesh).unwrap();
    let hi = GridFunction::constant(&mesh, 100.0);
    let c = HolderConstraintSet::new(&mesh, 0.8, 1.0, 1.0, &steep, &hi).unwrap();
    assert!(matches!(solve_limit(&mesh, &f, &c, 1e-8, 1000), Err(LimitError::Infeasible(_))));
    let lo = GridFunction::constant(&mesh, 2.0);
    let c = HolderConstraintSet::new(&mesh, 0.8, 1.0, 1.0, &lo, &hi).unwrap();
    assert!(matches!(solve_limit(&mesh, &f, &c, 1e-8, 1000), Err(LimitError::Infeasible(_))));
}

fn naive_mcshane(src: &[Point], u: &[f64], at: &[Point], c2: f64, s: f64) -> Vec<f64> {
    at.iter()
        .map(|x| {
            let mut best = f64::NEG_INFINITY;
            for (y, v) in src.iter().zip(u) {
                best = best.max(v - c2 * x.dist(*y).powf(s));
            }
            best
        })
        .collect()
}

fn holder_source(level: u32, h: f64, c2: f64, s: f64, seed: u64) -> (std::sync::Arc<fraktal::discretization::DomainMesh>, GridFunction) {
    let m = mesh(level, h);
    let mut r = rng(seed);
    let raw = uniform(&mut r, m.interior_len(), -0.3, 0.3);
    let u = naive_mcshane(m.interior_nodes(), &raw, m.interior_nodes(), c2, s);
    let g = GridFunction::from_interior(&m, u).unwrap();
    (m, g)
}

#[test]
fn extension_properties() {
    let (c2, s) = (0.7, 0.8);
    let (src, u) = holder_source(1, 1.0 / 18.0, c2, s, 1);
    let target = mesh(2, 1.0 / 18.0);
    let same = mcshane_extend(&u, &src, &src, c2, s).unwrap();
    assert_eq!(same.values(), u.values());
    let ext = mcshane_extend(&u, &src, &target, c2, s).unwrap();
    let oracle = naive_mcshane(src.interior_nodes(), u.values(), target.interior_nodes(), c2, s);
    assert!(sup_diff(ext.values(), &oracle) <= 1e-15);
    assert!(holder_excess(target.interior_nodes(), ext.values(), c2, s) <= 1e-12);
    // Any other Hölder extension lies above: build ten by clipping Hölder
    // bumps between the lower and upper McShane functions.
    let upper: Vec<f64> = target
        .interior_nodes()
        .iter()
        .map(|x| {
            src.interior_nodes()
                .iter()
                .zip(u.values())
                .map(|(y, v)| v + c2 * x.dist(*y).powf(s))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut r = rng(5);
    let shared = fraktal::discretization::shared_nodes(&target, &src).unwrap();
    for _ in 0..10 {
        let centre = target.interior_nodes()[r.gen_range(0..target.interior_len())];
        let (a, t) = (r.gen_range(-0.5..0.5), r.gen_range(-1.0..1.0));
        let v: Vec<f64> = target
            .interior_nodes()
            .iter()
            .zip(upper.iter().zip(&oracle))
            .map(|(x, (hi, lo))| (a + t * c2 * x.dist(centre).powf(s)).max(*lo).min(*hi))
            .collect();
        assert!(holder_excess(target.interior_nodes(), &v, c2, s) <= 1e-12);
        for (i, &j) in shared.iter().enumerate() {
            assert!((v[j] - u.values()[i]).abs() <= 1e-12);
        }
        assert!(v.iter().zip(ext.values()).all(|(v, e)| v >= e));
    }
}

#[test]
fn extension_is_monotone() {
    let (c2, s) = (1.0, 0.8);
    let (src, u) = holder_source(1, 1.0 / 9.0, c2, s, 2);
    let shifted = GridFunction::from_interior(
        &src,
        u.values().iter().enumerate().map(|(i, v)| v + 0.01 * (i % 3) as f64).collect(),
    )
    .unwrap();
    let bigger: Vec<f64> = naive_mcshane(src.interior_nodes(), shifted.values(), src.interior_nodes(), c2, s);
    let bigger = GridFunction::from_interior(&src, bigger).unwrap();
    assert!(bigger.values().iter().zip(u.values()).all(|(b, a)| b >= a));
    let target = mesh(2, 1.0 / 18.0);
    let a = mcshane_extend(&u, &src, &target, c2, s).unwrap();
    let b = mcshane_extend(&bigger, &src, &target, c2, s).unwrap();
    assert!(a.values().iter().zip(b.values()).all(|(a, b)| a <= b));
}

#[test]
fn extension_requires_holder_source() {
    let m = mesh(1, 1.0 / 9.0);
    let rough = sample_field(&field("5*x"), &m).unwrap();
    assert!(matches!(mcshane_extend(&rough, &m, &m, 1.0, 0.8), Err(LimitError::NotHolder { .. })));
}

#[test]
fn envelopes_order_and_regularity() {
    let (c2, s) = (1.0, 0.8);
    let m = mesh(1, 1.0 / 12.0);
    let phi1 = sample_field(&field("-0.3 + 0.1*sin(20*x)"), &m).unwrap();
    let phi2 = sample_field(&field("0.3 - 0.1*cos(15*y)"), &m).unwrap();
    let (e1, e2) = envelopes(&phi1, &phi2, &m, c2, s).unwrap();
    for i in 0..m.interior_len() {
        let (a, b, c, d) = (phi1.values()[i], e1.values()[i], e2.values()[i], phi2.values()[i]);
        assert!(a <= b && b <= c && c <= d, "node {i}: {a} {b} {c} {d}");
    }
    assert!(holder_excess(m.interior_nodes(), e1.values(), c2, s) <= 1e-12);
    assert!(holder_excess(m.interior_nodes(), e2.values(), c2, s) <= 1e-12);
    let flat = GridFunction::constant(&m, 0.25);
    let (f1, f2) = envelopes(&flat, &flat, &m, c2, s).unwrap();
    assert!(f1.values().iter().chain(f2.values()).all(|&v| v == 0.25));
    // Clipping a member of the ball between the envelopes stays feasible.
    let c = HolderConstraintSet::new(&m, s, 1.0, c2, &phi1, &phi2).unwrap();
    let mut r = rng(4);
    for _ in 0..5 {
        let w = c.repair(&uniform(&mut r, m.interior_len(), -0.5, 0.5));
        let w = GridFunction::from_interior(&m, w).unwrap();
        let clipped = lattice_clip(&w, &e1, &e2).unwrap();
        assert!(c.holder_violation(clipped.values()) <= 1e-12);
        assert!(c.box_violation(clipped.values()) <= 1e-12);
    }
}
