//! Koch snowflake pre-fractal curves `K_n` and the polygonal domains `Ω_n`
//! they bound.
//!
//! The level-0 curve is the unit equilateral triangle with vertices
//! `(0,0)`, `(1,0)`, `(1/2, √3/2)`, traversed counterclockwise. Each
//! refinement replaces every segment by the four-segment Koch motif with the
//! bump pointing away from the enclosed region, so `Ω_n ⊂ Ω_{n+1}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest level accepted by [`build_prefractal`].
pub const MAX_LEVEL: u32 = 10;

/// Hausdorff dimension of the Koch snowflake, `ln 4 / ln 3`.
pub fn koch_dimension() -> f64 {
    4f64.ln() / 3f64.ln()
}

/// Area of the level-0 triangle.
pub fn base_area() -> f64 {
    3f64.sqrt() / 4.0
}

/// Boundary-measure renormalization `δ_n = (3/4)^n`.
pub fn delta_n(level: u32) -> f64 {
    0.75f64.powi(level as i32)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pre-fractal level {0} exceeds the supported maximum of {MAX_LEVEL}")]
    LevelTooLarge(u32),
    #[error("point ({x}, {y}) does not lie on the pre-fractal curve")]
    CenterNotOnBoundary { x: f64, y: f64 },
    #[error("ball radius must be positive, got {0}")]
    NonPositiveRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }
}

/// Level-`n` Koch pre-fractal curve as a closed counterclockwise polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefractalCurve {
    level: u32,
    vertices: Vec<Point>,
    segments: Vec<(usize, usize)>,
    segment_length: f64,
    segment_measure: f64,
}

impl PrefractalCurve {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn segments(&self) -> &[(usize, usize)] {
        &self.segments
    }

    /// Nominal segment length `3^{-n}`.
    pub fn segment_length(&self) -> f64 {
        self.segment_length
    }

    /// Mass of the self-similar boundary measure carried by one segment, `4^{-n}`.
    pub fn segment_measure(&self) -> f64 {
        self.segment_measure
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn segment(&self, k: usize) -> (Point, Point) {
        let (a, b) = self.segments[k];
        (self.vertices[a], self.vertices[b])
    }

    pub fn segment_midpoint(&self, k: usize) -> Point {
        let (a, b) = self.segment(k);
        a.lerp(b, 0.5)
    }

    /// Closed-form perimeter `3·(4/3)^n`.
    pub fn perimeter(&self) -> f64 {
        self.segment_count() as f64 * self.segment_length
    }

    /// Sum of the Euclidean lengths of the segments as built.
    pub fn measured_perimeter(&self) -> f64 {
        (0..self.segment_count())
            .map(|k| {
                let (a, b) = self.segment(k);
                a.dist(b)
            })
            .sum()
    }

    pub fn total_measure(&self) -> f64 {
        self.segment_count() as f64 * self.segment_measure
    }

    pub fn delta(&self) -> f64 {
        delta_n(self.level)
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let mut d2: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d2 = d2.max(a.dist2(*b));
            }
        }
        d2.sqrt()
    }

    /// Distance from `p` to the closest segment of the curve.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        (0..self.segment_count())
            .map(|k| {
                let (a, b) = self.segment(k);
                point_segment_distance(p, a, b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// At most `n ≤ 5` or so this is cheap; it is O(S²) in the segment count.
    pub fn is_simple(&self) -> bool {
        let s = self.segment_count();
        for i in 0..s {
            for j in i + 1..s {
                // neighbours share an endpoint by construction
                if j == i + 1 || (i == 0 && j == s - 1) {
                    continue;
                }
                let (a, b) = self.segment(i);
                let (c, d) = self.segment(j);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }
}

/// Builds the level-`n` Koch pre-fractal curve.
pub fn build_prefractal(level: u32) -> Result<PrefractalCurve, GeometryError> {
    if level > MAX_LEVEL {
        return Err(GeometryError::LevelTooLarge(level));
    }
    let h = 3f64.sqrt() / 2.0;
    let mut vertices = vec![
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(0.5, h),
    ];
    let bump = 3f64.sqrt() / 6.0;
    for _ in 0..level {
        let n = vertices.len();
        let mut next = Vec::with_capacity(4 * n);
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            next.push(a);
            next.push(a.lerp(b, 1.0 / 3.0));
            // right-hand normal of a counterclockwise edge points outward
            next.push(Point::new(
                a.x + 0.5 * dx + bump * dy,
                a.y + 0.5 * dy - bump * dx,
            ));
            next.push(a.lerp(b, 2.0 / 3.0));
        }
        vertices = next;
    }
    let n = vertices.len();
    let segments = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Ok(PrefractalCurve {
        level,
        vertices,
        segments,
        segment_length: 3f64.powi(-(level as i32)),
        segment_measure: 4f64.powi(-(level as i32)),
    })
}

/// Shoelace area of the closed polygon.
pub fn domain_area(curve: &PrefractalCurve) -> f64 {
    let v = curve.vertices();
    let n = v.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    0.5 * twice.abs()
}

/// Points closer than this to `K_n` are never reported as contained.
pub const BOUNDARY_EXCLUSION: f64 = 1e-12;

/// Even-odd ray-crossing membership test. Points within
/// [`BOUNDARY_EXCLUSION`] of the curve are classified as outside.
pub fn contains(curve: &PrefractalCurve, p: Point) -> bool {
    let mut inside = false;
    for k in 0..curve.segment_count() {
        let (a, b) = curve.segment(k);
        if point_segment_distance(p, a, b) < BOUNDARY_EXCLUSION {
            return false;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Collocation approximation of `μ(B(P, r))`: the summed measure of the
/// segments whose midpoints fall inside the open ball.
pub fn ball_measure(
    curve: &PrefractalCurve,
    center: Point,
    radius: f64,
) -> Result<f64, GeometryError> {
    if !(radius > 0.0) {
        return Err(GeometryError::NonPositiveRadius(radius));
    }
    if curve.distance_to_boundary(center) > 1e-9 {
        return Err(GeometryError::CenterNotOnBoundary {
            x: center.x,
            y: center.y,
        });
    }
    let r2 = radius * radius;
    let hits = (0..curve.segment_count())
        .filter(|&k| curve.segment_midpoint(k).dist2(center) < r2)
        .count();
    Ok(hits as f64 * curve.segment_measure())
}

/// A `PrefractalCurve` together with the exact area it encloses.
#[derive(Debug, Clone)]
pub struct PrefractalDomain {
    curve: PrefractalCurve,
    area: f64,
}

impl PrefractalDomain {
    pub fn new(level: u32) -> Result<Self, GeometryError> {
        let curve = build_prefractal(level)?;
        Ok(Self::from_curve(curve))
    }

    pub fn from_curve(curve: PrefractalCurve) -> Self {
        let area = domain_area(&curve);
        Self { curve, area }
    }

    pub fn curve(&self) -> &PrefractalCurve {
        &self.curve
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn level(&self) -> u32 {
        self.curve.level
    }

    pub fn contains(&self, p: Point) -> bool {
        contains(&self.curve, p)
    }
}

pub(crate) fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let eps = 1e-14;
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
    {
        return true;
    }
    // collinear overlap or touching endpoints
    let near = |p: Point, q: Point, r: Point| point_segment_distance(r, p, q) < 1e-12;
    near(c, d, a) || near(c, d, b) || near(a, b, c) || near(a, b, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn area_oracle(n: u32) -> f64 {
        let series: f64 = (0..n).map(|k| (4.0f64 / 9.0).powi(k as i32)).sum();
        base_area() * (1.0 + series / 3.0)
    }

    #[test]
    fn base_triangle() {
        let c = build_prefractal(0).unwrap();
        assert_eq!(c.segment_count(), 3);
        assert!((c.measured_perimeter() - 3.0).abs() < 1e-15);
        for k in 0..3 {
            let (a, b) = c.segment(k);
            assert!((a.dist(b) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn level_two_has_48_segments_of_one_ninth() {
        let c = build_prefractal(2).unwrap();
        assert_eq!(c.segment_count(), 48);
        for k in 0..48 {
            let (a, b) = c.segment(k);
            assert!((a.dist(b) - 1.0 / 9.0).abs() < 1e-14);
        }
    }

    #[test]
    fn level_three_total_mass() {
        let c = build_prefractal(3).unwrap();
        assert_eq!(c.total_measure(), 3.0);
    }

    #[test]
    fn level_guard() {
        assert_eq!(build_prefractal(11), Err(GeometryError::LevelTooLarge(11)));
    }

    #[test]
    fn areas_follow_geometric_series() {
        assert!((domain_area(&build_prefractal(0).unwrap()) - 0.4330127018922193).abs() < 1e-15);
        assert!((domain_area(&build_prefractal(1).unwrap()) - 0.5773502691896257).abs() < 1e-14);
        for n in 0..=8 {
            let a = domain_area(&build_prefractal(n).unwrap());
            assert!((a - area_oracle(n)).abs() < 1e-12, "n={n}: {a}");
        }
        let limit = 2.0 * 3f64.sqrt() / 5.0;
        let a8 = domain_area(&build_prefractal(8).unwrap());
        assert!((a8 - limit).abs() < 1e-3);
    }

    #[test]
    fn counterclockwise_orientation() {
        for n in 0..4 {
            let c = build_prefractal(n).unwrap();
            let v = c.vertices();
            let signed: f64 = (0..v.len())
                .map(|i| {
                    let (a, b) = (v[i], v[(i + 1) % v.len()]);
                    a.x * b.y - b.x * a.y
                })
                .sum();
            assert!(signed > 0.0);
        }
    }

    #[test]
    fn simple_and_closed() {
        for n in 0..=3 {
            let c = build_prefractal(n).unwrap();
            assert!(c.is_simple(), "level {n}");
            let (first, _) = c.segments()[0];
            let (_, last) = *c.segments().last().unwrap();
            assert_eq!(first, last);
        }
    }

    #[test]
    fn membership() {
        let c0 = build_prefractal(0).unwrap();
        assert!(contains(&c0, Point::new(0.5, 3f64.sqrt() / 6.0)));
        assert!(!contains(&c0, Point::new(10.0, 10.0)));
        assert!(!contains(&c0, Point::new(0.5, 0.0)));

        // bump on the bottom edge of level 1: apex at (1/2, -√3/6)
        let c1 = build_prefractal(1).unwrap();
        let apex = Point::new(0.5, -3f64.sqrt() / 6.0);
        assert!(c1.vertices().iter().any(|v| v.dist(apex) < 1e-14));
        assert!(contains(&c1, Point::new(0.5, apex.y + 1e-3)));
        assert!(!contains(&c0, Point::new(0.5, apex.y + 1e-3)));
    }

    #[test]
    fn ball_measure_edge_cases() {
        let c = build_prefractal(3).unwrap();
        let center = c.vertices()[0];
        assert_eq!(ball_measure(&c, center, 5.0).unwrap(), 3.0);
        let mid = c.segment_midpoint(7);
        let r = 0.49 * c.segment_length();
        assert_eq!(ball_measure(&c, mid, r).unwrap(), c.segment_measure());
        assert!(matches!(
            ball_measure(&c, Point::new(0.5, 0.3), 0.1),
            Err(GeometryError::CenterNotOnBoundary { .. })
        ));
    }

    #[test]
    fn ball_measure_vertex_scaling() {
        let c = build_prefractal(6).unwrap();
        let df = koch_dimension();
        let p = Point::new(0.0, 0.0);
        let big = ball_measure(&c, p, 0.1).unwrap() / 0.1f64.powf(df);
        let small = ball_measure(&c, p, 0.02).unwrap() / 0.02f64.powf(df);
        let ratio = big.max(small) / big.min(small);
        assert!(ratio <= 10.0, "ratio {ratio}");
    }

    #[test]
    fn closed_form_invariants_through_level_eight() {
        for n in 0..=8u32 {
            let c = build_prefractal(n).unwrap();
            assert_eq!(c.segment_count(), 3 * 4usize.pow(n));
            let perim = 3.0 * (4.0f64 / 3.0).powi(n as i32);
            assert!((c.perimeter() - perim).abs() <= 1e-12 * perim);
            assert!((c.delta() * c.perimeter() - 3.0).abs() < 1e-12);
            assert!((c.measured_perimeter() - perim).abs() <= 1e-11 * perim);
        }
    }
}
