//! Triangle quality tests, splitting-point geometry and quality reports.

use serde::{Deserialize, Serialize};

use crate::mesh::{Mesh, TriId, VertexKind};
use crate::predicates::{EncroachMode, Point2};
use crate::rules::QualityStats;

/// Bad triangles have an angle below `theta_deg` or an edge longer than
/// `ell`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityCriteria {
    pub theta_deg: f64,
    pub ell: f64,
    pub mode: EncroachMode,
}

impl Default for QualityCriteria {
    fn default() -> Self {
        QualityCriteria { theta_deg: 20.0, ell: f64::INFINITY, mode: EncroachMode::Ruppert }
    }
}

impl QualityCriteria {
    pub fn new(theta_deg: f64, ell: f64, mode: EncroachMode) -> Self {
        QualityCriteria { theta_deg, ell, mode }
    }

    fn cos2_theta(&self) -> f64 {
        let c = self.theta_deg.to_radians().cos();
        c * c
    }
}

/// Squared lengths of the edges opposite each vertex.
fn edge_lengths2(p: &[Point2; 3]) -> [f64; 3] {
    [p[1].dist2(&p[2]), p[2].dist2(&p[0]), p[0].dist2(&p[1])]
}

/// True iff the smallest angle is below the bound or the longest edge above
/// it. The angle test compares squared cosines, no inverse trigonometry.
pub fn is_bad_points(p: &[Point2; 3], q: &QualityCriteria) -> bool {
    let l2 = edge_lengths2(p);
    if q.ell.is_finite() && l2.iter().any(|&l| l > q.ell * q.ell) {
        return true;
    }
    if !(q.theta_deg > 0.0) {
        return false;
    }
    // The smallest angle is opposite the shortest edge.
    let i = (0..3).min_by(|&a, &b| l2[a].total_cmp(&l2[b])).unwrap();
    let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
    let (ux, uy, vx, vy) = (b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
    let dot = ux * vx + uy * vy;
    dot > 0.0 && dot * dot > q.cos2_theta() * (ux * ux + uy * uy) * (vx * vx + vy * vy)
}

pub fn is_bad_triangle(mesh: &Mesh, t: TriId, q: &QualityCriteria) -> bool {
    is_bad_points(&mesh.tri_points(t), q)
}

/// Smallest angle in degrees.
pub fn min_angle_deg(p: &[Point2; 3]) -> f64 {
    (0..3)
        .map(|i| {
            let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
            let (ux, uy, vx, vy) = (b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
            let cross = ux * vy - uy * vx;
            let dot = ux * vx + uy * vy;
            cross.abs().atan2(dot).to_degrees()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn area(p: &[Point2; 3]) -> f64 {
    0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[1].y - p[0].y) * (p[2].x - p[0].x)).abs()
}

/// Relative determinant size below which a circumcenter is not trusted.
const CIRCUMCENTER_CONDITION: f64 = 1e-12;

/// Circumcenter, or `None` when the triangle is too close to degenerate for
/// the formula to be trusted.
pub fn circumcenter(a: Point2, b: Point2, c: Point2) -> Option<Point2> {
    let (bx, by) = (b.x - a.x, b.y - a.y);
    let (cx, cy) = (c.x - a.x, c.y - a.y);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let d = 2.0 * (bx * cy - by * cx);
    if !(d.abs() > CIRCUMCENTER_CONDITION * (b2 + c2)) {
        return None;
    }
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    let p = Point2::new(a.x + ux, a.y + uy);
    p.is_finite().then_some(p)
}

/// Circumcenter, falling back to the midpoint of the longest edge for
/// near-degenerate triangles.
pub fn triangle_splitting_point(p: &[Point2; 3]) -> Point2 {
    // Origin at the vertex opposite the longest edge keeps the differences
    // small.
    let l2 = edge_lengths2(p);
    let i = (0..3).max_by(|&a, &b| l2[a].total_cmp(&l2[b])).unwrap();
    let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
    circumcenter(a, b, c).unwrap_or_else(|| {
        log::debug!("ill-conditioned circumcenter; using longest-edge midpoint");
        b.midpoint(&c)
    })
}

/// Output statistics against the criteria.
pub fn quality_report(mesh: &Mesh, q: &QualityCriteria) -> QualityStats {
    let mut stats = QualityStats {
        points: mesh.vertex_count(),
        steiner_points: mesh.vertex_ids().filter(|&v| mesh.vertex(v).kind != VertexKind::Input).count(),
        triangles: mesh.triangle_count(),
        min_angle_deg: f64::INFINITY,
        ..QualityStats::default()
    };
    let (mut total, mut bad) = (0.0, 0.0);
    for t in mesh.triangle_ids() {
        let p = mesh.tri_points(t);
        let a = area(&p);
        total += a;
        if is_bad_points(&p, q) {
            stats.bad_triangles += 1;
            bad += a;
        }
        stats.min_angle_deg = stats.min_angle_deg.min(min_angle_deg(&p));
        stats.max_edge = stats.max_edge.max(edge_lengths2(&p).into_iter().fold(0.0, f64::max).sqrt());
    }
    stats.bad_area_percent = if total > 0.0 { 100.0 * bad / total } else { 0.0 };
    if stats.triangles == 0 {
        stats.min_angle_deg = 0.0;
    }
    stats
}
