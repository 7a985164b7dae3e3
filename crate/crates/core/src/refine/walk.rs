//! Straight-line walk from a point inside a triangle to a target point.

use crate::mesh::{Mesh, SubsegId, TriId, VertexId};
use crate::predicates::{orient2d, Point2};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WalkResult {
    /// Strictly inside the triangle.
    Inside(TriId),
    /// On the relative interior of edge `i`.
    OnEdge(TriId, usize),
    OnVertex(VertexId),
    /// The path leaves through edge `i`, a subsegment.
    Blocked(TriId, usize, SubsegId),
    /// The path leaves the hull or the step budget ran out.
    Failed,
}

pub fn centroid(p: &[Point2; 3]) -> Point2 {
    Point2::new((p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0)
}

/// Walks from `from` (inside `start`) toward `target`. Stops at the first
/// subsegment the path crosses.
pub fn walk(mesh: &Mesh, start: TriId, from: Point2, target: Point2) -> WalkResult {
    let mut t = start;
    let budget = 4 * mesh.triangle_capacity() + 16;
    for _ in 0..budget {
        let tri = mesh.triangle(t);
        let p = mesh.tri_points(t);
        let o: [_; 3] = std::array::from_fn(|i| orient2d(p[(i + 1) % 3], p[(i + 2) % 3], target));
        if o.iter().all(|x| !x.is_negative()) {
            let zeros: Vec<usize> = (0..3).filter(|&i| o[i].is_zero()).collect();
            return match zeros.len() {
                0 => WalkResult::Inside(t),
                1 => WalkResult::OnEdge(t, zeros[0]),
                _ => {
                    // On the vertex shared by the two zero edges.
                    let v = (0..3).find(|i| !zeros.contains(i)).unwrap();
                    WalkResult::OnVertex(tri.vertices[v])
                }
            };
        }
        // Prefer the negative edge the segment from->target straddles.
        let mut exit = None;
        for i in (0..3).filter(|&i| o[i].is_negative()) {
            let a = orient2d(from, target, p[(i + 1) % 3]);
            let b = orient2d(from, target, p[(i + 2) % 3]);
            if a != b || a.is_zero() {
                exit = Some(i);
                break;
            }
        }
        let i = exit.unwrap_or_else(|| (0..3).find(|&i| o[i].is_negative()).unwrap());
        if let Some(s) = tri.segs[i] {
            return WalkResult::Blocked(t, i, s);
        }
        match tri.neighbors[i] {
            Some(u) => t = u,
            None => return WalkResult::Failed,
        }
    }
    WalkResult::Failed
}
