//! Independent output checks: topology, conformity to the input segments,
//! and a brute-force constrained Delaunay scan.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mesh::{Mesh, TriId, VertexId, VertexKind};
use crate::predicates::{incircle, segments_cross_properly, Point2};
use crate::pslg::Pslg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("broken topology: {0}")]
    Topology(String),
    #[error("vertex count breaks Euler's formula")]
    Euler,
    #[error("input segment {0} is not covered by a chain of subsegments")]
    Conformity(usize),
    #[error("vertex {vertex} lies inside the circumcircle of a triangle it can see ({tri:?})")]
    NotDelaunay { tri: [u32; 3], vertex: u32 },
    #[error("same-batch free points {0} and {1} are adjacent")]
    BatchSafety(u32, u32),
}

/// Neighbor symmetry, orientation, subsegment flags, hints and Euler's
/// formula.
pub fn check_topology(mesh: &Mesh) -> Result<(), VerifyError> {
    mesh.check_structure().map_err(VerifyError::Topology)?;
    if !mesh.euler_holds() {
        return Err(VerifyError::Euler);
    }
    Ok(())
}

/// Every input segment is the union of a chain of subsegments running from
/// one endpoint to the other, each a mesh edge, with every chain vertex on
/// the segment up to rounding of repeated midpoints.
pub fn check_conformity(mesh: &Mesh, pslg: &Pslg) -> Result<(), VerifyError> {
    let mut by_parent: HashMap<u32, Vec<[VertexId; 2]>> = HashMap::new();
    for s in mesh.subseg_ids() {
        let sub = mesh.subseg(s);
        if mesh.find_edge(sub.endpoints[0], sub.endpoints[1]).is_none() {
            return Err(VerifyError::Topology(format!("subsegment {} is not a mesh edge", s.0)));
        }
        by_parent.entry(sub.parent_segment).or_default().push(sub.endpoints);
    }
    for (k, seg) in pslg.segments.iter().enumerate() {
        let (a, b) = (VertexId(seg[0] as u32), VertexId(seg[1] as u32));
        let Some(pieces) = by_parent.get(&(k as u32)) else { return Err(VerifyError::Conformity(k)) };
        let mut next: HashMap<VertexId, Vec<VertexId>> = HashMap::new();
        for &[p, q] in pieces {
            next.entry(p).or_default().push(q);
            next.entry(q).or_default().push(p);
        }
        let (pa, pb) = (pslg.points[seg[0]], pslg.points[seg[1]]);
        let len = pa.dist(&pb);
        let (mut prev, mut cur, mut steps) = (None, a, 0usize);
        while cur != b {
            let nb = next.get(&cur).ok_or(VerifyError::Conformity(k))?;
            let step = nb.iter().copied().find(|&w| Some(w) != prev).ok_or(VerifyError::Conformity(k))?;
            if !near_segment(pa, pb, mesh.position(step), len) {
                return Err(VerifyError::Conformity(k));
            }
            prev = Some(cur);
            cur = step;
            steps += 1;
            if steps > pieces.len() {
                return Err(VerifyError::Conformity(k));
            }
        }
        if steps != pieces.len() {
            return Err(VerifyError::Conformity(k));
        }
    }
    Ok(())
}

fn near_segment(a: Point2, b: Point2, p: Point2, len: f64) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let cross = (p.x - a.x) * dy - (p.y - a.y) * dx;
    let scale = a.x.abs().max(a.y.abs()).max(b.x.abs()).max(b.y.abs()).max(len);
    (cross / len).abs() <= 1e-9 * scale
}

/// Uniform bucket grid over points.
struct Grid {
    origin: Point2,
    cell: f64,
    nx: i64,
    ny: i64,
    cells: Vec<Vec<u32>>,
}

impl Grid {
    fn new(points: &[(u32, Point2)], target: usize) -> Grid {
        let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for (_, p) in points {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let w = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
        let side = (target as f64).sqrt().ceil().max(1.0);
        let cell = w / side;
        let nx = ((hi.x - lo.x) / cell).floor() as i64 + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as i64 + 1;
        let mut g = Grid { origin: lo, cell, nx, ny, cells: vec![Vec::new(); (nx * ny) as usize] };
        for &(id, p) in points {
            let (x, y) = g.key(p);
            g.cells[(y * nx + x) as usize].push(id);
        }
        g
    }

    /// Same extent and cells, no entries.
    fn empty_like(&self) -> Grid {
        Grid { origin: self.origin, cell: self.cell, nx: self.nx, ny: self.ny, cells: vec![Vec::new(); self.cells.len()] }
    }

    fn insert_box(&mut self, id: u32, lo: Point2, hi: Point2) {
        let (x0, y0) = self.key(lo);
        let (x1, y1) = self.key(hi);
        for y in y0..=y1 {
            for x in x0..=x1 {
                self.cells[(y * self.nx + x) as usize].push(id);
            }
        }
    }

    fn key(&self, p: Point2) -> (i64, i64) {
        let x = ((p.x - self.origin.x) / self.cell).floor() as i64;
        let y = ((p.y - self.origin.y) / self.cell).floor() as i64;
        (x.clamp(0, self.nx - 1), y.clamp(0, self.ny - 1))
    }

    /// Ids in cells overlapping the box.
    fn query(&self, lo: Point2, hi: Point2, mut f: impl FnMut(u32) -> bool) -> bool {
        let (x0, y0) = self.key(lo);
        let (x1, y1) = self.key(hi);
        for y in y0..=y1 {
            for x in x0..=x1 {
                for &id in &self.cells[(y * self.nx + x) as usize] {
                    if f(id) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// No vertex lies strictly inside the circumcircle of a triangle it can
/// see. Visibility is the sightline from the triangle's centroid, blocked by
/// any subsegment it crosses properly.
pub fn check_cdt(mesh: &Mesh) -> Result<(), VerifyError> {
    check_cdt_on(mesh, mesh.triangle_ids())
}

/// [`check_cdt`] on `samples` triangles drawn uniformly with a fixed seed,
/// each tested against every vertex near its circumcircle.
pub fn check_cdt_sampled(mesh: &Mesh, samples: usize, seed: u64) -> Result<(), VerifyError> {
    let all: Vec<TriId> = mesh.triangle_ids().collect();
    if all.len() <= samples {
        return check_cdt_on(mesh, all.into_iter());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, all.len(), samples);
    check_cdt_on(mesh, picked.into_iter().map(|i| all[i]))
}

fn check_cdt_on(mesh: &Mesh, tris: impl Iterator<Item = TriId>) -> Result<(), VerifyError> {
    let verts: Vec<(u32, Point2)> = mesh.vertex_ids().map(|v| (v.0, mesh.position(v))).collect();
    if verts.is_empty() {
        return Ok(());
    }
    let vgrid = Grid::new(&verts, verts.len());
    let mut sgrid = vgrid.empty_like();
    for s in mesh.subseg_ids() {
        let (a, b) = mesh.subseg_points(s);
        sgrid.insert_box(s.0, Point2::new(a.x.min(b.x), a.y.min(b.y)), Point2::new(a.x.max(b.x), a.y.max(b.y)));
    }
    for t in tris {
        let tri = mesh.triangle(t);
        let [a, b, c] = mesh.tri_points(t);
        let Some((center, r)) = circle(a, b, c) else { continue };
        let lo = Point2::new(center.x - r, center.y - r);
        let hi = Point2::new(center.x + r, center.y + r);
        let from = Point2::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
        let mut bad = None;
        vgrid.query(lo, hi, |id| {
            let v = VertexId(id);
            if tri.vertices.contains(&v) {
                return false;
            }
            let p = mesh.position(v);
            if !incircle(a, b, c, p).is_positive() {
                return false;
            }
            if visible(mesh, &sgrid, from, p) {
                bad = Some(id);
                return true;
            }
            false
        });
        if let Some(vertex) = bad {
            return Err(VerifyError::NotDelaunay { tri: tri.vertices.map(|v| v.0), vertex });
        }
    }
    Ok(())
}

fn visible(mesh: &Mesh, sgrid: &Grid, from: Point2, to: Point2) -> bool {
    let lo = Point2::new(from.x.min(to.x), from.y.min(to.y));
    let hi = Point2::new(from.x.max(to.x), from.y.max(to.y));
    !sgrid.query(lo, hi, |id| {
        let (a, b) = mesh.subseg_points(crate::mesh::SubsegId(id));
        segments_cross_properly(from, to, a, b)
    })
}

/// Circumcircle center and a radius padded against rounding, for bucket
/// queries only; containment itself uses the exact predicate.
fn circle(a: Point2, b: Point2, c: Point2) -> Option<(Point2, f64)> {
    let (bx, by, cx, cy) = (b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
    let d = 2.0 * (bx * cy - by * cx);
    if d == 0.0 {
        return None;
    }
    let (b2, c2) = (bx * bx + by * by, cx * cx + cy * cy);
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    let r = (ux * ux + uy * uy).sqrt();
    (r.is_finite()).then(|| (Point2::new(a.x + ux, a.y + uy), r * (1.0 + 1e-9) + 1e-300))
}

/// No edge joins two free points inserted in the same batch.
pub fn check_batch_safety(mesh: &Mesh) -> Result<(), VerifyError> {
    for t in mesh.triangle_ids() {
        let tri = mesh.triangle(t);
        for i in 0..3 {
            let (p, q) = tri.edge(i);
            let (vp, vq) = (mesh.vertex(p), mesh.vertex(q));
            if vp.kind == VertexKind::SteinerCircumcenter
                && vq.kind == VertexKind::SteinerCircumcenter
                && vp.birth_batch > 0
                && vp.birth_batch == vq.birth_batch
            {
                return Err(VerifyError::BatchSafety(p.0, q.0));
            }
        }
    }
    Ok(())
}

/// Vertex count up to which [`verify_all`] scans every triangle.
pub const FULL_SCAN_LIMIT: usize = 100_000;
/// Triangles checked above [`FULL_SCAN_LIMIT`].
pub const SAMPLED_TRIANGLES: usize = 10_000;

/// Topology, conformity and the constrained Delaunay scan, sampled on
/// meshes above [`FULL_SCAN_LIMIT`] vertices.
pub fn verify_all(mesh: &Mesh, pslg: &Pslg) -> Result<(), VerifyError> {
    check_topology(mesh)?;
    check_conformity(mesh, pslg)?;
    if mesh.vertex_count() <= FULL_SCAN_LIMIT {
        check_cdt(mesh)
    } else {
        check_cdt_sampled(mesh, SAMPLED_TRIANGLES, 0)
    }
}
