//! Batch insertion followed by the flip-flop fixpoint: restore constrained
//! Delaunayhood by flips, then remove redundant free points by flipping
//! them down to degree three and flopping them away, until nothing changes.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use crate::cdt::lawson_fixpoint;
use crate::mesh::{Mesh, MeshError, SubsegId, VertexId, VertexKind};
use crate::predicates::{EncroachMode, Point2};
use crate::rules::{nanos, PhaseTimes};

use super::phases::{subseg_open, subseg_splittable};
use super::walk::{centroid, walk, WalkResult};
use super::{Element, EngineConfig, EngineState, Location, SplitCandidate};

#[derive(Debug, Default)]
pub(crate) struct BatchOutcome {
    pub inserted: usize,
    pub removed: usize,
    pub flips: usize,
    pub marked: usize,
}

#[derive(Clone, Copy, Debug)]
struct Inserted {
    v: VertexId,
    key: u64,
    source: Option<[VertexId; 3]>,
}

/// Diametral regions of the subsegments split this batch, bucketed on a
/// grid with cells as large as the longest span.
struct SpanGrid {
    spans: Vec<(Point2, Point2)>,
    cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl SpanGrid {
    fn new(spans: Vec<(Point2, Point2)>) -> Self {
        let cell = spans.iter().map(|(a, b)| a.dist(b)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut grid = SpanGrid { spans, cell, cells: HashMap::new() };
        for (k, (a, b)) in grid.spans.iter().enumerate() {
            let c = a.midpoint(b);
            let r = 0.5 * a.dist(b);
            let (x0, y0) = grid.key(Point2::new(c.x - r, c.y - r));
            let (x1, y1) = grid.key(Point2::new(c.x + r, c.y + r));
            for x in x0..=x1 {
                for y in y0..=y1 {
                    grid.cells.entry((x, y)).or_default().push(k as u32);
                }
            }
        }
        grid
    }

    fn key(&self, p: Point2) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    fn encroached_by(&self, p: Point2, mode: EncroachMode) -> bool {
        self.cells.get(&self.key(p)).is_some_and(|ks| {
            ks.iter().any(|&k| {
                let (a, b) = self.spans[k as usize];
                mode.encroaches(a, b, p)
            })
        })
    }
}

fn triangle_unchanged(mesh: &Mesh, c: &SplitCandidate, t: crate::mesh::TriId) -> bool {
    let tri = mesh.triangle(t);
    tri.is_alive() && tri.vertices == c.anchor
}

/// Inserts one surviving candidate. Without filtering, earlier insertions
/// may have changed the located triangle; the point is then located again.
fn insert_one(
    mesh: &mut Mesh,
    c: &SplitCandidate,
    filtered: bool,
    cfg: &EngineConfig,
    state: &mut EngineState,
    spans: &mut Vec<(Point2, Point2)>,
    marked: &mut HashSet<SubsegId>,
) -> Option<VertexId> {
    if let Element::Subseg(s) = c.element {
        let (a, b) = mesh.subseg_points(s);
        return match mesh.split_subsegment(s, a.midpoint(&b)) {
            Ok(v) => {
                spans.push((a, b));
                Some(v)
            }
            Err(e) => {
                log::debug!("subsegment split refused: {e}");
                mesh.subseg_mut(s).unsplittable = true;
                state.abandon(c.source);
                None
            }
        };
    }
    let kind = VertexKind::SteinerCircumcenter;
    let direct = match c.location {
        Location::InTriangle(t) if triangle_unchanged(mesh, c, t) => mesh.split_triangle(t, c.point, kind),
        Location::OnEdge(t, i) if triangle_unchanged(mesh, c, t) => mesh.split_edge(t, i, c.point, kind),
        _ => Err(MeshError::StaleHandle),
    };
    match direct {
        Ok(v) => return Some(v),
        Err(e) if filtered => {
            log::debug!("filtered insertion failed: {e}");
            return None;
        }
        Err(_) => {}
    }
    let start = c.anchor.iter().find_map(|&v| if mesh.vertex(v).is_alive() { mesh.hint(v) } else { None })?;
    let from = centroid(&mesh.tri_points(start));
    let sub = match walk(mesh, start, from, c.point) {
        WalkResult::Inside(t) => return mesh.split_triangle(t, c.point, kind).ok(),
        WalkResult::OnEdge(t, i) => match mesh.triangle(t).segs[i] {
            None => return mesh.split_edge(t, i, c.point, kind).ok(),
            Some(s) => s,
        },
        WalkResult::Blocked(_, _, s) => s,
        WalkResult::OnVertex(_) | WalkResult::Failed => {
            state.abandon(c.source);
            return None;
        }
    };
    if subseg_open(mesh, sub, cfg.depth_cap) && subseg_splittable(mesh, sub) {
        mesh.subseg_mut(sub).encroached = true;
        marked.insert(sub);
    } else {
        state.abandon(c.source);
    }
    None
}

/// Inserts the surviving candidates and runs the flip-flop fixpoint.
pub(crate) fn insert_batch(
    mesh: &mut Mesh,
    cands: &[SplitCandidate],
    cfg: &EngineConfig,
    state: &mut EngineState,
    ph: &mut PhaseTimes,
) -> BatchOutcome {
    let t = Instant::now();
    let filtered = cfg.rules.rule2_filtering_enabled;
    let mut order: Vec<usize> = (0..cands.len()).filter(|&k| cands[k].alive).collect();
    if !filtered {
        order.sort_by_key(|&k| std::cmp::Reverse(cands[k].key));
    }
    let mut out = BatchOutcome::default();
    let mut spans = Vec::new();
    let mut marked = HashSet::new();
    let mut inserted = Vec::new();
    for k in order {
        let c = &cands[k];
        if let Some(v) = insert_one(mesh, c, filtered, cfg, state, &mut spans, &mut marked) {
            inserted.push(Inserted { v, key: c.key, source: c.source });
        }
    }
    out.inserted = inserted.len();
    ph.insert_ns = nanos(t.elapsed());

    let t = Instant::now();
    let grid = SpanGrid::new(spans);
    let batch_key: HashMap<VertexId, u64> = inserted.iter().map(|i| (i.v, i.key)).collect();
    let mut seeds: Vec<(VertexId, VertexId)> = Vec::new();
    for i in &inserted {
        seeds.extend(star_edges(mesh, i.v));
    }
    let mut stuck: HashSet<VertexId> = HashSet::new();
    loop {
        out.flips += lawson_fixpoint(mesh, seeds.drain(..));
        let mut redundant = Vec::new();
        for i in &inserted {
            let v = i.v;
            if !mesh.vertex(v).is_alive() || mesh.vertex(v).kind != VertexKind::SteinerCircumcenter || stuck.contains(&v) {
                continue;
            }
            if is_redundant(mesh, i, &batch_key, &grid, cfg, state, &mut marked) {
                redundant.push(v);
            }
        }
        if redundant.is_empty() {
            break;
        }
        for v in redundant {
            match remove_free_point(mesh, v) {
                Ok((ring, flips)) => {
                    out.removed += 1;
                    out.flips += flips;
                    seeds.extend(ring);
                }
                Err(e) => {
                    log::warn!("could not remove redundant point {}: {e}", v.0);
                    stuck.insert(v);
                }
            }
        }
    }
    out.marked = marked.len();
    ph.flip_flop_ns = nanos(t.elapsed());
    out
}

/// Edges of every triangle around `v`.
pub(crate) fn star_edges(mesh: &Mesh, v: VertexId) -> Vec<(VertexId, VertexId)> {
    let mut out = Vec::new();
    for t in mesh.star(v).triangles {
        let tri = mesh.triangle(t);
        out.extend((0..3).map(|i| tri.edge(i)));
    }
    out
}

/// A circumcenter is redundant when it encroaches a subsegment on its star,
/// lies in the diametral region of a subsegment split this batch, or is
/// adjacent to a higher-priority point of the same batch. Encroached
/// subsegments are marked for the next batch.
fn is_redundant(
    mesh: &mut Mesh,
    i: &Inserted,
    batch_key: &HashMap<VertexId, u64>,
    grid: &SpanGrid,
    cfg: &EngineConfig,
    state: &mut EngineState,
    marked: &mut HashSet<SubsegId>,
) -> bool {
    let mode = cfg.criteria.mode;
    let p = mesh.position(i.v);
    let mut encroached = Vec::new();
    for t in mesh.star(i.v).triangles {
        let tri = mesh.triangle(t);
        let j = tri.index_of(i.v).unwrap();
        if let Some(s) = tri.segs[j] {
            let (a, b) = mesh.subseg_points(s);
            if mode.encroaches(a, b, p) {
                encroached.push(s);
            }
        }
    }
    if !encroached.is_empty() {
        for s in encroached {
            if subseg_open(mesh, s, cfg.depth_cap) && subseg_splittable(mesh, s) {
                mesh.subseg_mut(s).encroached = true;
                marked.insert(s);
            } else {
                state.abandon(i.source);
            }
        }
        return true;
    }
    if grid.encroached_by(p, mode) {
        return true;
    }
    mesh.vertex_neighbors(i.v).into_iter().any(|w| batch_key.get(&w).is_some_and(|&k| k > i.key))
}

/// Removes an interior free point: flips its spokes until it has degree
/// three, then flops it, clipping the ring when no spoke can flip. Returns the edges whose Delaunayhood may have
/// changed and the number of flips.
pub fn remove_free_point(mesh: &mut Mesh, v: VertexId) -> Result<(Vec<(VertexId, VertexId)>, usize), MeshError> {
    if mesh.vertex(v).kind != VertexKind::SteinerCircumcenter {
        return Err(MeshError::ProtectedVertex);
    }
    let star = mesh.star(v);
    if !star.closed {
        return Err(MeshError::ProtectedVertex);
    }
    let ring: Vec<VertexId> = star
        .triangles
        .iter()
        .map(|&t| {
            let tri = mesh.triangle(t);
            tri.vertices[(tri.index_of(v).unwrap() + 1) % 3]
        })
        .collect();
    let mut touched: Vec<(VertexId, VertexId)> = (0..ring.len()).map(|k| (ring[k], ring[(k + 1) % ring.len()])).collect();
    let mut flips = 0;
    loop {
        let star = mesh.star(v);
        if star.triangles.len() == 3 {
            mesh.flop(v)?;
            return Ok((touched, flips));
        }
        let mut done = false;
        for &t in &star.triangles {
            let tri = mesh.triangle(t);
            let j = tri.index_of(v).unwrap();
            // Edge opposite vertex j+1 is the spoke (v, v[j+2]).
            let spoke = (j + 1) % 3;
            if tri.segs[spoke].is_some() {
                continue;
            }
            let (a, b) = (tri.vertices[spoke], tri.vertices[(j + 2) % 3]);
            let far = tri.neighbors[spoke].map(|u| {
                let ut = mesh.triangle(u);
                ut.vertices[ut.edge_index(v, b).unwrap()]
            });
            if mesh.flip(t, spoke).is_ok() {
                flips += 1;
                if let Some(w) = far {
                    touched.push((a, w));
                }
                done = true;
                break;
            }
        }
        if !done {
            // Degenerate ring (e.g. the point sits on a diagonal): no spoke
            // flips, so clip the ring polygon directly.
            let clipped = match mesh.clip_star(v) {
                Ok(ids) => ids,
                Err(e) => {
                    // Leave the mesh Delaunay again before reporting.
                    lawson_fixpoint(mesh, touched);
                    return Err(e);
                }
            };
            for t in clipped {
                let tri = mesh.triangle(t);
                touched.extend((0..3).map(|i| tri.edge(i)));
            }
            return Ok((touched, flips));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdt::{build_delaunay, is_locally_delaunay};
    use rand::{Rng, SeedableRng};

    #[test]
    fn remove_restores_delaunay_mesh() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let pts: Vec<Point2> = (0..120).map(|_| Point2::new(rng.gen(), rng.gen())).collect();
        let m0 = build_delaunay(&pts).unwrap();
        for trial in 0..20 {
            let mut m = m0.clone();
            let t = m.triangle_ids().nth(trial * 7 % m.triangle_count()).unwrap();
            let c = centroid(&m.tri_points(t));
            let v = m.split_triangle(t, c, VertexKind::SteinerCircumcenter).unwrap();
            let seeds = star_edges(&m, v);
            lawson_fixpoint(&mut m, seeds);
            let (seeds, _) = remove_free_point(&mut m, v).unwrap();
            lawson_fixpoint(&mut m, seeds);
            m.check_structure().unwrap();
            assert!(is_locally_delaunay(&m));
            assert_eq!(m.vertex_count(), m0.vertex_count());
            assert_eq!(m.triangle_count(), m0.triangle_count());
        }
    }

    #[test]
    fn input_points_are_protected() {
        let pts = [Point2::new(0., 0.), Point2::new(1., 0.), Point2::new(0., 1.), Point2::new(0.3, 0.3)];
        let mut m = build_delaunay(&pts).unwrap();
        assert_eq!(remove_free_point(&mut m, VertexId(3)).unwrap_err(), MeshError::ProtectedVertex);
    }

    #[test]
    fn point_on_ring_diagonal_is_clipped() {
        // The center of a square has four spokes and no flippable one: each
        // flip would put it on the new diagonal.
        let pts = [Point2::new(0., 0.), Point2::new(2., 0.), Point2::new(2., 2.), Point2::new(0., 2.)];
        let mut m = Mesh::from_triangles(&pts, &[[0, 1, 2], [0, 2, 3]]).unwrap();
        let (t, i) = m.find_edge(VertexId(0), VertexId(2)).unwrap();
        let v = m.split_edge(t, i, Point2::new(1., 1.), VertexKind::SteinerCircumcenter).unwrap();
        assert_eq!(m.vertex_degree(v), 4);
        let (seeds, flips) = remove_free_point(&mut m, v).unwrap();
        assert_eq!(flips, 0);
        lawson_fixpoint(&mut m, seeds);
        m.check_structure().unwrap();
        assert_eq!((m.vertex_count(), m.triangle_count()), (4, 2));
    }

    #[test]
    fn span_grid_examples() {
        let g = SpanGrid::new(vec![(Point2::new(0., 0.), Point2::new(2., 0.)), (Point2::new(10., 10.), Point2::new(10.5, 10.))]);
        assert!(g.encroached_by(Point2::new(1., 0.5), EncroachMode::Ruppert));
        assert!(!g.encroached_by(Point2::new(1., 2.), EncroachMode::Ruppert));
        assert!(g.encroached_by(Point2::new(10.25, 0.1 + 10.), EncroachMode::Ruppert));
        assert!(!g.encroached_by(Point2::new(5., 5.), EncroachMode::Ruppert));
    }
}
