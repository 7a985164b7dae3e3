//! Initial constrained Delaunay triangulation.
//!
//! Points are inserted in lexicographic order, each new point attaching to
//! the hull edges it sees, followed by Lawson flips. Segments are then
//! recovered by flipping away the edges they cross, and a final Lawson pass
//! restores constrained Delaunayhood. Hull edges that are not segments are
//! promoted to segments so that refinement never leaves the hull.

use std::collections::VecDeque;

use thiserror::Error;

use crate::mesh::{Mesh, MeshError, TriId, VertexId, VertexKind};
use crate::predicates::{dot_sign, orient2d, segments_cross_properly, Point2};
use crate::pslg::{lex_cmp, Pslg};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CdtError {
    #[error("need at least three points")]
    TooFewPoints,
    #[error("all points are collinear")]
    AllCollinear,
    #[error("segment {0} crosses an existing segment")]
    CrossingSegments(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Delaunay triangulation of `points`. Vertex `i` of the mesh is `points[i]`.
pub fn build_delaunay(points: &[Point2]) -> Result<Mesh, CdtError> {
    if points.len() < 3 {
        return Err(CdtError::TooFewPoints);
    }
    let mut mesh = Mesh::new();
    for &p in points {
        mesh.add_vertex(p, VertexKind::Input);
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(points[a], points[b]).then(a.cmp(&b)));

    let (p0, p1) = (points[order[0]], points[order[1]]);
    let k = (2..order.len())
        .find(|&k| !orient2d(p0, p1, points[order[k]]).is_zero())
        .ok_or(CdtError::AllCollinear)?;
    let apex = VertexId(order[k] as u32);
    let ccw = orient2d(p0, p1, points[order[k]]).is_positive();

    // Fan over the collinear prefix.
    let mut fan: Vec<TriId> = Vec::with_capacity(k);
    for j in 0..k - 1 {
        let (a, b) = (VertexId(order[j] as u32), VertexId(order[j + 1] as u32));
        let t = if ccw { mesh.push_triangle([a, b, apex]) } else { mesh.push_triangle([b, a, apex]) };
        fan.push(t);
    }
    for j in 0..fan.len().saturating_sub(1) {
        let (t, u) = (fan[j], fan[j + 1]);
        let shared = VertexId(order[j + 1] as u32);
        let i = mesh.triangle(t).edge_index(shared, apex).unwrap();
        let ju = mesh.triangle(u).edge_index(shared, apex).unwrap();
        mesh.link(t, i, Some(u));
        mesh.link(u, ju, Some(t));
    }

    // Hull as a circular CCW vertex list.
    let n = points.len();
    let mut next = vec![u32::MAX; n];
    let mut prev = vec![u32::MAX; n];
    let chain: Vec<u32> = if ccw {
        let mut c: Vec<u32> = order[..k].iter().map(|&i| i as u32).collect();
        c.push(apex.0);
        c
    } else {
        let mut c = vec![apex.0];
        c.extend(order[..k].iter().rev().map(|&i| i as u32));
        c
    };
    for w in 0..chain.len() {
        let (a, b) = (chain[w], chain[(w + 1) % chain.len()]);
        next[a as usize] = b;
        prev[b as usize] = a;
    }

    let mut last = apex.0;
    let mut stack: Vec<(VertexId, VertexId)> = Vec::new();
    for &oi in &order[k + 1..] {
        let p = points[oi];
        let pv = VertexId(oi as u32);
        let visible = |a: u32, b: u32| orient2d(points[a as usize], points[b as usize], p).is_negative();
        let mut start = last;
        if !visible(start, next[start as usize]) && !visible(prev[start as usize], start) {
            // Not expected for lexicographic order; fall back to a hull scan.
            let mut c = next[last as usize];
            while c != last && !visible(c, next[c as usize]) {
                c = next[c as usize];
            }
            start = c;
        }
        let mut first = start;
        while visible(prev[first as usize], first) {
            first = prev[first as usize];
        }
        let mut end = start;
        while visible(end, next[end as usize]) {
            end = next[end as usize];
        }
        debug_assert_ne!(first, end);
        let mut a = first;
        let mut prev_new: Option<TriId> = None;
        while a != end {
            let b = next[a as usize];
            let (va, vb) = (VertexId(a), VertexId(b));
            let (h, hi) = mesh.find_edge(va, vb).expect("hull edge present");
            let t = mesh.push_triangle([vb, va, pv]);
            mesh.link(t, 2, Some(h));
            mesh.link(h, hi, Some(t));
            if let Some(u) = prev_new {
                // u = (a, a_prev, p): its edge (p, a) is index 1; ours (a, p) is index 0.
                mesh.link(u, 1, Some(t));
                mesh.link(t, 0, Some(u));
            }
            prev_new = Some(t);
            stack.push((va, vb));
            a = b;
        }
        // Splice the visible chain out of the hull.
        let mut c = next[first as usize];
        while c != end {
            let nx = next[c as usize];
            next[c as usize] = u32::MAX;
            prev[c as usize] = u32::MAX;
            c = nx;
        }
        next[first as usize] = oi as u32;
        prev[oi] = first;
        next[oi] = end;
        prev[end as usize] = oi as u32;
        last = oi as u32;
        legalize(&mut mesh, pv, &mut stack);
    }
    Ok(mesh)
}

/// Flips edges opposite `apex` until all are locally Delaunay.
fn legalize(mesh: &mut Mesh, apex: VertexId, stack: &mut Vec<(VertexId, VertexId)>) {
    while let Some((a, b)) = stack.pop() {
        let Some((t, i)) = find_edge_with_apex(mesh, a, b, apex) else { continue };
        if !mesh.is_non_delaunay_edge(t, i) {
            continue;
        }
        let far = {
            let u = mesh.triangle(t).neighbors[i].unwrap();
            let ut = mesh.triangle(u);
            ut.vertices[ut.edge_index(a, b).unwrap()]
        };
        if mesh.flip(t, i).is_ok() {
            stack.push((a, far));
            stack.push((far, b));
        }
    }
}

/// Triangle `(apex, a, b)` and the index of edge `ab` in it.
fn find_edge_with_apex(mesh: &Mesh, a: VertexId, b: VertexId, apex: VertexId) -> Option<(TriId, usize)> {
    for t in mesh.star(apex).triangles {
        let tri = mesh.triangle(t);
        if let Some(i) = tri.edge_index(a, b) {
            if tri.vertices[i] == apex {
                return Some((t, i));
            }
        }
    }
    None
}

/// Lawson flips over the given edges (and every edge they expose) until no
/// non-subsegment edge fails the incircle test. Returns the flip count.
pub fn lawson_fixpoint(mesh: &mut Mesh, seeds: impl IntoIterator<Item = (VertexId, VertexId)>) -> usize {
    let mut queue: VecDeque<(VertexId, VertexId)> = seeds.into_iter().collect();
    let mut flips = 0;
    while let Some((a, b)) = queue.pop_front() {
        let Some((t, i)) = mesh.find_edge(a, b) else { continue };
        if !mesh.is_non_delaunay_edge(t, i) {
            continue;
        }
        let apex = mesh.triangle(t).vertices[i];
        let u = mesh.triangle(t).neighbors[i].unwrap();
        let far = {
            let ut = mesh.triangle(u);
            ut.vertices[ut.edge_index(a, b).unwrap()]
        };
        if mesh.flip(t, i).is_ok() {
            flips += 1;
            queue.extend([(apex, a), (a, far), (far, b), (b, apex)]);
        }
    }
    flips
}

/// Every edge of the mesh, once.
pub(crate) fn all_edges(mesh: &Mesh) -> Vec<(VertexId, VertexId)> {
    let mut out = Vec::with_capacity(mesh.triangle_count() * 3 / 2 + 3);
    for t in mesh.triangle_ids() {
        let tri = mesh.triangle(t);
        for i in 0..3 {
            let (a, b) = tri.edge(i);
            if tri.neighbors[i].map_or(true, |u| u.0 > t.0) {
                out.push((a, b));
            }
        }
    }
    out
}

/// Inserts each segment as a chain of flagged mesh edges, then restores
/// constrained Delaunayhood. Segment `k` becomes parent segment `k`.
pub fn recover_segments(mesh: &mut Mesh, segments: &[[usize; 2]]) -> Result<(), CdtError> {
    for (k, s) in segments.iter().enumerate() {
        let (a, b) = (VertexId(s[0] as u32), VertexId(s[1] as u32));
        let parent = mesh.register_segment(a, b, true);
        recover_one(mesh, a, b, parent, k)?;
    }
    lawson_fixpoint(mesh, all_edges(mesh));
    Ok(())
}

fn recover_one(mesh: &mut Mesh, a: VertexId, b: VertexId, parent: u32, k: usize) -> Result<(), CdtError> {
    let mut todo = vec![(a, b)];
    while let Some((a, b)) = todo.pop() {
        if let Some((t, i)) = mesh.find_edge(a, b) {
            match mesh.triangle(t).segs[i] {
                Some(s) if mesh.subseg(s).parent_segment != parent => return Err(CdtError::CrossingSegments(k)),
                Some(_) => {}
                None => {
                    mesh.add_subsegment(a, b, parent)?;
                }
            }
            continue;
        }
        match crossed_edges(mesh, a, b) {
            Walk::Vertex(z) => {
                todo.push((z, b));
                todo.push((a, z));
            }
            Walk::Crossed(edges) => {
                flip_out(mesh, a, b, edges, k)?;
                todo.push((a, b));
            }
            Walk::Blocked => return Err(CdtError::CrossingSegments(k)),
        }
    }
    Ok(())
}

enum Walk {
    /// A vertex lies in the interior of the segment.
    Vertex(VertexId),
    Crossed(Vec<(VertexId, VertexId)>),
    /// A subsegment crosses the segment.
    Blocked,
}

fn crossed_edges(mesh: &Mesh, a: VertexId, b: VertexId) -> Walk {
    let (pa, pb) = (mesh.position(a), mesh.position(b));
    let on_segment = |z: VertexId| {
        let pz = mesh.position(z);
        orient2d(pa, pb, pz).is_zero() && dot_sign(pa, pb, pz).is_negative()
    };
    // Triangle at `a` whose wedge contains the direction to `b`.
    let mut cur: Option<(TriId, VertexId, VertexId)> = None;
    for t in mesh.star(a).triangles {
        let tri = mesh.triangle(t);
        let i = tri.index_of(a).unwrap();
        let (x, y) = (tri.vertices[(i + 1) % 3], tri.vertices[(i + 2) % 3]);
        for z in [x, y] {
            if on_segment(z) {
                return Walk::Vertex(z);
            }
        }
        if !orient2d(pa, mesh.position(x), pb).is_negative() && !orient2d(pa, mesh.position(y), pb).is_positive() {
            cur = Some((t, x, y));
            break;
        }
    }
    let Some((mut t, mut x, mut y)) = cur else { return Walk::Blocked };
    let mut edges = Vec::new();
    loop {
        let i = mesh.triangle(t).edge_index(x, y).unwrap();
        if mesh.triangle(t).segs[i].is_some() {
            return Walk::Blocked;
        }
        edges.push((x, y));
        let Some(u) = mesh.triangle(t).neighbors[i] else { return Walk::Blocked };
        let ut = mesh.triangle(u);
        let z = ut.vertices[ut.edge_index(x, y).unwrap()];
        if z == b {
            return Walk::Crossed(edges);
        }
        if on_segment(z) {
            return Walk::Vertex(z);
        }
        // x is right of a->b, y left.
        if orient2d(pa, pb, mesh.position(z)).is_positive() {
            y = z;
        } else {
            x = z;
        }
        t = u;
    }
}

/// Flips the edges crossing `ab` until none remain.
fn flip_out(mesh: &mut Mesh, a: VertexId, b: VertexId, edges: Vec<(VertexId, VertexId)>, k: usize) -> Result<(), CdtError> {
    let (pa, pb) = (mesh.position(a), mesh.position(b));
    let mut queue: VecDeque<(VertexId, VertexId)> = edges.into();
    let mut stall = 0usize;
    while let Some((x, y)) = queue.pop_front() {
        let Some((t, i)) = mesh.find_edge(x, y) else { continue };
        let apex = mesh.triangle(t).vertices[i];
        let Some(u) = mesh.triangle(t).neighbors[i] else { return Err(CdtError::CrossingSegments(k)) };
        let far = {
            let ut = mesh.triangle(u);
            ut.vertices[ut.edge_index(x, y).unwrap()]
        };
        match mesh.flip(t, i) {
            Ok(_) => {
                stall = 0;
                let (pp, pf) = (mesh.position(apex), mesh.position(far));
                if segments_cross_properly(pa, pb, pp, pf) {
                    queue.push_back((apex, far));
                }
            }
            Err(MeshError::NonConvex) => {
                queue.push_back((x, y));
                stall += 1;
                if stall > queue.len() + 1 {
                    return Err(CdtError::CrossingSegments(k));
                }
            }
            Err(MeshError::ConstraintEdge) => return Err(CdtError::CrossingSegments(k)),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Flags every unflagged hull edge as a one-piece segment of its own.
pub fn promote_hull(mesh: &mut Mesh) -> Result<usize, CdtError> {
    let mut hull = Vec::new();
    for t in mesh.triangle_ids() {
        let tri = mesh.triangle(t);
        for i in 0..3 {
            if tri.neighbors[i].is_none() && tri.segs[i].is_none() {
                hull.push(tri.edge(i));
            }
        }
    }
    hull.sort();
    for &(a, b) in &hull {
        let parent = mesh.register_segment(a, b, false);
        mesh.add_subsegment(a, b, parent)?;
    }
    Ok(hull.len())
}

/// Constrained Delaunay triangulation of a validated graph, hull closed.
pub fn build_cdt(pslg: &Pslg) -> Result<Mesh, CdtError> {
    let mut mesh = build_delaunay(&pslg.points)?;
    recover_segments(&mut mesh, &pslg.segments)?;
    promote_hull(&mut mesh)?;
    Ok(mesh)
}

/// True iff every non-subsegment interior edge passes the incircle test.
pub fn is_locally_delaunay(mesh: &Mesh) -> bool {
    mesh.triangle_ids().all(|t| (0..3).all(|i| !mesh.is_non_delaunay_edge(t, i)))
}
