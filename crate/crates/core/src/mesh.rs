//! Triangle-based constrained triangulation with neighbor links and
//! subsegment flags.
//!
//! Neighbor `i` of a triangle lies across the edge opposite vertex `i`, i.e.
//! the directed edge `(v[i+1], v[i+2])`. Hull edges have no neighbor.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predicates::{incircle, orient2d, Point2};

macro_rules! handle {
    ($name:ident) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn idx(self) -> usize {
                self.0 as usize
            }
        }
    };
}

handle!(VertexId);
handle!(TriId);
handle!(SubsegId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VertexKind {
    Input,
    SteinerMidpoint,
    /// A free point.
    SteinerCircumcenter,
}

#[derive(Clone, Debug)]
pub struct Vertex {
    pub pos: Point2,
    pub kind: VertexKind,
    pub birth_batch: u32,
    alive: bool,
    hint: Option<TriId>,
}

impl Vertex {
    pub fn is_alive(&self) -> bool {
        self.alive
    }
}

#[derive(Clone, Debug)]
pub struct Triangle {
    pub vertices: [VertexId; 3],
    pub neighbors: [Option<TriId>; 3],
    pub segs: [Option<SubsegId>; 3],
    alive: bool,
}

impl Triangle {
    pub fn is_alive(&self) -> bool {
        self.alive
    }

    /// Endpoints of edge `i` (the edge opposite vertex `i`), in CCW order.
    #[inline]
    pub fn edge(&self, i: usize) -> (VertexId, VertexId) {
        (self.vertices[(i + 1) % 3], self.vertices[(i + 2) % 3])
    }

    #[inline]
    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.vertices.iter().position(|&w| w == v)
    }

    /// Index of the edge `(a, b)` taken in either direction.
    pub fn edge_index(&self, a: VertexId, b: VertexId) -> Option<usize> {
        (0..3).find(|&i| {
            let (p, q) = self.edge(i);
            (p == a && q == b) || (p == b && q == a)
        })
    }
}

#[derive(Clone, Debug)]
pub struct Subsegment {
    pub endpoints: [VertexId; 2],
    /// Index of the segment this piece belongs to. Indices at or above
    /// [`Mesh::input_segment_count`] denote hull edges promoted to segments.
    pub parent_segment: u32,
    /// Scratch flag: marked for splitting in the next batch.
    pub encroached: bool,
    /// Number of midpoint splits separating this piece from its parent.
    pub depth: u32,
    /// Set when a split was refused for numerical reasons.
    pub unsplittable: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeshError {
    #[error("edge is a subsegment and cannot be flipped")]
    ConstraintEdge,
    #[error("flip would create an inverted triangle")]
    NonConvex,
    #[error("edge lies on the hull")]
    BoundaryEdge,
    #[error("vertex degree is not three")]
    DegreeNotThree,
    #[error("vertex is protected from removal")]
    ProtectedVertex,
    #[error("point is not strictly inside the triangle")]
    NotInterior,
    #[error("operation would create a degenerate triangle")]
    Degenerate,
    #[error("stale handle")]
    StaleHandle,
    #[error("edge ({0}, {1}) not present in the mesh")]
    MissingEdge(u32, u32),
    #[error("invalid triangle list: {0}")]
    InvalidInput(String),
}

/// The ring of triangles around a vertex, in counterclockwise order.
#[derive(Clone, Debug)]
pub struct Star {
    pub triangles: Vec<TriId>,
    /// False when the vertex lies on the hull; the ring then starts and ends
    /// at hull edges.
    pub closed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Mesh {
    vertices: Vec<Vertex>,
    triangles: Vec<Triangle>,
    subsegs: Vec<Subsegment>,
    free_tris: Vec<TriId>,
    pending_free: Vec<TriId>,
    live_tris: usize,
    live_vertices: usize,
    batch_epoch: u32,
    /// Endpoints of every segment, input segments first.
    segments: Vec<[VertexId; 2]>,
    input_segments: usize,
}

impl Mesh {
    pub fn new() -> Self {
        Mesh::default()
    }

    /// Builds a mesh from an explicit triangle list (vertex indices into
    /// `points`, any orientation). All vertices are input vertices.
    pub fn from_triangles(points: &[Point2], tris: &[[u32; 3]]) -> Result<Mesh, MeshError> {
        let mut m = Mesh::new();
        for &p in points {
            m.add_vertex(p, VertexKind::Input);
        }
        let mut edges: HashMap<(u32, u32), (TriId, usize)> = HashMap::new();
        for t in tris {
            if t.iter().any(|&i| i as usize >= points.len()) {
                return Err(MeshError::InvalidInput("vertex index out of range".into()));
            }
            let mut v = [VertexId(t[0]), VertexId(t[1]), VertexId(t[2])];
            match orient2d(points[t[0] as usize], points[t[1] as usize], points[t[2] as usize]) {
                o if o.is_zero() => return Err(MeshError::InvalidInput("degenerate triangle".into())),
                o if o.is_negative() => v.swap(1, 2),
                _ => {}
            }
            let id = m.alloc_tri(Triangle {
                vertices: v,
                neighbors: [None; 3],
                segs: [None; 3],
                alive: true,
            });
            for i in 0..3 {
                let (a, b) = m.triangles[id.idx()].edge(i);
                if let Some((u, j)) = edges.remove(&(b.0, a.0)) {
                    m.triangles[id.idx()].neighbors[i] = Some(u);
                    m.triangles[u.idx()].neighbors[j] = Some(id);
                } else if edges.insert((a.0, b.0), (id, i)).is_some() {
                    return Err(MeshError::InvalidInput("non-manifold edge".into()));
                }
            }
            for &w in &v {
                m.vertices[w.idx()].hint = Some(id);
            }
        }
        Ok(m)
    }

    // ----- accessors -------------------------------------------------------

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v.idx()]
    }

    pub fn position(&self, v: VertexId) -> Point2 {
        self.vertices[v.idx()].pos
    }

    pub fn triangle(&self, t: TriId) -> &Triangle {
        &self.triangles[t.idx()]
    }

    pub fn subseg(&self, s: SubsegId) -> &Subsegment {
        &self.subsegs[s.idx()]
    }

    pub fn subseg_mut(&mut self, s: SubsegId) -> &mut Subsegment {
        &mut self.subsegs[s.idx()]
    }

    pub fn tri_points(&self, t: TriId) -> [Point2; 3] {
        let v = self.triangles[t.idx()].vertices;
        [self.position(v[0]), self.position(v[1]), self.position(v[2])]
    }

    pub fn subseg_points(&self, s: SubsegId) -> (Point2, Point2) {
        let e = self.subsegs[s.idx()].endpoints;
        (self.position(e[0]), self.position(e[1]))
    }

    /// Number of triangle slots, live or not.
    pub fn triangle_capacity(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex_capacity(&self) -> usize {
        self.vertices.len()
    }

    pub fn subseg_count(&self) -> usize {
        self.subsegs.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.live_tris
    }

    pub fn vertex_count(&self) -> usize {
        self.live_vertices
    }

    pub fn triangle_ids(&self) -> impl Iterator<Item = TriId> + '_ {
        self.triangles.iter().enumerate().filter(|(_, t)| t.alive).map(|(i, _)| TriId(i as u32))
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().enumerate().filter(|(_, v)| v.alive).map(|(i, _)| VertexId(i as u32))
    }

    pub fn subseg_ids(&self) -> impl Iterator<Item = SubsegId> {
        (0..self.subsegs.len() as u32).map(SubsegId)
    }

    pub fn batch_epoch(&self) -> u32 {
        self.batch_epoch
    }

    pub fn segments(&self) -> &[[VertexId; 2]] {
        &self.segments
    }

    pub fn input_segment_count(&self) -> usize {
        self.input_segments
    }

    pub fn hint(&self, v: VertexId) -> Option<TriId> {
        self.vertices[v.idx()].hint
    }

    pub fn walk_neighbors(&self, t: TriId) -> impl Iterator<Item = Option<TriId>> + '_ {
        self.triangles[t.idx()].neighbors.iter().copied()
    }

    /// Number of hull edges.
    pub fn hull_edge_count(&self) -> usize {
        self.triangle_ids()
            .map(|t| self.triangles[t.idx()].neighbors.iter().filter(|n| n.is_none()).count())
            .sum()
    }

    // ----- construction helpers --------------------------------------------

    pub fn add_vertex(&mut self, pos: Point2, kind: VertexKind) -> VertexId {
        let birth = if kind == VertexKind::Input { 0 } else { self.batch_epoch.max(1) };
        self.vertices.push(Vertex { pos, kind, birth_batch: birth, alive: true, hint: None });
        self.live_vertices += 1;
        VertexId(self.vertices.len() as u32 - 1)
    }

    /// Sets the batch index stamped on new Steiner vertices and releases
    /// triangle slots freed during the previous batch.
    pub fn begin_batch(&mut self, epoch: u32) {
        self.batch_epoch = epoch;
        self.free_tris.append(&mut self.pending_free);
    }

    /// Releases triangle slots freed during the batch for reuse.
    pub fn end_batch(&mut self) {
        self.free_tris.append(&mut self.pending_free);
    }

    pub(crate) fn register_segment(&mut self, a: VertexId, b: VertexId, input: bool) -> u32 {
        if input {
            debug_assert_eq!(self.segments.len(), self.input_segments);
            self.input_segments += 1;
        }
        self.segments.push([a, b]);
        self.segments.len() as u32 - 1
    }

    /// Flags the existing mesh edge `(a, b)` as a subsegment of `parent`.
    pub fn add_subsegment(&mut self, a: VertexId, b: VertexId, parent: u32) -> Result<SubsegId, MeshError> {
        let (t, i) = self.find_edge(a, b).ok_or(MeshError::MissingEdge(a.0, b.0))?;
        let id = SubsegId(self.subsegs.len() as u32);
        self.subsegs.push(Subsegment {
            endpoints: [a, b],
            parent_segment: parent,
            encroached: false,
            depth: 0,
            unsplittable: false,
        });
        self.set_seg_flag(t, i, Some(id));
        Ok(id)
    }

    fn set_seg_flag(&mut self, t: TriId, i: usize, s: Option<SubsegId>) {
        self.triangles[t.idx()].segs[i] = s;
        let (a, b) = self.triangles[t.idx()].edge(i);
        if let Some(u) = self.triangles[t.idx()].neighbors[i] {
            let j = self.triangles[u.idx()].edge_index(a, b).expect("neighbor symmetry");
            self.triangles[u.idx()].segs[j] = s;
        }
    }

    fn alloc_tri(&mut self, tri: Triangle) -> TriId {
        self.live_tris += 1;
        if let Some(id) = self.free_tris.pop() {
            self.triangles[id.idx()] = tri;
            id
        } else {
            self.triangles.push(tri);
            TriId(self.triangles.len() as u32 - 1)
        }
    }

    pub(crate) fn push_triangle(&mut self, v: [VertexId; 3]) -> TriId {
        let id = self.alloc_tri(Triangle { vertices: v, neighbors: [None; 3], segs: [None; 3], alive: true });
        for &w in &v {
            self.vertices[w.idx()].hint = Some(id);
        }
        id
    }

    pub(crate) fn link(&mut self, t: TriId, i: usize, u: Option<TriId>) {
        self.triangles[t.idx()].neighbors[i] = u;
    }

    // ----- topology queries ------------------------------------------------

    /// Triangles around `v` in counterclockwise order.
    pub fn star(&self, v: VertexId) -> Star {
        let start = match self.vertices[v.idx()].hint {
            Some(t) if self.triangles[t.idx()].alive => t,
            _ => return Star { triangles: Vec::new(), closed: false },
        };
        debug_assert!(self.triangles[start.idx()].index_of(v).is_some(), "stale vertex hint");
        let mut ccw = vec![start];
        let mut t = start;
        loop {
            let tri = &self.triangles[t.idx()];
            let i = tri.index_of(v).expect("star walk left the vertex");
            match tri.neighbors[(i + 1) % 3] {
                Some(u) if u == start => return Star { triangles: ccw, closed: true },
                Some(u) => {
                    ccw.push(u);
                    t = u;
                }
                None => break,
            }
        }
        let mut cw = Vec::new();
        t = start;
        loop {
            let tri = &self.triangles[t.idx()];
            let i = tri.index_of(v).expect("star walk left the vertex");
            match tri.neighbors[(i + 2) % 3] {
                Some(u) => {
                    cw.push(u);
                    t = u;
                }
                None => break,
            }
        }
        cw.reverse();
        cw.extend(ccw);
        Star { triangles: cw, closed: false }
    }

    /// Number of edges incident to `v`.
    pub fn vertex_degree(&self, v: VertexId) -> usize {
        debug_assert!(self.vertices[v.idx()].alive, "stale vertex handle");
        let s = self.star(v);
        if s.closed {
            s.triangles.len()
        } else {
            s.triangles.len() + 1
        }
    }

    /// Vertices adjacent to `v`.
    pub fn vertex_neighbors(&self, v: VertexId) -> Vec<VertexId> {
        let star = self.star(v);
        let mut out = Vec::with_capacity(star.triangles.len() + 1);
        for (k, &t) in star.triangles.iter().enumerate() {
            let tri = &self.triangles[t.idx()];
            let i = tri.index_of(v).unwrap();
            if k == 0 && !star.closed {
                out.push(tri.vertices[(i + 1) % 3]);
            }
            out.push(tri.vertices[(i + 2) % 3]);
        }
        out
    }

    /// A triangle holding edge `(a, b)` and the edge's index there.
    pub fn find_edge(&self, a: VertexId, b: VertexId) -> Option<(TriId, usize)> {
        for t in self.star(a).triangles {
            if let Some(i) = self.triangles[t.idx()].edge_index(a, b) {
                return Some((t, i));
            }
        }
        None
    }

    /// The one or two triangles incident to a subsegment.
    pub fn subseg_triangles(&self, s: SubsegId) -> Vec<(TriId, usize)> {
        let [a, b] = self.subsegs[s.idx()].endpoints;
        let mut out = Vec::with_capacity(2);
        if let Some((t, i)) = self.find_edge(a, b) {
            out.push((t, i));
            if let Some(u) = self.triangles[t.idx()].neighbors[i] {
                let j = self.triangles[u.idx()].edge_index(a, b).expect("neighbor symmetry");
                out.push((u, j));
            }
        }
        out
    }

    pub fn is_subseg_edge(&self, t: TriId, i: usize) -> bool {
        self.triangles[t.idx()].segs[i].is_some()
    }

    /// True iff the two angles opposite edge `i` of `t` sum to more than pi.
    /// Hull and subsegment edges are never non-Delaunay.
    pub fn is_non_delaunay_edge(&self, t: TriId, i: usize) -> bool {
        let tri = &self.triangles[t.idx()];
        if tri.segs[i].is_some() {
            return false;
        }
        let Some(u) = tri.neighbors[i] else { return false };
        let (a, b) = tri.edge(i);
        let ut = &self.triangles[u.idx()];
        let j = ut.edge_index(a, b).expect("neighbor symmetry");
        let d = ut.vertices[j];
        let [p0, p1, p2] = self.tri_points(t);
        incircle(p0, p1, p2, self.position(d)).is_positive()
    }

    // ----- mutation --------------------------------------------------------

    /// Replaces the triangles `old` with the triangles `new` (CCW vertex
    /// triples) covering the same region, rewiring neighbor links and
    /// subsegment flags. Edges listed in `new_segs` get the given flag.
    /// Returns the handles of the new triangles, in the order given; old
    /// slots are reused first.
    pub(crate) fn replace_region(
        &mut self,
        old: &[TriId],
        new: &[[VertexId; 3]],
        new_segs: &[(VertexId, VertexId, SubsegId)],
        new_hull: &[(VertexId, VertexId)],
    ) -> Vec<TriId> {
        struct Ext {
            a: VertexId,
            b: VertexId,
            nb: Option<TriId>,
            seg: Option<SubsegId>,
            used: bool,
        }
        let mut ext: Vec<Ext> = Vec::with_capacity(old.len() * 3);
        for &t in old {
            let tri = &self.triangles[t.idx()];
            debug_assert!(tri.alive, "replace_region on dead triangle");
            for i in 0..3 {
                let nb = tri.neighbors[i];
                if nb.map_or(true, |u| !old.contains(&u)) {
                    let (a, b) = tri.edge(i);
                    ext.push(Ext { a, b, nb, seg: tri.segs[i], used: false });
                }
            }
        }
        let mut ids = Vec::with_capacity(new.len());
        for (k, verts) in new.iter().enumerate() {
            let tri = Triangle { vertices: *verts, neighbors: [None; 3], segs: [None; 3], alive: true };
            if k < old.len() {
                self.triangles[old[k].idx()] = tri;
                ids.push(old[k]);
            } else {
                ids.push(self.alloc_tri(tri));
            }
        }
        for &t in old.iter().skip(new.len()) {
            self.triangles[t.idx()].alive = false;
            self.live_tris -= 1;
            self.pending_free.push(t);
        }
        for k in 0..new.len() {
            for i in 0..3 {
                let (a, b) = (new[k][(i + 1) % 3], new[k][(i + 2) % 3]);
                let seg_override = new_segs
                    .iter()
                    .find(|&&(p, q, _)| (p == a && q == b) || (p == b && q == a))
                    .map(|&(_, _, s)| s);
                let internal = (0..new.len()).find_map(|k2| {
                    if k2 == k {
                        return None;
                    }
                    (0..3).find(|&j| new[k2][(j + 1) % 3] == b && new[k2][(j + 2) % 3] == a).map(|j| (k2, j))
                });
                let id = ids[k];
                if let Some((k2, _)) = internal {
                    self.triangles[id.idx()].neighbors[i] = Some(ids[k2]);
                    self.triangles[id.idx()].segs[i] = seg_override;
                } else if let Some(e) = ext.iter_mut().find(|e| e.a == a && e.b == b) {
                    e.used = true;
                    self.triangles[id.idx()].neighbors[i] = e.nb;
                    let seg = seg_override.or(e.seg);
                    self.triangles[id.idx()].segs[i] = seg;
                    if let Some(u) = e.nb {
                        let ut = &mut self.triangles[u.idx()];
                        let j = ut.edge_index(a, b).expect("external neighbor lost the shared edge");
                        ut.neighbors[j] = Some(id);
                        ut.segs[j] = seg;
                    }
                } else if new_hull.contains(&(a, b)) {
                    self.triangles[id.idx()].neighbors[i] = None;
                    self.triangles[id.idx()].segs[i] = seg_override;
                } else {
                    panic!("replace_region: new edge ({}, {}) does not match the region boundary", a.0, b.0);
                }
            }
        }
        debug_assert!(
            ext.iter().all(|e| e.used || (e.nb.is_none() && new_hull.iter().any(|&(p, q)| p == e.a || q == e.b))),
            "replace_region: region boundary not covered"
        );
        for (k, &id) in ids.iter().enumerate() {
            for &w in &new[k] {
                self.vertices[w.idx()].hint = Some(id);
            }
        }
        ids
    }

    /// Replaces the two triangles sharing edge `i` of `t` by the alternate
    /// diagonal pair. Returns the two new triangles (reusing the old slots).
    pub fn flip(&mut self, t: TriId, i: usize) -> Result<(TriId, TriId), MeshError> {
        let tri = self.triangles.get(t.idx()).filter(|x| x.alive).ok_or(MeshError::StaleHandle)?;
        if tri.segs[i].is_some() {
            return Err(MeshError::ConstraintEdge);
        }
        let u = tri.neighbors[i].ok_or(MeshError::BoundaryEdge)?;
        let apex = tri.vertices[i];
        let (a, b) = tri.edge(i);
        let ut = &self.triangles[u.idx()];
        let j = ut.edge_index(a, b).expect("neighbor symmetry");
        let far = ut.vertices[j];
        let (pa, pb, papex, pfar) = (self.position(a), self.position(b), self.position(apex), self.position(far));
        // t = (apex, a, b); u = (far, b, a). New: (apex, a, far), (apex, far, b).
        if !orient2d(papex, pa, pfar).is_positive() || !orient2d(papex, pfar, pb).is_positive() {
            return Err(MeshError::NonConvex);
        }
        let ids = self.replace_region(&[t, u], &[[apex, a, far], [apex, far, b]], &[], &[]);
        Ok((ids[0], ids[1]))
    }

    /// Removes a degree-three free point, merging its three triangles.
    pub fn flop(&mut self, v: VertexId) -> Result<TriId, MeshError> {
        let vert = self.vertices.get(v.idx()).filter(|x| x.alive).ok_or(MeshError::StaleHandle)?;
        if vert.kind != VertexKind::SteinerCircumcenter {
            return Err(MeshError::ProtectedVertex);
        }
        let star = self.star(v);
        if !star.closed {
            return Err(MeshError::ProtectedVertex);
        }
        if star.triangles.len() != 3 {
            return Err(MeshError::DegreeNotThree);
        }
        let mut ring = [VertexId(0); 3];
        for (k, &t) in star.triangles.iter().enumerate() {
            let tri = &self.triangles[t.idx()];
            let i = tri.index_of(v).unwrap();
            if tri.segs[(i + 1) % 3].is_some() || tri.segs[(i + 2) % 3].is_some() {
                return Err(MeshError::ProtectedVertex);
            }
            ring[k] = tri.vertices[(i + 1) % 3];
        }
        let ids = self.replace_region(&star.triangles, &[ring], &[], &[]);
        self.vertices[v.idx()].alive = false;
        self.vertices[v.idx()].hint = None;
        self.live_vertices -= 1;
        Ok(ids[0])
    }

    /// Removes an interior free point of any degree by ear-clipping the
    /// polygon formed by its neighbors. Returns the new triangles, which need
    /// not be Delaunay.
    pub fn clip_star(&mut self, v: VertexId) -> Result<Vec<TriId>, MeshError> {
        let vert = self.vertices.get(v.idx()).filter(|x| x.alive).ok_or(MeshError::StaleHandle)?;
        if vert.kind != VertexKind::SteinerCircumcenter {
            return Err(MeshError::ProtectedVertex);
        }
        let star = self.star(v);
        if !star.closed {
            return Err(MeshError::ProtectedVertex);
        }
        let mut ring = Vec::with_capacity(star.triangles.len());
        for &t in &star.triangles {
            let tri = &self.triangles[t.idx()];
            let i = tri.index_of(v).unwrap();
            if tri.segs[(i + 1) % 3].is_some() || tri.segs[(i + 2) % 3].is_some() {
                return Err(MeshError::ProtectedVertex);
            }
            ring.push(tri.vertices[(i + 1) % 3]);
        }
        let mut tris = Vec::with_capacity(ring.len() - 2);
        while ring.len() > 3 {
            let n = ring.len();
            let ear = (0..n).find(|&k| {
                let (a, b, c) = (ring[(k + n - 1) % n], ring[k], ring[(k + 1) % n]);
                let (pa, pb, pc) = (self.position(a), self.position(b), self.position(c));
                orient2d(pa, pb, pc).is_positive()
                    && ring.iter().all(|&w| {
                        w == a || w == b || w == c || {
                            let q = self.position(w);
                            !(!orient2d(pa, pb, q).is_negative()
                                && !orient2d(pb, pc, q).is_negative()
                                && !orient2d(pc, pa, q).is_negative())
                        }
                    })
            });
            let Some(k) = ear else { return Err(MeshError::NonConvex) };
            tris.push([ring[(k + n - 1) % n], ring[k], ring[(k + 1) % n]]);
            ring.remove(k);
        }
        if !orient2d(self.position(ring[0]), self.position(ring[1]), self.position(ring[2])).is_positive() {
            return Err(MeshError::NonConvex);
        }
        tris.push([ring[0], ring[1], ring[2]]);
        let ids = self.replace_region(&star.triangles, &tris, &[], &[]);
        self.vertices[v.idx()].alive = false;
        self.vertices[v.idx()].hint = None;
        self.live_vertices -= 1;
        Ok(ids)
    }

    /// Inserts `p` strictly inside `t`, splitting it into three.
    pub fn split_triangle(&mut self, t: TriId, p: Point2, kind: VertexKind) -> Result<VertexId, MeshError> {
        let tri = self.triangles.get(t.idx()).filter(|x| x.alive).ok_or(MeshError::StaleHandle)?;
        let v = tri.vertices;
        let pts = [self.position(v[0]), self.position(v[1]), self.position(v[2])];
        for i in 0..3 {
            if !orient2d(pts[(i + 1) % 3], pts[(i + 2) % 3], p).is_positive() {
                return Err(MeshError::NotInterior);
            }
        }
        let m = self.add_vertex(p, kind);
        self.replace_region(&[t], &[[v[0], v[1], m], [v[1], v[2], m], [v[2], v[0], m]], &[], &[]);
        Ok(m)
    }

    /// Inserts `p` on edge `i` of `t`, splitting the one or two incident
    /// triangles. A subsegment edge is split into two subsegments.
    pub fn split_edge(&mut self, t: TriId, i: usize, p: Point2, kind: VertexKind) -> Result<VertexId, MeshError> {
        let tri = self.triangles.get(t.idx()).filter(|x| x.alive).ok_or(MeshError::StaleHandle)?;
        let apex = tri.vertices[i];
        let (a, b) = tri.edge(i);
        let seg = tri.segs[i];
        let far = tri.neighbors[i].map(|u| {
            let ut = &self.triangles[u.idx()];
            (u, ut.vertices[ut.edge_index(a, b).expect("neighbor symmetry")])
        });
        let (pa, pb) = (self.position(a), self.position(b));
        if p == pa || p == pb {
            return Err(MeshError::Degenerate);
        }
        let papex = self.position(apex);
        if !orient2d(papex, pa, p).is_positive() || !orient2d(papex, p, pb).is_positive() {
            return Err(MeshError::Degenerate);
        }
        if let Some((_, w)) = far {
            let pw = self.position(w);
            if !orient2d(pw, pb, p).is_positive() || !orient2d(pw, p, pa).is_positive() {
                return Err(MeshError::Degenerate);
            }
        }
        let m = self.add_vertex(p, kind);
        let mut new_segs = Vec::new();
        if let Some(s) = seg {
            let old = self.subsegs[s.idx()].clone();
            let [e0, e1] = old.endpoints;
            let s2 = SubsegId(self.subsegs.len() as u32);
            self.subsegs.push(Subsegment {
                endpoints: [m, e1],
                parent_segment: old.parent_segment,
                encroached: false,
                depth: old.depth + 1,
                unsplittable: false,
            });
            let s1 = &mut self.subsegs[s.idx()];
            s1.endpoints = [e0, m];
            s1.depth += 1;
            s1.encroached = false;
            new_segs.push((e0, m, s));
            new_segs.push((m, e1, s2));
        }
        match far {
            Some((u, w)) => {
                self.replace_region(&[t, u], &[[apex, a, m], [apex, m, b], [w, b, m], [w, m, a]], &new_segs, &[]);
            }
            None => {
                self.replace_region(&[t], &[[apex, a, m], [apex, m, b]], &new_segs, &[(a, m), (m, b)]);
            }
        }
        Ok(m)
    }

    /// Splits subsegment `s` at `p` (its midpoint).
    pub fn split_subsegment(&mut self, s: SubsegId, p: Point2) -> Result<VertexId, MeshError> {
        let [a, b] = self.subsegs.get(s.idx()).ok_or(MeshError::StaleHandle)?.endpoints;
        let (t, i) = self.find_edge(a, b).ok_or(MeshError::MissingEdge(a.0, b.0))?;
        self.split_edge(t, i, p, VertexKind::SteinerMidpoint)
    }

    // ----- validation ------------------------------------------------------

    /// Full structural scan: orientation, neighbor symmetry, subsegment flag
    /// agreement, vertex hints. Returns the first problem found.
    pub fn check_structure(&self) -> Result<(), String> {
        for t in self.triangle_ids() {
            let tri = &self.triangles[t.idx()];
            for &v in &tri.vertices {
                if !self.vertices[v.idx()].alive {
                    return Err(format!("triangle {} uses dead vertex {}", t.0, v.0));
                }
            }
            let [p0, p1, p2] = self.tri_points(t);
            if !orient2d(p0, p1, p2).is_positive() {
                return Err(format!("triangle {} is not counterclockwise", t.0));
            }
            for i in 0..3 {
                let (a, b) = tri.edge(i);
                if let Some(u) = tri.neighbors[i] {
                    let ut = &self.triangles[u.idx()];
                    if !ut.alive {
                        return Err(format!("triangle {} links dead neighbor {}", t.0, u.0));
                    }
                    let j = (0..3)
                        .find(|&j| ut.edge(j) == (b, a))
                        .ok_or_else(|| format!("triangles {} and {} disagree on a shared edge", t.0, u.0))?;
                    if ut.neighbors[j] != Some(t) {
                        return Err(format!("neighbor link {} -> {} not symmetric", t.0, u.0));
                    }
                    if ut.segs[j] != tri.segs[i] {
                        return Err(format!("subsegment flags differ across edge {}-{}", a.0, b.0));
                    }
                }
                if let Some(s) = tri.segs[i] {
                    let e = self.subsegs[s.idx()].endpoints;
                    if !((e[0] == a && e[1] == b) || (e[0] == b && e[1] == a)) {
                        return Err(format!("subsegment {} flag on wrong edge", s.0));
                    }
                }
            }
        }
        for v in self.vertex_ids() {
            match self.vertices[v.idx()].hint {
                Some(t) if self.triangles[t.idx()].alive && self.triangles[t.idx()].index_of(v).is_some() => {}
                _ => return Err(format!("vertex {} has a stale triangle hint", v.0)),
            }
        }
        for s in self.subseg_ids() {
            let [a, b] = self.subsegs[s.idx()].endpoints;
            match self.find_edge(a, b) {
                Some((t, i)) if self.triangles[t.idx()].segs[i] == Some(s) => {}
                _ => return Err(format!("subsegment {} is not a flagged mesh edge", s.0)),
            }
        }
        Ok(())
    }

    /// `T = 2V - H - 2` for a triangulated convex region.
    pub fn euler_holds(&self) -> bool {
        let t = self.triangle_count() as i64;
        let v = self.vertex_count() as i64;
        let h = self.hull_edge_count() as i64;
        t == 2 * v - h - 2
    }
}

/// Per-triangle claim slots holding packed priority keys (0 = unclaimed).
/// Concurrent claimers resolve to the maximum key regardless of order.
#[derive(Debug, Default)]
pub struct ClaimTable {
    slots: Vec<AtomicU64>,
}

impl ClaimTable {
    pub fn new() -> Self {
        ClaimTable::default()
    }

    pub fn reset(&mut self, capacity: usize) {
        for s in &mut self.slots {
            *s.get_mut() = 0;
        }
        self.slots.resize_with(capacity, || AtomicU64::new(0));
    }

    /// Conditional-maximum update; returns the previous key.
    #[inline]
    pub fn claim(&self, t: TriId, key: u64) -> u64 {
        self.slots[t.idx()].fetch_max(key, Ordering::AcqRel)
    }

    #[inline]
    pub fn get(&self, t: TriId) -> u64 {
        self.slots[t.idx()].load(Ordering::Acquire)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn square() -> Mesh {
        // diagonal (0,0)-(1,1)
        Mesh::from_triangles(&[p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)], &[[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    fn equilateral() -> Mesh {
        Mesh::from_triangles(&[p(0., 0.), p(1., 0.), p(0.5, 3f64.sqrt() / 2.)], &[[0, 1, 2]]).unwrap()
    }

    fn has_edge(m: &Mesh, a: u32, b: u32) -> bool {
        m.find_edge(VertexId(a), VertexId(b)).is_some()
    }

    #[test]
    fn flip_square_diagonal() {
        let mut m = square();
        let (t, i) = m.find_edge(VertexId(0), VertexId(2)).unwrap();
        m.flip(t, i).unwrap();
        assert!(has_edge(&m, 1, 3));
        assert!(!has_edge(&m, 0, 2));
        m.check_structure().unwrap();
        assert_eq!(m.vertex_degree(VertexId(0)), 2);
        assert_eq!(m.vertex_degree(VertexId(1)), 3);
    }

    #[test]
    fn flip_twice_restores() {
        let mut m = square();
        let (t, i) = m.find_edge(VertexId(0), VertexId(2)).unwrap();
        m.flip(t, i).unwrap();
        let (t, i) = m.find_edge(VertexId(1), VertexId(3)).unwrap();
        m.flip(t, i).unwrap();
        assert!(has_edge(&m, 0, 2));
        m.check_structure().unwrap();
    }

    #[test]
    fn flip_constraint_edge_rejected() {
        let mut m = square();
        m.add_subsegment(VertexId(0), VertexId(2), 0).unwrap();
        let (t, i) = m.find_edge(VertexId(0), VertexId(2)).unwrap();
        assert_eq!(m.flip(t, i), Err(MeshError::ConstraintEdge));
    }

    #[test]
    fn flip_non_convex_rejected() {
        // Quad (0,0),(2,0),(1,0.2),(1,1): diagonal (2,0)-(0,0)... use the
        // triangles (0,0),(2,0),(1,0.2) and (0,0),(1,0.2),(1,1) sharing
        // (0,0)-(1,0.2); the alternate diagonal (2,0)-(1,1) leaves (1,0.2)
        // reflex.
        let pts = [p(0., 0.), p(2., 0.), p(1., 0.2), p(1., 1.)];
        let mut m = Mesh::from_triangles(&pts, &[[0, 1, 2], [0, 2, 3]]).unwrap();
        let (t, i) = m.find_edge(VertexId(0), VertexId(2)).unwrap();
        assert_eq!(m.flip(t, i), Err(MeshError::NonConvex));
        // Independent check: one of the candidate triangles is not CCW.
        assert!(!orient2d(pts[1], pts[3], pts[0]).is_positive() || !orient2d(pts[3], pts[1], pts[2]).is_positive());
    }

    #[test]
    fn flop_centroid() {
        let mut m = equilateral();
        let t = m.triangle_ids().next().unwrap();
        let c = m.split_triangle(t, p(0.5, 3f64.sqrt() / 6.), VertexKind::SteinerCircumcenter).unwrap();
        assert_eq!(m.vertex_degree(c), 3);
        let (v0, t0) = (m.vertex_count(), m.triangle_count());
        m.flop(c).unwrap();
        assert_eq!(m.vertex_count(), v0 - 1);
        assert_eq!(m.triangle_count(), t0 - 2);
        m.check_structure().unwrap();
    }

    #[test]
    fn flop_errors() {
        let mut m = equilateral();
        let t = m.triangle_ids().next().unwrap();
        let c = m.split_triangle(t, p(0.5, 0.3), VertexKind::SteinerCircumcenter).unwrap();
        // Raise degree to 5 by inserting near c in two of its triangles.
        let star = m.star(c).triangles;
        let pts = m.tri_points(star[0]);
        let q = Point2::new((pts[0].x + pts[1].x + pts[2].x) / 3., (pts[0].y + pts[1].y + pts[2].y) / 3.);
        let d = m.split_triangle(star[0], q, VertexKind::SteinerCircumcenter).unwrap();
        let star = m.star(c).triangles;
        let t2 = star.iter().copied().find(|&t| m.triangle(t).index_of(d).is_none()).unwrap();
        let pts = m.tri_points(t2);
        let q = Point2::new((pts[0].x + pts[1].x + pts[2].x) / 3., (pts[0].y + pts[1].y + pts[2].y) / 3.);
        m.split_triangle(t2, q, VertexKind::SteinerCircumcenter).unwrap();
        assert_eq!(m.vertex_degree(c), 5);
        assert_eq!(m.flop(c), Err(MeshError::DegreeNotThree));

        // Input vertex of degree three.
        let mut m = Mesh::from_triangles(
            &[p(0., 0.), p(2., 0.), p(1., 2.), p(1., 0.7)],
            &[[0, 1, 3], [1, 2, 3], [2, 0, 3]],
        )
        .unwrap();
        assert_eq!(m.vertex_degree(VertexId(3)), 3);
        assert_eq!(m.flop(VertexId(3)), Err(MeshError::ProtectedVertex));
    }

    #[test]
    fn non_delaunay_edge_examples() {
        let m = square();
        let (t, i) = m.find_edge(VertexId(0), VertexId(2)).unwrap();
        assert!(!m.is_non_delaunay_edge(t, i));
        let wide = Mesh::from_triangles(&[p(0., 0.), p(3., 0.), p(3., 1.), p(0., 1.)], &[[0, 1, 2], [0, 2, 3]]).unwrap();
        let (t, i) = wide.find_edge(VertexId(0), VertexId(2)).unwrap();
        assert!(!wide.is_non_delaunay_edge(t, i));
        // A long thin quad where the diagonal is bad.
        let skew = Mesh::from_triangles(&[p(0., 0.), p(3., 0.), p(3.5, 1.), p(0.5, 1.)], &[[0, 1, 2], [0, 2, 3]]).unwrap();
        let (t, i) = skew.find_edge(VertexId(0), VertexId(2)).unwrap();
        assert!(skew.is_non_delaunay_edge(t, i));
        for t in skew.triangle_ids() {
            for i in 0..3 {
                if skew.triangle(t).neighbors[i].is_none() {
                    assert!(!skew.is_non_delaunay_edge(t, i));
                }
            }
        }
    }

    #[test]
    fn split_triangle_counts() {
        let mut m = equilateral();
        let t = m.triangle_ids().next().unwrap();
        let c = m.split_triangle(t, p(0.5, 0.3), VertexKind::SteinerCircumcenter).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.triangle_count(), 3);
        assert_eq!(m.vertex_degree(c), 3);
        m.check_structure().unwrap();
        assert!(m.euler_holds());
        let t = m.triangle_ids().next().unwrap();
        let [a, b, _] = m.tri_points(t);
        assert_eq!(m.split_triangle(t, a.midpoint(&b), VertexKind::SteinerCircumcenter), Err(MeshError::NotInterior));
    }

    #[test]
    fn split_subsegment_boundary_and_interior() {
        let mut m = Mesh::from_triangles(&[p(0., 0.), p(2., 0.), p(1., 1.)], &[[0, 1, 2]]).unwrap();
        let s = m.add_subsegment(VertexId(0), VertexId(1), 0).unwrap();
        m.split_subsegment(s, p(1., 0.)).unwrap();
        assert_eq!(m.subseg_count(), 2);
        assert_eq!((m.vertex_count(), m.triangle_count()), (4, 2));
        m.check_structure().unwrap();

        let mut m = square();
        let s = m.add_subsegment(VertexId(0), VertexId(2), 0).unwrap();
        let mid = m.split_subsegment(s, p(0.5, 0.5)).unwrap();
        assert_eq!((m.vertex_count(), m.triangle_count()), (5, 4));
        m.check_structure().unwrap();
        let kids: Vec<_> = m.subseg_ids().map(|s| m.subseg(s).endpoints).collect();
        assert_eq!(kids, vec![[VertexId(0), mid], [mid, VertexId(2)]]);
        assert!(m.subseg_ids().all(|s| m.subseg(s).parent_segment == 0 && m.subseg(s).depth == 1));
    }

    #[test]
    fn degrees() {
        let mut m = equilateral();
        assert_eq!(m.vertex_degree(VertexId(0)), 2);
        let t = m.triangle_ids().next().unwrap();
        let c = m.split_triangle(t, p(0.5, 0.3), VertexKind::SteinerCircumcenter).unwrap();
        assert_eq!(m.vertex_degree(c), 3);
        assert_eq!(square().vertex_degree(VertexId(0)), 3);
    }

    #[test]
    fn claim_table_takes_max() {
        let mut c = ClaimTable::new();
        c.reset(2);
        assert_eq!(c.claim(TriId(0), 5), 0);
        assert_eq!(c.claim(TriId(0), 3), 5);
        assert_eq!(c.claim(TriId(0), 9), 5);
        assert_eq!(c.get(TriId(0)), 9);
        c.reset(3);
        assert_eq!(c.get(TriId(0)), 0);
    }
}
