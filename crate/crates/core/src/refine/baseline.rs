//! Sequential single-point refinement on the same mesh operations, used as
//! the quality and size reference for the batch engine.

use std::collections::{HashSet, VecDeque};
use std::time::Instant;

use crate::cdt::lawson_fixpoint;
use crate::mesh::{Mesh, SubsegId, VertexId, VertexKind};
use crate::rules::{nanos, record_batch, PhaseTimes, RunReport, StopReason};

use super::flipflop::{remove_free_point, star_edges};
use super::phases::{is_encroached, subseg_open, subseg_splittable, too_small};
use super::quality::{is_bad_points, quality_report, triangle_splitting_point};
use super::walk::{centroid, walk, WalkResult};
use super::{sorted_triple, EngineConfig, RefineError};

struct Baseline<'a> {
    mesh: &'a mut Mesh,
    cfg: &'a EngineConfig,
    abandoned: HashSet<[VertexId; 3]>,
    subs: VecDeque<SubsegId>,
    tris: VecDeque<[VertexId; 3]>,
    inserted: u64,
    removed: u64,
}

impl Baseline<'_> {
    fn wants_split(&self, s: SubsegId) -> bool {
        let sub = self.mesh.subseg(s);
        subseg_open(self.mesh, s, self.cfg.depth_cap) && (sub.encroached || is_encroached(self.mesh, s, self.cfg.criteria.mode))
    }

    /// Queues the subsegments and bad triangles around a new vertex.
    fn enqueue_around(&mut self, v: VertexId) {
        for t in self.mesh.star(v).triangles {
            let tri = self.mesh.triangle(t);
            for i in 0..3 {
                if let Some(s) = tri.segs[i] {
                    self.subs.push_back(s);
                }
            }
            if is_bad_points(&self.mesh.tri_points(t), &self.cfg.criteria) {
                self.tris.push_back(tri.vertices);
            }
        }
    }

    fn split_subseg(&mut self, s: SubsegId) -> bool {
        if !subseg_splittable(self.mesh, s) {
            self.mesh.subseg_mut(s).unsplittable = true;
            return false;
        }
        let (a, b) = self.mesh.subseg_points(s);
        match self.mesh.split_subsegment(s, a.midpoint(&b)) {
            Ok(v) => {
                self.inserted += 1;
                lawson_fixpoint(self.mesh, star_edges(self.mesh, v));
                self.enqueue_around(v);
                true
            }
            Err(e) => {
                log::debug!("subsegment split refused: {e}");
                self.mesh.subseg_mut(s).unsplittable = true;
                false
            }
        }
    }

    fn drain_subsegments(&mut self) -> Result<(), StopReason> {
        while let Some(s) = self.subs.pop_front() {
            if self.wants_split(s) {
                self.check_caps()?;
                self.split_subseg(s);
            }
        }
        Ok(())
    }

    fn check_caps(&self) -> Result<(), StopReason> {
        if self.mesh.vertex_count() >= self.cfg.vertex_cap {
            Err(StopReason::MemoryCap)
        } else {
            Ok(())
        }
    }

    fn find_triangle(&self, v: [VertexId; 3]) -> Option<crate::mesh::TriId> {
        if !v.iter().all(|&w| self.mesh.vertex(w).is_alive()) {
            return None;
        }
        let (t, i) = self.mesh.find_edge(v[0], v[1])?;
        let tri = self.mesh.triangle(t);
        if tri.vertices[i] == v[2] {
            return Some(t);
        }
        let u = tri.neighbors[i]?;
        self.mesh.triangle(u).index_of(v[2]).map(|_| u)
    }

    /// Splits one bad triangle. A circumcenter that encroaches subsegments
    /// is taken back out and the subsegments are split instead.
    fn split_triangle(&mut self, verts: [VertexId; 3]) -> Result<(), StopReason> {
        let Some(t) = self.find_triangle(verts) else { return Ok(()) };
        let p = self.mesh.tri_points(t);
        let key = sorted_triple(verts);
        if !is_bad_points(&p, &self.cfg.criteria) || self.abandoned.contains(&key) {
            return Ok(());
        }
        if too_small(&p) {
            self.abandoned.insert(key);
            return Ok(());
        }
        self.check_caps()?;
        let c = triangle_splitting_point(&p);
        let kind = VertexKind::SteinerCircumcenter;
        let blocked = match walk(self.mesh, t, centroid(&p), c) {
            WalkResult::Inside(u) => self.mesh.split_triangle(u, c, kind).map_err(|_| None),
            WalkResult::OnEdge(u, i) => match self.mesh.triangle(u).segs[i] {
                None => self.mesh.split_edge(u, i, c, kind).map_err(|_| None),
                Some(s) => Err(Some(s)),
            },
            WalkResult::Blocked(_, _, s) => Err(Some(s)),
            WalkResult::OnVertex(_) | WalkResult::Failed => Err(None),
        };
        let v = match blocked {
            Ok(v) => v,
            Err(Some(s)) => {
                self.split_instead(&[s], key);
                return Ok(());
            }
            Err(None) => {
                self.abandoned.insert(key);
                return Ok(());
            }
        };
        self.inserted += 1;
        lawson_fixpoint(self.mesh, star_edges(self.mesh, v));
        let pos = self.mesh.position(v);
        let mut hit = Vec::new();
        for u in self.mesh.star(v).triangles {
            let tri = self.mesh.triangle(u);
            let j = tri.index_of(v).unwrap();
            if let Some(s) = tri.segs[j] {
                let (a, b) = self.mesh.subseg_points(s);
                if self.cfg.criteria.mode.encroaches(a, b, pos) {
                    hit.push(s);
                }
            }
        }
        if hit.is_empty() {
            self.enqueue_around(v);
            return Ok(());
        }
        match remove_free_point(self.mesh, v) {
            Ok((seeds, _)) => {
                self.removed += 1;
                lawson_fixpoint(self.mesh, seeds);
            }
            Err(e) => log::warn!("could not take back point {}: {e}", v.0),
        }
        self.split_instead(&hit, key);
        Ok(())
    }

    fn split_instead(&mut self, subs: &[SubsegId], source: [VertexId; 3]) {
        let mut progressed = false;
        for &s in subs {
            if subseg_open(self.mesh, s, self.cfg.depth_cap) && self.split_subseg(s) {
                progressed = true;
            }
        }
        if progressed {
            self.tris.push_back(source);
        } else {
            self.abandoned.insert(source);
        }
    }

    fn rescan(&mut self) {
        for s in self.mesh.subseg_ids() {
            if self.wants_split(s) {
                self.subs.push_back(s);
            }
        }
        for t in self.mesh.triangle_ids() {
            let tri = self.mesh.triangle(t);
            if is_bad_points(&self.mesh.tri_points(t), &self.cfg.criteria) && !self.abandoned.contains(&sorted_triple(tri.vertices)) {
                self.tris.push_back(tri.vertices);
            }
        }
    }
}

/// Refines `mesh` in place one point at a time: encroached subsegments
/// first, then bad triangles in queue order. Each rescan of the mesh is
/// reported as one batch.
pub fn refine_baseline(mesh: &mut Mesh, cfg: &EngineConfig) -> Result<RunReport, RefineError> {
    let start = Instant::now();
    let mut b = Baseline {
        mesh,
        cfg,
        abandoned: HashSet::new(),
        subs: VecDeque::new(),
        tris: VecDeque::new(),
        inserted: 0,
        removed: 0,
    };
    let mut report = RunReport { rules: cfg.rules.clone(), ..RunReport::default() };
    let mut stop = StopReason::Converged;
    loop {
        b.rescan();
        if b.subs.is_empty() && b.tris.is_empty() {
            break;
        }
        if report.batches.len() >= cfg.iteration_cap {
            stop = StopReason::IterationCap;
            break;
        }
        let round = Instant::now();
        let (ins0, rem0) = (b.inserted, b.removed);
        let attempted = (b.subs.len() + b.tris.len()) as u64;
        let run = (|| {
            b.drain_subsegments()?;
            while let Some(v) = b.tris.pop_front() {
                b.split_triangle(v)?;
                b.drain_subsegments()?;
            }
            Ok(())
        })();
        let phases = PhaseTimes { insert_ns: nanos(round.elapsed()), ..PhaseTimes::default() };
        let mut m = record_batch(report.batches.len() as u32 + 1, phases, attempted.max(b.inserted - ins0), (b.inserted - ins0) - (b.removed - rem0));
        m.inserted = b.inserted - ins0;
        m.removed = b.removed - rem0;
        report.batches.push(m);
        if let Err(s) = run {
            stop = s;
            break;
        }
    }
    report.quality = quality_report(b.mesh, &cfg.criteria);
    report.wall_s = start.elapsed().as_secs_f64();
    report.stop = stop;
    match stop {
        StopReason::Converged => Ok(report),
        StopReason::IterationCap => Err(RefineError::IterationCap { cap: cfg.iteration_cap, report: Box::new(report) }),
        StopReason::MemoryCap => Err(RefineError::MemoryCap { cap: cfg.vertex_cap, report: Box::new(report) }),
    }
}
