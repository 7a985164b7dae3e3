//! Per-batch phases up to insertion: collection, splitting points, location
//! and the two conflict filters.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::exec::Executor;
use crate::expandlist::{compact, expand, CompactionPolicy, Emitter, ExpandHooks, TupleList, DEFAULT_CAPACITY};
use crate::mesh::{ClaimTable, Mesh, SubsegId, TriId, VertexId};
use crate::predicates::{incircle, orient2d, EncroachMode, Point2};
use crate::rules::CompletionMonitor;

use super::quality::{area, is_bad_points, triangle_splitting_point};
use super::walk::{centroid, walk, WalkResult};
use super::{priority_key, sorted_triple, Element, EngineConfig, Location, SplitCandidate};

/// Shortest edge, relative to coordinate magnitude, below which a bad
/// triangle is given up on.
const PRECISION_GUARD: f64 = 1.0 / (1u64 << 40) as f64;

/// True iff an apex of a triangle incident to `s` encroaches it.
pub fn is_encroached(mesh: &Mesh, s: SubsegId, mode: EncroachMode) -> bool {
    let (a, b) = mesh.subseg_points(s);
    mesh.subseg_triangles(s)
        .into_iter()
        .any(|(t, i)| mode.encroaches(a, b, mesh.position(mesh.triangle(t).vertices[i])))
}

/// Whether the midpoint of `s` can be inserted without a degenerate triangle.
pub(crate) fn subseg_splittable(mesh: &Mesh, s: SubsegId) -> bool {
    let (a, b) = mesh.subseg_points(s);
    let m = a.midpoint(&b);
    if m == a || m == b {
        return false;
    }
    mesh.subseg_triangles(s).into_iter().all(|(t, i)| {
        let tri = mesh.triangle(t);
        let (x, y) = tri.edge(i);
        let (px, py, apex) = (mesh.position(x), mesh.position(y), mesh.position(tri.vertices[i]));
        orient2d(apex, px, m).is_positive() && orient2d(apex, m, py).is_positive()
    })
}

/// Whether `s` may still be split at all (depth and numerical limits).
pub(crate) fn subseg_open(mesh: &Mesh, s: SubsegId, depth_cap: u32) -> bool {
    let sub = mesh.subseg(s);
    !sub.unsplittable && sub.depth < depth_cap
}

pub(crate) fn too_small(p: &[Point2; 3]) -> bool {
    let scale = p.iter().map(|q| q.x.abs().max(q.y.abs())).fold(f64::MIN_POSITIVE, f64::max);
    let min2 = [p[0].dist2(&p[1]), p[1].dist2(&p[2]), p[2].dist2(&p[0])].into_iter().fold(f64::INFINITY, f64::min);
    let g = PRECISION_GUARD * scale;
    min2 < g * g
}

#[derive(Debug, Default)]
pub struct Collected {
    pub candidates: Vec<SplitCandidate>,
    /// Encroached subsegments whose midpoint cannot be inserted.
    pub unsplittable: Vec<SubsegId>,
    /// Bad triangles too small to split reliably.
    pub too_small: Vec<[VertexId; 3]>,
}

const SKIP: u8 = 0;
const TAKE: u8 = 1;
const REFUSE: u8 = 2;

/// Encroached subsegments and bad triangles, subsegments first. `estimate`
/// is the expected candidate count; below the compaction threshold the scan
/// output is gathered densely, above it by prefix-sum compaction.
pub fn collect(
    mesh: &Mesh,
    cfg: &EngineConfig,
    abandoned: &HashSet<[VertexId; 3]>,
    estimate: usize,
    exec: &Executor,
) -> Collected {
    let q = &cfg.criteria;
    let sub_flags: Vec<u8> = exec.map(mesh.subseg_count(), |k| {
        let s = SubsegId(k as u32);
        let sub = mesh.subseg(s);
        if !subseg_open(mesh, s, cfg.depth_cap) || !(sub.encroached || is_encroached(mesh, s, q.mode)) {
            SKIP
        } else if subseg_splittable(mesh, s) {
            TAKE
        } else {
            REFUSE
        }
    });
    let tri_flags: Vec<u8> = exec.map(mesh.triangle_capacity(), |k| {
        let t = TriId(k as u32);
        let tri = mesh.triangle(t);
        if !tri.is_alive() {
            return SKIP;
        }
        let p = mesh.tri_points(t);
        if !is_bad_points(&p, q) || abandoned.contains(&sorted_triple(tri.vertices)) {
            SKIP
        } else if too_small(&p) {
            REFUSE
        } else {
            TAKE
        }
    });

    let gather = |flags: &[u8], want: u8| -> Vec<u32> {
        if estimate < cfg.rules.rule1_compaction_threshold {
            (0..flags.len() as u32).filter(|&k| flags[k as usize] == want).collect()
        } else {
            let ids: Vec<u32> = (0..flags.len() as u32).collect();
            let keep: Vec<bool> = flags.iter().map(|&f| f == want).collect();
            compact(&ids, &keep, exec)
        }
    };
    let subs = gather(&sub_flags, TAKE);
    let mut tris = gather(&tri_flags, TAKE);
    if !cfg.rules.rule4_unified_collection && !subs.is_empty() {
        tris.clear();
    }
    let subs_only = !cfg.rules.rule4_unified_collection && !subs.is_empty();

    let mut candidates = Vec::with_capacity(subs.len() + tris.len());
    for &k in &subs {
        let s = SubsegId(k);
        let (a, b) = mesh.subseg_points(s);
        let id = candidates.len() as u32;
        candidates.push(SplitCandidate {
            element: Element::Subseg(s),
            point: a.midpoint(&b),
            key: priority_key(true, a.dist(&b), id),
            location: Location::Pending,
            alive: true,
            source: None,
            anchor: [VertexId(0); 3],
        });
    }
    for &k in &tris {
        let t = TriId(k);
        let id = candidates.len() as u32;
        candidates.push(SplitCandidate {
            element: Element::Tri(t),
            point: Point2::new(f64::NAN, f64::NAN),
            key: priority_key(false, area(&mesh.tri_points(t)), id),
            location: Location::Pending,
            alive: true,
            source: Some(mesh.triangle(t).vertices),
            anchor: mesh.triangle(t).vertices,
        });
    }
    if let Some(cap) = cfg.batch_cap {
        if candidates.len() > cap {
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by_key(|&k| std::cmp::Reverse(candidates[k].key));
            let mut keep = vec![false; candidates.len()];
            for &k in &order[..cap] {
                keep[k] = true;
            }
            let mut k = 0;
            candidates.retain(|_| {
                k += 1;
                keep[k - 1]
            });
        }
    }
    Collected {
        candidates,
        unsplittable: (0..sub_flags.len()).filter(|&k| sub_flags[k] == REFUSE).map(|k| SubsegId(k as u32)).collect(),
        too_small: if subs_only {
            Vec::new()
        } else {
            (0..tri_flags.len())
                .filter(|&k| tri_flags[k] == REFUSE)
                .map(|k| mesh.triangle(TriId(k as u32)).vertices)
                .collect()
        },
    }
}

/// Midpoints for subsegments, circumcenters for triangles.
pub fn compute_splitting_points(mesh: &Mesh, cands: &mut [SplitCandidate], exec: &Executor) {
    let pts: Vec<Point2> = exec.map(cands.len(), |k| match cands[k].element {
        Element::Subseg(s) => {
            let (a, b) = mesh.subseg_points(s);
            a.midpoint(&b)
        }
        Element::Tri(t) => triangle_splitting_point(&mesh.tri_points(t)),
    });
    for (c, p) in cands.iter_mut().zip(pts) {
        c.point = p;
    }
}

#[derive(Debug, Default)]
pub struct Located {
    /// Subsegments that intercepted a walk.
    pub encroached: Vec<SubsegId>,
    /// Sources of dropped candidates that cannot make progress.
    pub abandon: Vec<[VertexId; 3]>,
    /// Candidates left for the next batch by the completion monitor.
    pub deferred: usize,
}

enum LocOutcome {
    Placed(SplitCandidate, Option<SubsegId>),
    Dropped { abandon: bool },
    Deferred,
}

fn subseg_location(mesh: &Mesh, s: SubsegId) -> Option<(Location, [VertexId; 3])> {
    let [a, b] = mesh.subseg(s).endpoints;
    mesh.find_edge(a, b).map(|(t, i)| (Location::OnEdge(t, i), mesh.triangle(t).vertices))
}

/// Rewrites `c` into the midpoint of the subsegment that blocked its walk.
fn intercept(mesh: &Mesh, c: &SplitCandidate, s: SubsegId, cfg: &EngineConfig) -> LocOutcome {
    if !subseg_open(mesh, s, cfg.depth_cap) || !subseg_splittable(mesh, s) {
        return LocOutcome::Dropped { abandon: true };
    }
    let Some((location, anchor)) = subseg_location(mesh, s) else { return LocOutcome::Dropped { abandon: true } };
    let (a, b) = mesh.subseg_points(s);
    let out = SplitCandidate {
        element: Element::Subseg(s),
        point: a.midpoint(&b),
        key: priority_key(true, a.dist(&b), c.id()),
        location,
        alive: true,
        source: c.source,
        anchor,
    };
    LocOutcome::Placed(out, Some(s))
}

fn locate_one(mesh: &Mesh, c: &SplitCandidate, cfg: &EngineConfig) -> LocOutcome {
    match c.element {
        Element::Subseg(s) => match subseg_location(mesh, s) {
            Some((location, anchor)) => LocOutcome::Placed(SplitCandidate { location, anchor, ..c.clone() }, None),
            None => LocOutcome::Dropped { abandon: false },
        },
        Element::Tri(t) => {
            let from = centroid(&mesh.tri_points(t));
            match walk(mesh, t, from, c.point) {
                WalkResult::Inside(u) => LocOutcome::Placed(
                    SplitCandidate { location: Location::InTriangle(u), anchor: mesh.triangle(u).vertices, ..c.clone() },
                    None,
                ),
                WalkResult::OnEdge(u, i) => match mesh.triangle(u).segs[i] {
                    Some(s) => intercept(mesh, c, s, cfg),
                    None => LocOutcome::Placed(
                        SplitCandidate { location: Location::OnEdge(u, i), anchor: mesh.triangle(u).vertices, ..c.clone() },
                        None,
                    ),
                },
                WalkResult::Blocked(_, _, s) => intercept(mesh, c, s, cfg),
                WalkResult::OnVertex(_) | WalkResult::Failed => LocOutcome::Dropped { abandon: true },
            }
        }
    }
}

/// Locates every candidate by walking from its own triangle. A walk blocked
/// by a subsegment turns the candidate into that subsegment's midpoint. In
/// parallel mode with bounded work, a completion monitor may leave the
/// stragglers for the next batch.
pub fn locate(mesh: &Mesh, cands: &mut [SplitCandidate], cfg: &EngineConfig, exec: &Executor) -> Located {
    let monitored = exec.is_parallel() && cfg.rules.rule3_bounded_work;
    let start = Instant::now();
    let monitor = Mutex::new(CompletionMonitor::new(
        cands.len(),
        cfg.rules.rule3_gamma,
        cfg.rate_drop,
        (cands.len() / 16).max(8),
    ));
    let stop = AtomicBool::new(false);
    let view: &[SplitCandidate] = cands;
    let outcomes: Vec<LocOutcome> = exec.map(view.len(), |k| {
        if monitored && stop.load(Ordering::Acquire) {
            return LocOutcome::Deferred;
        }
        let out = locate_one(mesh, &view[k], cfg);
        if monitored {
            let mut m = monitor.lock().expect("monitor poisoned");
            if m.record(start.elapsed().as_secs_f64()) {
                stop.store(true, Ordering::Release);
            }
        }
        out
    });
    let mut res = Located::default();
    for (c, o) in cands.iter_mut().zip(outcomes) {
        match o {
            LocOutcome::Placed(n, mark) => {
                *c = n;
                res.encroached.extend(mark);
            }
            LocOutcome::Dropped { abandon } => {
                c.alive = false;
                if abandon {
                    res.abandon.extend(c.source);
                }
            }
            LocOutcome::Deferred => {
                c.alive = false;
                res.deferred += 1;
            }
        }
    }
    res
}

/// Keeps one candidate per subsegment, the one with the highest key.
pub fn dedupe_subsegments(cands: &mut [SplitCandidate]) {
    let mut best: HashMap<SubsegId, usize> = HashMap::new();
    for k in 0..cands.len() {
        let c = &cands[k];
        let Element::Subseg(s) = c.element else { continue };
        if !c.alive {
            continue;
        }
        match best.get(&s) {
            Some(&j) if cands[j].key >= c.key => cands[k].alive = false,
            Some(&j) => {
                cands[j].alive = false;
                best.insert(s, k);
            }
            None => {
                best.insert(s, k);
            }
        }
    }
}

/// Triangles a candidate's insertion replaces.
pub fn footprint(mesh: &Mesh, loc: Location) -> [Option<TriId>; 2] {
    match loc {
        Location::Pending => [None, None],
        Location::InTriangle(t) => [Some(t), None],
        Location::OnEdge(t, i) => [Some(t), mesh.triangle(t).neighbors[i]],
    }
}

/// At most one candidate per triangle: each footprint triangle goes to the
/// highest key claiming it, and a candidate survives only if it won every
/// triangle of its footprint. Returns the number of candidates filtered.
pub fn claim_filter(mesh: &Mesh, cands: &mut [SplitCandidate], claims: &mut ClaimTable, exec: &Executor) -> usize {
    claims.reset(mesh.triangle_capacity());
    let claims: &ClaimTable = claims;
    let view: &[SplitCandidate] = cands;
    exec.for_each(view.len(), |k| {
        let c = &view[k];
        if c.alive {
            for t in footprint(mesh, c.location).into_iter().flatten() {
                claims.claim(t, c.key);
            }
        }
    });
    let keep: Vec<bool> = exec.map(view.len(), |k| {
        let c = &view[k];
        c.alive && footprint(mesh, c.location).into_iter().flatten().all(|t| claims.get(t) == c.key)
    });
    apply_keep(cands, &keep)
}

fn apply_keep(cands: &mut [SplitCandidate], keep: &[bool]) -> usize {
    let mut filtered = 0;
    for (c, &k) in cands.iter_mut().zip(keep) {
        if c.alive && !k {
            c.alive = false;
            filtered += 1;
        }
    }
    filtered
}

/// Approximate-cavity growth: tuples are (candidate, triangle).
struct CavityHooks<'a> {
    mesh: &'a Mesh,
    cands: &'a [SplitCandidate],
    claims: &'a ClaimTable,
    cap: usize,
    seen: HashSet<(u32, TriId)>,
    counts: Vec<usize>,
}

impl CavityHooks<'_> {
    fn in_circle(&self, t: TriId, p: Point2) -> bool {
        let [a, b, c] = self.mesh.tri_points(t);
        incircle(a, b, c, p).is_positive()
    }
}

impl ExpandHooks<(u32, TriId)> for CavityHooks<'_> {
    type Side = ();

    fn fan_out(&self) -> usize {
        3
    }

    /// Drops repeats and tuples past a candidate's budget. Runs between
    /// rounds, so the outcome does not depend on the executor.
    fn begin_round(&mut self, _round: usize, window: &[(u32, TriId)], valid: &mut [bool]) {
        for (k, &(c, t)) in window.iter().enumerate() {
            if !valid[k] {
                continue;
            }
            let c_idx = c as usize;
            if self.counts[c_idx] >= self.cap || !self.seen.insert((c, t)) {
                valid[k] = false;
                continue;
            }
            self.counts[c_idx] += 1;
        }
    }

    fn predicate(&self, &(c, t): &(u32, TriId)) -> bool {
        self.in_circle(t, self.cands[c as usize].point)
    }

    fn op_true(&self, &(c, t): &(u32, TriId), out: &mut Emitter<(u32, TriId), ()>) -> bool {
        let cand = &self.cands[c as usize];
        self.claims.claim(t, cand.key);
        let tri = self.mesh.triangle(t);
        for i in 0..3 {
            if tri.segs[i].is_some() {
                continue;
            }
            if let Some(u) = tri.neighbors[i] {
                if self.in_circle(u, cand.point) {
                    out.push((c, u));
                }
            }
        }
        true
    }

    fn op_false(&self, _: &(u32, TriId), _: &mut Emitter<(u32, TriId), ()>) -> bool {
        false
    }
}

/// Grows up to `n` triangles of each candidate's cavity from its footprint,
/// without crossing subsegments, claiming each with the candidate's key. A
/// candidate survives only if it holds every triangle it reached. Returns
/// the number of candidates filtered.
pub fn cavity_filter(
    mesh: &Mesh,
    cands: &mut [SplitCandidate],
    claims: &mut ClaimTable,
    n: usize,
    policy: &CompactionPolicy,
    exec: &Executor,
) -> usize {
    claims.reset(mesh.triangle_capacity());
    let mut seeds = Vec::new();
    for (k, c) in cands.iter().enumerate() {
        if c.alive {
            seeds.extend(footprint(mesh, c.location).into_iter().flatten().map(|t| (k as u32, t)));
        }
    }
    let view: &[SplitCandidate] = cands;
    let mut hooks =
        CavityHooks { mesh, cands: view, claims, cap: n, seen: HashSet::new(), counts: vec![0; view.len()] };
    let keep: Vec<bool> = match expand(TupleList::new(seeds), &mut hooks, policy, DEFAULT_CAPACITY, exec) {
        Ok(out) => {
            let mut keep: Vec<bool> = view.iter().map(|c| c.alive).collect();
            for &(c, t) in out.list.valid_items() {
                if claims.get(t) != view[c as usize].key {
                    keep[c as usize] = false;
                }
            }
            keep
        }
        Err(e) => {
            // Fall back to the single highest-priority candidate.
            log::warn!("cavity growth aborted: {e}");
            let best = view.iter().enumerate().filter(|(_, c)| c.alive).max_by_key(|(_, c)| c.key).map(|(k, _)| k);
            (0..view.len()).map(|k| Some(k) == best).collect()
        }
    };
    apply_keep(cands, &keep)
}
