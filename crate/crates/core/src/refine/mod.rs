//! Batch refinement: each batch collects encroached subsegments and bad
//! triangles, computes their splitting points, locates them, filters
//! conflicting points by per-triangle claims and approximate cavities, and
//! inserts the survivors with flips, removing redundant points again by
//! flip-and-flop.

mod baseline;
mod flipflop;
mod phases;
pub mod quality;
pub mod walk;

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Executor;
use crate::mesh::{ClaimTable, Mesh, SubsegId, TriId, VertexId};
use crate::predicates::{EncroachMode, Point2};
use crate::rules::{nanos, record_batch, BatchMetrics, PhaseTimes, RuleFlags, RunReport, StopReason, DEFAULT_RATE_DROP};

pub use baseline::refine_baseline;
pub use flipflop::remove_free_point;
pub use phases::{
    cavity_filter, claim_filter, collect, compute_splitting_points, dedupe_subsegments, footprint, is_encroached, locate,
    Collected, Located,
};
pub use quality::{is_bad_triangle, quality_report, QualityCriteria};

pub const DEFAULT_CAVITY_N: usize = 32;
pub const DEFAULT_DEPTH_CAP: u32 = 64;
pub const DEFAULT_ITERATION_CAP: usize = 10_000;
pub const DEFAULT_VERTEX_CAP: usize = 1 << 26;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub criteria: QualityCriteria,
    pub rules: RuleFlags,
    /// Triangles per approximate cavity.
    pub cavity_n: usize,
    /// Subsegments this many midpoint splits deep are not split again.
    pub depth_cap: u32,
    /// Batches before giving up.
    pub iteration_cap: usize,
    /// Vertices before giving up.
    pub vertex_cap: usize,
    /// Candidates per batch; the highest priorities are kept.
    pub batch_cap: Option<usize>,
    /// Completion-rate drop that, past the completion fraction, ends a phase.
    pub rate_drop: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            criteria: QualityCriteria::default(),
            rules: RuleFlags::default(),
            cavity_n: DEFAULT_CAVITY_N,
            depth_cap: DEFAULT_DEPTH_CAP,
            iteration_cap: DEFAULT_ITERATION_CAP,
            vertex_cap: DEFAULT_VERTEX_CAP,
            batch_cap: None,
            rate_drop: DEFAULT_RATE_DROP,
        }
    }
}

impl EngineConfig {
    pub fn with_criteria(theta_deg: f64, ell: f64, mode: EncroachMode) -> Self {
        EngineConfig { criteria: QualityCriteria::new(theta_deg, ell, mode), ..EngineConfig::default() }
    }

    /// Cavity size in effect (unbounded without bounded-work growth).
    pub fn effective_cavity_n(&self) -> usize {
        if self.rules.rule3_bounded_work {
            self.cavity_n
        } else {
            usize::MAX
        }
    }
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("iteration cap of {cap} batches reached")]
    IterationCap { cap: usize, report: Box<RunReport> },
    #[error("vertex cap of {cap} reached")]
    MemoryCap { cap: usize, report: Box<RunReport> },
}

impl RefineError {
    pub fn report(&self) -> &RunReport {
        match self {
            RefineError::IterationCap { report, .. } | RefineError::MemoryCap { report, .. } => report,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Element {
    Subseg(SubsegId),
    Tri(TriId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Pending,
    InTriangle(TriId),
    /// On the relative interior of edge `i` of the triangle.
    OnEdge(TriId, usize),
}

#[derive(Clone, Debug)]
pub struct SplitCandidate {
    pub element: Element,
    pub point: Point2,
    pub key: u64,
    pub location: Location,
    pub alive: bool,
    /// Vertices of the bad triangle that produced the candidate, if any.
    pub source: Option<[VertexId; 3]>,
    /// Vertices of the located triangle when it was located.
    pub(crate) anchor: [VertexId; 3],
}

impl SplitCandidate {
    pub fn id(&self) -> u32 {
        key_id(self.key)
    }
}

/// Packs a priority into one word: midpoints above circumcenters, then the
/// measure (subsegment length or triangle area), then the lower id. Zero is
/// reserved for "unclaimed".
pub fn priority_key(midpoint: bool, measure: f64, id: u32) -> u64 {
    let m = (measure.max(0.0) as f32).to_bits() as u64 & 0x7fff_ffff;
    ((midpoint as u64) << 63) | (m << 32) | (u32::MAX - id) as u64
}

pub fn key_id(key: u64) -> u32 {
    u32::MAX - (key & 0xffff_ffff) as u32
}

pub fn key_is_midpoint(key: u64) -> bool {
    key >> 63 == 1
}

pub(crate) fn sorted_triple(v: [VertexId; 3]) -> [VertexId; 3] {
    let mut s = v;
    s.sort();
    s
}

/// Engine state carried across batches.
#[derive(Debug, Default)]
pub(crate) struct EngineState {
    /// Vertex triples of bad triangles refinement gave up on.
    pub abandoned: HashSet<[VertexId; 3]>,
    pub claims: ClaimTable,
    pub epoch: u32,
    /// Candidate count of the previous batch, used to pick the collection path.
    pub estimate: usize,
}

impl EngineState {
    pub fn new(mesh: &Mesh) -> Self {
        EngineState { estimate: mesh.triangle_count(), ..EngineState::default() }
    }

    pub fn abandon(&mut self, source: Option<[VertexId; 3]>) {
        if let Some(s) = source {
            self.abandoned.insert(sorted_triple(s));
        }
    }
}

/// Refines `mesh` in place until no encroached subsegment or bad triangle is
/// left (short of abandoned ones).
pub fn refine(mesh: &mut Mesh, cfg: &EngineConfig, exec: &Executor) -> Result<RunReport, RefineError> {
    refine_observed(mesh, cfg, exec, |_, _| {})
}

/// As [`refine`], calling `observer` after every batch.
pub fn refine_observed(
    mesh: &mut Mesh,
    cfg: &EngineConfig,
    exec: &Executor,
    mut observer: impl FnMut(&Mesh, &BatchMetrics),
) -> Result<RunReport, RefineError> {
    let start = Instant::now();
    let mut state = EngineState::new(mesh);
    let mut report = RunReport { rules: cfg.rules.clone(), ..RunReport::default() };
    loop {
        if report.batches.len() >= cfg.iteration_cap {
            return Err(finish_err(mesh, cfg, report, start, StopReason::IterationCap));
        }
        if mesh.vertex_count() >= cfg.vertex_cap {
            return Err(finish_err(mesh, cfg, report, start, StopReason::MemoryCap));
        }
        let Some(metrics) = run_batch(mesh, cfg, exec, &mut state) else { break };
        observer(mesh, &metrics);
        report.batches.push(metrics);
    }
    report.quality = quality_report(mesh, &cfg.criteria);
    report.wall_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn finish_err(mesh: &Mesh, cfg: &EngineConfig, mut report: RunReport, start: Instant, stop: StopReason) -> RefineError {
    report.quality = quality_report(mesh, &cfg.criteria);
    report.wall_s = start.elapsed().as_secs_f64();
    report.stop = stop;
    match stop {
        StopReason::MemoryCap => RefineError::MemoryCap { cap: cfg.vertex_cap, report: Box::new(report) },
        _ => RefineError::IterationCap { cap: cfg.iteration_cap, report: Box::new(report) },
    }
}

/// One batch. Returns `None` when there is nothing left to do.
pub(crate) fn run_batch(mesh: &mut Mesh, cfg: &EngineConfig, exec: &Executor, state: &mut EngineState) -> Option<BatchMetrics> {
    state.epoch += 1;
    mesh.begin_batch(state.epoch);
    let mut ph = PhaseTimes::default();

    let abandoned_before = state.abandoned.len();
    let t = Instant::now();
    let collected = collect(mesh, cfg, &state.abandoned, state.estimate, exec);
    for s in collected.unsplittable {
        mesh.subseg_mut(s).unsplittable = true;
    }
    for v in collected.too_small {
        state.abandon(Some(v));
    }
    let mut cands = collected.candidates;
    ph.collect_ns = nanos(t.elapsed());
    if cands.is_empty() {
        mesh.end_batch();
        state.epoch -= 1;
        return None;
    }
    state.estimate = cands.len();
    let attempted = cands.len() as u64;
    let subseg_candidates = cands.iter().filter(|c| matches!(c.element, Element::Subseg(_))).count() as u64;

    let t = Instant::now();
    compute_splitting_points(mesh, &mut cands, exec);
    ph.split_points_ns = nanos(t.elapsed());

    let t = Instant::now();
    let located = locate(mesh, &mut cands, cfg, exec);
    let deferred = located.deferred;
    for s in located.encroached {
        mesh.subseg_mut(s).encroached = true;
    }
    for v in located.abandon {
        state.abandon(Some(v));
    }
    dedupe_subsegments(&mut cands);
    ph.locate_ns = nanos(t.elapsed());

    let (mut filtered_claim, mut filtered_cavity) = (0, 0);
    if cfg.rules.rule2_filtering_enabled {
        let t = Instant::now();
        filtered_claim = claim_filter(mesh, &mut cands, &mut state.claims, exec);
        ph.claim_ns = nanos(t.elapsed());
        let t = Instant::now();
        let policy = crate::expandlist::CompactionPolicy::with_threshold(cfg.rules.rule1_compaction_threshold);
        filtered_cavity = cavity_filter(mesh, &mut cands, &mut state.claims, cfg.effective_cavity_n(), &policy, exec);
        ph.cavity_ns = nanos(t.elapsed());
    }

    let out = flipflop::insert_batch(mesh, &cands, cfg, state, &mut ph);
    mesh.end_batch();

    let useful = out.inserted.saturating_sub(out.removed) as u64;
    let mut m = record_batch(state.epoch, ph, attempted, useful);
    m.subseg_candidates = subseg_candidates;
    m.triangle_candidates = attempted - subseg_candidates;
    m.filtered_claim = filtered_claim as u64;
    m.filtered_cavity = filtered_cavity as u64;
    m.deferred = deferred as u64;
    m.inserted = out.inserted as u64;
    m.removed = out.removed as u64;
    m.flips = out.flips as u64;
    m.marked_encroached = out.marked as u64;
    if cfg.rules.rule2_filtering_enabled && attempted > 0 && out.inserted > 0 && useful > 0 {
        let alpha = useful as f64 / attempted as f64;
        let beta = useful as f64 / out.inserted as f64;
        let ell = (m.phases.claim_ns + m.phases.cavity_ns) as f64;
        let l = m.phases.total_ns() as f64 - ell;
        m.rule2_beneficial = crate::rules::rule2_filter_beneficial(alpha, beta, l, ell).ok();
    }
    m.abandoned = (state.abandoned.len() - abandoned_before) as u64;
    if useful == 0 && out.marked == 0 && m.abandoned == 0 {
        log::debug!("batch {} made no visible progress", state.epoch);
    }
    Some(m)
}
