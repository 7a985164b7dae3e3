//! Planar straight line graphs: input points plus non-crossing segments.

use thiserror::Error;

use crate::predicates::{segments_conflict, Point2};

/// Segment count up to which crossings are checked by exhaustive pairs.
pub const BRUTE_FORCE_CROSSING_LIMIT: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PslgError {
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("segment {0} references a missing point")]
    IndexOutOfRange(usize),
    #[error("segment {0} has identical endpoints")]
    DegenerateSegment(usize),
    #[error("segments {0} and {1} cross")]
    CrossingSegments(usize, usize),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pslg {
    pub points: Vec<Point2>,
    pub segments: Vec<[usize; 2]>,
    /// Parsed and preserved; refinement ignores them.
    pub holes: Vec<Point2>,
}

impl Pslg {
    /// Validates and builds a graph. Repeated segments are merged.
    pub fn new(points: Vec<Point2>, segments: Vec<[usize; 2]>) -> Result<Pslg, PslgError> {
        let mut seen = std::collections::HashSet::new();
        let segments: Vec<[usize; 2]> =
            segments.into_iter().filter(|s| seen.insert((s[0].min(s[1]), s[0].max(s[1])))).collect();
        let g = Pslg { points, segments, holes: Vec::new() };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), PslgError> {
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(PslgError::NonFinite(i));
        }
        if let Some((i, j)) = find_duplicate_point(&self.points) {
            return Err(PslgError::DuplicatePoint(i, j));
        }
        for (k, s) in self.segments.iter().enumerate() {
            if s[0] >= self.points.len() || s[1] >= self.points.len() {
                return Err(PslgError::IndexOutOfRange(k));
            }
            if s[0] == s[1] {
                return Err(PslgError::DegenerateSegment(k));
            }
        }
        if let Some((i, j)) = find_crossing(&self.points, &self.segments) {
            return Err(PslgError::CrossingSegments(i, j));
        }
        Ok(())
    }
}

fn find_duplicate_point(points: &[Point2]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(points[a], points[b]).then(a.cmp(&b)));
    order.windows(2).find(|w| points[w[0]] == points[w[1]]).map(|w| (w[0].min(w[1]), w[0].max(w[1])))
}

pub(crate) fn lex_cmp(a: Point2, b: Point2) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// First pair of segments (lower index first) that intersect other than at
/// a shared endpoint. Exhaustive below [`BRUTE_FORCE_CROSSING_LIMIT`],
/// x-interval sweep above.
pub fn find_crossing(points: &[Point2], segments: &[[usize; 2]]) -> Option<(usize, usize)> {
    let seg = |k: usize| (points[segments[k][0]], points[segments[k][1]]);
    let conflict = |i: usize, j: usize| {
        let (a, b) = seg(i);
        let (c, d) = seg(j);
        segments_conflict(a, b, c, d)
    };
    if segments.len() <= BRUTE_FORCE_CROSSING_LIMIT {
        for i in 0..segments.len() {
            for j in i + 1..segments.len() {
                if conflict(i, j) {
                    return Some((i, j));
                }
            }
        }
        return None;
    }
    let bbox = |k: usize| {
        let (a, b) = seg(k);
        (a.x.min(b.x), a.x.max(b.x), a.y.min(b.y), a.y.max(b.y))
    };
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&i, &j| bbox(i).0.total_cmp(&bbox(j).0).then(i.cmp(&j)));
    let mut active: Vec<usize> = Vec::new();
    let mut best: Option<(usize, usize)> = None;
    for &k in &order {
        let (x0, _, y0, y1) = bbox(k);
        active.retain(|&a| bbox(a).1 >= x0);
        for &a in &active {
            let (_, _, ay0, ay1) = bbox(a);
            if ay1 < y0 || ay0 > y1 {
                continue;
            }
            if conflict(a, k) {
                let pair = (a.min(k), a.max(k));
                best = Some(best.map_or(pair, |b| b.min(pair)));
            }
        }
        active.push(k);
    }
    best
}
