//! Tuple-list expansion with an operation window.
//!
//! Each round applies the hooks to every valid tuple in `[left, right]`.
//! Emitted tuples are appended after `right` in (source index, emission
//! slot) order, so placement does not depend on the executor. Invalid tuples
//! in the processed window are compacted away only when the window is large
//! enough for compaction to pay off.

use thiserror::Error;

use crate::exec::Executor;

/// Default window size below which compaction is skipped.
pub const DEFAULT_COMPACTION_THRESHOLD: usize = 1024;
/// Default hard cap on list length.
pub const DEFAULT_CAPACITY: usize = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompactionPolicy {
    pub threshold: usize,
    /// Compaction disabled outright (threshold ignored).
    pub never: bool,
}

impl Default for CompactionPolicy {
    fn default() -> Self {
        CompactionPolicy { threshold: DEFAULT_COMPACTION_THRESHOLD, never: false }
    }
}

impl CompactionPolicy {
    pub fn with_threshold(threshold: usize) -> Self {
        CompactionPolicy { threshold, never: false }
    }

    /// Compaction on every window regardless of size.
    pub fn always() -> Self {
        CompactionPolicy::with_threshold(0)
    }

    pub fn never() -> Self {
        CompactionPolicy { threshold: usize::MAX, never: true }
    }
}

/// False when the window is below the threshold.
pub fn should_compact(window_size: usize, policy: &CompactionPolicy) -> bool {
    !policy.never && window_size >= policy.threshold
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExpandError {
    #[error("tuple list exceeded its capacity of {0}")]
    CapacityExceeded(usize),
    #[error("a hook emitted {0} tuples, above its declared fan-out of {1}")]
    FanOutExceeded(usize, usize),
}

/// Sink for the tuples one hook call emits.
#[derive(Debug)]
pub struct Emitter<T, S> {
    own: Vec<T>,
    side: Vec<S>,
}

impl<T, S> Emitter<T, S> {
    /// Appends to the list being expanded.
    pub fn push(&mut self, t: T) {
        self.own.push(t);
    }

    /// Appends to the secondary output list.
    pub fn push_side(&mut self, s: S) {
        self.side.push(s);
    }
}

/// Per-tuple behavior. The return value of `op_true` / `op_false` is the
/// tuple's validity after the call. Marks on shared state must be
/// conditional-maximum updates so that results do not depend on order.
pub trait ExpandHooks<T>: Sync {
    /// Type of tuples emitted to the secondary list.
    type Side: Send;

    /// Upper bound on tuples emitted per call, both lists combined.
    fn fan_out(&self) -> usize;

    /// Hook invoked once at the start of every round with the window about
    /// to be processed; it may invalidate window tuples.
    fn begin_round(&mut self, _round: usize, _window: &[T], _valid: &mut [bool]) {}

    fn predicate(&self, t: &T) -> bool;

    fn op_true(&self, t: &T, out: &mut Emitter<T, Self::Side>) -> bool;

    fn op_false(&self, t: &T, out: &mut Emitter<T, Self::Side>) -> bool;
}

#[derive(Clone, Debug)]
pub struct TupleList<T> {
    pub items: Vec<T>,
    pub valid: Vec<bool>,
}

impl<T> TupleList<T> {
    pub fn new(items: Vec<T>) -> Self {
        let valid = vec![true; items.len()];
        TupleList { items, valid }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn valid_items(&self) -> impl Iterator<Item = &T> {
        self.items.iter().zip(&self.valid).filter(|(_, &v)| v).map(|(t, _)| t)
    }
}

#[derive(Debug)]
pub struct ExpandOutcome<T, S> {
    pub list: TupleList<T>,
    pub side: Vec<S>,
    pub rounds: usize,
    /// Rounds in which compaction ran.
    pub compactions: usize,
}

/// Exclusive prefix sum; returns the offsets and the total.
pub fn exclusive_scan(counts: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(counts.len());
    let mut acc = 0usize;
    for &c in counts {
        offsets.push(acc);
        acc += c;
    }
    (offsets, acc)
}

/// Keeps `items[i]` where `keep[i]`, placing survivors at prefix-sum offsets.
pub fn compact<T: Clone + Send + Sync>(items: &[T], keep: &[bool], exec: &Executor) -> Vec<T> {
    let counts: Vec<usize> = keep.iter().map(|&k| k as usize).collect();
    let (offsets, total) = exclusive_scan(&counts);
    let mut slots: Vec<Option<T>> = exec.map(items.len(), |i| keep[i].then(|| items[i].clone()));
    let mut out: Vec<Option<T>> = (0..total).map(|_| None).collect();
    for (i, s) in slots.iter_mut().enumerate() {
        if let Some(t) = s.take() {
            out[offsets[i]] = Some(t);
        }
    }
    out.into_iter().map(Option::unwrap).collect()
}

/// Runs rounds until the window is empty.
pub fn expand<T, H>(
    list: TupleList<T>,
    hooks: &mut H,
    policy: &CompactionPolicy,
    capacity: usize,
    exec: &Executor,
) -> Result<ExpandOutcome<T, H::Side>, ExpandError>
where
    T: Clone + Send + Sync,
    H: ExpandHooks<T>,
{
    let TupleList { mut items, mut valid } = list;
    let mut side_all = Vec::new();
    let mut left = 0usize;
    let mut rounds = 0usize;
    let mut compactions = 0usize;
    if items.len() > capacity {
        return Err(ExpandError::CapacityExceeded(capacity));
    }
    while left < items.len() {
        let right = items.len();
        hooks.begin_round(rounds, &items[left..right], &mut valid[left..right]);
        let h: &H = hooks;
        let fan_out = h.fan_out();
        let window = &items[left..right];
        let wvalid = &valid[left..right];
        let results: Vec<Option<(bool, Emitter<T, H::Side>)>> = exec.map(window.len(), |k| {
            if !wvalid[k] {
                return None;
            }
            let t = &window[k];
            let mut out = Emitter { own: Vec::new(), side: Vec::new() };
            let keep = if h.predicate(t) { h.op_true(t, &mut out) } else { h.op_false(t, &mut out) };
            Some((keep, out))
        });
        let counts: Vec<usize> = results.iter().map(|r| r.as_ref().map_or(0, |(_, e)| e.own.len())).collect();
        for r in results.iter().flatten() {
            let n = r.1.own.len() + r.1.side.len();
            if n > fan_out {
                return Err(ExpandError::FanOutExceeded(n, fan_out));
            }
        }
        let (offsets, total) = exclusive_scan(&counts);
        if right + total > capacity {
            return Err(ExpandError::CapacityExceeded(capacity));
        }
        let mut fresh: Vec<Option<T>> = (0..total).map(|_| None).collect();
        for (k, r) in results.into_iter().enumerate() {
            if let Some((keep, out)) = r {
                valid[left + k] = keep;
                for (j, t) in out.own.into_iter().enumerate() {
                    fresh[offsets[k] + j] = Some(t);
                }
                side_all.extend(out.side);
            }
        }
        if should_compact(right - left, policy) {
            let kept = compact(&items[left..right], &valid[left..right], exec);
            items.truncate(left);
            valid.truncate(left);
            valid.extend(std::iter::repeat(true).take(kept.len()));
            items.extend(kept);
            compactions += 1;
        }
        left = items.len();
        valid.extend(std::iter::repeat(true).take(total));
        items.extend(fresh.into_iter().map(Option::unwrap));
        rounds += 1;
    }
    Ok(ExpandOutcome { list: TupleList { items, valid }, side: side_all, rounds, compactions })
}

/// Whether to carry unfinished work into the next batch rather than finish
/// it now: true iff the remaining work would hold the batch open for longer
/// than `threshold` times the batch latency so far.
pub fn carry_forward_beneficial(remaining_latency: f64, batch_latency: f64, threshold: f64) -> bool {
    batch_latency > 0.0 && remaining_latency > threshold * batch_latency
}
