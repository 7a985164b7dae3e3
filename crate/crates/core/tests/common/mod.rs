//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use batchmesh::expandlist::{Emitter, ExpandHooks};
use batchmesh::mesh::{Mesh, TriId};
use batchmesh::predicates::{incircle, orient2d, Point2};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite coordinate")
}

/// Sign of the orientation determinant in exact rational arithmetic.
pub fn orient_exact(a: Point2, b: Point2, c: Point2) -> i8 {
    let d = (rat(b.x) - rat(a.x)) * (rat(c.y) - rat(a.y)) - (rat(b.y) - rat(a.y)) * (rat(c.x) - rat(a.x));
    sign(&d)
}

/// Sign of the incircle determinant in exact rational arithmetic.
pub fn incircle_exact(a: Point2, b: Point2, c: Point2, d: Point2) -> i8 {
    let row = |p: Point2| {
        let (x, y) = (rat(p.x) - rat(d.x), rat(p.y) - rat(d.y));
        let w = &x * &x + &y * &y;
        (x, y, w)
    };
    let (ax, ay, aw) = row(a);
    let (bx, by, bw) = row(b);
    let (cx, cy, cw) = row(c);
    let det = &ax * (&by * &cw - &bw * &cy) - &ay * (&bx * &cw - &bw * &cx) + &aw * (&bx * &cy - &by * &cx);
    sign(&det)
}

fn sign(x: &BigRational) -> i8 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}

/// Conservative rational lower bound for cos^2(theta), so that passing
/// triangles are never waved through by rounding.
fn cos2_lower(theta_deg: f64) -> BigRational {
    let c = theta_deg.to_radians().cos();
    let c2 = c * c;
    rat(c2) * BigRational::new(BigInt::from(999_999_999_999i64), BigInt::from(1_000_000_000_000i64))
}

/// Exact check that every angle of the triangle is at least `theta_deg`
/// (up to a relative 1e-12 slack on the bound itself).
pub fn angles_at_least(p: [Point2; 3], theta_deg: f64) -> bool {
    let c2 = cos2_lower(theta_deg);
    (0..3).all(|i| {
        let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
        let (ux, uy) = (rat(b.x) - rat(a.x), rat(b.y) - rat(a.y));
        let (vx, vy) = (rat(c.x) - rat(a.x), rat(c.y) - rat(a.y));
        let dot = &ux * &vx + &uy * &vy;
        if !dot.is_positive() {
            return true;
        }
        let lu = &ux * &ux + &uy * &uy;
        let lv = &vx * &vx + &vy * &vy;
        &dot * &dot <= &c2 * lu * lv
    })
}

/// Directed graph closure: tuples are node ids; a node in `blocked` is
/// invalidated instead of expanded. Each node is emitted at most once,
/// decided by a first-claimer flag.
pub struct Closure {
    pub adj: Vec<Vec<u32>>,
    pub blocked: HashSet<u32>,
    pub seen: Vec<AtomicBool>,
}

impl Closure {
    pub fn random(rng: &mut ChaCha8Rng, n: usize) -> (Closure, Vec<u32>) {
        let adj: Vec<Vec<u32>> =
            (0..n).map(|_| (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..n as u32)).collect()).collect();
        let blocked: HashSet<u32> = (0..n as u32).filter(|_| rng.gen_bool(0.15)).collect();
        let seeds: Vec<u32> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0..n as u32)).collect();
        let c = Closure { adj, blocked, seen: (0..n).map(|_| AtomicBool::new(false)).collect() };
        for &s in &seeds {
            c.seen[s as usize].store(true, Ordering::Relaxed);
        }
        let mut uniq = seeds.clone();
        uniq.sort();
        uniq.dedup();
        (c, uniq)
    }

    pub fn reset(&self, seeds: &[u32]) {
        for s in &self.seen {
            s.store(false, Ordering::Relaxed);
        }
        for &s in seeds {
            self.seen[s as usize].store(true, Ordering::Relaxed);
        }
    }

    /// Sequential worklist oracle.
    pub fn oracle(&self, seeds: &[u32]) -> Vec<u32> {
        let mut seen: HashSet<u32> = seeds.iter().copied().collect();
        let mut queue: VecDeque<u32> = seeds.iter().copied().collect();
        let mut out = Vec::new();
        while let Some(v) = queue.pop_front() {
            if self.blocked.contains(&v) {
                continue;
            }
            out.push(v);
            for &w in &self.adj[v as usize] {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        out.sort();
        out
    }
}

impl ExpandHooks<u32> for Closure {
    type Side = ();

    fn fan_out(&self) -> usize {
        4
    }

    fn predicate(&self, v: &u32) -> bool {
        !self.blocked.contains(v)
    }

    fn op_true(&self, v: &u32, out: &mut Emitter<u32, ()>) -> bool {
        for &w in &self.adj[*v as usize] {
            if !self.seen[w as usize].swap(true, Ordering::AcqRel) {
                out.push(w);
            }
        }
        true
    }

    fn op_false(&self, _: &u32, _: &mut Emitter<u32, ()>) -> bool {
        false
    }
}

/// Cavity growth on a mesh: tuples are (point index, triangle). A triangle
/// is expanded through non-subsegment edges into neighbors whose
/// circumcircle contains the point; each (point, triangle) pair is emitted
/// at most once.
pub struct CavityGrowth<'a> {
    pub mesh: &'a Mesh,
    pub points: Vec<Point2>,
    seen: Vec<AtomicU64>,
}

impl<'a> CavityGrowth<'a> {
    pub fn new(mesh: &'a Mesh, points: Vec<Point2>) -> Self {
        assert!(points.len() <= 64);
        let seen = (0..mesh.triangle_capacity()).map(|_| AtomicU64::new(0)).collect();
        CavityGrowth { mesh, points, seen }
    }

    pub fn seeds(&self) -> Vec<(u32, TriId)> {
        let mut out = Vec::new();
        for (k, &p) in self.points.iter().enumerate() {
            if let Some(t) = containing(self.mesh, p) {
                self.seen[t.idx()].fetch_or(1 << k, Ordering::AcqRel);
                out.push((k as u32, t));
            }
        }
        out
    }

    /// Sequential worklist oracle.
    pub fn oracle(&self) -> Vec<(u32, TriId)> {
        let mut out = Vec::new();
        for (k, &p) in self.points.iter().enumerate() {
            let Some(t0) = containing(self.mesh, p) else { continue };
            let mut seen = HashSet::from([t0]);
            let mut queue = VecDeque::from([t0]);
            while let Some(t) = queue.pop_front() {
                out.push((k as u32, t));
                let tri = self.mesh.triangle(t);
                for i in 0..3 {
                    let Some(u) = tri.neighbors[i] else { continue };
                    let [a, b, c] = self.mesh.tri_points(u);
                    if tri.segs[i].is_none() && incircle(a, b, c, p).is_positive() && seen.insert(u) {
                        queue.push_back(u);
                    }
                }
            }
        }
        out.sort();
        out
    }
}

impl ExpandHooks<(u32, TriId)> for CavityGrowth<'_> {
    type Side = ();

    fn fan_out(&self) -> usize {
        3
    }

    fn predicate(&self, _: &(u32, TriId)) -> bool {
        true
    }

    fn op_true(&self, &(k, t): &(u32, TriId), out: &mut Emitter<(u32, TriId), ()>) -> bool {
        let p = self.points[k as usize];
        let tri = self.mesh.triangle(t);
        for i in 0..3 {
            let Some(u) = tri.neighbors[i] else { continue };
            let [a, b, c] = self.mesh.tri_points(u);
            if tri.segs[i].is_none() && incircle(a, b, c, p).is_positive() {
                let bit = 1u64 << k;
                if self.seen[u.idx()].fetch_or(bit, Ordering::AcqRel) & bit == 0 {
                    out.push((k, u));
                }
            }
        }
        true
    }

    fn op_false(&self, _: &(u32, TriId), _: &mut Emitter<(u32, TriId), ()>) -> bool {
        true
    }
}

/// Triangle containing `p` (closed), by exhaustive scan.
pub fn containing(mesh: &Mesh, p: Point2) -> Option<TriId> {
    mesh.triangle_ids().find(|&t| {
        let [a, b, c] = mesh.tri_points(t);
        [(a, b), (b, c), (c, a)].iter().all(|&(u, v)| !orient2d(u, v, p).is_negative())
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
