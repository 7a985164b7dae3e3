//! Deterministic input generators: a quality corpus whose inputs have no
//! angle below 60 degrees between segments, and small-angle fixtures.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::predicates::Point2;
use crate::pslg::Pslg;

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub pslg: Pslg,
    /// Input vertices where two segments meet at less than 60 degrees, with
    /// the radius of the cluster around each.
    pub small_angle_apexes: Vec<(usize, f64)>,
}

/// Incremental PSLG builder.
#[derive(Default)]
struct Builder {
    points: Vec<Point2>,
    segments: Vec<[usize; 2]>,
}

impl Builder {
    fn point(&mut self, x: f64, y: f64) -> usize {
        self.points.push(Point2::new(x, y));
        self.points.len() - 1
    }

    /// Closed polygon through `corners`, each side cut into `per_side`
    /// pieces. Sides must be axis-aligned or diagonal with dyadic steps so
    /// the cut points are exactly collinear.
    fn polygon(&mut self, corners: &[(f64, f64)], per_side: usize) {
        let first = self.points.len();
        for k in 0..corners.len() {
            let (a, b) = (corners[k], corners[(k + 1) % corners.len()]);
            for j in 0..per_side {
                let t = j as f64 / per_side as f64;
                self.point(a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
            }
        }
        let n = self.points.len() - first;
        for k in 0..n {
            self.segments.push([first + k, first + (k + 1) % n]);
        }
    }

    /// Open polyline, each piece cut into `per_piece` parts.
    fn polyline(&mut self, pts: &[(f64, f64)], per_piece: usize) {
        let mut prev = self.point(pts[0].0, pts[0].1);
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            for j in 1..=per_piece {
                let t = j as f64 / per_piece as f64;
                let v = self.point(a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
                self.segments.push([prev, v]);
                prev = v;
            }
        }
    }

    fn dist_to_segments(&self, p: Point2) -> f64 {
        self.segments
            .iter()
            .map(|s| point_segment_distance(p, self.points[s[0]], self.points[s[1]]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Uniform random points over the box, one attempt per cell area,
    /// kept at least half a cell from every segment, a fifth of a cell from
    /// each other, and inside `inside`.
    fn scatter(&mut self, lo: (f64, f64), hi: (f64, f64), cell: f64, seed: u64, inside: impl Fn(Point2) -> bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attempts = ((hi.0 - lo.0) * (hi.1 - lo.1) / (cell * cell)).round() as usize;
        let gap = 0.2 * cell;
        let mut taken: HashMap<(i64, i64), Vec<Point2>> = HashMap::new();
        let key = |p: Point2| (((p.x - lo.0) / gap).floor() as i64, ((p.y - lo.1) / gap).floor() as i64);
        let mut fresh = Vec::new();
        for _ in 0..attempts {
            let p = Point2::new(rng.gen_range(lo.0..hi.0), rng.gen_range(lo.1..hi.1));
            if !inside(p) || self.dist_to_segments(p) <= 0.5 * cell {
                continue;
            }
            let (kx, ky) = key(p);
            let crowded = (kx - 1..=kx + 1)
                .flat_map(|x| (ky - 1..=ky + 1).map(move |y| (x, y)))
                .any(|k| taken.get(&k).is_some_and(|v| v.iter().any(|q| q.dist(&p) < gap)));
            if crowded {
                continue;
            }
            taken.entry((kx, ky)).or_default().push(p);
            fresh.push(p);
        }
        self.points.extend(fresh);
    }

    fn finish(self, name: &str) -> Fixture {
        let pslg = Pslg::new(self.points, self.segments).expect("fixture is a valid PSLG");
        Fixture { name: name.to_string(), pslg, small_angle_apexes: Vec::new() }
    }
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.dist(&Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Point-in-convex-polygon for counterclockwise corners.
fn in_convex(corners: &[(f64, f64)], p: Point2) -> bool {
    (0..corners.len()).all(|k| {
        let (a, b) = (corners[k], corners[(k + 1) % corners.len()]);
        (b.0 - a.0) * (p.y - a.1) - (b.1 - a.1) * (p.x - a.0) > 0.0
    })
}

const SQUARE: [(f64, f64); 4] = [(0., 0.), (16., 0.), (16., 16.), (0., 16.)];
const HEXAGON: [(f64, f64); 6] = [(4., 0.), (12., 0.), (16., 4.), (12., 8.), (4., 8.), (0., 4.)];

fn square_scatter(name: &str, per_side: usize, cell: f64, seed: u64) -> Fixture {
    let mut b = Builder::default();
    b.polygon(&SQUARE, per_side);
    b.scatter((0., 0.), (16., 16.), cell, seed, |p| in_convex(&SQUARE, p));
    b.finish(name)
}

fn hexagon_scatter(name: &str, per_side: usize, cell: f64, seed: u64) -> Fixture {
    let mut b = Builder::default();
    b.polygon(&HEXAGON, per_side);
    b.scatter((0., 0.), (16., 8.), cell, seed, |p| in_convex(&HEXAGON, p));
    b.finish(name)
}

fn ngon(name: &str, n: usize, cell: f64, seed: u64) -> Fixture {
    let mut b = Builder::default();
    let corners: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            (8.0 + 8.0 * a.cos(), 8.0 + 8.0 * a.sin())
        })
        .collect();
    b.polygon(&corners, 1);
    b.scatter((0., 0.), (16., 16.), cell, seed, |p| in_convex(&corners, p));
    b.finish(name)
}

fn l_shape(name: &str, per_piece: usize, cell: f64, seed: u64) -> Fixture {
    let mut b = Builder::default();
    b.polygon(&SQUARE, 8);
    closed(&mut b, &[(4., 4.), (12., 4.), (12., 8.), (8., 8.), (8., 12.), (4., 12.)], per_piece);
    b.scatter((0., 0.), (16., 16.), cell, seed, |p| in_convex(&SQUARE, p));
    b.finish(name)
}

/// Closed polygon drawn as a polyline whose last point is merged into the
/// first.
fn closed(b: &mut Builder, pts: &[(f64, f64)], per_piece: usize) {
    let mut ring: Vec<(f64, f64)> = pts.to_vec();
    ring.push(pts[0]);
    let first = b.points.len();
    b.polyline(&ring, per_piece);
    let last = b.points.len() - 1;
    b.points.pop();
    for s in b.segments.iter_mut() {
        for e in s.iter_mut() {
            if *e == last {
                *e = first;
            }
        }
    }
}

fn plus(name: &str, per_piece: usize, cell: f64, seed: u64) -> Fixture {
    let mut b = Builder::default();
    b.polygon(&SQUARE, 8);
    closed(
        &mut b,
        &[(6., 3.), (10., 3.), (10., 6.), (13., 6.), (13., 10.), (10., 10.), (10., 13.), (6., 13.), (6., 10.), (3., 10.), (3., 6.), (6., 6.)],
        per_piece,
    );
    b.scatter((0., 0.), (16., 16.), cell, seed, |p| in_convex(&SQUARE, p));
    b.finish(name)
}

fn comb(name: &str, teeth: usize, cell: f64, seed: u64) -> Fixture {
    let mut b = Builder::default();
    b.polygon(&SQUARE, 8);
    let w = 12.0 / (2 * teeth - 1) as f64;
    let mut pts = vec![(2., 2.), (14., 2.)];
    let mut x = 14.0;
    for k in 0..teeth {
        pts.push((x, 12.));
        pts.push((x - w, 12.));
        x -= w;
        if k + 1 < teeth {
            pts.push((x, 5.));
            pts.push((x - w, 5.));
            x -= w;
        }
    }
    closed(&mut b, &pts, 2);
    b.scatter((0., 0.), (16., 16.), cell, seed, |p| in_convex(&SQUARE, p));
    b.finish(name)
}

fn slits(name: &str, count: usize, cell: f64, seed: u64) -> Fixture {
    let mut b = Builder::default();
    b.polygon(&SQUARE, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut placed: Vec<(f64, f64)> = Vec::new();
    while placed.len() < count {
        let (x, y) = (rng.gen_range(2.0..12.0), rng.gen_range(2.0..14.0));
        if placed.iter().any(|&(px, py)| (px - x).abs() < 2.5 && (py - y).abs() < 1.0) {
            continue;
        }
        placed.push((x, y));
        b.polyline(&[(x, y), (x + 2.0, y)], 2);
    }
    b.scatter((0., 0.), (16., 16.), cell, seed, |p| in_convex(&SQUARE, p));
    b.finish(name)
}

/// The quality corpus, ordered by size.
pub fn corpus() -> Vec<Fixture> {
    vec![
        square_scatter("square-coarse", 5, 1.4, 1),
        l_shape("l-shape", 2, 1.0, 2),
        hexagon_scatter("hexagon", 8, 0.5, 3),
        slits("slits", 10, 0.6, 4),
        plus("plus", 2, 0.55, 5),
        ngon("ngon64", 64, 0.45, 6),
        comb("comb", 5, 0.4, 7),
        square_scatter("square-medium", 25, 0.32, 8),
        hexagon_scatter("hexagon-fine", 16, 0.17, 9),
        plus("plus-fine", 4, 0.2, 10),
        square_scatter("square-fine", 50, 0.16, 11),
    ]
}

/// Two segments meeting at `alpha_deg` inside a square.
pub fn small_angle(alpha_deg: f64) -> Fixture {
    let mut b = Builder::default();
    b.polygon(&SQUARE, 4);
    let apex = b.point(6., 6.);
    let a = b.point(12., 6.);
    let r = alpha_deg.to_radians();
    let c = b.point(6. + 6. * r.cos(), 6. + 6. * r.sin());
    b.segments.push([apex, a]);
    b.segments.push([apex, c]);
    b.scatter((0., 0.), (16., 16.), 0.8, alpha_deg as u64, |p| in_convex(&SQUARE, p));
    let mut f = b.finish(&format!("angle-{alpha_deg}"));
    f.small_angle_apexes.push((apex, 3.0));
    f
}

/// Small-angle fixtures from 10 to 50 degrees.
pub fn small_angle_fixtures() -> Vec<Fixture> {
    [10.0, 20.0, 30.0, 40.0, 50.0].into_iter().map(small_angle).collect()
}

/// Smallest angle between two segments sharing an endpoint, in degrees.
pub fn min_input_angle_deg(pslg: &Pslg) -> f64 {
    let mut around: Vec<Vec<usize>> = vec![Vec::new(); pslg.points.len()];
    for s in &pslg.segments {
        around[s[0]].push(s[1]);
        around[s[1]].push(s[0]);
    }
    let mut best = 360.0f64;
    for (v, nb) in around.iter().enumerate() {
        let o = pslg.points[v];
        for i in 0..nb.len() {
            for j in i + 1..nb.len() {
                let (p, q) = (pslg.points[nb[i]], pslg.points[nb[j]]);
                let (ux, uy, vx, vy) = (p.x - o.x, p.y - o.y, q.x - o.x, q.y - o.y);
                let ang = (ux * vy - uy * vx).abs().atan2(ux * vx + uy * vy).to_degrees();
                best = best.min(ang);
            }
        }
    }
    best
}
