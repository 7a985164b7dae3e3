//! Exact-decision geometric predicates.
//!
//! `orient2d` and `incircle` use adaptive floating-point evaluation with an
//! exact expansion fallback (the `robust` crate). The segment-encroachment
//! tests have no such published kernel, so they run a filtered f64 evaluation
//! and fall back to exact dyadic arithmetic when the filter cannot certify the
//! sign.

use serde::{Deserialize, Serialize};

use crate::exact::Dyadic;

/// A point in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn midpoint(&self, other: &Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn dist2(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        self.dist2(other).sqrt()
    }

    fn coord(self) -> robust::Coord<f64> {
        robust::Coord { x: self.x, y: self.y }
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

/// Sign of an exact predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    /// Counterclockwise, or strictly inside for `incircle`.
    Positive,
    /// Collinear or cocircular.
    Zero,
    /// Clockwise, or strictly outside for `incircle`.
    Negative,
}

impl Orientation {
    fn from_f64(v: f64) -> Self {
        if v > 0.0 {
            Orientation::Positive
        } else if v < 0.0 {
            Orientation::Negative
        } else {
            Orientation::Zero
        }
    }

    pub fn is_positive(self) -> bool {
        self == Orientation::Positive
    }

    pub fn is_negative(self) -> bool {
        self == Orientation::Negative
    }

    pub fn is_zero(self) -> bool {
        self == Orientation::Zero
    }

    pub fn reversed(self) -> Self {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Zero => Orientation::Zero,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

/// Minimum angle (degrees) that a point must subtend over a segment to lie in
/// its diametral lens.
pub const LENS_ANGLE_DEG: f64 = 120.0;

/// Sign of the determinant `|b - a, c - a|`.
#[inline]
pub fn orient2d(a: Point2, b: Point2, c: Point2) -> Orientation {
    Orientation::from_f64(robust::orient2d(a.coord(), b.coord(), c.coord()))
}

/// Positive iff `d` lies strictly inside the circumcircle of the
/// counterclockwise triangle `abc`.
#[inline]
pub fn incircle(a: Point2, b: Point2, c: Point2, d: Point2) -> Orientation {
    Orientation::from_f64(robust::incircle(a.coord(), b.coord(), c.coord(), d.coord()))
}

const EPS: f64 = f64::EPSILON * 0.5;
// Forward error bound for a two-term dot product of rounded differences,
// with a comfortable safety factor.
const DOT_ERRBOUND: f64 = 16.0 * EPS;
// Forward error bound for the degree-four lens polynomial.
const LENS_ERRBOUND: f64 = 64.0 * EPS;

/// Sign of `(a - p) . (b - p)`, exactly.
pub fn dot_sign(a: Point2, b: Point2, p: Point2) -> Orientation {
    let (ux, uy) = (a.x - p.x, a.y - p.y);
    let (vx, vy) = (b.x - p.x, b.y - p.y);
    let t1 = ux * vx;
    let t2 = uy * vy;
    let dot = t1 + t2;
    let bound = DOT_ERRBOUND * (t1.abs() + t2.abs());
    if dot > bound {
        return Orientation::Positive;
    }
    if dot < -bound {
        return Orientation::Negative;
    }
    let (u, v) = exact_diffs(a, b, p);
    let d = u.0.mul(&v.0).add(&u.1.mul(&v.1));
    d.orientation()
}

fn exact_diffs(a: Point2, b: Point2, p: Point2) -> ((Dyadic, Dyadic), (Dyadic, Dyadic)) {
    let px = Dyadic::from_f64(p.x);
    let py = Dyadic::from_f64(p.y);
    let u = (Dyadic::from_f64(a.x).sub(&px), Dyadic::from_f64(a.y).sub(&py));
    let v = (Dyadic::from_f64(b.x).sub(&px), Dyadic::from_f64(b.y).sub(&py));
    (u, v)
}

/// True iff `p` lies strictly inside the circle with diameter `s_a s_b`.
///
/// `|p - m|^2 - r^2 = (s_a - p) . (s_b - p)`, so the decision reduces to the
/// sign of one dot product.
pub fn in_diametric_circle(s_a: Point2, s_b: Point2, p: Point2) -> bool {
    dot_sign(s_a, s_b, p).is_negative()
}

/// True iff `p` subtends an angle of at least [`LENS_ANGLE_DEG`] over the
/// segment `s_a s_b`.
///
/// With `u = s_a - p`, `v = s_b - p` the test is `u.v < 0` and
/// `4 (u.v)^2 >= |u|^2 |v|^2`, i.e. `cos <= -1/2`.
pub fn in_diametral_lens(s_a: Point2, s_b: Point2, p: Point2) -> bool {
    if p == s_a || p == s_b {
        return false;
    }
    if !dot_sign(s_a, s_b, p).is_negative() {
        return false;
    }
    let (ux, uy) = (s_a.x - p.x, s_a.y - p.y);
    let (vx, vy) = (s_b.x - p.x, s_b.y - p.y);
    let dot = ux * vx + uy * vy;
    let lhs = 4.0 * dot * dot;
    let rhs = (ux * ux + uy * uy) * (vx * vx + vy * vy);
    let f = lhs - rhs;
    let bound = LENS_ERRBOUND * (lhs + rhs);
    if f > bound {
        return true;
    }
    if f < -bound {
        return false;
    }
    let (u, v) = exact_diffs(s_a, s_b, p);
    let dot = u.0.mul(&v.0).add(&u.1.mul(&v.1));
    let lhs = dot.mul(&dot).mul(&Dyadic::from_f64(4.0));
    let nu = u.0.mul(&u.0).add(&u.1.mul(&u.1));
    let nv = v.0.mul(&v.0).add(&v.1.mul(&v.1));
    !lhs.sub(&nu.mul(&nv)).orientation().is_negative()
}

/// Segment-encroachment flavor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EncroachMode {
    /// Diametric circle.
    #[default]
    Ruppert,
    /// Diametral lens.
    Chew,
}

impl EncroachMode {
    pub fn encroaches(self, s_a: Point2, s_b: Point2, p: Point2) -> bool {
        match self {
            EncroachMode::Ruppert => in_diametric_circle(s_a, s_b, p),
            EncroachMode::Chew => in_diametral_lens(s_a, s_b, p),
        }
    }
}

/// True iff the closed segments `ab` and `cd` intersect anywhere other than
/// at a shared endpoint.
pub fn segments_conflict(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let shared = |p: Point2, q: Point2| p == q;
    let o1 = orient2d(a, b, c);
    let o2 = orient2d(a, b, d);
    let o3 = orient2d(c, d, a);
    let o4 = orient2d(c, d, b);
    if o1.is_zero() && o2.is_zero() {
        // Collinear: overlap beyond a single shared endpoint is a conflict.
        return collinear_overlap(a, b, c, d);
    }
    let proper = o1 != o2 && o3 != o4 && !o1.is_zero() && !o2.is_zero() && !o3.is_zero() && !o4.is_zero();
    if proper {
        return true;
    }
    // Touching cases: an endpoint of one lies on the other.
    let touches = |p: Point2, s0: Point2, s1: Point2, o: Orientation| {
        o.is_zero() && on_closed_segment(s0, s1, p) && !shared(p, s0) && !shared(p, s1)
    };
    touches(c, a, b, o1) || touches(d, a, b, o2) || touches(a, c, d, o3) || touches(b, c, d, o4)
}

/// True iff the segments cross at a single point interior to both.
pub fn segments_cross_properly(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let o1 = orient2d(a, b, c);
    let o2 = orient2d(a, b, d);
    let o3 = orient2d(c, d, a);
    let o4 = orient2d(c, d, b);
    !o1.is_zero() && !o2.is_zero() && !o3.is_zero() && !o4.is_zero() && o1 != o2 && o3 != o4
}

/// `p` is assumed collinear with `s0 s1`.
pub fn on_closed_segment(s0: Point2, s1: Point2, p: Point2) -> bool {
    p.x >= s0.x.min(s1.x) && p.x <= s0.x.max(s1.x) && p.y >= s0.y.min(s1.y) && p.y <= s0.y.max(s1.y)
}

fn collinear_overlap(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    // Project onto the dominant axis; exact since comparisons only.
    let key = |p: Point2| if (a.x - b.x).abs() >= (a.y - b.y).abs() { (p.x, p.y) } else { (p.y, p.x) };
    let (mut s0, mut s1) = (key(a), key(b));
    if s1 < s0 {
        std::mem::swap(&mut s0, &mut s1);
    }
    let (mut t0, mut t1) = (key(c), key(d));
    if t1 < t0 {
        std::mem::swap(&mut t0, &mut t1);
    }
    let lo = if s0 > t0 { s0 } else { t0 };
    let hi = if s1 < t1 { s1 } else { t1 };
    lo < hi
}
