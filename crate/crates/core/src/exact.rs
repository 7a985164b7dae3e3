//! Exact dyadic arithmetic (`mantissa * 2^exp`) for predicate fallbacks.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::predicates::Orientation;

#[derive(Clone, Debug)]
pub(crate) struct Dyadic {
    mant: BigInt,
    exp: i32,
}

impl Dyadic {
    pub(crate) fn from_f64(v: f64) -> Self {
        debug_assert!(v.is_finite());
        if v == 0.0 {
            return Dyadic { mant: BigInt::zero(), exp: 0 };
        }
        let bits = v.to_bits();
        let sign = if bits >> 63 == 0 { 1i64 } else { -1i64 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        Dyadic { mant: BigInt::from(sign * m as i64), exp: e }
    }

    fn align(&self, other: &Dyadic) -> (BigInt, BigInt, i32) {
        if self.exp <= other.exp {
            let shift = (other.exp - self.exp) as usize;
            (self.mant.clone(), &other.mant << shift, self.exp)
        } else {
            let shift = (self.exp - other.exp) as usize;
            (&self.mant << shift, other.mant.clone(), other.exp)
        }
    }

    pub(crate) fn add(&self, other: &Dyadic) -> Dyadic {
        let (a, b, e) = self.align(other);
        Dyadic { mant: a + b, exp: e }
    }

    pub(crate) fn sub(&self, other: &Dyadic) -> Dyadic {
        let (a, b, e) = self.align(other);
        Dyadic { mant: a - b, exp: e }
    }

    pub(crate) fn mul(&self, other: &Dyadic) -> Dyadic {
        Dyadic { mant: &self.mant * &other.mant, exp: self.exp + other.exp }
    }

    pub(crate) fn orientation(&self) -> Orientation {
        if self.mant.is_zero() {
            Orientation::Zero
        } else if self.mant.is_positive() {
            Orientation::Positive
        } else {
            Orientation::Negative
        }
    }
}
