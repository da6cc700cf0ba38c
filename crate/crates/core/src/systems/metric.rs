use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;

/// An exact value in {0} ∪ {2^{-k}}; the exponent is stored so deep cylinders stay exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dist(pub Option<u64>);

impl Dist {
    pub const ZERO: Dist = Dist(None);

    pub fn pow(k: u64) -> Dist {
        Dist(Some(k))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_none()
    }

    pub fn to_big_rational(&self) -> BigRational {
        match self.0 {
            None => BigRational::from_integer(BigInt::from(0)),
            Some(k) => BigRational::new(BigInt::from(1), BigInt::from(1) << k as usize),
        }
    }

    /// Half of the value.
    pub fn half(&self) -> Dist {
        Dist(self.0.map(|k| k + 1))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.0, other.0) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(a), Some(b)) => b.cmp(&a),
        }
    }
}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            None => write!(f, "0"),
            Some(0) => write!(f, "1"),
            Some(k) if k < 63 => write!(f, "1/{}", 1u64 << k),
            Some(k) => write!(f, "2^-{k}"),
        }
    }
}

/// Result of a capped metric comparison; `capped` means agreement through the cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Distance {
    pub value: Dist,
    pub capped: bool,
}

/// Deepest interleaved depth on which two centred words agree.
pub fn agreement_depth(a: &[u8], b: &[u8]) -> usize {
    let m = a.len().min(b.len());
    let (za, zb) = (a.len() / 2, b.len() / 2);
    let right = (0..m.div_ceil(2)).find(|&c| a[za + c] != b[zb + c]).map(|c| 2 * c);
    let left = (1..=m / 2).find(|&c| a[za - c] != b[zb - c]).map(|c| 2 * c - 1);
    match (right, left) {
        (None, None) => m,
        (r, l) => r.unwrap_or(usize::MAX).min(l.unwrap_or(usize::MAX)).min(m),
    }
}
