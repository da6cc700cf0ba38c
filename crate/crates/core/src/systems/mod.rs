//! Concrete matchbox-manifold presentations: substitution subshifts and ℤ^d
//! odometers, with the cylinder ultrametric on the transversal.

mod metric;
mod odometer;
mod spec;
mod substitution;

use std::sync::Arc;

use crate::clopen::Cylinder;
use crate::{Error, Result, Shift, Q};

pub use metric::{agreement_depth, Dist, Distance};
pub use odometer::{Lattice, Mat2, Odometer};
pub use spec::{ChainEntry, LengthValue, RuleImage, SystemSpec};
pub use substitution::{BaseWindow, Seed, Substitution};

/// Lowest coordinate fixed by a depth-`d` cylinder.
pub fn lo(d: usize) -> i64 {
    -((d / 2) as i64)
}

/// One past the highest coordinate fixed by a depth-`d` cylinder.
pub fn hi(d: usize) -> i64 {
    d.div_ceil(2) as i64
}

/// Depth at which coordinate `c` first becomes fixed.
pub fn coordinate_depth(c: i64) -> usize {
    if c >= 0 {
        (2 * c + 1) as usize
    } else {
        (2 * -c) as usize
    }
}

/// Smallest centred depth fixing every coordinate in `[l, h)`.
pub fn covering_depth(l: i64, h: i64) -> usize {
    let left = if l < 0 { 2 * (-l) as usize } else { 0 };
    let right = if h > 0 { 2 * h as usize - 1 } else { 0 };
    left.max(right)
}

/// Largest centred depth contained in the coordinate range `[l, h)`.
pub fn inner_depth(l: i64, h: i64) -> usize {
    if l > 0 || h <= 0 {
        return 0;
    }
    let a = (-l) as usize;
    let b = h as usize;
    (2 * a + 1).min(2 * b)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub minimal: bool,
    pub aperiodic: bool,
    pub primitive_power: Option<usize>,
    pub period_witness: Option<usize>,
    pub notes: Vec<String>,
}

#[derive(Debug)]
pub enum Kind {
    Substitution(Substitution),
    Odometer(Odometer),
}

/// A validated system. Shared by `Arc`; all caches are internally synchronised.
#[derive(Debug)]
pub struct System {
    pub id: u64,
    pub name: String,
    pub kind: Kind,
    pub spec: SystemSpec,
}

pub type SystemRef = Arc<System>;

/// A point of the transversal in the orbit of the basepoint w₀: σ^offset(w₀).
#[derive(Clone, Debug)]
pub struct CantorPoint {
    pub sys: SystemRef,
    pub offset: Shift,
}

impl PartialEq for CantorPoint {
    fn eq(&self, other: &Self) -> bool {
        self.sys.id == other.sys.id && self.offset == other.offset
    }
}
impl Eq for CantorPoint {}

impl CantorPoint {
    pub fn cylinder(&self, depth: usize) -> Cylinder {
        self.sys.point_cylinder(self.offset, depth)
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl System {
    pub fn from_spec(spec: SystemSpec) -> Result<SystemRef> {
        Self::from_spec_with_period_bound(spec, 64)
    }

    pub fn from_spec_with_period_bound(spec: SystemSpec, p_max: usize) -> Result<SystemRef> {
        let canon = serde_json::to_vec(&spec).map_err(|e| Error::MalformedSpec(e.to_string()))?;
        let id = fnv1a(&canon);
        let name = spec.name.clone().unwrap_or_else(|| spec.kind.clone());
        let kind = match spec.kind.as_str() {
            "substitution" => {
                let (alphabet, images, lengths) = spec.substitution_parts()?;
                let s = Substitution::new(alphabet, images, lengths)?;
                s.validate(p_max)?;
                Kind::Substitution(s)
            }
            "odometer" => Kind::Odometer(Odometer::new(spec.odometer_parts()?)?),
            other => return Err(Error::MalformedSpec(format!("unknown kind {other}"))),
        };
        Ok(Arc::new(System { id, name, kind, spec }))
    }

    pub fn from_json(text: &str) -> Result<SystemRef> {
        let spec: SystemSpec =
            serde_json::from_str(text).map_err(|e| Error::MalformedSpec(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<SystemRef> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn fibonacci() -> SystemRef {
        Self::from_json(include_str!("../../systems/fibonacci.json")).expect("builtin")
    }

    pub fn thue_morse() -> SystemRef {
        Self::from_json(include_str!("../../systems/thue-morse.json")).expect("builtin")
    }

    pub fn dyadic() -> SystemRef {
        Self::from_json(include_str!("../../systems/dyadic.json")).expect("builtin")
    }

    pub fn dyadic_2d() -> SystemRef {
        Self::from_json(include_str!("../../systems/dyadic-2d.json")).expect("builtin")
    }

    pub fn substitution(&self) -> Option<&Substitution> {
        match &self.kind {
            Kind::Substitution(s) => Some(s),
            _ => None,
        }
    }

    pub fn odometer(&self) -> Option<&Odometer> {
        match &self.kind {
            Kind::Odometer(o) => Some(o),
            _ => None,
        }
    }

    pub fn is_odometer(&self) -> bool {
        matches!(self.kind, Kind::Odometer(_))
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::Substitution(_) => 1,
            Kind::Odometer(o) => o.dim,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        match &self.kind {
            Kind::Substitution(s) => s.report(64),
            Kind::Odometer(_) => ValidationReport {
                minimal: true,
                aperiodic: true,
                primitive_power: None,
                period_witness: None,
                notes: vec!["odometers are minimal and equicontinuous".into()],
            },
        }
    }

    pub fn point(self: &Arc<Self>, offset: Shift) -> CantorPoint {
        CantorPoint { sys: self.clone(), offset }
    }

    pub fn basepoint(self: &Arc<Self>) -> CantorPoint {
        self.point([0, 0])
    }

    pub fn root(&self) -> Cylinder {
        match &self.kind {
            Kind::Substitution(_) => Cylinder::Word(bytes::Bytes::new()),
            Kind::Odometer(_) => Cylinder::Coset { depth: 0, rep: [0, 0] },
        }
    }

    pub fn max_tile(&self) -> Q {
        match &self.kind {
            Kind::Substitution(s) => s.lengths.iter().copied().max().unwrap(),
            Kind::Odometer(_) => Q::from_integer(1),
        }
    }

    pub fn min_tile(&self) -> Q {
        match &self.kind {
            Kind::Substitution(s) => s.lengths.iter().copied().min().unwrap(),
            Kind::Odometer(_) => Q::from_integer(1),
        }
    }

    /// Depth whose σ^n-image determines a depth-`d` cylinder.
    pub fn need(&self, d: usize, n: Shift) -> usize {
        match &self.kind {
            Kind::Substitution(_) => covering_depth(lo(d) + n[0], hi(d) + n[0]),
            Kind::Odometer(_) => d,
        }
    }

    /// Depth of the centred cylinder known at σ^n(x) when x is known to depth `d`.
    pub fn shrink(&self, d: usize, n: Shift) -> usize {
        match &self.kind {
            Kind::Substitution(_) => inner_depth(lo(d) - n[0], hi(d) - n[0]),
            Kind::Odometer(_) => d,
        }
    }

    /// Cylinder of depth `depth` containing σ^offset(w₀).
    pub fn point_cylinder(&self, offset: Shift, depth: usize) -> Cylinder {
        match &self.kind {
            Kind::Substitution(s) => {
                Cylinder::Word(s.base_slice(offset[0] + lo(depth), offset[0] + hi(depth)))
            }
            Kind::Odometer(o) => Cylinder::Coset { depth: depth as u32, rep: o.reduce(offset, depth) },
        }
    }

    /// Symbol at coordinate `c` of w₀.
    pub fn base_symbol(&self, c: i64) -> u8 {
        self.substitution().expect("substitution system").base_slice(c, c + 1)[0]
    }

    /// Leafwise length of the path from σ^m(w₀) to σ^{m+n}(w₀).
    pub fn path_length(&self, m: Shift, n: Shift) -> Q {
        match &self.kind {
            Kind::Substitution(s) => {
                let (a, b) = if n[0] >= 0 { (m[0], m[0] + n[0]) } else { (m[0] + n[0], m[0]) };
                if s.unit_tiles() {
                    return Q::from_integer(b - a);
                }
                let w = s.base_slice(a, b);
                w.iter().fold(Q::from_integer(0), |acc, &c| acc + s.lengths[c as usize])
            }
            Kind::Odometer(_) => Q::from_integer(n[0].abs() + n[1].abs()),
        }
    }

    pub fn truncate(&self, c: &Cylinder, e: usize) -> Cylinder {
        match (&self.kind, c) {
            (_, Cylinder::Word(w)) => {
                let d = w.len();
                assert!(e <= d);
                let start = (lo(e) - lo(d)) as usize;
                Cylinder::Word(w.slice(start..start + e))
            }
            (Kind::Odometer(o), Cylinder::Coset { depth, rep }) => {
                assert!(e <= *depth as usize);
                Cylinder::Coset { depth: e as u32, rep: o.reduce(*rep, e) }
            }
            _ => unreachable!("cylinder kind does not match system"),
        }
    }

    pub fn is_ancestor(&self, a: &Cylinder, b: &Cylinder) -> bool {
        a.depth() <= b.depth() && &self.truncate(b, a.depth()) == a
    }

    /// All legal depth-`depth` cylinders inside `c`.
    pub fn extensions(&self, c: &Cylinder, depth: usize) -> Vec<Cylinder> {
        self.extensions_limited(c, depth, usize::MAX)
    }

    pub fn extensions_limited(&self, c: &Cylinder, depth: usize, limit: usize) -> Vec<Cylinder> {
        let d = c.depth();
        assert!(depth >= d);
        match (&self.kind, c) {
            (Kind::Substitution(s), Cylinder::Word(w)) => {
                let at = (lo(d) - lo(depth)) as usize;
                s.windows(w, at, depth, limit).into_iter().map(Cylinder::Word).collect()
            }
            (Kind::Odometer(o), Cylinder::Coset { rep, .. }) => {
                let mut cur = vec![*rep];
                for k in d..depth {
                    cur = cur.iter().flat_map(|r| o.children(*r, k)).collect();
                    if cur.len() > limit {
                        cur.truncate(limit);
                    }
                }
                let mut out: Vec<Cylinder> = cur
                    .into_iter()
                    .map(|rep| Cylinder::Coset { depth: depth as u32, rep })
                    .collect();
                out.sort();
                out
            }
            _ => unreachable!("cylinder kind does not match system"),
        }
    }

    pub fn children(&self, c: &Cylinder) -> Vec<Cylinder> {
        self.extensions(c, c.depth() + 1)
    }

    pub fn is_legal(&self, c: &Cylinder) -> bool {
        match (&self.kind, c) {
            (Kind::Substitution(s), Cylinder::Word(w)) => s.is_legal(w),
            (Kind::Odometer(o), Cylinder::Coset { depth, rep }) => {
                o.reduce(*rep, *depth as usize) == *rep
            }
            _ => false,
        }
    }

    /// The shallowest cylinder equal (as a set) to `c`.
    pub fn reduce(&self, c: &Cylinder) -> Cylinder {
        if self.is_odometer() {
            return c.clone();
        }
        let d = c.depth();
        let (mut lo_e, mut hi_e) = (0usize, d);
        while lo_e < hi_e {
            let mid = (lo_e + hi_e) / 2;
            let t = self.truncate(c, mid);
            if self.extensions_limited(&t, d, 2).len() == 1 {
                hi_e = mid;
            } else {
                lo_e = mid + 1;
            }
        }
        self.truncate(c, lo_e)
    }

    /// Cylinders whose union is {x : σ^n(x) ∈ c}.
    pub fn preimage(&self, c: &Cylinder, n: Shift) -> Vec<Cylinder> {
        match (&self.kind, c) {
            (Kind::Substitution(s), Cylinder::Word(w)) => {
                let d = w.len();
                let dd = self.need(d, n);
                let at = (lo(d) + n[0] - lo(dd)) as usize;
                s.windows(w, at, dd, usize::MAX).into_iter().map(Cylinder::Word).collect()
            }
            (Kind::Odometer(o), Cylinder::Coset { depth, rep }) => {
                let k = *depth as usize;
                vec![Cylinder::Coset {
                    depth: *depth,
                    rep: o.reduce([rep[0] - n[0], rep[1] - n[1]], k),
                }]
            }
            _ => unreachable!("cylinder kind does not match system"),
        }
    }

    /// Cylinders whose union is σ^n(c).
    pub fn image(&self, c: &Cylinder, n: Shift) -> Vec<Cylinder> {
        self.preimage(c, [-n[0], -n[1]])
    }

    /// Deepest depth at which two cylinders agree (bounded by the smaller depth).
    pub fn agreement(&self, a: &Cylinder, b: &Cylinder) -> usize {
        if let (Cylinder::Word(x), Cylinder::Word(y)) = (a, b) {
            return agreement_depth(x, y);
        }
        let m = a.depth().min(b.depth());
        let (mut l, mut h) = (0usize, m);
        while l < h {
            let mid = (l + h).div_ceil(2);
            if self.truncate(a, mid) == self.truncate(b, mid) {
                l = mid;
            } else {
                h = mid - 1;
            }
        }
        l
    }

    /// Human-readable rendering; long words are abbreviated around the origin.
    pub fn render(&self, c: &Cylinder) -> String {
        match (&self.kind, c) {
            (Kind::Substitution(s), Cylinder::Word(w)) => {
                let d = w.len();
                let cut = (d / 2) as usize;
                if d <= 48 {
                    let left: String = w[..cut].iter().map(|&x| s.symbol(x)).collect();
                    let right: String = w[cut..].iter().map(|&x| s.symbol(x)).collect();
                    format!("[{left}.{right}]")
                } else {
                    let left: String = w[cut - 8..cut].iter().map(|&x| s.symbol(x)).collect();
                    let right: String = w[cut..cut + 8].iter().map(|&x| s.symbol(x)).collect();
                    format!("[d{d}:…{left}.{right}…#{:016x}]", fnv1a(w))
                }
            }
            (Kind::Odometer(o), Cylinder::Coset { depth, rep }) => {
                if o.dim == 1 {
                    format!("[{} mod {}]", rep[0], o.lattice(*depth as usize).index())
                } else {
                    format!("[({},{}) mod H{}]", rep[0], rep[1], depth)
                }
            }
            _ => "[?]".into(),
        }
    }
}

/// Exact metric between two orbit points, compared through `depth_cap`.
pub fn metric_distance(x: &CantorPoint, y: &CantorPoint, depth_cap: usize) -> Result<Distance> {
    if x.sys.id != y.sys.id {
        return Err(Error::SystemMismatch);
    }
    let a = x.cylinder(depth_cap);
    let b = y.cylinder(depth_cap);
    let k = x.sys.agreement(&a, &b);
    Ok(if k == depth_cap {
        Distance { value: Dist::ZERO, capped: true }
    } else {
        Distance { value: Dist::pow(k as u64), capped: false }
    })
}
