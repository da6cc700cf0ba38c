//! Holonomy pseudogroup of the suspension: shift powers with exact clopen domains.

use crate::clopen::{ClopenSet, Cylinder};
use crate::systems::{coordinate_depth, lo, CantorPoint, Dist, SystemRef};
use crate::{Error, Result, Shift, Q};

/// σ^exponent restricted to a clopen domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HolonomyElement {
    pub exponent: Shift,
    pub domain: ClopenSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LengthPair {
    pub word_length: u64,
    pub path_length: Q,
}

fn add(a: Shift, b: Shift) -> Shift {
    [a[0] + b[0], a[1] + b[1]]
}

fn neg(a: Shift) -> Shift {
    [-a[0], -a[1]]
}

/// Number of generator factors of a translation.
pub fn word_length(n: Shift) -> u64 {
    n[0].unsigned_abs() + n[1].unsigned_abs()
}

impl HolonomyElement {
    pub fn new(exponent: Shift, domain: ClopenSet) -> Self {
        HolonomyElement { exponent, domain }
    }

    pub fn identity(sys: &SystemRef) -> Self {
        Self::new([0, 0], ClopenSet::whole(sys))
    }

    pub fn shift(sys: &SystemRef, n: Shift) -> Self {
        Self::new(n, ClopenSet::whole(sys))
    }

    pub fn system(&self) -> &SystemRef {
        self.domain.system()
    }

    pub fn range(&self) -> ClopenSet {
        self.domain.image(self.exponent)
    }

    pub fn apply(&self, x: &CantorPoint) -> Result<CantorPoint> {
        if x.sys.id != self.system().id {
            return Err(Error::SystemMismatch);
        }
        if !self.domain.contains_point(x) {
            return Err(Error::OutOfDomain);
        }
        Ok(x.sys.point(add(x.offset, self.exponent)))
    }

    /// Restriction of `self` to the part of its domain inside `d`.
    pub fn restrict(&self, d: &ClopenSet) -> Result<Self> {
        Ok(Self::new(self.exponent, self.domain.intersect(d)?))
    }

    pub fn inverse(&self) -> Self {
        Self::new(neg(self.exponent), self.range())
    }

    pub fn lengths_at(&self, w: &CantorPoint) -> LengthPair {
        LengthPair {
            word_length: word_length(self.exponent),
            path_length: w.sys.path_length(w.offset, self.exponent),
        }
    }
}

/// h2 ∘ h1 with its maximal domain {x ∈ dom h1 : h1(x) ∈ dom h2}.
pub fn compose(h2: &HolonomyElement, h1: &HolonomyElement) -> Result<HolonomyElement> {
    if h1.system().id != h2.system().id {
        return Err(Error::SystemMismatch);
    }
    let dom = h1.domain.intersect(&h2.domain.preimage(h1.exponent))?;
    if dom.is_empty() {
        return Err(Error::EmptyComposition);
    }
    Ok(HolonomyElement::new(add(h1.exponent, h2.exponent), dom))
}

/// Germs at a point of a free action agree iff the exponents agree.
pub fn germ_equal(h1: &HolonomyElement, h2: &HolonomyElement, w: &CantorPoint) -> Result<bool> {
    if !h1.domain.contains_point(w) || !h2.domain.contains_point(w) {
        return Err(Error::OutOfDomain);
    }
    Ok(h1.exponent == h2.exponent)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Both,
    Forward,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Germ {
    pub exponent: Shift,
    pub path_length: Q,
}

/// Germs at w with range in W and path length at most R.
#[derive(Clone, Debug)]
pub struct Filtration {
    pub basepoint: CantorPoint,
    pub target: ClopenSet,
    pub radius: Q,
    pub germs: Vec<Germ>,
}

impl Filtration {
    pub fn exponents(&self) -> Vec<Shift> {
        self.germs.iter().map(|g| g.exponent).collect()
    }

    /// Elements with their maximal domains σ^{-n}(W).
    pub fn elements(&self) -> Vec<HolonomyElement> {
        self.germs
            .iter()
            .map(|g| HolonomyElement::new(g.exponent, self.target.preimage(g.exponent)))
            .collect()
    }

    pub fn contains_identity(&self) -> bool {
        self.germs.iter().any(|g| g.exponent == [0, 0])
    }

    /// One germ per line: `exponent, path_length, domain`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (g, h) in self.germs.iter().zip(self.elements()) {
            let e = if self.basepoint.sys.dim() == 1 {
                g.exponent[0].to_string()
            } else {
                format!("({},{})", g.exponent[0], g.exponent[1])
            };
            s.push_str(&format!("{e}, {}, {}\n", g.path_length, h.domain.render()));
        }
        s
    }
}

/// Translations whose leafwise path length from w is at most R, in exponent order.
pub fn exponents_within(w: &CantorPoint, r: Q, dir: Direction) -> Vec<(Shift, Q)> {
    let sys = &w.sys;
    let mut out = Vec::new();
    if sys.dim() == 2 {
        let b = r.to_integer();
        for i in -b..=b {
            for j in -b..=b {
                let n = [i, j];
                let l = sys.path_length(w.offset, n);
                if l <= r && (dir == Direction::Both || (i >= 0 && j >= 0)) {
                    out.push((n, l));
                }
            }
        }
        out.sort();
        return out;
    }
    if dir == Direction::Both {
        let mut k = -1i64;
        loop {
            let l = sys.path_length(w.offset, [k, 0]);
            if l > r {
                break;
            }
            out.push(([k, 0], l));
            k -= 1;
        }
        out.reverse();
    }
    let mut k = 0i64;
    loop {
        let l = sys.path_length(w.offset, [k, 0]);
        if l > r {
            break;
        }
        out.push(([k, 0], l));
        k += 1;
    }
    out
}

pub fn filtration(w: &CantorPoint, target: &ClopenSet, r: Q, scan_depth: usize) -> Result<Filtration> {
    filtration_dir(w, target, r, scan_depth, Direction::Both)
}

pub fn filtration_dir(
    w: &CantorPoint,
    target: &ClopenSet,
    r: Q,
    scan_depth: usize,
    dir: Direction,
) -> Result<Filtration> {
    if w.sys.id != target.system().id {
        return Err(Error::SystemMismatch);
    }
    if target.max_depth() > scan_depth {
        return Err(Error::DepthInsufficient { needed: target.max_depth() });
    }
    let mut germs = Vec::new();
    for (n, l) in exponents_within(w, r, dir) {
        let p = w.sys.point([w.offset[0] + n[0], w.offset[1] + n[1]]);
        if target.contains_point(&p) {
            germs.push(Germ { exponent: n, path_length: l });
        }
    }
    Ok(Filtration { basepoint: w.clone(), target: target.clone(), radius: r, germs })
}

/// First-return generators of the action induced on W.
#[derive(Clone, Debug)]
pub struct InducedGenerators {
    pub generators: Vec<HolonomyElement>,
    /// Longest leafwise path of a generator (certified generation radius).
    pub beta: Q,
}

/// Path length of σ^n on every point of a word cylinder covering the coordinates it crosses.
pub fn path_length_on(sys: &SystemRef, c: &Cylinder, n: Shift) -> Option<Q> {
    match (sys.substitution(), c) {
        (Some(s), Cylinder::Word(w)) => {
            let (a, b) = if n[0] >= 0 { (0, n[0]) } else { (n[0], 0) };
            let l0 = lo(w.len());
            if a < l0 || b > l0 + w.len() as i64 {
                return None;
            }
            let slice = &w[(a - l0) as usize..(b - l0) as usize];
            Some(slice.iter().fold(Q::from_integer(0), |acc, &x| acc + s.lengths[x as usize]))
        }
        _ => Some(Q::from_integer(word_length(n) as i64)),
    }
}

pub fn induced_generators(w: &ClopenSet, scan_bound: usize) -> Result<InducedGenerators> {
    let sys = w.system().clone();
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    if sys.dim() == 2 {
        let [c] = w.cylinders() else {
            return Err(Error::Inconclusive);
        };
        let Cylinder::Coset { depth, .. } = c else { unreachable!() };
        let l = sys.odometer().unwrap().lattice(*depth as usize);
        let gens = vec![
            HolonomyElement::new([l.a, 0], w.clone()),
            HolonomyElement::new([l.b, l.c], w.clone()),
        ];
        let beta = Q::from_integer((l.a + l.b + l.c) as i64);
        return Ok(InducedGenerators { generators: gens, beta });
    }
    let mut remaining = w.clone();
    let mut gens = Vec::new();
    let mut beta = Q::from_integer(0);
    for n in 1..=scan_bound as i64 {
        let hit = remaining.intersect(&w.preimage([n, 0]))?;
        if hit.is_empty() {
            continue;
        }
        for c in hit.cylinders() {
            let l = match path_length_on(&sys, c, [n, 0]) {
                Some(l) => l,
                None => sys
                    .extensions(c, sys.need(c.depth(), [n, 0]))
                    .iter()
                    .filter_map(|e| path_length_on(&sys, e, [n, 0]))
                    .max()
                    .unwrap(),
            };
            beta = beta.max(l);
        }
        remaining = remaining.subtract(&hit)?;
        gens.push(HolonomyElement::new([n, 0], hit));
        if remaining.is_empty() {
            return Ok(InducedGenerators { generators: gens, beta });
        }
    }
    Err(Error::NotMinimal { bound: scan_bound })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evidence {
    Equicontinuous,
    Expansive { eps: Dist },
}

/// Finite-depth heuristic: expansive if all pairs of distinct depth-`depth` cylinders are
/// separated to distance ≥ eps by some |n| ≤ depth; equicontinuous if every scanned shift
/// preserves cylinder diameters.
pub fn classify_at_depth(sys: &SystemRef, depth: usize, eps: Dist) -> Result<Evidence> {
    if depth == 0 {
        return Err(Error::Inconclusive);
    }
    let cyls = sys.extensions(&sys.root(), depth);
    let eps_k = eps.0.unwrap_or(u64::MAX);
    let d = depth as i64;
    let mut expansive = true;
    'pairs: for i in 0..cyls.len() {
        for j in i + 1..cyls.len() {
            let sep = (-d..=d).any(|n| separation_after(sys, &cyls[i], &cyls[j], n) <= eps_k);
            if !sep {
                expansive = false;
                break 'pairs;
            }
        }
    }
    if expansive {
        return Ok(Evidence::Expansive { eps });
    }
    let mut equi = true;
    'cyl: for c in &cyls {
        let dc = ClopenSet::cylinder(sys, c.clone()).diameter();
        for n in -d..=d {
            let shifts: Vec<Shift> =
                if sys.dim() == 2 { (-d..=d).map(|m| [n, m]).collect() } else { vec![[n, 0]] };
            for s in shifts {
                if ClopenSet::cylinder(sys, c.clone()).image(s).diameter() != dc {
                    equi = false;
                    break 'cyl;
                }
            }
        }
    }
    if equi {
        Ok(Evidence::Equicontinuous)
    } else {
        Err(Error::Inconclusive)
    }
}

/// Exponent k such that σ^n(a), σ^n(b) are at distance at least 2^{-k} pointwise.
fn separation_after(sys: &SystemRef, a: &Cylinder, b: &Cylinder, n: i64) -> u64 {
    match (a, b) {
        (Cylinder::Word(x), Cylinder::Word(y)) => {
            let l0 = lo(x.len());
            (0..x.len())
                .filter(|&i| x[i] != y[i])
                .map(|i| coordinate_depth(l0 + i as i64 - n) as u64 - 1)
                .min()
                .unwrap_or(u64::MAX)
        }
        _ => sys.agreement(a, b) as u64,
    }
}
