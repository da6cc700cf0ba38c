//! Clopen subsets of the transversal as normalized finite unions of cylinders.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use bytes::Bytes;

use crate::systems::{covering_depth, lo, CantorPoint, Dist, SystemRef};
use crate::{Error, Result, Shift};

/// A cylinder: a centred legal word (subshift) or a coset at a chain level (odometer).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cylinder {
    Word(Bytes),
    Coset { depth: u32, rep: Shift },
}

impl Cylinder {
    pub fn depth(&self) -> usize {
        match self {
            Cylinder::Word(w) => w.len(),
            Cylinder::Coset { depth, .. } => *depth as usize,
        }
    }

    pub fn word(&self) -> Option<&Bytes> {
        match self {
            Cylinder::Word(w) => Some(w),
            _ => None,
        }
    }
}

/// Ancestor lookup over a family of cylinders.
pub(crate) struct Index<T> {
    by_depth: BTreeMap<usize, HashMap<Cylinder, T>>,
}

impl<T: Copy> Index<T> {
    pub fn new<'a>(items: impl IntoIterator<Item = (&'a Cylinder, T)>) -> Self {
        let mut by_depth: BTreeMap<usize, HashMap<Cylinder, T>> = BTreeMap::new();
        for (c, t) in items {
            by_depth.entry(c.depth()).or_default().insert(c.clone(), t);
        }
        Index { by_depth }
    }

    /// A member that contains `c` (ancestor or equal).
    pub fn ancestor(&self, sys: &SystemRef, c: &Cylinder) -> Option<(Cylinder, T)> {
        for (&d, m) in self.by_depth.range(..=c.depth()) {
            let t = sys.truncate(c, d);
            if let Some(v) = m.get(&t) {
                return Some((t, *v));
            }
        }
        None
    }

    /// A strict ancestor of `c` among the members.
    pub fn strict_ancestor(&self, sys: &SystemRef, c: &Cylinder) -> Option<(Cylinder, T)> {
        for (&d, m) in self.by_depth.range(..c.depth()) {
            let t = sys.truncate(c, d);
            if let Some(v) = m.get(&t) {
                return Some((t, *v));
            }
        }
        None
    }
}

/// A clopen set in canonical normal form: pairwise disjoint, each cylinder at its
/// shallowest depth, and no complete sibling family.
#[derive(Clone)]
pub struct ClopenSet {
    sys: SystemRef,
    cyls: Vec<Cylinder>,
}

impl PartialEq for ClopenSet {
    fn eq(&self, other: &Self) -> bool {
        self.sys.id == other.sys.id && self.cyls == other.cyls
    }
}
impl Eq for ClopenSet {}

impl PartialOrd for ClopenSet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ClopenSet {
    /// Canonical order: by the smallest cylinder word.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cyls.cmp(&other.cyls)
    }
}

impl fmt::Debug for ClopenSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

fn normalize(sys: &SystemRef, cyls: Vec<Cylinder>, reduced: bool) -> Vec<Cylinder> {
    let mut set: BTreeSet<Cylinder> = if reduced {
        cyls.into_iter().collect()
    } else {
        cyls.into_iter().map(|c| sys.reduce(&c)).collect()
    };
    loop {
        let idx = Index::new(set.iter().map(|c| (c, ())));
        set.retain(|c| idx.strict_ancestor(sys, c).is_none());
        let mut groups: BTreeMap<Cylinder, Vec<Cylinder>> = BTreeMap::new();
        for c in set.iter().filter(|c| c.depth() > 0) {
            groups.entry(sys.truncate(c, c.depth() - 1)).or_default().push(c.clone());
        }
        let mut changed = false;
        for (parent, members) in groups {
            if members.len() < 2 && !sys.is_odometer() {
                continue;
            }
            let kids = sys.children(&parent);
            if kids.len() == members.len() {
                for m in &members {
                    set.remove(m);
                }
                set.insert(sys.reduce(&parent));
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    set.into_iter().collect()
}

impl ClopenSet {
    pub fn empty(sys: &SystemRef) -> Self {
        ClopenSet { sys: sys.clone(), cyls: Vec::new() }
    }

    pub fn whole(sys: &SystemRef) -> Self {
        ClopenSet { sys: sys.clone(), cyls: vec![sys.root()] }
    }

    /// Normalizes an arbitrary union of legal cylinders.
    pub fn from_cylinders(sys: &SystemRef, cyls: impl IntoIterator<Item = Cylinder>) -> Self {
        ClopenSet { sys: sys.clone(), cyls: normalize(sys, cyls.into_iter().collect(), false) }
    }

    /// Normalizes a union of cylinders that are already at their shallowest depth.
    pub fn from_reduced(sys: &SystemRef, cyls: impl IntoIterator<Item = Cylinder>) -> Self {
        ClopenSet { sys: sys.clone(), cyls: normalize(sys, cyls.into_iter().collect(), true) }
    }

    pub fn cylinder(sys: &SystemRef, c: Cylinder) -> Self {
        Self::from_cylinders(sys, [c])
    }

    /// {x : x_{-|left|} … x_{-1} = left, x_0 … = right}; symbols are single characters.
    pub fn pattern(sys: &SystemRef, text: &str) -> Result<Self> {
        let s = sys.substitution().ok_or(Error::SystemMismatch)?;
        let (l, r) = text.split_once('.').unwrap_or(("", text));
        let parse = |t: &str| -> Result<Vec<u8>> {
            t.chars()
                .map(|ch| {
                    s.alphabet
                        .iter()
                        .position(|a| *a == ch.to_string())
                        .map(|i| i as u8)
                        .ok_or_else(|| Error::MalformedSpec(format!("unknown symbol {ch}")))
                })
                .collect()
        };
        let mut word = parse(l)?;
        let nl = word.len() as i64;
        word.extend(parse(r)?);
        let d = covering_depth(-nl, word.len() as i64 - nl);
        let at = (-nl - lo(d)) as usize;
        let wins = s.windows(&word, at, d, usize::MAX);
        Ok(Self::from_cylinders(sys, wins.into_iter().map(Cylinder::Word)))
    }

    /// The one-sided cylinder {x : x_0 … x_{k−1} = word}.
    pub fn future_cylinder(sys: &SystemRef, word: &str) -> Result<Self> {
        Self::pattern(sys, &format!(".{word}"))
    }

    /// The coset rep + H_depth of an odometer.
    pub fn coset(sys: &SystemRef, rep: Shift, depth: usize) -> Result<Self> {
        let o = sys.odometer().ok_or(Error::SystemMismatch)?;
        Ok(Self::cylinder(sys, Cylinder::Coset { depth: depth as u32, rep: o.reduce(rep, depth) }))
    }

    pub fn system(&self) -> &SystemRef {
        &self.sys
    }

    pub fn cylinders(&self) -> &[Cylinder] {
        &self.cyls
    }

    pub fn is_empty(&self) -> bool {
        self.cyls.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.cyls.iter().map(Cylinder::depth).max().unwrap_or(0)
    }

    fn check(&self, other: &ClopenSet) -> Result<()> {
        if self.sys.id != other.sys.id {
            Err(Error::SystemMismatch)
        } else {
            Ok(())
        }
    }

    pub(crate) fn index(&self) -> Index<()> {
        Index::new(self.cyls.iter().map(|c| (c, ())))
    }

    pub fn contains_point(&self, p: &CantorPoint) -> bool {
        let idx = self.index();
        idx.by_depth.iter().any(|(&d, m)| m.contains_key(&p.cylinder(d)))
    }

    /// Whether the cylinder `c` lies inside the set.
    pub fn contains_cylinder(&self, c: &Cylinder) -> bool {
        let idx = self.index();
        if idx.ancestor(&self.sys, c).is_some() {
            return true;
        }
        let piece = ClopenSet::cylinder(&self.sys, c.clone());
        piece.subtract(self).map(|r| r.is_empty()).unwrap_or(false)
    }

    pub fn intersect(&self, other: &ClopenSet) -> Result<ClopenSet> {
        self.check(other)?;
        let ia = self.index();
        let ib = other.index();
        let mut out = Vec::new();
        for a in &self.cyls {
            if ib.ancestor(&self.sys, a).is_some() {
                out.push(a.clone());
            }
        }
        for b in &other.cyls {
            if ia.strict_ancestor(&self.sys, b).is_some() {
                out.push(b.clone());
            }
        }
        Ok(ClopenSet::from_reduced(&self.sys, out))
    }

    pub fn union(&self, other: &ClopenSet) -> Result<ClopenSet> {
        self.check(other)?;
        Ok(ClopenSet::from_reduced(
            &self.sys,
            self.cyls.iter().chain(other.cyls.iter()).cloned(),
        ))
    }

    pub fn union_all<'a>(sys: &SystemRef, sets: impl IntoIterator<Item = &'a ClopenSet>) -> ClopenSet {
        let mut all = Vec::new();
        for s in sets {
            all.extend(s.cyls.iter().cloned());
        }
        ClopenSet::from_reduced(sys, all)
    }

    pub fn subtract(&self, other: &ClopenSet) -> Result<ClopenSet> {
        self.check(other)?;
        let sys = &self.sys;
        let ib = other.index();
        let mut under: HashMap<Cylinder, Vec<Cylinder>> = HashMap::new();
        let ia = self.index();
        for b in &other.cyls {
            if let Some((a, _)) = ia.strict_ancestor(sys, b) {
                under.entry(a).or_default().push(b.clone());
            }
        }
        let mut out = Vec::new();
        for a in &self.cyls {
            if ib.ancestor(sys, a).is_some() {
                continue;
            }
            match under.get(a) {
                None => out.push(a.clone()),
                Some(bs) => out.extend(split_off(sys, a, bs)),
            }
        }
        Ok(ClopenSet::from_cylinders(sys, out))
    }

    pub fn complement(&self) -> ClopenSet {
        ClopenSet::whole(&self.sys).subtract(self).expect("same system")
    }

    pub fn is_subset(&self, other: &ClopenSet) -> Result<bool> {
        self.check(other)?;
        let ib = other.index();
        if self.cyls.iter().all(|a| ib.ancestor(&self.sys, a).is_some()) {
            return Ok(true);
        }
        Ok(self.subtract(other)?.is_empty())
    }

    pub fn is_disjoint(&self, other: &ClopenSet) -> Result<bool> {
        Ok(self.intersect(other)?.is_empty())
    }

    /// {x : σ^n(x) ∈ self}.
    pub fn preimage(&self, n: Shift) -> ClopenSet {
        let cyls: Vec<Cylinder> = self.cyls.iter().flat_map(|c| self.sys.preimage(c, n)).collect();
        ClopenSet::from_cylinders(&self.sys, cyls)
    }

    /// σ^n(self).
    pub fn image(&self, n: Shift) -> ClopenSet {
        self.preimage([-n[0], -n[1]])
    }

    /// Exact diameter.
    pub fn diameter(&self) -> Dist {
        let sys = &self.sys;
        let mut best: Option<usize> = None;
        for c in &self.cyls {
            let k = branch_depth(sys, c);
            best = Some(best.map_or(k, |b| b.min(k)));
        }
        for i in 0..self.cyls.len() {
            for j in i + 1..self.cyls.len() {
                let k = sys.agreement(&self.cyls[i], &self.cyls[j]);
                best = Some(best.map_or(k, |b| b.min(k)));
            }
        }
        match best {
            None => Dist::ZERO,
            Some(k) => Dist::pow(k as u64),
        }
    }

    /// Exact distance between two nonempty sets (0 when they meet).
    pub fn distance(&self, other: &ClopenSet) -> Result<Dist> {
        self.check(other)?;
        if self.is_empty() || other.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut best = 0usize;
        for a in &self.cyls {
            for b in &other.cyls {
                let k = self.sys.agreement(a, b);
                if k == a.depth().min(b.depth()) {
                    return Ok(Dist::ZERO);
                }
                best = best.max(k);
            }
        }
        Ok(Dist::pow(best as u64))
    }

    /// All legal cylinders of depth `d` (at least the set's depth) inside the set.
    pub fn refine_to(&self, d: usize) -> Vec<Cylinder> {
        let mut out: Vec<Cylinder> =
            self.cyls.iter().flat_map(|c| self.sys.extensions(c, d.max(c.depth()))).collect();
        out.sort();
        out
    }

    pub fn render(&self) -> String {
        if self.cyls.is_empty() {
            return "∅".into();
        }
        self.cyls.iter().map(|c| self.sys.render(c)).collect::<Vec<_>>().join(" ")
    }
}

/// Depth through which every point of `c` agrees (the diameter exponent).
pub fn branch_depth(sys: &SystemRef, c: &Cylinder) -> usize {
    let d = c.depth();
    if sys.is_odometer() {
        return d;
    }
    let unique = |e: usize| sys.extensions_limited(c, e, 2).len() == 1;
    let mut step = 1;
    let mut good = d;
    let mut bad = d + 1;
    while unique(bad) {
        good = bad;
        bad = d + 2 * step;
        step *= 2;
    }
    while good + 1 < bad {
        let mid = (good + bad) / 2;
        if unique(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

/// Cylinders covering `a` minus the union of the deeper cylinders `bs` inside it.
fn split_off(sys: &SystemRef, a: &Cylinder, bs: &[Cylinder]) -> Vec<Cylinder> {
    if sys.is_odometer() {
        let set: HashSet<&Cylinder> = bs.iter().collect();
        let mut out = Vec::new();
        let mut stack = vec![a.clone()];
        while let Some(c) = stack.pop() {
            if set.contains(&c) {
                continue;
            }
            if !bs.iter().any(|b| sys.is_ancestor(&c, b)) {
                out.push(c);
                continue;
            }
            stack.extend(sys.children(&c));
        }
        return out;
    }
    let dmax = bs.iter().map(Cylinder::depth).max().unwrap();
    let mut out = HashSet::new();
    for w in sys.extensions(a, dmax) {
        if bs.iter().any(|b| sys.is_ancestor(b, &w)) {
            continue;
        }
        let t = bs.iter().map(|b| sys.agreement(&w, b)).max().unwrap();
        out.insert(sys.truncate(&w, t + 1));
    }
    out.into_iter().collect()
}

/// An ordered clopen partition of an ambient set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub ambient: ClopenSet,
    pub blocks: Vec<ClopenSet>,
}

impl Partition {
    /// Checks disjointness and cover, then sorts blocks canonically.
    pub fn new(ambient: ClopenSet, mut blocks: Vec<ClopenSet>) -> Result<Partition> {
        blocks.retain(|b| !b.is_empty());
        blocks.sort();
        let p = Partition { ambient, blocks };
        p.verify()?;
        Ok(p)
    }

    /// Keeps the given block order (used when a distinguished block must come first).
    pub fn with_order(ambient: ClopenSet, blocks: Vec<ClopenSet>) -> Result<Partition> {
        let p = Partition { ambient, blocks };
        p.verify()?;
        Ok(p)
    }

    pub fn trivial(ambient: ClopenSet) -> Partition {
        Partition { blocks: vec![ambient.clone()], ambient }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Exact partition law: blocks nonempty, pairwise disjoint, union equal to the ambient set.
    pub fn verify(&self) -> Result<()> {
        let sys = self.ambient.system();
        let mut tagged = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::AmbientMismatch);
            }
            b.check(&self.ambient)?;
            for c in &b.cyls {
                tagged.push((c, i));
            }
        }
        let idx = Index::new(tagged.iter().map(|(c, i)| (*c, *i)));
        for (c, i) in &tagged {
            if let Some((_, j)) = idx.strict_ancestor(sys, c) {
                if j != *i {
                    return Err(Error::AmbientMismatch);
                }
            }
        }
        let mut seen: HashMap<&Cylinder, usize> = HashMap::new();
        for (c, i) in &tagged {
            if let Some(j) = seen.insert(c, *i) {
                if j != *i {
                    return Err(Error::AmbientMismatch);
                }
            }
        }
        let u = ClopenSet::union_all(sys, self.blocks.iter());
        if u != self.ambient {
            return Err(Error::AmbientMismatch);
        }
        Ok(())
    }

    /// Index of the block containing a point.
    pub fn block_of_point(&self, p: &CantorPoint) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains_point(p))
    }
}

/// Common refinement of two partitions of the same ambient set.
pub fn refine_common(p: &Partition, q: &Partition) -> Result<Partition> {
    if p.ambient != q.ambient {
        return Err(Error::AmbientMismatch);
    }
    let mut blocks = Vec::new();
    for a in &p.blocks {
        for b in &q.blocks {
            let c = a.intersect(b)?;
            if !c.is_empty() {
                blocks.push(c);
            }
        }
    }
    Partition::new(p.ambient.clone(), blocks)
}
