//! Orbit codings: code words over germ filtrations, constant-code refinements and the nested
//! level hierarchy V_ℓ ⊃ W(ℓ;i) ⊃ V(ℓ;i,j) ⊃ V(ℓ;i,j,k).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use memchr::memmem;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::clopen::{ClopenSet, Cylinder, Partition};
use crate::delone::{alpha_cosets, gap_scan_words};
use crate::holonomy::{filtration_dir, Direction};
use crate::systems::{agreement_depth, covering_depth, hi, lo, CantorPoint, Dist, SystemRef};
use crate::{Error, Result, Shift, Q};

/// Default bound on cylinder depths explored while building levels.
pub const DEFAULT_SCAN_DEPTH: usize = 1 << 24;

/// Block index (in the coding partition) of the image of a set under each germ.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CodeWord {
    pub entries: BTreeMap<Shift, usize>,
}

impl CodeWord {
    pub fn render(&self) -> String {
        let parts: Vec<String> = self
            .entries
            .iter()
            .map(|(n, i)| if n[1] == 0 { format!("{}:{}", n[0], i) } else { format!("({},{}):{}", n[0], n[1], i) })
            .collect();
        format!("({})", parts.join(" "))
    }
}

/// Code of `u` over the given germs: the block of `partition` containing each σ^n(u).
pub fn code(u: &ClopenSet, germs: &[Shift], partition: &Partition) -> Result<CodeWord> {
    if u.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut entries = BTreeMap::new();
    for &n in germs {
        let img = u.image(n);
        let mut hit = None;
        for (i, b) in partition.blocks.iter().enumerate() {
            if img.is_subset(b)? {
                hit = Some(i);
                break;
            }
        }
        match hit {
            Some(i) => {
                entries.insert(n, i);
            }
            None => return Err(Error::BlockSplit { germ: n[0] }),
        }
    }
    Ok(CodeWord { entries })
}

/// Splits `block` into the maximal clopen pieces on which the code over the germs of `w`
/// (returns to `target` within path length `r`) is constant; the piece containing `w` first.
pub fn refine_by_code(
    block: &ClopenSet,
    w: &CantorPoint,
    target: &ClopenSet,
    partition: &Partition,
    r: Q,
    dir: Direction,
    scan_depth: usize,
) -> Result<Partition> {
    let sys = block.system();
    let germs = filtration_dir(w, target, r, scan_depth, dir)?.exponents();
    let pd = partition.blocks.iter().map(|b| b.max_depth()).max().unwrap_or(0);
    let depth = germs.iter().map(|&n| sys.need(pd, n)).max().unwrap_or(0).max(block.max_depth());
    if depth > scan_depth {
        return Err(Error::DepthInsufficient { needed: depth });
    }
    let mut groups: BTreeMap<CodeWord, Vec<Cylinder>> = BTreeMap::new();
    for c in block.refine_to(depth) {
        let cw = code(&ClopenSet::cylinder(sys, c.clone()), &germs, partition)?;
        groups.entry(cw).or_default().push(c);
    }
    let mut blocks: Vec<ClopenSet> = groups.into_values().map(|cs| ClopenSet::from_cylinders(sys, cs)).collect();
    blocks.sort();
    if let Some(k) = blocks.iter().position(|b| b.contains_point(w)) {
        let first = blocks.remove(k);
        blocks.insert(0, first);
    }
    Partition::with_order(block.clone(), blocks)
}

/// How V_{ℓ+1} is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Shallowest cylinder around w₀ inside V(ℓ;1,1,1) with λ₁ > R_ℓ and half the diameter.
    Cylinder,
    /// V_ℓ = ρ^ℓ(𝔛) for substitutions, the chain subgroup H_ℓ for odometers; one W block.
    SelfSimilar,
}

/// Window depths of a level: V, W blocks, code blocks (radius R'), fine blocks (radius R).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Depths {
    pub v: usize,
    pub w: usize,
    pub code: usize,
    pub fine: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constants {
    /// diam(V_ℓ).
    pub eps: Dist,
    pub alpha: u64,
    pub theta: Q,
    pub r_prime: Q,
    pub r: Q,
    /// Twice the largest W-block diameter: sets below it meet at most one W block.
    pub delta_hat: Dist,
    /// Least distance between distinct W blocks (absent when κ = 1).
    pub eta: Option<Dist>,
    /// Diameter below which no germ of radius R'_ℓ splits a set.
    pub zeta: Dist,
    /// Shortest leafwise return to V_ℓ.
    pub lambda1: Q,
    /// Longest first-return exponent to V_ℓ.
    pub max_return: i64,
}

#[derive(Clone, Debug)]
pub struct WBlock {
    pub windows: Vec<Cylinder>,
    pub basepoint: Shift,
    pub germs_code: Vec<Shift>,
    pub germs_fine: Vec<Shift>,
}

#[derive(Clone, Debug)]
pub struct CodeBlock {
    pub w: usize,
    pub code: CodeWord,
    pub windows: Vec<Cylinder>,
}

#[derive(Clone, Debug)]
pub struct FineBlock {
    pub code_block: usize,
    pub code: CodeWord,
    pub windows: Vec<Cylinder>,
}

/// One level of the hierarchy. Blocks are stored as their windows at the level's fixed depths;
/// clopen normal forms are produced on demand.
#[derive(Debug)]
pub struct LevelData {
    pub level: usize,
    pub sys: SystemRef,
    pub basepoint: Shift,
    pub v_windows: Vec<Cylinder>,
    pub depths: Depths,
    pub constants: Constants,
    pub w_blocks: Vec<WBlock>,
    pub code_blocks: Vec<CodeBlock>,
    pub fine_blocks: Vec<FineBlock>,
    /// κ_ℓ = 1: a single W block (flagged, not rejected).
    pub kappa_one: bool,
    v_dict: FxHashSet<Cylinder>,
    w_dict: FxHashMap<Cylinder, usize>,
    code_dict: FxHashMap<Cylinder, usize>,
    fine_dict: FxHashMap<Cylinder, usize>,
    v_set: OnceLock<ClopenSet>,
}

/// σ^t(c) known to depth e, when c determines it.
pub fn shifted(sys: &SystemRef, c: &Cylinder, t: Shift, e: usize) -> Option<Cylinder> {
    match c {
        Cylinder::Word(w) => {
            let d = w.len();
            let start = t[0] + lo(e) - lo(d);
            if start < 0 || start as usize + e > d {
                return None;
            }
            Some(Cylinder::Word(w.slice(start as usize..start as usize + e)))
        }
        Cylinder::Coset { depth, rep } => {
            if e > *depth as usize {
                return None;
            }
            let o = sys.odometer().unwrap();
            Some(Cylinder::Coset { depth: e as u32, rep: o.reduce([rep[0] + t[0], rep[1] + t[1]], e) })
        }
    }
}

/// Depth whose cylinders determine every σ^n-image to depth d, for |n| ≤ radius.
fn need_both(sys: &SystemRef, d: usize, radius: i64) -> usize {
    if sys.is_odometer() {
        d
    } else {
        covering_depth(lo(d) - radius, hi(d) + radius)
    }
}

fn key(n: i64) -> (u64, bool) {
    (n.unsigned_abs(), n < 0)
}

/// Orbit point σ^m(w₀) nearest to w₀ inside the union of the windows (all of one depth).
pub fn nearest_visit(sys: &SystemRef, windows: &[Cylinder]) -> Result<Shift> {
    if windows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(o) = sys.odometer() {
        let mut best: Option<Shift> = None;
        for c in windows {
            let Cylinder::Coset { depth, rep } = c else { unreachable!() };
            let cands = if o.dim == 1 {
                let n = o.lattice(*depth as usize).index();
                vec![*rep, [rep[0] - n, 0]]
            } else {
                vec![*rep]
            };
            for r in cands {
                let better = match best {
                    None => true,
                    Some(b) => {
                        let kr = (r[0].unsigned_abs() + r[1].unsigned_abs(), r[0] < 0 || r[1] < 0, r);
                        let kb = (b[0].unsigned_abs() + b[1].unsigned_abs(), b[0] < 0 || b[1] < 0, b);
                        kr < kb
                    }
                };
                if better {
                    best = Some(r);
                }
            }
        }
        return Ok(best.unwrap());
    }
    let s = sys.substitution().unwrap();
    let d = windows[0].depth();
    let finders: Vec<memmem::Finder> = windows.iter().map(|c| memmem::Finder::new(c.word().unwrap().as_ref())).collect();
    let mut m = 64i64.max(d as i64);
    loop {
        let a = -m + lo(d);
        let text = s.base_slice(a, m + hi(d));
        let mut best: Option<i64> = None;
        for f in &finders {
            for occ in occurrences_with(f, &text) {
                let centre = a + occ as i64 - lo(d);
                if best.is_none_or(|b| key(centre) < key(b)) {
                    best = Some(centre);
                }
            }
        }
        if let Some(b) = best {
            if b.abs() <= m {
                return Ok([b, 0]);
            }
        }
        if m > 1 << 30 {
            return Err(Error::LevelStall { level: 0 });
        }
        m *= 2;
    }
}

/// Centres (offset by `shift`) of occurrences of the V words in a text.
/// Start offsets of all occurrences of `needle`, overlapping ones included.
pub(crate) fn occurrences(needle: &[u8], text: &[u8]) -> Vec<usize> {
    occurrences_with(&memmem::Finder::new(needle), text)
}

fn occurrences_with(f: &memmem::Finder, text: &[u8]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut at = 0;
    while at <= text.len() {
        let Some(i) = f.find(&text[at..]) else { break };
        out.push(at + i);
        at += i + 1;
    }
    out
}

fn word_visits(v_windows: &[Cylinder], text: &[u8], shift: i64) -> Vec<i64> {
    let mut out = Vec::new();
    for c in v_windows {
        let w = c.word().unwrap();
        if w.is_empty() {
            out.extend((0..=text.len() as i64).map(|i| i + shift));
            continue;
        }
        for occ in occurrences(w.as_ref(), text) {
            out.push(occ as i64 + shift);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Exponents n with σ^{m+n}(w₀) ∈ V (given by windows of depth d_v) and path length ≤ r.
fn germs_at(sys: &SystemRef, m: Shift, v_dict: &FxHashSet<Cylinder>, v_windows: &[Cylinder], r: Q) -> Vec<Shift> {
    let mut out = Vec::new();
    if let Some(o) = sys.odometer() {
        let d_v = v_windows[0].depth();
        let b = r.to_integer();
        let lat = o.lattice(d_v);
        if o.dim == 1 {
            for n in -b..=b {
                let c = Cylinder::Coset { depth: d_v as u32, rep: lat.reduce([m[0] + n, 0]) };
                if v_dict.contains(&c) {
                    out.push([n, 0]);
                }
            }
        } else {
            // Each coset t of V meets row j in an arithmetic progression of step a.
            for c in v_windows {
                let Cylinder::Coset { rep: t, .. } = c else { continue };
                for j in -b..=b {
                    let dy = m[1] + j - t[1];
                    if dy.rem_euclid(lat.c) != 0 {
                        continue;
                    }
                    let k = dy.div_euclid(lat.c);
                    let rest = b - j.abs();
                    let first = (t[0] + k * lat.b - m[0] - (-rest)).rem_euclid(lat.a) - rest;
                    let mut i = first;
                    while i <= rest {
                        out.push([i, j]);
                        i += lat.a;
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
        }
        return out;
    }
    let s = sys.substitution().unwrap();
    let d_v = v_windows[0].depth();
    let radius = (r / sys.min_tile()).to_integer();
    let a = m[0] - radius + lo(d_v);
    let text = s.base_slice(a, m[0] + radius + hi(d_v));
    let mut found: Vec<i64> = Vec::new();
    for c in v_windows {
        for occ in occurrences(c.word().unwrap().as_ref(), &text) {
            found.push(a + occ as i64 - lo(d_v) - m[0]);
        }
    }
    found.sort_unstable();
    found.dedup();
    for n in found {
        if n.abs() <= radius && sys.path_length(m, [n, 0]) <= r {
            out.push([n, 0]);
        }
    }
    out
}

/// Shortest nonzero ℓ∞ vector of the lattice H_k of a ℤ²-odometer.
fn lattice_linf(sys: &SystemRef, k: usize) -> i64 {
    let o = sys.odometer().unwrap();
    let l = o.lattice(k);
    let mut best = l.a.max(l.c);
    let mut j = 1i64;
    while j * l.c < best {
        let x = (j * l.b).rem_euclid(l.a);
        let x = x.min(l.a - x);
        best = best.min(x.max(j * l.c));
        j += 1;
    }
    best
}

/// Input describing V_ℓ for the level builder.
struct LevelPlan {
    level: usize,
    v_windows: Vec<Cylinder>,
    single_w: bool,
    prev_code_depth: Option<usize>,
    basepoint: Option<Shift>,
}

fn group_by_code<T: Clone>(
    items: Vec<(CodeWord, Cylinder)>,
    first: &Cylinder,
    tag: T,
) -> Vec<(T, CodeWord, Vec<Cylinder>)> {
    let mut groups: BTreeMap<CodeWord, Vec<Cylinder>> = BTreeMap::new();
    for (cw, c) in items {
        groups.entry(cw).or_default().push(c);
    }
    let mut out: Vec<(T, CodeWord, Vec<Cylinder>)> = groups
        .into_iter()
        .map(|(cw, mut cs)| {
            cs.sort();
            (tag.clone(), cw, cs)
        })
        .collect();
    out.sort_by(|a, b| a.2.cmp(&b.2));
    if let Some(k) = out.iter().position(|g| g.2.binary_search(first).is_ok()) {
        let g = out.remove(k);
        out.insert(0, g);
    }
    out
}

fn build_level(sys: &SystemRef, plan: LevelPlan, scan_depth: usize) -> Result<LevelData> {
    let mut v_windows = plan.v_windows;
    v_windows.sort();
    v_windows.dedup();
    if v_windows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d_v = v_windows[0].depth();
    if v_windows.iter().any(|c| c.depth() != d_v) {
        return Err(Error::MalformedSpec("level windows must share one depth".into()));
    }
    let v_dict: FxHashSet<Cylinder> = v_windows.iter().cloned().collect();
    let v_set = ClopenSet::from_cylinders(sys, v_windows.clone());

    // Return statistics of V.
    let (max_return, lambda1, alpha) = if let Some(o) = sys.odometer() {
        if o.dim == 1 {
            let n = o.lattice(d_v).index();
            let mut res: Vec<i64> = v_windows
                .iter()
                .map(|c| match c {
                    Cylinder::Coset { rep, .. } => rep[0],
                    _ => unreachable!(),
                })
                .collect();
            res.sort_unstable();
            res.push(res[0] + n);
            let gaps: Vec<i64> = res.windows(2).map(|w| w[1] - w[0]).collect();
            let g = *gaps.iter().max().unwrap();
            (g, Q::from_integer(*gaps.iter().min().unwrap()), (g - 1) as u64)
        } else {
            let a = alpha_cosets(&v_set, d_v, scan_depth as u64)?;
            let n = o.lattice(d_v).index();
            let l = if v_windows.len() == 1 { lattice_linf(sys, d_v) } else { 1 };
            (n, Q::from_integer(l), a)
        }
    } else {
        let words: Vec<(Vec<u8>, i64)> =
            v_windows.iter().map(|c| (c.word().unwrap().to_vec(), lo(d_v))).collect();
        let g = gap_scan_words(sys, &words);
        (g.max_gap, g.min_path, (g.max_gap - 1) as u64)
    };
    let lambda_f = sys.max_tile();
    let theta = Q::from_integer(2 * alpha as i64 + 1) * lambda_f;
    let r_prime = theta * 2 + lambda_f;
    let r = r_prime * 2;
    let n_code = (r_prime / sys.min_tile()).to_integer();
    let n_fine = (r / sys.min_tile()).to_integer();

    let prev = plan.prev_code_depth.unwrap_or(d_v);
    let floor_w = if plan.single_w { d_v } else { d_v + 2 };
    let d_w = floor_w.max(need_both(sys, prev, n_fine));
    let d_c = need_both(sys, d_w, n_code);
    let d_f = need_both(sys, d_w, n_fine);
    if d_f > scan_depth {
        return Err(Error::DepthInsufficient { needed: d_f });
    }
    let depths = Depths { v: d_v, w: d_w, code: d_c, fine: d_f };

    // Windows of V at the fine depth, and their truncations.
    let mut fine: Vec<Cylinder> = v_windows.iter().flat_map(|c| sys.extensions(c, d_f)).collect();
    fine.sort();
    fine.dedup();
    let mut codew: Vec<Cylinder> = fine.iter().map(|f| sys.truncate(f, d_c)).collect();
    codew.sort();
    codew.dedup();
    let mut wwin: Vec<Cylinder> = codew.iter().map(|c| sys.truncate(c, d_w)).collect();
    wwin.sort();
    wwin.dedup();

    let basepoint = match plan.basepoint {
        Some(b) => b,
        None => nearest_visit(sys, &v_windows)?,
    };
    if !v_dict.contains(&sys.point_cylinder(basepoint, d_v)) {
        return Err(Error::MalformedSpec("basepoint outside V".into()));
    }
    let bw = sys.point_cylinder(basepoint, d_w);
    let mut w_groups: Vec<Vec<Cylinder>> =
        if plan.single_w { vec![wwin.clone()] } else { wwin.iter().map(|c| vec![c.clone()]).collect() };
    if let Some(k) = w_groups.iter().position(|g| g.binary_search(&bw).is_ok()) {
        let g = w_groups.remove(k);
        w_groups.insert(0, g);
    }
    let mut w_dict: FxHashMap<Cylinder, usize> = FxHashMap::default();
    for (i, g) in w_groups.iter().enumerate() {
        for c in g {
            w_dict.insert(c.clone(), i);
        }
    }
    let mut w_blocks = Vec::new();
    for (i, g) in w_groups.into_iter().enumerate() {
        let m = if i == 0 { basepoint } else { nearest_visit(sys, &g)? };
        let germs_code = germs_at(sys, m, &v_dict, &v_windows, r_prime);
        let germs_fine = germs_at(sys, m, &v_dict, &v_windows, r);
        w_blocks.push(WBlock { windows: g, basepoint: m, germs_code, germs_fine });
    }

    let entry = |u: &Cylinder, n: Shift| -> Result<usize> {
        let x = shifted(sys, u, n, d_w).ok_or(Error::DepthInsufficient { needed: u.depth() + 1 })?;
        if !v_dict.contains(&sys.truncate(&x, d_v)) {
            return Ok(0);
        }
        w_dict.get(&x).map(|i| i + 1).ok_or_else(|| Error::GlueMismatch("image window missing from W".into()))
    };
    let code_of = |u: &Cylinder, germs: &[Shift]| -> Result<CodeWord> {
        let mut entries = BTreeMap::new();
        for &n in germs {
            entries.insert(n, entry(u, n)?);
        }
        Ok(CodeWord { entries })
    };

    // Code blocks per W block.
    let mut per_w: Vec<Vec<(CodeWord, Cylinder)>> = vec![Vec::new(); w_blocks.len()];
    for u in &codew {
        let i = w_dict[&sys.truncate(u, d_w)];
        per_w[i].push((code_of(u, &w_blocks[i].germs_code)?, u.clone()));
    }
    let mut code_blocks = Vec::new();
    for (i, items) in per_w.into_iter().enumerate() {
        let first = sys.point_cylinder(w_blocks[i].basepoint, d_c);
        for (w, code, windows) in group_by_code(items, &first, i) {
            code_blocks.push(CodeBlock { w, code, windows });
        }
    }
    let mut code_dict: FxHashMap<Cylinder, usize> = FxHashMap::default();
    for (b, cb) in code_blocks.iter().enumerate() {
        for c in &cb.windows {
            code_dict.insert(c.clone(), b);
        }
    }

    // Fine blocks per code block.
    let mut per_code: Vec<Vec<(CodeWord, Cylinder)>> = vec![Vec::new(); code_blocks.len()];
    for f in &fine {
        let b = code_dict[&sys.truncate(f, d_c)];
        let i = code_blocks[b].w;
        per_code[b].push((code_of(f, &w_blocks[i].germs_fine)?, f.clone()));
    }
    let mut fine_blocks = Vec::new();
    for (b, items) in per_code.into_iter().enumerate() {
        let first = sys.point_cylinder(w_blocks[code_blocks[b].w].basepoint, d_f);
        for (code_block, code, windows) in group_by_code(items, &first, b) {
            fine_blocks.push(FineBlock { code_block, code, windows });
        }
    }
    let mut fine_dict: FxHashMap<Cylinder, usize> = FxHashMap::default();
    for (k, fb) in fine_blocks.iter().enumerate() {
        for c in &fb.windows {
            fine_dict.insert(c.clone(), k);
        }
    }

    // Constants.
    let eps = v_set.diameter();
    let w_exp = w_blocks
        .iter()
        .map(|b| window_union_diameter(sys, &b.windows).0.unwrap_or(u64::MAX))
        .min()
        .unwrap();
    let delta_hat = Dist::pow(w_exp.saturating_sub(1));
    let zeta = Dist::pow(d_c.saturating_sub(1) as u64);
    let eta = if w_blocks.len() < 2 {
        None
    } else {
        let mut best = 0usize;
        for (i, a) in w_blocks.iter().enumerate() {
            for b in &w_blocks[i + 1..] {
                for x in &a.windows {
                    for y in &b.windows {
                        best = best.max(sys.agreement(x, y));
                    }
                }
            }
        }
        Some(Dist::pow(best as u64))
    };
    let constants =
        Constants { eps, alpha, theta, r_prime, r, delta_hat, eta, zeta, lambda1, max_return };
    let kappa_one = w_blocks.len() == 1;
    let cell = OnceLock::new();
    let _ = cell.set(v_set);
    Ok(LevelData {
        level: plan.level,
        sys: sys.clone(),
        basepoint,
        v_windows,
        depths,
        constants,
        w_blocks,
        code_blocks,
        fine_blocks,
        kappa_one,
        v_dict,
        w_dict,
        code_dict,
        fine_dict,
        v_set: cell,
    })
}

impl LevelData {
    pub fn v_set(&self) -> &ClopenSet {
        self.v_set.get_or_init(|| ClopenSet::from_cylinders(&self.sys, self.v_windows.clone()))
    }

    /// Whether a cylinder of depth ≥ D_V lies in V_ℓ.
    pub fn in_v(&self, c: &Cylinder) -> bool {
        self.v_dict.contains(&self.sys.truncate(c, self.depths.v))
    }

    pub fn w_of(&self, c: &Cylinder) -> Option<usize> {
        self.w_dict.get(&self.sys.truncate(c, self.depths.w)).copied()
    }

    pub fn code_block_of(&self, c: &Cylinder) -> Option<usize> {
        self.code_dict.get(&self.sys.truncate(c, self.depths.code)).copied()
    }

    pub fn fine_block_of(&self, c: &Cylinder) -> Option<usize> {
        self.fine_dict.get(&self.sys.truncate(c, self.depths.fine)).copied()
    }

    /// Code blocks V(ℓ;i,·) of one W block, with their flat indices.
    pub fn code_blocks_of(&self, i: usize) -> Vec<usize> {
        (0..self.code_blocks.len()).filter(|&b| self.code_blocks[b].w == i).collect()
    }

    pub fn fine_blocks_of(&self, b: usize) -> Vec<usize> {
        (0..self.fine_blocks.len()).filter(|&k| self.fine_blocks[k].code_block == b).collect()
    }

    fn set_of(&self, windows: &[Cylinder]) -> ClopenSet {
        ClopenSet::from_cylinders(&self.sys, windows.to_vec())
    }

    /// {W(ℓ;i)} as a partition of V_ℓ.
    pub fn w_partition(&self) -> Result<Partition> {
        let blocks = self.w_blocks.iter().map(|b| self.set_of(&b.windows)).collect();
        Partition::with_order(self.v_set().clone(), blocks)
    }

    /// {V(ℓ;i,j)}_j as a partition of W(ℓ;i).
    pub fn code_partition(&self, i: usize) -> Result<Partition> {
        let blocks = self.code_blocks_of(i).iter().map(|&b| self.set_of(&self.code_blocks[b].windows)).collect();
        Partition::with_order(self.set_of(&self.w_blocks[i].windows), blocks)
    }

    /// {V(ℓ;i,j,k)}_k as a partition of the code block with flat index b.
    pub fn fine_partition(&self, b: usize) -> Result<Partition> {
        let blocks =
            self.fine_blocks_of(b).iter().map(|&k| self.set_of(&self.fine_blocks[k].windows)).collect();
        Partition::with_order(self.set_of(&self.code_blocks[b].windows), blocks)
    }

    /// The coding partition 𝒜_ℓ = {𝔛 − V_ℓ, W(ℓ;1), …, W(ℓ;κ)} used by code words.
    pub fn coding_partition(&self) -> Result<Partition> {
        let mut blocks = vec![self.v_set().complement()];
        blocks.extend(self.w_blocks.iter().map(|b| self.set_of(&b.windows)));
        blocks.retain(|b| !b.is_empty());
        Partition::with_order(ClopenSet::whole(&self.sys), blocks)
    }

    /// Index in 𝒜_ℓ of the block containing σ^n(u), read from windows (0 = outside V_ℓ).
    pub fn block_index_after(&self, u: &Cylinder, n: Shift) -> Option<usize> {
        let x = shifted(&self.sys, u, n, self.depths.w)?;
        if !self.in_v(&x) {
            return Some(0);
        }
        self.w_of(&x).map(|i| i + 1)
    }

    /// Offsets t ∈ [from, to] with σ^t(u) ∈ V_ℓ, or None when u does not determine them.
    pub fn visits(&self, u: &Cylinder, from: i64, to: i64) -> Option<Vec<i64>> {
        let d_v = self.depths.v;
        match u {
            Cylinder::Word(w) => {
                let d = w.len();
                let a = from + lo(d_v) - lo(d);
                let b = to + hi(d_v) - lo(d);
                if a < 0 || b > d as i64 {
                    return None;
                }
                Some(word_visits(&self.v_windows, &w[a as usize..b as usize], from))
            }
            Cylinder::Coset { depth, .. } => {
                if (*depth as usize) < d_v {
                    return None;
                }
                Some((from..=to).filter(|&t| self.in_v(&shifted(&self.sys, u, [t, 0], d_v).unwrap())).collect())
            }
        }
    }

    /// Offsets t ∈ [from, to] with σ^t(w₀) ∈ V_ℓ.
    pub fn base_visits(&self, from: i64, to: i64) -> Vec<i64> {
        let d_v = self.depths.v;
        match self.sys.substitution() {
            Some(s) => {
                let text = s.base_slice(from + lo(d_v), to + hi(d_v));
                word_visits(&self.v_windows, &text, from)
            }
            None => (from..=to)
                .filter(|&t| self.in_v(&self.sys.point_cylinder([t, 0], d_v)))
                .collect(),
        }
    }

    pub fn basepoint_point(&self) -> CantorPoint {
        self.sys.point(self.basepoint)
    }

    /// Stable text dump: constants, then blocks in canonical order.
    pub fn dump(&self) -> String {
        let s = &self.sys;
        let c = &self.constants;
        let mut out = String::new();
        let _ = writeln!(out, "level {}", self.level);
        let _ = writeln!(out, "  basepoint {}", self.basepoint[0]);
        let _ = writeln!(
            out,
            "  depths v={} w={} code={} fine={}",
            self.depths.v, self.depths.w, self.depths.code, self.depths.fine
        );
        let _ = writeln!(
            out,
            "  eps={} alpha={} theta={} R'={} R={} delta_hat={} eta={} zeta={} lambda1={} max_return={}",
            c.eps,
            c.alpha,
            c.theta,
            c.r_prime,
            c.r,
            c.delta_hat,
            c.eta.map_or("-".to_string(), |e| e.to_string()),
            c.zeta,
            c.lambda1,
            c.max_return
        );
        if self.kappa_one {
            let _ = writeln!(out, "  kappa=1");
        }
        let _ = writeln!(out, "  V {}", self.v_windows.iter().map(|w| s.render(w)).collect::<Vec<_>>().join(" "));
        for (i, w) in self.w_blocks.iter().enumerate() {
            let _ = writeln!(
                out,
                "  W{} basepoint={} windows={} germs'={} germs={}",
                i + 1,
                w.basepoint[0],
                w.windows.len(),
                w.germs_code.len(),
                w.germs_fine.len()
            );
            for b in self.code_blocks_of(i) {
                let cb = &self.code_blocks[b];
                let _ = writeln!(out, "    V({},{}) windows={} code={}", i + 1, b, cb.windows.len(), cb.code.render());
                for k in self.fine_blocks_of(b) {
                    let fb = &self.fine_blocks[k];
                    let _ = writeln!(out, "      V({},{},{}) windows={}", i + 1, b, k, fb.windows.len());
                }
            }
        }
        out
    }
}

/// The nested levels.
#[derive(Debug)]
pub struct CodingHierarchy {
    pub schedule: Schedule,
    pub levels: Vec<LevelData>,
}

impl CodingHierarchy {
    pub fn system(&self) -> &SystemRef {
        &self.levels[0].sys
    }

    pub fn dump(&self) -> String {
        self.levels.iter().map(|l| l.dump()).collect()
    }

    /// λ₁ of each level.
    pub fn lambda1_profile(&self) -> Vec<Q> {
        self.levels.iter().map(|l| l.constants.lambda1).collect()
    }
}

/// Smallest e ≤ cap satisfying a monotone predicate.
fn least_depth(cap: usize, mut pred: impl FnMut(usize) -> Result<bool>) -> Result<Option<usize>> {
    if pred(0)? {
        return Ok(Some(0));
    }
    let mut hi_e = 1usize;
    while !pred(hi_e)? {
        if hi_e >= cap {
            return Ok(None);
        }
        hi_e = (2 * hi_e).min(cap);
    }
    let mut lo_e = hi_e / 2;
    while lo_e + 1 < hi_e {
        let mid = (lo_e + hi_e) / 2;
        if pred(mid)? {
            hi_e = mid;
        } else {
            lo_e = mid;
        }
    }
    Ok(Some(hi_e))
}

fn lambda_of_centred(sys: &SystemRef, e: usize) -> Q {
    if let Some(o) = sys.odometer() {
        return if o.dim == 1 {
            Q::from_integer(o.lattice(e).index())
        } else {
            Q::from_integer(lattice_linf(sys, e))
        };
    }
    if e == 0 {
        return sys.min_tile();
    }
    let w = sys.point_cylinder([0, 0], e);
    gap_scan_words(sys, &[(w.word().unwrap().to_vec(), lo(e))]).min_path
}

/// Next level's V under the cylinder schedule.
fn next_cylinder(sys: &SystemRef, prev: &LevelData, scan_depth: usize) -> Result<Cylinder> {
    let stall = Error::LevelStall { level: prev.level + 1 };
    let fb = &prev.fine_blocks[0];
    let d_f = prev.depths.fine;
    let fset: FxHashSet<&Cylinder> = fb.windows.iter().collect();
    let inside = |e: usize| -> Result<bool> {
        if e >= d_f {
            return Ok(true);
        }
        let c = sys.point_cylinder([0, 0], e);
        let ext = sys.extensions_limited(&c, d_f, fb.windows.len() + 1);
        Ok(ext.len() <= fb.windows.len() && ext.iter().all(|x| fset.contains(x)))
    };
    let r = prev.constants.r;
    let e_in = least_depth(scan_depth, inside)?.ok_or(stall.clone())?;
    let e_lambda = least_depth(scan_depth, |e| Ok(lambda_of_centred(sys, e) > r))?.ok_or(stall.clone())?;
    let bound = prev.constants.eps.half();
    let e_diam = least_depth(scan_depth, |e| {
        Ok(ClopenSet::cylinder(sys, sys.point_cylinder([0, 0], e)).diameter() <= bound)
    })?
    .ok_or(stall)?;
    let e = e_in.max(e_lambda).max(e_diam);
    Ok(sys.point_cylinder([0, 0], e))
}

/// Builds L levels starting from V₁ (default: w₀'s depth-1 cylinder for substitutions,
/// the whole space for odometers).
pub fn build_hierarchy(
    sys: &SystemRef,
    levels: usize,
    v1: Option<&ClopenSet>,
    schedule: Schedule,
) -> Result<CodingHierarchy> {
    build_hierarchy_with(sys, levels, v1, schedule, DEFAULT_SCAN_DEPTH)
}

pub fn build_hierarchy_with(
    sys: &SystemRef,
    levels: usize,
    v1: Option<&ClopenSet>,
    schedule: Schedule,
    scan_depth: usize,
) -> Result<CodingHierarchy> {
    if levels == 0 {
        return Err(Error::InsufficientData("at least one level".into()));
    }
    let mut out: Vec<LevelData> = Vec::new();
    for l in 1..=levels {
        let prev_code_depth = out.last().map(|p| p.depths.code);
        let plan = match schedule {
            Schedule::Cylinder => {
                let v_windows = match (out.last(), v1) {
                    (Some(p), _) => vec![next_cylinder(sys, p, scan_depth)?],
                    (None, Some(v)) => {
                        if v.system().id != sys.id {
                            return Err(Error::SystemMismatch);
                        }
                        if !v.contains_point(&sys.basepoint()) {
                            return Err(Error::MalformedSpec("V₁ must contain the basepoint".into()));
                        }
                        v.refine_to(v.max_depth())
                    }
                    (None, None) => {
                        vec![if sys.is_odometer() { sys.root() } else { sys.point_cylinder([0, 0], 1) }]
                    }
                };
                LevelPlan { level: l, v_windows, single_w: false, prev_code_depth, basepoint: Some([0, 0]) }
            }
            Schedule::SelfSimilar => {
                let v_windows = if sys.is_odometer() {
                    vec![sys.point_cylinder([0, 0], l)]
                } else {
                    let (d, ws) = sys.substitution().unwrap().cut_windows(l);
                    if d > scan_depth {
                        return Err(Error::DepthInsufficient { needed: d });
                    }
                    ws.into_iter().map(Cylinder::Word).collect()
                };
                LevelPlan { level: l, v_windows, single_w: true, prev_code_depth, basepoint: Some([0, 0]) }
            }
        };
        out.push(build_level(sys, plan, scan_depth)?);
    }
    Ok(CodingHierarchy { schedule, levels: out })
}

/// Smallest scan depth at which the hierarchy builds, found by doubling from `from` up to
/// `limit` and then reading off the deepest window the hierarchy actually touched.
pub fn sufficient_scan_depth(
    sys: &SystemRef,
    levels: usize,
    schedule: Schedule,
    from: usize,
    limit: usize,
) -> Result<usize> {
    let mut depth = from.max(1);
    loop {
        match build_hierarchy_with(sys, levels, None, schedule, depth) {
            Ok(h) => {
                let deepest = h.levels.iter().map(|l| l.depths.fine.max(l.depths.code)).max().unwrap_or(0);
                return Ok(deepest.min(depth));
            }
            Err(Error::DepthInsufficient { needed }) if depth < limit => {
                depth = (depth * 2).max(needed).min(limit);
            }
            Err(e) => return Err(e),
        }
    }
}

/// A standalone level over V = [word] (future cylinder) with a single W block, based at the
/// nearest return of w₀.
pub fn word_level(sys: &SystemRef, word: &str, scan_depth: usize) -> Result<LevelData> {
    let v = ClopenSet::future_cylinder(sys, word)?;
    let v_windows = v.refine_to(v.max_depth());
    build_level(
        sys,
        LevelPlan { level: 1, v_windows, single_w: true, prev_code_depth: None, basepoint: None },
        scan_depth,
    )
}

/// Outcome of the exact coding checks on one level.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CodingReport {
    pub blocks_checked: usize,
    pub germ_checks: usize,
    pub failures: Vec<String>,
    /// W blocks not below δ̂ (possible only when κ = 1 and V_ℓ has diameter 1).
    pub diameter_violations: Vec<String>,
}

impl CodingReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Local constancy, distinct codes, nesting and the diameter bound, checked window by window.
pub fn check_level(level: &LevelData) -> CodingReport {
    let sys = &level.sys;
    let mut rep = CodingReport::default();
    let d = level.depths;
    // Nesting and membership.
    for (b, cb) in level.code_blocks.iter().enumerate() {
        for u in &cb.windows {
            if level.w_of(u) != Some(cb.w) || !level.in_v(u) || level.code_block_of(u) != Some(b) {
                rep.failures.push(format!("code block {b} not nested in W{}", cb.w + 1));
            }
        }
    }
    for (k, fb) in level.fine_blocks.iter().enumerate() {
        for f in &fb.windows {
            if level.code_block_of(f) != Some(fb.code_block) || level.fine_block_of(f) != Some(k) {
                rep.failures.push(format!("fine block {k} not nested"));
            }
        }
    }
    // Local constancy at both radii.
    let stages: [(Vec<(usize, &[Cylinder])>, bool); 2] = [
        (level.code_blocks.iter().map(|cb| (cb.w, cb.windows.as_slice())).collect(), true),
        (
            level
                .fine_blocks
                .iter()
                .map(|fb| (level.code_blocks[fb.code_block].w, fb.windows.as_slice()))
                .collect(),
            false,
        ),
    ];
    for (blocks, coarse) in &stages {
        for (b, (i, windows)) in blocks.iter().enumerate() {
            rep.blocks_checked += 1;
            let germs = if *coarse { &level.w_blocks[*i].germs_code } else { &level.w_blocks[*i].germs_fine };
            for &n in germs {
                rep.germ_checks += 1;
                let mut seen = None;
                for u in windows.iter() {
                    let x = level.block_index_after(u, n);
                    if x.is_none() || (seen.is_some() && seen != x) {
                        rep.failures.push(format!(
                            "{} block {b}: germ {} splits",
                            if *coarse { "code" } else { "fine" },
                            n[0]
                        ));
                        break;
                    }
                    seen = x;
                }
            }
        }
    }
    // Distinct codes within each stage.
    for i in 0..level.w_blocks.len() {
        let codes: Vec<&CodeWord> = level.code_blocks_of(i).iter().map(|&b| &level.code_blocks[b].code).collect();
        if codes.iter().collect::<std::collections::BTreeSet<_>>().len() != codes.len() {
            rep.failures.push(format!("W{}: repeated code", i + 1));
        }
    }
    for b in 0..level.code_blocks.len() {
        let codes: Vec<&CodeWord> = level.fine_blocks_of(b).iter().map(|&k| &level.fine_blocks[k].code).collect();
        if codes.iter().collect::<std::collections::BTreeSet<_>>().len() != codes.len() {
            rep.failures.push(format!("code block {b}: repeated fine code"));
        }
    }
    // Basepoint and diameters.
    let w0 = sys.point_cylinder(level.basepoint, d.fine);
    if level.fine_block_of(&w0) != Some(0) || level.code_block_of(&w0) != Some(0) || level.w_of(&w0) != Some(0) {
        rep.failures.push("basepoint not in V(ℓ;1,1,1)".into());
    }
    for (i, w) in level.w_blocks.iter().enumerate() {
        if window_union_diameter(sys, &w.windows) >= level.constants.delta_hat {
            rep.diameter_violations.push(format!("diam W{} ≥ δ̂", i + 1));
        }
    }
    rep
}

/// Upper bound for the diameter of a union of same-depth windows, exact when there are two or more.
pub fn window_union_diameter(sys: &SystemRef, windows: &[Cylinder]) -> Dist {
    if windows.is_empty() {
        return Dist::ZERO;
    }
    if windows.len() == 1 {
        return Dist::pow(windows[0].depth() as u64);
    }
    let mut best = usize::MAX;
    for (i, a) in windows.iter().enumerate() {
        for b in &windows[i + 1..] {
            let k = match (a, b) {
                (Cylinder::Word(x), Cylinder::Word(y)) => agreement_depth(x, y),
                _ => sys.agreement(a, b),
            };
            best = best.min(k);
        }
    }
    Dist::pow(best as u64)
}

/// Lemma-level check through clopen algebra: each block's germ images sit inside one block
/// of 𝒜_ℓ. Practical for shallow levels.
pub fn check_level_clopen(level: &LevelData) -> Result<CodingReport> {
    let mut rep = CodingReport::default();
    let a = level.coding_partition()?;
    // Entry 0 means "outside V"; the partition omits that block when V is everything.
    let shift = usize::from(level.v_set().complement().is_empty());
    for (b, cb) in level.code_blocks.iter().enumerate() {
        rep.blocks_checked += 1;
        let u = ClopenSet::from_cylinders(&level.sys, cb.windows.clone());
        let germs = &level.w_blocks[cb.w].germs_code;
        rep.germ_checks += germs.len();
        match code(&u, germs, &a) {
            Ok(cw)
                if cw.entries.len() == cb.code.entries.len()
                    && cw.entries.iter().all(|(n, &i)| cb.code.entries.get(n) == Some(&(i + shift))) => {}
            Ok(_) => rep.failures.push(format!("code block {b}: stored code differs")),
            Err(e) => rep.failures.push(format!("code block {b}: {e}")),
        }
    }
    Ok(rep)
}
