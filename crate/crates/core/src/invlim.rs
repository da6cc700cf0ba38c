//! Bonding maps between the quotient complexes, transition matrices, the direct-limit rank
//! of H¹ and finite-depth checks of the inverse-limit presentation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::coding::{nearest_visit, shifted, CodingHierarchy, LevelData};
use crate::systems::{Dist, SystemRef};
use crate::Shift;
use crate::tower::{build_tower, class_diameters, collapse, BranchedComplex, SquareComplex, TowerLevel};
use crate::{Error, Result};

/// Integer matrix: rows index target edges, columns source edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<i64>>,
}

impl TransitionMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        TransitionMatrix { rows, cols, data: vec![vec![0; cols]; rows] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i][i] = 1;
        }
        m
    }

    pub fn from_rows(data: Vec<Vec<i64>>) -> Self {
        let rows = data.len();
        let cols = data.first().map_or(0, |r| r.len());
        TransitionMatrix { rows, cols, data }
    }

    pub fn mul(&self, other: &TransitionMatrix) -> Result<TransitionMatrix> {
        if self.cols != other.rows {
            return Err(Error::LevelMismatch);
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i][k];
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i][j] += a * other.data[k][j];
                }
            }
        }
        Ok(out)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn rank(&self) -> usize {
        rank(&to_rational(self))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in &self.data {
            let line: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

type RMat = Vec<Vec<BigRational>>;

fn to_rational(m: &TransitionMatrix) -> RMat {
    m.data.iter().map(|r| r.iter().map(|&x| BigRational::from_integer(BigInt::from(x))).collect()).collect()
}

/// Row echelon form in place; returns pivot columns.
fn echelon(m: &mut RMat) -> Vec<usize> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        let inv = m[r][c].recip();
        for j in c..cols {
            let v = &m[r][j] * &inv;
            m[r][j] = v;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..cols {
                    let v = &m[i][j] - &f * &m[r][j];
                    m[i][j] = v;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

fn rank(m: &RMat) -> usize {
    let mut a = m.clone();
    echelon(&mut a).len()
}

fn rmul(a: &RMat, b: &RMat) -> RMat {
    let n = a.len();
    let k = b.len();
    let m = b.first().map_or(0, |r| r.len());
    let mut out = vec![vec![BigRational::zero(); m]; n];
    for i in 0..n {
        for t in 0..k {
            if a[i][t].is_zero() {
                continue;
            }
            for j in 0..m {
                let v = &out[i][j] + &a[i][t] * &b[t][j];
                out[i][j] = v;
            }
        }
    }
    out
}

fn transpose(a: &RMat) -> RMat {
    let n = a.len();
    let m = a.first().map_or(0, |r| r.len());
    (0..m).map(|j| (0..n).map(|i| a[i][j].clone()).collect()).collect()
}

/// Characteristic polynomial det(xI − C), coefficients from the leading one down.
pub fn charpoly(c: &[Vec<BigRational>]) -> Vec<BigRational> {
    let n = c.len();
    let mut coeffs = vec![BigRational::zero(); n + 1];
    coeffs[0] = BigRational::one();
    let mut m: RMat = vec![vec![BigRational::zero(); n]; n];
    for k in 1..=n {
        let mut next = rmul(&c.to_vec(), &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] = &row[i] + &coeffs[k - 1];
        }
        m = next;
        let cm = rmul(&c.to_vec(), &m);
        let tr = (0..n).fold(BigRational::zero(), |a, i| a + &cm[i][i]);
        coeffs[k] = -tr / BigRational::from_integer(BigInt::from(k as i64));
    }
    coeffs
}

/// The map induced by a square matrix on its eventual range, in a basis of that range.
pub fn eventual_restriction(a: &TransitionMatrix) -> Result<RMat> {
    if !a.is_square() {
        return Err(Error::DimensionDrift);
    }
    let n = a.rows;
    let ar = to_rational(a);
    let mut p = ar.clone();
    for _ in 1..n.max(1) {
        p = rmul(&p, &ar);
    }
    // Column basis of A^n.
    let mut pt = transpose(&p);
    let pivots = {
        let mut t = p.clone();
        echelon(&mut t)
    };
    pt.retain(|_| true);
    let basis: RMat = pivots.iter().map(|&j| pt[j].clone()).collect();
    let r = basis.len();
    if r == 0 {
        return Ok(Vec::new());
    }
    let b = transpose(&basis);
    let ab = rmul(&ar, &b);
    // Solve B C = A B through rows where B has full rank.
    let rows = {
        let mut t = basis.clone();
        echelon(&mut t)
    };
    let bp: RMat = rows.iter().map(|&i| b[i].clone()).collect();
    let abp: RMat = rows.iter().map(|&i| ab[i].clone()).collect();
    let mut aug: RMat = (0..r)
        .map(|i| {
            let mut row = bp[i].clone();
            row.extend(abp[i].iter().cloned());
            row
        })
        .collect();
    echelon(&mut aug);
    Ok((0..r).map(|i| aug[i][r..].to_vec()).collect())
}

/// Integer coefficients of a characteristic polynomial, leading first.
pub fn integer_charpoly(c: &[Vec<BigRational>]) -> Option<Vec<BigInt>> {
    charpoly(c).into_iter().map(|x| if x.is_integer() { Some(x.to_integer()) } else { None }).collect()
}

pub fn render_poly(coeffs: &[BigInt]) -> String {
    let n = coeffs.len().saturating_sub(1);
    let mut out = String::new();
    for (i, c) in coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let p = n - i;
        let sign = if c.is_negative() { " - " } else if out.is_empty() { "" } else { " + " };
        let mag = c.abs();
        let coef = if mag.is_one() && p > 0 { String::new() } else { mag.to_string() };
        let var = match p {
            0 => String::new(),
            1 => "x".into(),
            _ => format!("x^{p}"),
        };
        let lead = if out.is_empty() && c.is_negative() { "-" } else { sign };
        out.push_str(lead);
        out.push_str(&coef);
        out.push_str(&var);
    }
    if out.is_empty() {
        "0".into()
    } else {
        out
    }
}

/// Cellular map M_{source} → M_{target} (raw complexes) with its simplified matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BondingMap {
    pub source: usize,
    pub target: usize,
    /// Source raw edge ↦ target raw edge.
    pub cell_map: Vec<usize>,
    /// Source raw vertex ↦ target raw vertex.
    pub vertex_map: Vec<usize>,
    /// Source simplified edge ↦ directed path of target raw edges.
    pub paths: Vec<Vec<usize>>,
    pub matrix: TransitionMatrix,
    /// Target simplified vertex × source simplified vertex incidence of the vertex map.
    pub vertex_matrix: TransitionMatrix,
}

impl BondingMap {
    /// A copy with one cell image moved (a negative control for the factorization check).
    pub fn corrupted(&self) -> BondingMap {
        let mut q = self.clone();
        if let Some(first) = q.cell_map.first_mut() {
            *first += 1;
        }
        q
    }
}

/// Levels, towers and complexes of a hierarchy.
#[derive(Debug)]
pub struct InverseSystem {
    pub hierarchy: CodingHierarchy,
    pub towers: Vec<TowerLevel>,
    pub complexes: Vec<BranchedComplex>,
}

impl InverseSystem {
    pub fn build(hierarchy: CodingHierarchy) -> Result<Self> {
        let mut towers = Vec::new();
        let mut complexes = Vec::new();
        for l in &hierarchy.levels {
            let t = build_tower(l)?;
            complexes.push(collapse(&t)?);
            towers.push(t);
        }
        let mut sys = InverseSystem { hierarchy, towers, complexes };
        // Keep the images of kept vertices so every edge path runs between kept vertices.
        for l in (2..=sys.depth()).rev() {
            let (_, vertex_map) = raw_bonding(&sys, l, l - 1)?;
            let src = &sys.complexes[l - 1];
            let mut marked = vec![false; sys.complexes[l - 2].raw.vertex_count];
            for (v, k) in src.kept.iter().enumerate() {
                if k.is_some() {
                    marked[vertex_map[v]] = true;
                }
            }
            sys.complexes[l - 2].resimplify(&marked);
        }
        Ok(sys)
    }

    pub fn depth(&self) -> usize {
        self.towers.len()
    }

    fn level(&self, l: usize) -> &LevelData {
        &self.hierarchy.levels[l - 1]
    }

    /// Consecutive bonding maps q_{ℓ+1,ℓ}, ℓ = 1..L−1.
    pub fn bondings(&self) -> Result<Vec<BondingMap>> {
        (1..self.depth()).map(|l| bonding(self, l + 1, l)).collect()
    }

    /// Consecutive simplified matrices M_ℓ: M_{ℓ+1} → M_ℓ.
    pub fn matrices(&self) -> Result<Vec<TransitionMatrix>> {
        Ok(self.bondings()?.into_iter().map(|b| b.matrix).collect())
    }

    /// Direct-limit rank of H¹ with the eventual self-map and its characteristic polynomial on H¹.
    pub fn h1(&self) -> Result<(H1Limit, Option<EventualStep>)> {
        let bonds = self.bondings()?;
        let edges: Vec<TransitionMatrix> = bonds.iter().map(|b| b.matrix.clone()).collect();
        let vertices: Vec<TransitionMatrix> = bonds.iter().map(|b| b.vertex_matrix.clone()).collect();
        let mut h = h1_limit_cochains(&edges, &vertices)?;
        let step = eventual_step(self)?;
        if let Some(st) = &step {
            h.eventual = Some(st.edges.clone());
            h.charpoly = st.h1_charpoly()?;
        }
        Ok((h, step))
    }

    /// Column segments (start offset, column) of level ℓ along w₀'s orbit covering [from, to].
    pub fn orbit_segments(&self, l: usize, from: i64, to: i64) -> Result<Vec<(i64, usize)>> {
        let lev = self.level(l);
        let tower = &self.towers[l - 1];
        let g = lev.constants.max_return;
        let vis = lev.base_visits(from - g, to);
        let mut out = Vec::new();
        for p in vis {
            let c = tower
                .column_of(&lev.sys.point_cylinder([p, 0], tower.depth))
                .ok_or_else(|| Error::GlueMismatch(format!("offset {p} has no level-{l} column")))?;
            out.push((p, c));
        }
        for w in out.windows(2) {
            if w[1].0 - w[0].0 != tower.columns[w[0].1].height() as i64 {
                return Err(Error::NotNested(format!("level {l}: gap at offset {}", w[0].0)));
            }
        }
        if out.first().is_none_or(|s| s.0 > from) {
            return Err(Error::InsufficientData("orbit window too short".into()));
        }
        Ok(out)
    }
}

/// Raw edge of level ℓ containing the orbit offset m, read from precomputed segments.
fn locate(complex: &BranchedComplex, segs: &[(i64, usize)], m: i64) -> usize {
    let i = segs.partition_point(|s| s.0 <= m) - 1;
    let (p, c) = segs[i];
    complex.cell(c, (m - p) as usize)
}

/// The bonding map from level `source` to level `target` ≤ `source`.
pub fn bonding(sys: &InverseSystem, source: usize, target: usize) -> Result<BondingMap> {
    let (cell_map, vertex_map) = raw_bonding(sys, source, target)?;
    let src_c = &sys.complexes[source - 1];
    let tgt_c = &sys.complexes[target - 1];
    let paths: Vec<Vec<usize>> =
        src_c.chains.iter().map(|ch| ch.iter().map(|&e| cell_map[e]).collect()).collect();
    for (i, path) in paths.iter().enumerate() {
        for w in path.windows(2) {
            if tgt_c.raw.edges[w[0]].to != tgt_c.raw.edges[w[1]].from {
                return Err(Error::NotNested(format!("edge path {i} disconnected")));
            }
        }
    }
    let matrix = path_matrix(tgt_c, &paths);
    let mut vertex_matrix = TransitionMatrix::zeros(tgt_c.simplified.vertex_count, src_c.simplified.vertex_count);
    for (v, k) in src_c.kept.iter().enumerate() {
        if let Some(i) = k {
            let j = tgt_c.kept[vertex_map[v]]
                .ok_or_else(|| Error::NotNested(format!("image of vertex {v} is interior to an edge")))?;
            vertex_matrix.data[j][*i] += 1;
        }
    }
    Ok(BondingMap { source, target, cell_map, vertex_map, paths, matrix, vertex_matrix })
}

/// Cell and vertex images of the raw bonding map.
fn raw_bonding(sys: &InverseSystem, source: usize, target: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if target == 0 || target > source || source > sys.depth() {
        return Err(Error::LevelMismatch);
    }
    let src_c = &sys.complexes[source - 1];
    let tgt_c = &sys.complexes[target - 1];
    let src_t = &sys.towers[source - 1];
    let tgt_t = &sys.towers[target - 1];
    let tgt_l = sys.level(target);
    let s = &tgt_l.sys;
    let mut cell_map = vec![usize::MAX; src_c.raw.edges.len()];
    let mut vertex_map = vec![usize::MAX; src_c.raw.vertex_count];
    for (c, col) in src_t.columns.iter().enumerate() {
        let h = col.height() as i64;
        let mut segments: Option<Vec<(i64, usize)>> = None;
        for u in &col.windows {
            let vis = tgt_l
                .visits(u, 0, h)
                .ok_or_else(|| Error::NotNested(format!("column {c}: visits undetermined")))?;
            if vis.first() != Some(&0) || vis.last() != Some(&h) {
                return Err(Error::NotNested(format!("column {c}: ends outside V_{target}")));
            }
            let mut seg = Vec::new();
            for w in vis.windows(2) {
                let x = shifted(s, u, [w[0], 0], tgt_t.depth)
                    .ok_or_else(|| Error::NotNested(format!("column {c}: window too short")))?;
                let j = tgt_t.column_of(&x).ok_or_else(|| Error::NotNested(format!("column {c}: no target column")))?;
                if tgt_t.columns[j].height() as i64 != w[1] - w[0] {
                    return Err(Error::NotNested(format!("column {c}: height mismatch")));
                }
                seg.push((w[0], j));
            }
            match &segments {
                None => segments = Some(seg),
                Some(prev) if *prev != seg => {
                    return Err(Error::NotNested(format!("column {c}: base not inside one target column chain")))
                }
                _ => {}
            }
        }
        let seg = segments.ok_or(Error::EmptyInput)?;
        let mut assign = |v: usize, t: usize| -> Result<()> {
            if vertex_map[v] == usize::MAX {
                vertex_map[v] = t;
                Ok(())
            } else if vertex_map[v] == t {
                Ok(())
            } else {
                Err(Error::GlueMismatch(format!("source vertex {v} has two images")))
            }
        };
        for (i, &(p, j)) in seg.iter().enumerate() {
            let hj = tgt_t.columns[j].height();
            for k in 0..hj {
                let e = src_c.cell(c, p as usize + k);
                if src_t.columns[c].cells[p as usize + k] != tgt_t.columns[j].cells[k] {
                    return Err(Error::NotNested(format!("column {c}: cell labels differ")));
                }
                cell_map[e] = tgt_c.cell(j, k);
                assign(src_c.vertex(c, p as usize + k), tgt_c.vertex(j, k))?;
            }
            if i + 1 == seg.len() {
                assign(src_c.vertex(c, col.height()), tgt_c.vertex(j, hj))?;
            }
        }
    }
    if cell_map.contains(&usize::MAX) || vertex_map.contains(&usize::MAX) {
        return Err(Error::NotNested("bonding map not total".into()));
    }
    Ok((cell_map, vertex_map))
}

/// Counts, for each target simplified edge, the passes of each path through its first cell.
fn path_matrix(tgt: &BranchedComplex, paths: &[Vec<usize>]) -> TransitionMatrix {
    let mut m = TransitionMatrix::zeros(tgt.chains.len(), paths.len());
    for (j, path) in paths.iter().enumerate() {
        for &e in path {
            let i = tgt.raw_chain[e];
            if tgt.chains[i][0] == e {
                m.data[i][j] += 1;
            }
        }
    }
    m
}

/// q31 = q21 ∘ q32 on every cell and vertex.
pub fn compose_check(q31: &BondingMap, q21: &BondingMap, q32: &BondingMap) -> Result<bool> {
    if q31.source != q32.source || q31.target != q21.target || q21.source != q32.target {
        return Err(Error::LevelMismatch);
    }
    if q31.cell_map.len() != q32.cell_map.len() || q31.vertex_map.len() != q32.vertex_map.len() {
        return Err(Error::LevelMismatch);
    }
    let cells = q32
        .cell_map
        .iter()
        .zip(&q31.cell_map)
        .all(|(&mid, &direct)| q21.cell_map.get(mid) == Some(&direct));
    let verts = q32
        .vertex_map
        .iter()
        .zip(&q31.vertex_map)
        .all(|(&mid, &direct)| q21.vertex_map.get(mid) == Some(&direct));
    Ok(cells && verts)
}

/// Direct limit of the transposed matrices over ℚ.
#[derive(Clone, Debug)]
pub struct H1Limit {
    pub rank: usize,
    /// Rank of the tail products M_k ⋯ M_n for k = 1..n (edges minus vertices plus one when
    /// vertex matrices are supplied).
    pub tail_ranks: Vec<usize>,
    /// Ranks of the tail products did not settle (reported, not an error).
    pub drift: bool,
    pub eventual: Option<TransitionMatrix>,
    /// Characteristic polynomial of the eventual map on its eventual range.
    pub charpoly: Option<Vec<BigInt>>,
}

fn tail_ranks(matrices: &[TransitionMatrix]) -> Vec<usize> {
    let n = matrices.len();
    let mut out = vec![0; n];
    let mut prod = to_rational(&matrices[n - 1]);
    out[n - 1] = rank(&prod);
    for k in (0..n - 1).rev() {
        prod = rmul(&to_rational(&matrices[k]), &prod);
        out[k] = rank(&prod);
    }
    out
}

fn settle(tail: Vec<usize>) -> (usize, Vec<usize>, bool) {
    let n = tail.len();
    let r = tail[n - 2];
    let drift = tail.iter().any(|&x| x != r);
    (r, tail, drift)
}

/// Rank of the direct limit of the transposes of edge matrices, for complexes whose vertex
/// cochains contribute a rank-one limit (circles, roses).
pub fn h1_limit(matrices: &[TransitionMatrix]) -> Result<H1Limit> {
    if matrices.len() < 2 {
        return Err(Error::InsufficientData("h1_limit needs at least two matrices".into()));
    }
    let (rank, tail_ranks, drift) = settle(tail_ranks(matrices));
    let last = &matrices[matrices.len() - 1];
    let (eventual, charpoly) = if last.is_square() {
        let c = eventual_restriction(last)?;
        (Some(last.clone()), integer_charpoly(&c))
    } else {
        (None, None)
    };
    Ok(H1Limit { rank, tail_ranks, drift, eventual, charpoly })
}

/// Rank of the direct limit of H¹ for connected graphs, from the exact sequence
/// 0 → H⁰ → C⁰ → C¹ → H¹ → 0 of limits.
pub fn h1_limit_cochains(edges: &[TransitionMatrix], vertices: &[TransitionMatrix]) -> Result<H1Limit> {
    if edges.len() < 2 || vertices.len() != edges.len() {
        return Err(Error::InsufficientData("h1_limit needs at least two levels of matrices".into()));
    }
    let te = tail_ranks(edges);
    let tv = tail_ranks(vertices);
    let tail: Vec<usize> = te.iter().zip(&tv).map(|(&e, &v)| (e + 1).saturating_sub(v)).collect();
    let (rank, tail_ranks, drift) = settle(tail);
    Ok(H1Limit { rank, tail_ranks, drift, eventual: None, charpoly: None })
}

fn poly_mul(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let mut out = vec![BigRational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = &out[i + j] + x * y;
        }
    }
    out
}

/// Exact quotient of polynomials (leading coefficient first), if the remainder vanishes.
fn poly_div(a: &[BigRational], b: &[BigRational]) -> Option<Vec<BigRational>> {
    if b.len() > a.len() {
        return None;
    }
    let mut rem = a.to_vec();
    let mut q = vec![BigRational::zero(); a.len() - b.len() + 1];
    for i in 0..q.len() {
        let f = &rem[i] / &b[0];
        for (j, y) in b.iter().enumerate() {
            rem[i + j] = &rem[i + j] - &f * y;
        }
        q[i] = f;
    }
    rem.iter().all(|x| x.is_zero()).then_some(q)
}

/// A self-map of one level's complex: the bonding matrices composed with an isomorphism from
/// the next level's complex that matches edge words under a power of the substitution.
#[derive(Clone, Debug)]
pub struct EventualStep {
    pub level: usize,
    /// Substitution power relating the edge words (cell-count ratio for odometers).
    pub power: usize,
    pub edges: TransitionMatrix,
    pub vertices: TransitionMatrix,
}

impl EventualStep {
    /// Characteristic polynomial of the step on the eventual range of H¹.
    pub fn h1_charpoly(&self) -> Result<Option<Vec<BigInt>>> {
        let pe = charpoly(&eventual_restriction(&self.edges)?);
        let pv = charpoly(&eventual_restriction(&self.vertices)?);
        let x_minus_one = [BigRational::one(), -BigRational::one()];
        Ok(poly_div(&poly_mul(&pe, &x_minus_one), &pv)
            .and_then(|q| q.into_iter().map(|x| x.is_integer().then(|| x.to_integer())).collect()))
    }
}

/// Letter words of the simplified edges (odometer cells read as letter 0).
fn edge_words(tower: &TowerLevel, complex: &BranchedComplex) -> Vec<Vec<u8>> {
    complex
        .chains
        .iter()
        .map(|ch| {
            ch.iter()
                .map(|&e| {
                    let (c, k) = complex.cell_position(e);
                    tower.columns[c].word.get(k).copied().unwrap_or(0)
                })
                .collect()
        })
        .collect()
}

/// Edge bijection src → tgt preserving endpoints (through a vertex bijection) such that each
/// source word is the image of its target word.
fn match_graphs(
    src: &crate::tower::Graph,
    src_words: &[Vec<u8>],
    tgt: &crate::tower::Graph,
    tgt_images: &[Vec<u8>],
) -> Option<(Vec<usize>, Vec<usize>)> {
    let n = src.edges.len();
    if n != tgt.edges.len() || src.vertex_count != tgt.vertex_count {
        return None;
    }
    let cands: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| tgt_images[j] == src_words[i]).collect()).collect();
    let mut emap = vec![usize::MAX; n];
    let mut used = vec![false; n];
    let mut vmap = vec![usize::MAX; src.vertex_count];
    let mut vused = vec![false; src.vertex_count];
    fn bind(vmap: &mut [usize], vused: &mut [bool], a: usize, b: usize, log: &mut Vec<usize>) -> bool {
        if vmap[a] == usize::MAX {
            if vused[b] {
                return false;
            }
            vmap[a] = b;
            vused[b] = true;
            log.push(a);
            true
        } else {
            vmap[a] == b
        }
    }
    #[allow(clippy::too_many_arguments)]
    fn go(
        i: usize,
        src: &crate::tower::Graph,
        tgt: &crate::tower::Graph,
        cands: &[Vec<usize>],
        emap: &mut [usize],
        used: &mut [bool],
        vmap: &mut [usize],
        vused: &mut [bool],
    ) -> bool {
        if i == emap.len() {
            return true;
        }
        for &j in &cands[i] {
            if used[j] {
                continue;
            }
            let mut log = Vec::new();
            let ok = bind(vmap, vused, src.edges[i].from, tgt.edges[j].from, &mut log)
                && bind(vmap, vused, src.edges[i].to, tgt.edges[j].to, &mut log);
            if ok {
                emap[i] = j;
                used[j] = true;
                if go(i + 1, src, tgt, cands, emap, used, vmap, vused) {
                    return true;
                }
                used[j] = false;
            }
            for a in log {
                vused[vmap[a]] = false;
                vmap[a] = usize::MAX;
            }
        }
        false
    }
    go(0, src, tgt, &cands, &mut emap, &mut used, &mut vmap, &mut vused).then_some((emap, vmap))
}

/// Largest substitution power tried when matching consecutive complexes.
pub const MAX_STEP_POWER: usize = 16;

/// The deepest level ℓ whose complex is matched by the complex of ℓ + 1, with its self-map.
pub fn eventual_step(sys: &InverseSystem) -> Result<Option<EventualStep>> {
    for l in (1..sys.depth()).rev() {
        let (src_t, src_c) = (&sys.towers[l], &sys.complexes[l]);
        let (tgt_t, tgt_c) = (&sys.towers[l - 1], &sys.complexes[l - 1]);
        let src_words = edge_words(src_t, src_c);
        let tgt_words = edge_words(tgt_t, tgt_c);
        let powers: Vec<(usize, Vec<Vec<u8>>)> = match sys.hierarchy.system().substitution() {
            Some(s) => (1..=MAX_STEP_POWER).map(|k| (k, tgt_words.iter().map(|w| s.apply_n(w, k)).collect())).collect(),
            None => {
                let (a, b) = (src_t.cell_count(), tgt_t.cell_count());
                if b == 0 || a % b != 0 {
                    continue;
                }
                vec![(a / b, tgt_words.iter().map(|w| vec![0; w.len() * (a / b)]).collect())]
            }
        };
        for (k, images) in powers {
            let Some((emap, vmap)) = match_graphs(&src_c.simplified, &src_words, &tgt_c.simplified, &images) else {
                continue;
            };
            let b = bonding(sys, l + 1, l)?;
            let mut edges = TransitionMatrix::zeros(b.matrix.rows, b.matrix.rows);
            for (i, &j) in emap.iter().enumerate() {
                for r in 0..b.matrix.rows {
                    edges.data[r][j] = b.matrix.data[r][i];
                }
            }
            let mut vertices = TransitionMatrix::zeros(b.vertex_matrix.rows, b.vertex_matrix.rows);
            for (i, &j) in vmap.iter().enumerate() {
                for r in 0..b.vertex_matrix.rows {
                    vertices.data[r][j] = b.vertex_matrix.data[r][i];
                }
            }
            return Ok(Some(EventualStep { level: l, power: k, edges, vertices }));
        }
    }
    Ok(None)
}

/// Outcome of the finite-depth inverse-limit checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadReport {
    pub depth: usize,
    pub pairs_tested: usize,
    pub injectivity_failures: usize,
    pub thread_count: usize,
    pub threads_checked: usize,
    pub exhaustive: bool,
    pub surjectivity_failures: usize,
    pub class_diameters: Vec<Dist>,
    pub delta_hats: Vec<Dist>,
    pub diameter_failures: usize,
}

impl ThreadReport {
    pub fn injectivity_ok(&self) -> bool {
        self.injectivity_failures == 0 && self.pairs_tested > 0
    }

    pub fn surjectivity_ok(&self) -> bool {
        self.surjectivity_failures == 0 && self.threads_checked > 0
    }

    pub fn diameters_ok(&self) -> bool {
        self.diameter_failures == 0
    }

    pub fn passed(&self) -> bool {
        self.injectivity_ok() && self.surjectivity_ok() && self.diameters_ok()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "depth": self.depth,
            "pairs_tested": self.pairs_tested,
            "injectivity_failures": self.injectivity_failures,
            "thread_count": self.thread_count,
            "threads_checked": self.threads_checked,
            "exhaustive": self.exhaustive,
            "surjectivity_failures": self.surjectivity_failures,
            "class_diameters": self.class_diameters.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
            "delta_hats": self.delta_hats.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
            "diameter_failures": self.diameter_failures,
        })
    }
}

/// Threads through more cells than this are sampled rather than enumerated.
pub const EXHAUSTIVE_THREADS: usize = 10_000;

/// (a) points of w₀'s leaf in distinct level-L cells have distinct level-L images, and their
/// images at lower levels are the bonding images; (b) every thread of cells is realised by a
/// point of the leaf; (c) class diameters are nonincreasing and below δ̂_ℓ.
pub fn thread_check(sys: &InverseSystem, n_samples: usize, seed: u64) -> Result<ThreadReport> {
    let depth = sys.depth();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bonds: Vec<BondingMap> = (1..depth).map(|l| bonding(sys, depth, l)).collect::<Result<_>>()?;
    let top_c = &sys.complexes[depth - 1];
    let top_l = sys.level(depth);

    // (a) injectivity.
    let span = 4 * top_l.constants.max_return.max(8);
    let segs: Vec<Vec<(i64, usize)>> =
        (1..=depth).map(|l| sys.orbit_segments(l, -span, span)).collect::<Result<_>>()?;
    let mut pairs_tested = 0;
    let mut injectivity_failures = 0;
    let mut attempts = 0;
    while pairs_tested < n_samples && attempts < 100 * n_samples.max(1) {
        attempts += 1;
        let a = rng.gen_range(-span..span);
        let b = rng.gen_range(-span..span);
        let ca = locate(top_c, &segs[depth - 1], a);
        let cb = locate(top_c, &segs[depth - 1], b);
        let class = |m: i64| {
            let s = &segs[depth - 1];
            let i = s.partition_point(|x| x.0 <= m) - 1;
            (s[i].1, m - s[i].0)
        };
        if class(a) == class(b) {
            continue;
        }
        pairs_tested += 1;
        let mut ok = ca != cb;
        for l in 1..depth {
            for (m, c) in [(a, ca), (b, cb)] {
                if locate(&sys.complexes[l - 1], &segs[l - 1], m) != bonds[l - 1].cell_map[c] {
                    ok = false;
                }
            }
        }
        if !ok {
            injectivity_failures += 1;
        }
    }

    // (b) surjectivity.
    let thread_count = top_c.raw.edges.len();
    let exhaustive = thread_count <= EXHAUSTIVE_THREADS;
    let chosen: Vec<usize> = if exhaustive {
        (0..thread_count).collect()
    } else {
        let mut v: Vec<usize> = (0..EXHAUSTIVE_THREADS).map(|_| rng.gen_range(0..thread_count)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut by_column: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &e in &chosen {
        by_column.entry(top_c.cell_position(e).0).or_default().push(e);
    }
    let mut surjectivity_failures = 0;
    let top_t = &sys.towers[depth - 1];
    for (c, edges) in by_column {
        let m = nearest_visit(&top_l.sys, &top_t.columns[c].windows)?[0];
        let h = top_t.columns[c].height() as i64;
        let local: Vec<Vec<(i64, usize)>> =
            (1..=depth).map(|l| sys.orbit_segments(l, m, m + h)).collect::<Result<_>>()?;
        for e in edges {
            let k = top_c.cell_position(e).1 as i64;
            let mut ok = locate(top_c, &local[depth - 1], m + k) == e;
            for l in 1..depth {
                if locate(&sys.complexes[l - 1], &local[l - 1], m + k) != bonds[l - 1].cell_map[e] {
                    ok = false;
                }
            }
            if !ok {
                surjectivity_failures += 1;
            }
        }
    }

    // (c) class diameters.
    let class_diameters: Vec<Dist> =
        (0..depth).map(|i| class_diameters(&sys.towers[i], &sys.complexes[i]).max()).collect();
    let delta_hats: Vec<Dist> = sys.hierarchy.levels.iter().map(|l| l.constants.delta_hat).collect();
    let mut diameter_failures = 0;
    for i in 0..depth {
        if class_diameters[i] > delta_hats[i] || (i > 0 && class_diameters[i] > class_diameters[i - 1]) {
            diameter_failures += 1;
        }
    }
    Ok(ThreadReport {
        depth,
        pairs_tested,
        injectivity_failures,
        thread_count,
        threads_checked: chosen.len(),
        exhaustive,
        surjectivity_failures,
        class_diameters,
        delta_hats,
        diameter_failures,
    })
}

/// Cellular map between square complexes of a ℤ²-odometer, induced by the coset inclusion
/// H_{k'} ⊆ H_k.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SquareBonding {
    pub source: usize,
    pub target: usize,
    pub vertex_map: Vec<usize>,
    pub edge_map: Vec<usize>,
    pub face_map: Vec<usize>,
}

pub fn square_bonding(sys: &SystemRef, src: &SquareComplex, tgt: &SquareComplex) -> Result<SquareBonding> {
    let o = sys.odometer().filter(|o| o.dim == 2).ok_or(Error::SystemMismatch)?;
    if tgt.level > src.level {
        return Err(Error::LevelMismatch);
    }
    let index: BTreeMap<Shift, usize> = tgt.vertices.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let vertex_map: Vec<usize> = src
        .vertices
        .iter()
        .map(|v| index.get(&o.reduce(*v, tgt.level)).copied().ok_or_else(|| Error::NotNested("vertex".into())))
        .collect::<Result<_>>()?;
    // Edges are stored as 2·vertex + direction and faces by their lower-left vertex.
    let edge_map = (0..src.edges.len()).map(|e| 2 * vertex_map[e / 2] + e % 2).collect();
    let face_map = vertex_map.clone();
    Ok(SquareBonding { source: src.level, target: tgt.level, vertex_map, edge_map, face_map })
}

pub fn square_compose_check(q31: &SquareBonding, q21: &SquareBonding, q32: &SquareBonding) -> Result<bool> {
    if q31.source != q32.source || q31.target != q21.target || q21.source != q32.target {
        return Err(Error::LevelMismatch);
    }
    let agree = |a: &[usize], b: &[usize], c: &[usize]| a.iter().zip(c).all(|(&mid, &direct)| b.get(mid) == Some(&direct));
    Ok(agree(&q32.vertex_map, &q21.vertex_map, &q31.vertex_map)
        && agree(&q32.edge_map, &q21.edge_map, &q31.edge_map)
        && agree(&q32.face_map, &q21.face_map, &q31.face_map))
}
