//! Reeb columns over code blocks, the gluing relation between them and the quotient
//! branched one-complexes (square complexes for ℤ²-odometers).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rustc_hash::FxHashMap;
use serde_json::{json, Value};

use crate::clopen::Cylinder;
use crate::coding::{shifted, window_union_diameter, LevelData};
use crate::systems::{lo, Dist, SystemRef};
use crate::{Error, Result, Shift, Q};

/// Symbol used for the unit cells of a one-dimensional odometer.
pub const ODOMETER_SYMBOL: &str = "1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileCell {
    pub symbol: String,
    pub length: Q,
}

/// A column: a base block of V_ℓ carried along its first-return journey.
#[derive(Clone, Debug)]
pub struct ReebColumn {
    /// Flat index of the code block containing the base.
    pub base: usize,
    /// Base windows at the code depth.
    pub windows: Vec<Cylinder>,
    /// Base windows at the fine depth.
    pub fine: Vec<Cylinder>,
    /// First-return word (empty for odometers).
    pub word: Vec<u8>,
    pub cells: Vec<TileCell>,
    /// Columns met by the return image of the base.
    pub exits: Vec<usize>,
}

impl ReebColumn {
    pub fn height(&self) -> usize {
        self.cells.len()
    }

    pub fn length(&self) -> Q {
        self.cells.iter().fold(Q::from_integer(0), |a, c| a + c.length)
    }
}

#[derive(Debug)]
pub struct TowerLevel {
    pub level: usize,
    pub sys: SystemRef,
    /// Depth of the column-base windows.
    pub depth: usize,
    pub columns: Vec<ReebColumn>,
    col_dict: FxHashMap<Cylinder, usize>,
}

fn cell_of(sys: &SystemRef, symbol: u8) -> TileCell {
    let s = sys.substitution().unwrap();
    TileCell { symbol: s.symbol(symbol).to_string(), length: s.lengths[symbol as usize] }
}

/// Columns over the code blocks of a level, split by first-return word.
pub fn build_tower(level: &LevelData) -> Result<TowerLevel> {
    let sys = &level.sys;
    if sys.dim() != 1 {
        return Err(Error::InsufficientData("towers are one-dimensional; use square_complex".into()));
    }
    let d_c = level.depths.code;
    let horizon = level.constants.max_return;
    let mut groups: BTreeMap<(usize, usize, Vec<u8>), Vec<Cylinder>> = BTreeMap::new();
    for (b, cb) in level.code_blocks.iter().enumerate() {
        for u in &cb.windows {
            let vis = level.visits(u, 1, horizon).ok_or(Error::DepthInsufficient { needed: d_c + 1 })?;
            let h = *vis.first().ok_or(Error::NonconstantHeight { block: b })? as usize;
            let word = match u {
                Cylinder::Word(w) => {
                    let z = (-lo(d_c)) as usize;
                    w[z..z + h].to_vec()
                }
                _ => Vec::new(),
            };
            groups.entry((b, h, word)).or_default().push(u.clone());
        }
    }
    let mut columns = Vec::new();
    let mut col_dict: FxHashMap<Cylinder, usize> = FxHashMap::default();
    for ((b, h, word), windows) in groups {
        let cells = if word.is_empty() {
            vec![TileCell { symbol: ODOMETER_SYMBOL.into(), length: Q::from_integer(1) }; h]
        } else {
            word.iter().map(|&c| cell_of(sys, c)).collect()
        };
        for u in &windows {
            col_dict.insert(u.clone(), columns.len());
        }
        columns.push(ReebColumn { base: b, windows, fine: Vec::new(), word, cells, exits: Vec::new() });
    }
    for fb in &level.fine_blocks {
        for f in &fb.windows {
            let c = col_dict[&sys.truncate(f, d_c)];
            columns[c].fine.push(f.clone());
        }
    }
    for c in 0..columns.len() {
        let h = columns[c].height() as i64;
        let mut exits = BTreeSet::new();
        for f in &columns[c].fine {
            let x = shifted(sys, f, [h, 0], d_c).ok_or(Error::DepthInsufficient { needed: f.depth() + 1 })?;
            let j = *col_dict.get(&x).ok_or_else(|| Error::GlueMismatch("return lands outside the tower".into()))?;
            exits.insert(j);
        }
        columns[c].exits = exits.into_iter().collect();
    }
    Ok(TowerLevel { level: level.level, sys: sys.clone(), depth: d_c, columns, col_dict })
}

impl TowerLevel {
    /// Column whose base contains the cylinder (of depth at least the base depth).
    pub fn column_of(&self, c: &Cylinder) -> Option<usize> {
        self.col_dict.get(&self.sys.truncate(c, self.depth)).copied()
    }

    pub fn heights(&self) -> BTreeSet<usize> {
        self.columns.iter().map(|c| c.height()).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.columns.iter().map(|c| c.height()).sum()
    }

    /// Walks w₀'s leaf from the level basepoint through consecutive columns over at least
    /// `horizon` cells; checks that every landing is a column base and that cell symbols
    /// match the leaf. Returns the number of columns used.
    pub fn covering(&self, level: &LevelData, horizon: i64) -> Result<usize> {
        let sys = &self.sys;
        let start = level.basepoint[0];
        let mut m = start;
        let mut used = 0;
        while m < start + horizon {
            let c = self
                .column_of(&sys.point_cylinder([m, 0], self.depth))
                .ok_or_else(|| Error::GlueMismatch(format!("no column at offset {m}")))?;
            let col = &self.columns[c];
            if let Some(s) = sys.substitution() {
                let text = s.base_slice(m, m + col.height() as i64);
                if text.as_ref() != col.word.as_slice() {
                    return Err(Error::GlueMismatch(format!("cell symbols differ at offset {m}")));
                }
            }
            m += col.height() as i64;
            used += 1;
        }
        Ok(used)
    }

    pub fn to_json(&self) -> Value {
        let cols: Vec<Value> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                json!({
                    "column": i,
                    "base": c.base,
                    "windows": c.windows.len(),
                    "height": c.height(),
                    "length": c.length().to_string(),
                    "word": c.cells.iter().map(|x| x.symbol.as_str()).collect::<Vec<_>>().join(""),
                    "exits": c.exits,
                })
            })
            .collect();
        json!({ "level": self.level, "base_depth": self.depth, "columns": cols })
    }
}

/// Union–find over the boundary slots of the columns.
#[derive(Clone, Debug)]
pub struct EquivalenceStore {
    parent: Vec<usize>,
}

impl EquivalenceStore {
    pub fn new(n: usize) -> Self {
        EquivalenceStore { parent: (0..n).collect() }
    }

    pub fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn find_mut(&mut self, x: usize) -> usize {
        let r = self.find(x);
        let mut y = x;
        while self.parent[y] != r {
            let next = self.parent[y];
            self.parent[y] = r;
            y = next;
        }
        r
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find_mut(a), self.find_mut(b));
        if ra != rb {
            let (lo_r, hi_r) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi_r] = lo_r;
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Classes in order of their smallest member.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 0..self.parent.len() {
            by_root.entry(self.find(x)).or_default().push(x);
        }
        let mut out: Vec<Vec<usize>> = by_root.into_values().collect();
        out.sort_by_key(|c| c[0]);
        out
    }
}

/// Chain closure of generating pairs.
pub fn equivalence_closure(n: usize, generators: &[(usize, usize)]) -> EquivalenceStore {
    let mut st = EquivalenceStore::new(n);
    for &(a, b) in generators {
        st.union(a, b);
    }
    st
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphEdge {
    pub from: usize,
    pub to: usize,
    pub symbol: String,
    pub length: Q,
}

/// Directed multigraph with labelled, weighted edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub vertex_count: usize,
    pub edges: Vec<GraphEdge>,
}

impl Graph {
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edges.len() as i64
    }

    fn reach(&self, start: usize, forward: bool, backward: bool) -> Vec<bool> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for e in &self.edges {
            if forward {
                adj[e.from].push(e.to);
            }
            if backward {
                adj[e.to].push(e.from);
            }
        }
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        self.vertex_count > 0 && self.reach(0, true, true).iter().all(|&x| x)
    }

    /// Every edge lies on a closed walk (the graph is strongly connected).
    pub fn is_strongly_connected(&self) -> bool {
        self.vertex_count > 0
            && self.reach(0, true, false).iter().all(|&x| x)
            && self.reach(0, false, true).iter().all(|&x| x)
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph {name} {{");
        for v in 0..self.vertex_count {
            let _ = writeln!(out, "  v{v};");
        }
        for e in &self.edges {
            let _ = writeln!(out, "  v{} -> v{} [label=\"{}:{}\"];", e.from, e.to, abbreviate(&e.symbol), e.length);
        }
        out.push_str("}\n");
        out
    }
}

fn abbreviate(s: &str) -> String {
    let n = s.chars().count();
    if n <= 24 {
        return s.to_string();
    }
    let head: String = s.chars().take(8).collect();
    let tail: String = s.chars().skip(n - 8).collect();
    format!("{head}…{tail}({n})")
}

/// Merges the in = out = 1 vertices of a graph. Returns the simplified graph, the raw edges of
/// each simplified edge, and the simplified index of each kept raw vertex.
pub fn simplify(g: &Graph) -> (Graph, Vec<Vec<usize>>, Vec<Option<usize>>) {
    simplify_marked(g, &[])
}

/// As [`simplify`], but vertices flagged in `marked` are always kept.
pub fn simplify_marked(g: &Graph, marked: &[bool]) -> (Graph, Vec<Vec<usize>>, Vec<Option<usize>>) {
    let n = g.vertex_count;
    let mut indeg = vec![0usize; n];
    let mut out_edges = vec![Vec::new(); n];
    for (i, e) in g.edges.iter().enumerate() {
        indeg[e.to] += 1;
        out_edges[e.from].push(i);
    }
    let mut kept: Vec<bool> = (0..n)
        .map(|v| !(indeg[v] == 1 && out_edges[v].len() == 1) || marked.get(v).copied().unwrap_or(false))
        .collect();
    let mut used = vec![false; g.edges.len()];
    let mut chains: Vec<Vec<usize>> = Vec::new();
    let walk = |start: usize, kept: &Vec<bool>, used: &mut Vec<bool>, chains: &mut Vec<Vec<usize>>| {
        for &e0 in &out_edges[start] {
            if used[e0] {
                continue;
            }
            let mut chain = vec![e0];
            used[e0] = true;
            let mut v = g.edges[e0].to;
            while !kept[v] {
                let e = out_edges[v][0];
                used[e] = true;
                chain.push(e);
                v = g.edges[e].to;
            }
            chains.push(chain);
        }
    };
    for v in 0..n {
        if kept[v] {
            walk(v, &kept, &mut used, &mut chains);
        }
    }
    while let Some(e) = (0..g.edges.len()).find(|&e| !used[e]) {
        let v = g.edges[e].from;
        kept[v] = true;
        walk(v, &kept, &mut used, &mut chains);
    }
    let mut index = vec![None; n];
    let mut count = 0;
    for v in 0..n {
        if kept[v] {
            index[v] = Some(count);
            count += 1;
        }
    }
    chains.sort_by_key(|c| c[0]);
    let edges = chains
        .iter()
        .map(|c| GraphEdge {
            from: index[g.edges[c[0]].from].unwrap(),
            to: index[g.edges[*c.last().unwrap()].to].unwrap(),
            symbol: c.iter().map(|&e| g.edges[e].symbol.as_str()).collect(),
            length: c.iter().fold(Q::from_integer(0), |a, &e| a + g.edges[e].length),
        })
        .collect();
    (Graph { vertex_count: count, edges }, chains, index)
}

/// Quotient of a tower: raw graph (one edge per tile cell), its simplification and the
/// quotient map data.
#[derive(Clone, Debug)]
pub struct BranchedComplex {
    pub level: usize,
    pub raw: Graph,
    pub simplified: Graph,
    /// Raw edges of each simplified edge, in order.
    pub chains: Vec<Vec<usize>>,
    /// Simplified edge containing each raw edge.
    pub raw_chain: Vec<usize>,
    /// Raw edge of cell (c, k) is `cell_offset[c] + k`.
    pub cell_offset: Vec<usize>,
    /// Raw vertex of boundary slot (c, k) is `slot_vertex[cell_offset[c] + c + k]`.
    pub slot_vertex: Vec<usize>,
    /// Simplified index of kept raw vertices.
    pub kept: Vec<Option<usize>>,
    pub store: EquivalenceStore,
}

impl BranchedComplex {
    /// Recomputes the simplified graph keeping the flagged raw vertices.
    pub fn resimplify(&mut self, marked: &[bool]) {
        let (simplified, chains, kept) = simplify_marked(&self.raw, marked);
        let mut raw_chain = vec![0; self.raw.edges.len()];
        for (i, ch) in chains.iter().enumerate() {
            for &e in ch {
                raw_chain[e] = i;
            }
        }
        self.simplified = simplified;
        self.chains = chains;
        self.raw_chain = raw_chain;
        self.kept = kept;
    }

    pub fn cell(&self, column: usize, k: usize) -> usize {
        self.cell_offset[column] + k
    }

    pub fn slot(&self, column: usize, k: usize) -> usize {
        self.cell_offset[column] + column + k
    }

    pub fn vertex(&self, column: usize, k: usize) -> usize {
        self.slot_vertex[self.slot(column, k)]
    }

    /// Column and position of a raw edge.
    pub fn cell_position(&self, edge: usize) -> (usize, usize) {
        let c = self.cell_offset.partition_point(|&o| o <= edge) - 1;
        (c, edge - self.cell_offset[c])
    }

    pub fn to_json(&self) -> Value {
        let edges = |g: &Graph| -> Vec<Value> {
            g.edges
                .iter()
                .map(|e| json!({"from": e.from, "to": e.to, "label": abbreviate(&e.symbol), "length": e.length.to_string()}))
                .collect()
        };
        json!({
            "level": self.level,
            "raw": {"vertices": self.raw.vertex_count, "edges": self.raw.edges.len(), "euler": self.raw.euler_characteristic()},
            "simplified": {"vertices": self.simplified.vertex_count, "edges": edges(&self.simplified)},
        })
    }
}

/// Collapses each column's transversal fibres and glues tops to the bottoms they return to.
pub fn collapse(tower: &TowerLevel) -> Result<BranchedComplex> {
    let mut cell_offset = Vec::with_capacity(tower.columns.len());
    let mut total = 0usize;
    for c in &tower.columns {
        cell_offset.push(total);
        total += c.height();
    }
    let slots = total + tower.columns.len();
    let slot = |c: usize, k: usize| cell_offset[c] + c + k;
    let mut gens = Vec::new();
    for (c, col) in tower.columns.iter().enumerate() {
        for &j in &col.exits {
            gens.push((slot(c, col.height()), slot(j, 0)));
        }
    }
    let store = equivalence_closure(slots, &gens);
    let mut vid: FxHashMap<usize, usize> = FxHashMap::default();
    let mut slot_vertex = Vec::with_capacity(slots);
    for s in 0..slots {
        let r = store.find(s);
        let n = vid.len();
        slot_vertex.push(*vid.entry(r).or_insert(n));
    }
    let mut edges = Vec::with_capacity(total);
    for (c, col) in tower.columns.iter().enumerate() {
        for (k, cell) in col.cells.iter().enumerate() {
            edges.push(GraphEdge {
                from: slot_vertex[slot(c, k)],
                to: slot_vertex[slot(c, k + 1)],
                symbol: cell.symbol.clone(),
                length: cell.length,
            });
        }
    }
    // Quotient soundness: interior slots stay singletons, glued slots are column ends.
    let glued: rustc_hash::FxHashSet<usize> = gens.iter().flat_map(|&(a, b)| [a, b]).collect();
    for (c, col) in tower.columns.iter().enumerate() {
        for k in 1..col.height() {
            let s = slot(c, k);
            if store.find(s) != s || glued.contains(&s) {
                return Err(Error::GlueMismatch(format!("interior slot ({c},{k}) glued")));
            }
        }
    }
    let raw = Graph { vertex_count: vid.len(), edges };
    let mut complex = BranchedComplex {
        level: tower.level,
        raw,
        simplified: Graph { vertex_count: 0, edges: Vec::new() },
        chains: Vec::new(),
        raw_chain: Vec::new(),
        cell_offset,
        slot_vertex,
        kept: Vec::new(),
        store,
    };
    complex.resimplify(&[]);
    Ok(complex)
}

/// Transversal diameters of the quotient classes, read in the column charts: a vertex class is
/// the union of the bases of the columns starting there, a cell class is its column's base.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDiameters {
    pub vertex_max: Dist,
    pub cell_max: Dist,
}

impl ClassDiameters {
    pub fn max(&self) -> Dist {
        self.vertex_max.max(self.cell_max)
    }
}

pub fn class_diameters(tower: &TowerLevel, complex: &BranchedComplex) -> ClassDiameters {
    let sys = &tower.sys;
    let mut by_vertex: BTreeMap<usize, Vec<Cylinder>> = BTreeMap::new();
    for (c, col) in tower.columns.iter().enumerate() {
        by_vertex.entry(complex.vertex(c, 0)).or_default().extend(col.windows.iter().cloned());
    }
    let vertex_max =
        by_vertex.values().map(|ws| window_union_diameter(sys, ws)).max().unwrap_or(Dist::ZERO);
    let cell_max = tower
        .columns
        .iter()
        .map(|col| window_union_diameter(sys, &col.windows))
        .max()
        .unwrap_or(Dist::ZERO);
    ClassDiameters { vertex_max, cell_max }
}

/// The torus ℤ²/H_k subdivided into unit squares.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SquareComplex {
    pub level: usize,
    pub vertices: Vec<Shift>,
    /// (from, to, direction 0 = horizontal, 1 = vertical).
    pub edges: Vec<(usize, usize, u8)>,
    /// Boundary edges of each square: bottom, right, top, left.
    pub faces: Vec<[usize; 4]>,
}

pub fn square_complex(sys: &SystemRef, k: usize) -> Result<SquareComplex> {
    let o = sys.odometer().filter(|o| o.dim == 2).ok_or(Error::SystemMismatch)?;
    let l = o.lattice(k);
    let mut vertices = Vec::new();
    for y in 0..l.c {
        for x in 0..l.a {
            vertices.push(o.reduce([x, y], k));
        }
    }
    vertices.sort();
    let index: BTreeMap<Shift, usize> = vertices.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let at = |v: Shift| index[&o.reduce(v, k)];
    let mut edges = Vec::new();
    for v in &vertices {
        edges.push((at(*v), at([v[0] + 1, v[1]]), 0));
        edges.push((at(*v), at([v[0], v[1] + 1]), 1));
    }
    let faces = vertices
        .iter()
        .map(|v| {
            let i = at(*v);
            let right = at([v[0] + 1, v[1]]);
            let up = at([v[0], v[1] + 1]);
            [2 * i, 2 * right + 1, 2 * up, 2 * i + 1]
        })
        .collect();
    Ok(SquareComplex { level: k, vertices, edges, faces })
}

impl SquareComplex {
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    pub fn to_json(&self) -> Value {
        json!({
            "level": self.level,
            "vertices": self.vertices,
            "edges": self.edges.iter().map(|(a, b, d)| json!([a, b, d])).collect::<Vec<_>>(),
            "faces": self.faces,
        })
    }
}
