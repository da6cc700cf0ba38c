//! Exact Voronoi tessellations of a leaf window (intervals in d = 1, polygons in d = 2).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;

use crate::delone::{DeloneNet, NetStats};
use crate::{Error, Result, Q};

pub type R = BigRational;
pub type Pt = [R; 2];

pub fn big(q: Q) -> R {
    R::new(BigInt::from(*q.numer()), BigInt::from(*q.denom()))
}

fn int(n: i64) -> R {
    R::from_integer(BigInt::from(n))
}

/// Sites in a window: `[lo, hi]` in d = 1 (second coordinates zero), a box in d = 2.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteNet {
    pub dim: usize,
    pub sites: Vec<Pt>,
    pub lo: Pt,
    pub hi: Pt,
}

impl SiteNet {
    pub fn new(dim: usize, mut sites: Vec<Pt>, lo: Pt, hi: Pt) -> Result<SiteNet> {
        sites.sort();
        sites.dedup();
        if sites.len() < 2 {
            return Err(Error::SingletonNet);
        }
        Ok(SiteNet { dim, sites, lo, hi })
    }

    pub fn from_delone(net: &DeloneNet) -> Result<SiteNet> {
        let dim = net.center.sys.dim();
        let r = big(net.radius);
        let sites = net.points.iter().map(|p| [big(p.position[0]), big(p.position[1])]).collect();
        let z = R::zero();
        if dim == 1 {
            Self::new(1, sites, [-r.clone(), z.clone()], [r, z])
        } else {
            Self::new(2, sites, [-r.clone(), -r.clone()], [r.clone(), r])
        }
    }

    /// Sites on a 1D line given as rationals, window [lo, hi].
    pub fn line(sites: &[Q], lo: Q, hi: Q) -> Result<SiteNet> {
        let z = R::zero();
        Self::new(
            1,
            sites.iter().map(|s| [big(*s), z.clone()]).collect(),
            [big(lo), z.clone()],
            [big(hi), z],
        )
    }

    /// Integer lattice points of [−n, n]^d as sites, window [−n−½, n+½]^d.
    pub fn lattice(dim: usize, n: i64) -> SiteNet {
        let h = int(n) + R::new(BigInt::one(), BigInt::from(2));
        let z = R::zero();
        if dim == 1 {
            let sites = (-n..=n).map(|i| [int(i), z.clone()]).collect();
            Self::new(1, sites, [-h.clone(), z.clone()], [h, z]).unwrap()
        } else {
            let mut sites = Vec::new();
            for i in -n..=n {
                for j in -n..=n {
                    sites.push([int(i), int(j)]);
                }
            }
            Self::new(2, sites, [-h.clone(), -h.clone()], [h.clone(), h]).unwrap()
        }
    }

    /// Random net with at most `max_sites` sites on the grid (1/4)ℤ^d inside [0, 10]^d.
    pub fn random(rng: &mut impl Rng, dim: usize, max_sites: usize) -> SiteNet {
        let q4 = |n: i64| R::new(BigInt::from(n), BigInt::from(4));
        loop {
            let k = rng.gen_range(2..=max_sites);
            let sites: Vec<Pt> = (0..k)
                .map(|_| {
                    let x = q4(rng.gen_range(0..=40));
                    let y = if dim == 2 { q4(rng.gen_range(0..=40)) } else { R::zero() };
                    [x, y]
                })
                .collect();
            let hi = if dim == 2 { [int(10), int(10)] } else { [int(10), R::zero()] };
            if let Ok(n) = Self::new(dim, sites, [R::zero(), R::zero()], hi) {
                return n;
            }
        }
    }

    pub fn index_of(&self, y: &Pt) -> Option<usize> {
        self.sites.iter().position(|s| s == y)
    }

    fn window_box(&self) -> Vec<Pt> {
        let (a, b) = (&self.lo, &self.hi);
        vec![
            [a[0].clone(), a[1].clone()],
            [b[0].clone(), a[1].clone()],
            [b[0].clone(), b[1].clone()],
            [a[0].clone(), b[1].clone()],
        ]
    }

    fn strictly_inside_window(&self, p: &Pt) -> bool {
        (0..self.dim).all(|i| p[i] > self.lo[i] && p[i] < self.hi[i])
    }

    /// Sites at minimal Euclidean distance from p.
    pub fn nearest(&self, p: &Pt) -> Vec<usize> {
        let d: Vec<R> = self.sites.iter().map(|s| dist2(p, s)).collect();
        let m = d.iter().min().unwrap().clone();
        (0..d.len()).filter(|&i| d[i] == m).collect()
    }
}

fn dist2(a: &Pt, b: &Pt) -> R {
    let dx = &a[0] - &b[0];
    let dy = &a[1] - &b[1];
    &dx * &dx + &dy * &dy
}

/// Half-plane {p : n·p ≤ c}.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfPlane {
    pub n: Pt,
    pub c: R,
}

impl HalfPlane {
    /// Points at least as close to y as to z.
    pub fn bisector(y: &Pt, z: &Pt) -> HalfPlane {
        let n = [int(2) * (&z[0] - &y[0]), int(2) * (&z[1] - &y[1])];
        let c = (&z[0] * &z[0] + &z[1] * &z[1]) - (&y[0] * &y[0] + &y[1] * &y[1]);
        HalfPlane { n, c }
    }

    pub fn value(&self, p: &Pt) -> R {
        &self.n[0] * &p[0] + &self.n[1] * &p[1] - &self.c
    }

    pub fn contains(&self, p: &Pt) -> bool {
        !self.value(p).is_positive()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Interval(R, R),
    /// Counterclockwise vertices starting at the lexicographically smallest one.
    Polygon(Vec<Pt>),
}

impl Geometry {
    pub fn vertices(&self) -> Vec<Pt> {
        match self {
            Geometry::Interval(a, b) => vec![[a.clone(), R::zero()], [b.clone(), R::zero()]],
            Geometry::Polygon(v) => v.clone(),
        }
    }

    pub fn contains(&self, p: &Pt) -> bool {
        match self {
            Geometry::Interval(a, b) => &p[0] >= a && &p[0] <= b,
            Geometry::Polygon(v) => {
                let n = v.len();
                (0..n).all(|i| !cross(&v[i], &v[(i + 1) % n], p).is_negative())
            }
        }
    }

    /// Length (d = 1) or area (d = 2).
    pub fn measure(&self) -> R {
        match self {
            Geometry::Interval(a, b) => b - a,
            Geometry::Polygon(v) => {
                let n = v.len();
                let mut s = R::zero();
                for i in 0..n {
                    let (p, q) = (&v[i], &v[(i + 1) % n]);
                    s += &p[0] * &q[1] - &q[0] * &p[1];
                }
                s / int(2)
            }
        }
    }

    /// Squared Euclidean diameter.
    pub fn diameter2(&self) -> R {
        let v = self.vertices();
        let mut best = R::zero();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                best = best.max(dist2(&v[i], &v[j]));
            }
        }
        best
    }

    pub fn render(&self) -> String {
        match self {
            Geometry::Interval(a, b) => format!("[{a}, {b}]"),
            Geometry::Polygon(v) => v
                .iter()
                .map(|p| format!("({}, {})", p[0], p[1]))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

fn cross(a: &Pt, b: &Pt, p: &Pt) -> R {
    (&b[0] - &a[0]) * (&p[1] - &a[1]) - (&b[1] - &a[1]) * (&p[0] - &a[0])
}

/// Clips a convex counterclockwise polygon to a half-plane.
pub fn clip(poly: &[Pt], h: &HalfPlane) -> Vec<Pt> {
    let n = poly.len();
    let mut out: Vec<Pt> = Vec::new();
    for i in 0..n {
        let prev = &poly[(i + n - 1) % n];
        let cur = &poly[i];
        let fp = h.value(prev);
        let fc = h.value(cur);
        let cin = !fc.is_positive();
        let pin = !fp.is_positive();
        let cut = || {
            let t = &fp / (&fp - &fc);
            [&prev[0] + &t * (&cur[0] - &prev[0]), &prev[1] + &t * (&cur[1] - &prev[1])]
        };
        if cin {
            if !pin {
                out.push(cut());
            }
            out.push(cur.clone());
        } else if pin {
            out.push(cut());
        }
    }
    canonical(out)
}

/// Removes repeated and collinear vertices and rotates to the smallest vertex.
pub fn canonical(mut v: Vec<Pt>) -> Vec<Pt> {
    v.dedup();
    while v.len() > 1 && v.first() == v.last() {
        v.pop();
    }
    loop {
        let n = v.len();
        if n < 3 {
            break;
        }
        let mut removed = false;
        for i in 0..n {
            let a = &v[(i + n - 1) % n];
            let b = &v[i];
            let c = &v[(i + 1) % n];
            if cross(a, c, b).is_zero() {
                v.remove(i);
                removed = true;
                break;
            }
        }
        if !removed {
            break;
        }
    }
    if let Some(k) = (0..v.len()).min_by(|&i, &j| v[i].cmp(&v[j])) {
        v.rotate_left(k);
    }
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoronoiCell {
    pub site: usize,
    pub geometry: Geometry,
    /// The cell is not clipped by the window.
    pub unclipped: bool,
    /// The whole star lies inside the window; lemma checks apply.
    pub interior: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StarNeighborhood {
    pub site: usize,
    pub vertex_set: Vec<usize>,
    pub cells: Vec<Geometry>,
}

fn cell_geometry(net: &SiteNet, i: usize) -> (Geometry, bool) {
    let y = &net.sites[i];
    if net.dim == 1 {
        let a = if i == 0 {
            net.lo[0].clone()
        } else {
            (&net.sites[i - 1][0] + &y[0]) / int(2)
        };
        let b = if i + 1 == net.sites.len() {
            net.hi[0].clone()
        } else {
            (&net.sites[i + 1][0] + &y[0]) / int(2)
        };
        let a2 = a.clone().max(net.lo[0].clone());
        let b2 = b.clone().min(net.hi[0].clone());
        let unclipped = i > 0 && i + 1 < net.sites.len() && a2 > net.lo[0] && b2 < net.hi[0];
        return (Geometry::Interval(a2, b2), unclipped);
    }
    let mut poly = canonical(net.window_box());
    for (j, z) in net.sites.iter().enumerate() {
        if j != i {
            let h = HalfPlane::bisector(y, z);
            poly = clip(&poly, &h);
        }
    }
    let unclipped = poly.iter().all(|p| net.strictly_inside_window(p));
    (Geometry::Polygon(poly), unclipped)
}

fn touching(net: &SiteNet, cells: &[Geometry], i: usize, j: usize) -> bool {
    if i == j {
        return true;
    }
    if net.dim == 1 {
        return i.abs_diff(j) == 1;
    }
    let h = HalfPlane::bisector(&net.sites[i], &net.sites[j]);
    cells[i].vertices().iter().any(|v| h.value(v).is_zero())
}

/// The Voronoi tessellation of the window.
pub fn cells(net: &SiteNet) -> Result<Vec<VoronoiCell>> {
    if net.sites.len() < 2 {
        return Err(Error::SingletonNet);
    }
    let geo: Vec<(Geometry, bool)> = (0..net.sites.len()).map(|i| cell_geometry(net, i)).collect();
    let shapes: Vec<Geometry> = geo.iter().map(|g| g.0.clone()).collect();
    let mut out = Vec::new();
    for (i, (g, unclipped)) in geo.iter().enumerate() {
        let interior = *unclipped
            && (0..net.sites.len())
                .filter(|&j| touching(net, &shapes, i, j))
                .all(|j| geo[j].1);
        out.push(VoronoiCell { site: i, geometry: g.clone(), unclipped: *unclipped, interior });
    }
    Ok(out)
}

/// Vertex set and star of site `y`.
pub fn star(net: &SiteNet, y: usize) -> Result<StarNeighborhood> {
    let cs = cells(net)?;
    star_from(net, &cs, y)
}

fn star_from(net: &SiteNet, cs: &[VoronoiCell], y: usize) -> Result<StarNeighborhood> {
    if !cs[y].unclipped {
        return Err(Error::BoundarySite);
    }
    let shapes: Vec<Geometry> = cs.iter().map(|c| c.geometry.clone()).collect();
    let vs: Vec<usize> = (0..net.sites.len()).filter(|&j| touching(net, &shapes, y, j)).collect();
    let cells = vs.iter().map(|&j| shapes[j].clone()).collect();
    Ok(StarNeighborhood { site: y, vertex_set: vs, cells })
}

/// The cell rebuilt as star ∩ ⋂_{z ∈ vertex set} H(y, z).
pub fn halfspace_form(net: &SiteNet, y: usize) -> Result<Geometry> {
    let cs = cells(net)?;
    let st = star_from(net, &cs, y)?;
    let yp = &net.sites[y];
    let hs: Vec<HalfPlane> = st
        .vertex_set
        .iter()
        .filter(|&&z| z != y)
        .map(|&z| HalfPlane::bisector(yp, &net.sites[z]))
        .collect();
    if net.dim == 1 {
        let mut a = st.cells.iter().map(|g| g.vertices()[0][0].clone()).min().unwrap();
        let mut b = st.cells.iter().map(|g| g.vertices()[1][0].clone()).max().unwrap();
        for h in &hs {
            let bound = &h.c / &h.n[0];
            if h.n[0].is_positive() {
                b = b.min(bound);
            } else {
                a = a.max(bound);
            }
        }
        return Ok(Geometry::Interval(a, b));
    }
    let mut pieces = Vec::new();
    for g in &st.cells {
        let mut p = g.vertices();
        for h in &hs {
            p = clip(&p, h);
            if p.is_empty() {
                break;
            }
        }
        if p.len() >= 3 {
            pieces.push(p);
        }
    }
    let pts: Vec<Pt> = pieces.into_iter().flatten().collect();
    Ok(Geometry::Polygon(convex_hull(pts)))
}

/// Counterclockwise convex hull, canonical start.
pub fn convex_hull(mut pts: Vec<Pt>) -> Vec<Pt> {
    pts.sort();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Pt> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && !cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p).is_positive() {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Pt> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && !cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p).is_positive() {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    canonical(lower)
}

/// Per-cell margins of the structural lemmas; `failures` lists violated checks.
#[derive(Clone, Debug, Default)]
pub struct BoundsReport {
    pub checked: usize,
    pub failures: Vec<String>,
    /// (site, diameter², (2·e_W)²) per checked cell.
    pub diameter_margins: Vec<(usize, R, R)>,
}

impl BoundsReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Lemma checks on interior cells: diameter ≤ 2e_W, B(y, λ₁/2) ⊆ cell, star ⊆ B(y, 3e_W),
/// cell ⊆ int(star).
pub fn check_cell_bounds(net: &SiteNet, stats: &NetStats) -> Result<BoundsReport> {
    let cs = cells(net)?;
    let e = big(stats.e_w);
    let half_l = big(stats.lambda1) / int(2);
    let mut rep = BoundsReport::default();
    for c in cs.iter().filter(|c| c.interior) {
        rep.checked += 1;
        let y = &net.sites[c.site];
        let d2 = c.geometry.diameter2();
        let bound = int(4) * &e * &e;
        if d2 > bound {
            rep.failures.push(format!("site {}: diameter² {} > {}", c.site, d2, bound));
        }
        rep.diameter_margins.push((c.site, d2, bound));
        if !ball_inside(&c.geometry, y, &half_l) {
            rep.failures.push(format!("site {}: ball of radius λ₁/2 not inside cell", c.site));
        }
        let st = star_from(net, &cs, c.site)?;
        let r3 = int(9) * &e * &e;
        for g in &st.cells {
            if g.vertices().iter().any(|v| dist2(v, y) > r3) {
                rep.failures.push(format!("site {}: star leaves B(y, 3e_W)", c.site));
                break;
            }
        }
        let mut probes = c.geometry.vertices();
        let n = probes.len();
        for i in 0..n {
            let (a, b) = (&probes[i], &probes[(i + 1) % n]);
            let m = [(&a[0] + &b[0]) / int(2), (&a[1] + &b[1]) / int(2)];
            probes.push(m);
        }
        for p in &probes {
            let inside = net.strictly_inside_window(p)
                && net.nearest(p).iter().all(|k| st.vertex_set.contains(k));
            if !inside {
                rep.failures.push(format!("site {}: cell touches the star boundary", c.site));
                break;
            }
        }
    }
    Ok(rep)
}

fn ball_inside(g: &Geometry, y: &Pt, r: &R) -> bool {
    match g {
        Geometry::Interval(a, b) => &(&y[0] - r) >= a && &(&y[0] + r) <= b,
        Geometry::Polygon(v) => {
            let n = v.len();
            (0..n).all(|i| {
                let (p, q) = (&v[i], &v[(i + 1) % n]);
                let ex = &q[0] - &p[0];
                let ey = &q[1] - &p[1];
                let cr = cross(p, q, y);
                let len2 = &ex * &ex + &ey * &ey;
                !cr.is_negative() && &cr * &cr >= r * r * len2
            })
        }
    }
}

/// Brute-force oracle: on the grid of step 1/k over the window, membership in each closed cell
/// must agree with nearest-site classification. Returns the number of mismatches.
pub fn oracle_mismatches(net: &SiteNet, k: i64) -> Result<usize> {
    let cs = cells(net)?;
    let overflow = || Error::InsufficientData("oracle grid exceeds 128-bit range".into());
    // Common denominator of sites, window corners and grid.
    let mut den = BigInt::from(k);
    for p in net.sites.iter().chain([&net.lo, &net.hi]) {
        for c in p {
            den = num_integer::Integer::lcm(&den, c.denom());
        }
    }
    let scale = |x: &R| -> Option<i128> { i128::try_from(&(x * R::from_integer(den.clone())).to_integer()).ok() };
    let sites: Vec<[i128; 2]> = net
        .sites
        .iter()
        .map(|p| Some([scale(&p[0])?, scale(&p[1])?]))
        .collect::<Option<_>>()
        .ok_or_else(overflow)?;
    // Each cell as integer inequalities a·X + b·Y + c·D ≥ 0 on scaled points (X, Y) / D.
    let forms: Vec<Vec<[i128; 3]>> = cs
        .iter()
        .map(|c| edge_forms(&c.geometry))
        .collect::<Option<_>>()
        .ok_or_else(overflow)?;
    let d: i128 = i128::try_from(&den).map_err(|_| overflow())?;
    let step = d / k as i128;
    let lo = [scale(&net.lo[0]).ok_or_else(overflow)?, scale(&net.lo[1]).ok_or_else(overflow)?];
    let hi = [scale(&net.hi[0]).ok_or_else(overflow)?, scale(&net.hi[1]).ok_or_else(overflow)?];
    let mut bad = 0;
    let mut x = lo[0];
    while x <= hi[0] {
        let mut y = lo[1];
        while y <= hi[1] {
            let dist: Vec<i128> = sites
                .iter()
                .map(|s| (x - s[0]) * (x - s[0]) + (y - s[1]) * (y - s[1]))
                .collect();
            let m = *dist.iter().min().unwrap();
            for (ci, f) in forms.iter().enumerate() {
                let inside = f.iter().all(|e| e[0] * x + e[1] * y + e[2] * d >= 0);
                if inside != (dist[cs[ci].site] == m) {
                    bad += 1;
                }
            }
            if net.dim == 1 {
                break;
            }
            y += step;
        }
        x += step;
    }
    Ok(bad)
}

fn edge_forms(g: &Geometry) -> Option<Vec<[i128; 3]>> {
    let lines: Vec<[R; 3]> = match g {
        Geometry::Interval(a, b) => vec![
            [R::one(), R::zero(), -a.clone()],
            [-R::one(), R::zero(), b.clone()],
        ],
        Geometry::Polygon(v) => {
            let n = v.len();
            (0..n)
                .map(|i| {
                    let (a, b) = (&v[i], &v[(i + 1) % n]);
                    let al = -(&b[1] - &a[1]);
                    let be = &b[0] - &a[0];
                    let ga = -(&al * &a[0]) - &be * &a[1];
                    [al, be, ga]
                })
                .collect()
        }
    };
    lines
        .iter()
        .map(|l| {
            let mut m = BigInt::one();
            for c in l {
                m = num_integer::Integer::lcm(&m, c.denom());
            }
            let conv = |c: &R| i128::try_from(&(c * R::from_integer(m.clone())).to_integer()).ok();
            Some([conv(&l[0])?, conv(&l[1])?, conv(&l[2])?])
        })
        .collect()
}

/// Σ measures of cells minus the window measure (zero for a tessellation).
pub fn tessellation_defect(net: &SiteNet) -> Result<R> {
    let cs = cells(net)?;
    let total: R = cs.iter().map(|c| c.geometry.measure()).fold(R::zero(), |a, b| a + b);
    let window = if net.dim == 1 {
        &net.hi[0] - &net.lo[0]
    } else {
        (&net.hi[0] - &net.lo[0]) * (&net.hi[1] - &net.lo[1])
    };
    Ok(total - window)
}
