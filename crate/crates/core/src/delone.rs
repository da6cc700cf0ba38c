//! Delone nets of return vectors on a leaf and their statistics.

use std::collections::BTreeSet;

use memchr::memmem;
use num_traits::Signed;

use crate::clopen::{ClopenSet, Cylinder};
use crate::holonomy::{exponents_within, Direction};
use crate::systems::{lo, CantorPoint, SystemRef};
use crate::{Error, Result, Shift, Q};

/// A net point: translation exponent and leafwise position.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct NetPoint {
    pub position: [Q; 2],
    pub exponent: Shift,
}

#[derive(Clone, Debug)]
pub struct DeloneNet {
    pub center: CantorPoint,
    pub target: ClopenSet,
    pub radius: Q,
    pub points: Vec<NetPoint>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetStats {
    pub lambda1: Q,
    pub covering_radius: Q,
    pub alpha_w: u64,
    pub e_w: Q,
}

fn zero() -> Q {
    Q::from_integer(0)
}

/// Return vectors v with σ^v(w) ∈ W inside the window (|path| ≤ R; ℓ∞ box for d = 2).
pub fn net(w: &CantorPoint, target: &ClopenSet, r: Q) -> Result<DeloneNet> {
    if w.sys.id != target.system().id {
        return Err(Error::SystemMismatch);
    }
    let sys = &w.sys;
    let mut points = Vec::new();
    if sys.dim() == 2 {
        let b = r.to_integer();
        for i in -b..=b {
            for j in -b..=b {
                let p = sys.point([w.offset[0] + i, w.offset[1] + j]);
                if target.contains_point(&p) {
                    points.push(NetPoint {
                        position: [Q::from_integer(i), Q::from_integer(j)],
                        exponent: [i, j],
                    });
                }
            }
        }
    } else {
        for (n, l) in exponents_within(w, r, Direction::Both) {
            let p = sys.point([w.offset[0] + n[0], 0]);
            if target.contains_point(&p) {
                let pos = if n[0] < 0 { -l } else { l };
                points.push(NetPoint { position: [pos, zero()], exponent: n });
            }
        }
    }
    points.sort();
    Ok(DeloneNet { center: w.clone(), target: target.clone(), radius: r, points })
}

impl DeloneNet {
    pub fn restrict(&self, r: Q) -> DeloneNet {
        let pts = self
            .points
            .iter()
            .filter(|p| {
                if self.center.sys.dim() == 2 {
                    p.position[0].abs() <= r && p.position[1].abs() <= r
                } else {
                    p.position[0].abs() <= r
                }
            })
            .cloned()
            .collect();
        DeloneNet { center: self.center.clone(), target: self.target.clone(), radius: r, points: pts }
    }

    pub fn positions_1d(&self) -> Vec<Q> {
        self.points.iter().map(|p| p.position[0]).collect()
    }

    /// One point per line: position and the depth-4 transversal label.
    pub fn dump(&self) -> String {
        let sys = &self.center.sys;
        let mut s = String::new();
        for p in &self.points {
            let x = sys.point([self.center.offset[0] + p.exponent[0], self.center.offset[1] + p.exponent[1]]);
            let label = sys.render(&x.cylinder(4));
            if sys.dim() == 2 {
                s.push_str(&format!("({}, {}) {label}\n", p.position[0], p.position[1]));
            } else {
                s.push_str(&format!("{} {label}\n", p.position[0]));
            }
        }
        s
    }
}

fn linf(a: &[Q; 2], b: &[Q; 2]) -> Q {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

/// Least N with W ∪ σW ∪ … ∪ σ^N W = 𝔛, by clopen image search.
pub fn alpha_bfs(target: &ClopenSet, scan: u64) -> Result<u64> {
    let sys = target.system().clone();
    let whole = ClopenSet::whole(&sys);
    let mut cover = target.clone();
    let mut images = vec![target.clone()];
    for n in 0..=scan {
        if n > 0 {
            let shifts: Vec<Shift> = if sys.dim() == 2 {
                (0..=n as i64).map(|i| [i, n as i64 - i]).collect()
            } else {
                vec![[n as i64, 0]]
            };
            for s in shifts {
                let im = target.image(s);
                cover = cover.union(&im)?;
                images.push(im);
            }
        }
        if cover == whole {
            return Ok(n);
        }
    }
    Err(Error::NotMinimal { bound: scan as usize })
}

/// [`alpha_bfs`] for a union of cosets of H_depth in a ℤ²-odometer, computed on residues.
pub fn alpha_cosets(target: &ClopenSet, depth: usize, scan: u64) -> Result<u64> {
    let sys = target.system().clone();
    let o = sys.odometer().ok_or(Error::SystemMismatch)?;
    let reps: Vec<Shift> = target
        .refine_to(depth)
        .into_iter()
        .map(|c| match c {
            crate::clopen::Cylinder::Coset { rep, .. } => Ok(rep),
            _ => Err(Error::SystemMismatch),
        })
        .collect::<Result<_>>()?;
    let index = o.lattice(depth).index() as usize;
    let mut covered: std::collections::BTreeSet<Shift> = reps.iter().map(|&r| o.reduce(r, depth)).collect();
    for n in 0..=scan {
        if n > 0 {
            let n = n as i64;
            let shifts: Vec<Shift> = if o.dim == 2 { (0..=n).map(|i| [i, n - i]).collect() } else { vec![[n, 0]] };
            for s in shifts {
                for r in &reps {
                    covered.insert(o.reduce([r[0] + s[0], r[1] + s[1]], depth));
                }
            }
        }
        if covered.len() == index {
            return Ok(n);
        }
    }
    Err(Error::NotMinimal { bound: scan as usize })
}

/// λ₁, covering radius, α_W and e_W of a net.
pub fn stats(net: &DeloneNet, alpha_scan: u64) -> Result<NetStats> {
    if net.points.len() < 2 {
        return Err(Error::SingletonNet);
    }
    let sys = &net.center.sys;
    let (lambda1, covering_radius) = if sys.dim() == 2 {
        let pts: Vec<[Q; 2]> = net.points.iter().map(|p| p.position).collect();
        let mut l1: Option<Q> = None;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d = linf(&pts[i], &pts[j]);
                l1 = Some(l1.map_or(d, |x: Q| x.min(d)));
            }
        }
        (l1.unwrap(), covering_radius_2d(&pts, net.radius))
    } else {
        let xs = net.positions_1d();
        let gaps: Vec<Q> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        (gaps.iter().copied().min().unwrap(), gaps.iter().copied().max().unwrap() / 2)
    };
    let alpha_w = alpha_bfs(&net.target, alpha_scan)?;
    let e_w = Q::from_integer(2 * alpha_w as i64 + 1) * sys.max_tile();
    Ok(NetStats { lambda1, covering_radius, alpha_w, e_w })
}

/// ℓ∞ covering radius over the half-integer grid of the inner half-window (exact for integer nets).
fn covering_radius_2d(pts: &[[Q; 2]], r: Q) -> Q {
    let half = Q::new(1, 2);
    let inner = (r / 2).floor();
    let steps = (inner * 2).to_integer();
    let mut best = zero();
    for i in -steps..=steps {
        for j in -steps..=steps {
            let p = [Q::from_integer(i) * half, Q::from_integer(j) * half];
            let d = pts.iter().map(|y| linf(&p, y)).min().unwrap();
            best = best.max(d);
        }
    }
    best
}

/// λ₁ per level on the leaf through w within radius R.
pub fn lambda1_profile(levels: &[ClopenSet], w: &CantorPoint, r: Q) -> Result<Vec<Q>> {
    levels
        .iter()
        .map(|v| {
            let n = net(w, v, r)?;
            if n.points.len() < 2 {
                return Err(Error::SingletonNet);
            }
            let xs = n.positions_1d();
            Ok(xs.windows(2).map(|p| p[1] - p[0]).min().unwrap())
        })
        .collect()
}

/// Minimum and maximum gap between consecutive returns to a set, over the whole language.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GapScan {
    pub min_gap: i64,
    pub max_gap: i64,
    /// Shortest leafwise length between consecutive returns.
    pub min_path: Q,
}

/// Exact return-gap extremes for a one-dimensional system.
pub fn return_gaps(set: &ClopenSet) -> Result<GapScan> {
    let sys = set.system();
    if set.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(o) = sys.odometer() {
        if o.dim != 1 {
            return Err(Error::InsufficientData("gap scan is one-dimensional".into()));
        }
        let k = set.max_depth();
        let n = o.lattice(k).index();
        let mut res: Vec<i64> =
            set.refine_to(k).iter().map(|c| coset_rep(c)[0]).collect::<BTreeSet<_>>().into_iter().collect();
        res.push(res[0] + n);
        let gaps: Vec<i64> = res.windows(2).map(|w| w[1] - w[0]).collect();
        let min_gap = *gaps.iter().min().unwrap();
        return Ok(GapScan { min_gap, max_gap: *gaps.iter().max().unwrap(), min_path: Q::from_integer(min_gap) });
    }
    let words: Vec<(Vec<u8>, i64)> = set
        .cylinders()
        .iter()
        .map(|c| {
            let w = c.word().unwrap();
            (w.to_vec(), lo(w.len()))
        })
        .collect();
    Ok(gap_scan_words(sys, &words))
}

fn coset_rep(c: &Cylinder) -> Shift {
    match c {
        Cylinder::Coset { rep, .. } => *rep,
        _ => unreachable!(),
    }
}

/// Visits are occurrences of a word placed with its first letter at coordinate `offset`.
pub fn gap_scan_words(sys: &SystemRef, words: &[(Vec<u8>, i64)]) -> GapScan {
    let s = sys.substitution().expect("substitution");
    let span = words.iter().map(|(w, _)| w.len()).max().unwrap_or(1);
    let mut guess = 2 * span + 2;
    loop {
        let pieces = s.pieces(guess);
        let minlen = *s.image_lengths(s.level_for_len(guess.max(2))).iter().min().unwrap() as usize;
        let mut min_gap = i64::MAX;
        let mut max_gap = 0i64;
        let mut min_path: Option<Q> = None;
        let mut longest_free = 0usize;
        for piece in pieces.iter() {
            let mut pos: Vec<i64> = Vec::new();
            for (w, off) in words {
                let f = memmem::Finder::new(w);
                let mut at = 0;
                while let Some(i) = f.find(&piece[at..]) {
                    pos.push((at + i) as i64 - off);
                    at += i + 1;
                }
            }
            pos.sort_unstable();
            pos.dedup();
            let prefix: Vec<Q> = if s.unit_tiles() {
                Vec::new()
            } else {
                std::iter::once(Q::from_integer(0))
                    .chain(piece.iter().scan(Q::from_integer(0), |acc, &c| {
                        *acc += s.lengths[c as usize];
                        Some(*acc)
                    }))
                    .collect()
            };
            for g in pos.windows(2) {
                min_gap = min_gap.min(g[1] - g[0]);
                max_gap = max_gap.max(g[1] - g[0]);
                let path = if prefix.is_empty() || g[0] < 0 || g[1] as usize > piece.len() {
                    Q::from_integer(g[1] - g[0])
                } else {
                    prefix[g[1] as usize] - prefix[g[0] as usize]
                };
                if g[0] >= 0 && g[1] as usize <= piece.len() {
                    min_path = Some(min_path.map_or(path, |m: Q| m.min(path)));
                }
            }
            let first = pos.first().map(|&p| p as usize).unwrap_or(piece.len());
            let last = pos.last().map(|&p| piece.len() - p.max(0) as usize).unwrap_or(piece.len());
            longest_free = longest_free.max(first).max(last);
        }
        let need = max_gap.max(longest_free as i64) as usize + span + 1;
        if max_gap > 0 && need <= minlen {
            let min_path = min_path.unwrap_or_else(|| Q::from_integer(min_gap) * sys.min_tile());
            return GapScan { min_gap, max_gap, min_path };
        }
        guess = need.max(2 * guess);
    }
}
