use std::sync::Mutex;

use crate::{Error, Result, Shift};

/// Integer 2×2 matrix, rows first; columns are lattice generators.
pub type Mat2 = [[i64; 2]; 2];

/// Hermite normal form of a full-rank sublattice of ℤ²: basis (a, 0), (b, c).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Lattice {
    pub a: i64,
    pub b: i64,
    pub c: i64,
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - (a.div_euclid(b)) * y)
    }
}

impl Lattice {
    pub fn from_basis(m: &Mat2) -> Result<Lattice> {
        let (p, q) = (m[0][0], m[1][0]);
        let (r, s) = (m[0][1], m[1][1]);
        let det = p as i128 * s as i128 - q as i128 * r as i128;
        if det == 0 {
            return Err(Error::MalformedSpec("singular subgroup basis".into()));
        }
        let (g, x, y) = ext_gcd(q, s);
        let (mut ux, mut g) = (x * p + y * r, g);
        if g < 0 {
            g = -g;
            ux = -ux;
        }
        if g == 0 {
            return Err(Error::MalformedSpec("degenerate subgroup basis".into()));
        }
        let a = (det.unsigned_abs() / g as u128) as i64;
        Ok(Lattice { a, b: ux.rem_euclid(a), c: g })
    }

    pub fn index(&self) -> i64 {
        self.a * self.c
    }

    /// Canonical coset representative of v.
    pub fn reduce(&self, v: Shift) -> Shift {
        let m = v[1].div_euclid(self.c);
        let x = v[0] - m * self.b;
        let y = v[1] - m * self.c;
        [x.rem_euclid(self.a), y]
    }

    pub fn contains(&self, v: Shift) -> bool {
        self.reduce(v) == [0, 0]
    }

    pub fn is_sublattice_of(&self, other: &Lattice) -> bool {
        other.contains([self.a, 0]) && other.contains([self.b, self.c])
    }
}

fn mat_mul(x: &Mat2, y: &Mat2) -> Mat2 {
    let mut z = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            z[i][j] = x[i][0].checked_mul(y[0][j]).and_then(|u| {
                x[i][1].checked_mul(y[1][j]).and_then(|v| u.checked_add(v))
            }).expect("odometer chain overflow");
        }
    }
    z
}

#[derive(Debug)]
pub struct Odometer {
    pub dim: usize,
    pub given: Vec<Mat2>,
    pub step: Mat2,
    levels: Mutex<Vec<(Mat2, Lattice)>>,
}

impl Odometer {
    pub fn new((dim, given): (usize, Vec<Mat2>)) -> Result<Odometer> {
        if given.is_empty() {
            return Err(Error::MalformedSpec("odometer chain needs at least one subgroup".into()));
        }
        let id: Mat2 = [[1, 0], [0, 1]];
        let mut prev_m = id;
        let mut prev = Lattice::from_basis(&id)?;
        let mut levels = vec![(id, prev)];
        for m in &given {
            let l = Lattice::from_basis(m)?;
            if !l.is_sublattice_of(&prev) || l.index() <= prev.index() {
                return Err(Error::MalformedSpec("subgroup chain must be strictly descending".into()));
            }
            levels.push((*m, l));
            prev_m = *m;
            prev = l;
        }
        let before = if given.len() >= 2 { given[given.len() - 2] } else { id };
        let step = integral_quotient(&before, &prev_m).ok_or_else(|| {
            Error::MalformedSpec("last chain step is not an integral matrix".into())
        })?;
        Ok(Odometer { dim, given, step, levels: Mutex::new(levels) })
    }

    pub fn lattice(&self, k: usize) -> Lattice {
        let mut lv = self.levels.lock().unwrap();
        while lv.len() <= k {
            let (m, _) = *lv.last().unwrap();
            let nm = mat_mul(&m, &self.step);
            let l = Lattice::from_basis(&nm).expect("chain extension");
            lv.push((nm, l));
        }
        lv[k].1
    }

    pub fn reduce(&self, v: Shift, k: usize) -> Shift {
        self.lattice(k).reduce(v)
    }

    /// Coset representatives at level k+1 inside the level-k coset of `rep`.
    pub fn children(&self, rep: Shift, k: usize) -> Vec<Shift> {
        let l = self.lattice(k);
        let m = self.lattice(k + 1);
        let ni = m.a / l.a;
        let nj = m.c / l.c;
        let mut out = Vec::with_capacity((ni * nj) as usize);
        for j in 0..nj {
            for i in 0..ni {
                let v = [rep[0] + i * l.a + j * l.b, rep[1] + j * l.c];
                out.push(m.reduce(v));
            }
        }
        out.sort();
        out
    }

    /// Index [H_k : H_{k+1}].
    pub fn step_index(&self, k: usize) -> i64 {
        self.lattice(k + 1).index() / self.lattice(k).index()
    }
}

/// B⁻¹C when integral.
fn integral_quotient(b: &Mat2, c: &Mat2) -> Option<Mat2> {
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let adj = [[b[1][1], -b[0][1]], [-b[1][0], b[0][0]]];
    let p = mat_mul(&adj, c);
    let mut out = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            if p[i][j] % det != 0 {
                return None;
            }
            out[i][j] = p[i][j] / det;
        }
    }
    Some(out)
}
