use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::{Arc, Mutex};

use bytes::Bytes;
use memchr::memmem;

use super::{hi, lo, ValidationReport};
use crate::{Error, Result, Q};

/// Periodic seed: ρ^power(right) begins with `right`, ρ^power(left) ends with `left`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seed {
    pub power: usize,
    pub left: u8,
    pub right: u8,
}

/// The basepoint w₀ on the coordinates [−half, half).
#[derive(Debug)]
pub struct BaseWindow {
    pub half: usize,
    pub data: Bytes,
}

#[derive(Debug)]
pub struct Substitution {
    pub alphabet: Vec<String>,
    pub images: Vec<Vec<u8>>,
    pub lengths: Vec<Q>,
    pub legal2: Vec<[u8; 2]>,
    pub seed: Seed,
    texts: Mutex<BTreeMap<u32, Arc<Vec<Bytes>>>>,
    base: Mutex<Arc<BaseWindow>>,
}

impl Substitution {
    pub fn new(alphabet: Vec<String>, images: Vec<Vec<u8>>, lengths: Vec<Q>) -> Result<Self> {
        let n = alphabet.len();
        if n == 0 {
            return Err(Error::MalformedSpec("empty alphabet".into()));
        }
        if images.len() != n || lengths.len() != n {
            return Err(Error::MalformedSpec("every symbol needs an image and a length".into()));
        }
        if images.iter().any(|w| w.is_empty() || w.iter().any(|&c| c as usize >= n)) {
            return Err(Error::MalformedSpec("images must be nonempty words over the alphabet".into()));
        }
        if lengths.iter().any(|l| *l <= Q::from_integer(0)) {
            return Err(Error::MalformedSpec("tile lengths must be positive".into()));
        }
        let legal2 = closure_two_words(&images);
        let mut s = Substitution {
            alphabet,
            images,
            lengths,
            legal2,
            seed: Seed { power: 1, left: 0, right: 0 },
            texts: Mutex::new(BTreeMap::new()),
            base: Mutex::new(Arc::new(BaseWindow { half: 0, data: Bytes::new() })),
        };
        if s.primitive_power().is_some() {
            s.seed = s.find_seed().ok_or(Error::NoSeed)?;
        }
        Ok(s)
    }

    pub fn symbol(&self, c: u8) -> &str {
        &self.alphabet[c as usize]
    }

    pub fn unit_tiles(&self) -> bool {
        self.lengths.iter().all(|l| *l == Q::from_integer(1))
    }

    pub fn apply(&self, w: &[u8]) -> Vec<u8> {
        w.iter().flat_map(|&c| self.images[c as usize].iter().copied()).collect()
    }

    pub fn apply_n(&self, w: &[u8], k: usize) -> Vec<u8> {
        let mut cur = w.to_vec();
        for _ in 0..k {
            cur = self.apply(&cur);
        }
        cur
    }

    /// Counts M[a][b] = occurrences of b in ρ(a).
    pub fn matrix(&self) -> Vec<Vec<u64>> {
        let n = self.alphabet.len();
        let mut m = vec![vec![0u64; n]; n];
        for (a, img) in self.images.iter().enumerate() {
            for &b in img {
                m[a][b as usize] += 1;
            }
        }
        m
    }

    /// Least k ≤ |A|² with M^k strictly positive.
    pub fn primitive_power(&self) -> Option<usize> {
        let n = self.alphabet.len();
        let base: Vec<Vec<bool>> =
            self.matrix().iter().map(|r| r.iter().map(|&x| x > 0).collect()).collect();
        let mut cur = base.clone();
        for k in 1..=n * n {
            if cur.iter().all(|r| r.iter().all(|&x| x)) {
                return Some(k);
            }
            let mut next = vec![vec![false; n]; n];
            for i in 0..n {
                for j in 0..n {
                    next[i][j] = (0..n).any(|t| cur[i][t] && base[t][j]);
                }
            }
            cur = next;
        }
        None
    }

    fn find_seed(&self) -> Option<Seed> {
        let n = self.alphabet.len();
        let legal: HashSet<[u8; 2]> = self.legal2.iter().copied().collect();
        for p in 1..=60usize {
            let mut cands = Vec::new();
            for x in 0..n as u8 {
                for y in 0..n as u8 {
                    if !legal.contains(&[x, y]) {
                        continue;
                    }
                    let fy = self.first_after(y, p);
                    let lx = self.last_after(x, p);
                    if fy == y && lx == x {
                        cands.push(Seed { power: p, left: x, right: y });
                    }
                }
            }
            if let Some(s) = cands.into_iter().next() {
                return Some(s);
            }
        }
        None
    }

    fn first_after(&self, c: u8, p: usize) -> u8 {
        (0..p).fold(c, |c, _| self.images[c as usize][0])
    }

    fn last_after(&self, c: u8, p: usize) -> u8 {
        (0..p).fold(c, |c, _| *self.images[c as usize].last().unwrap())
    }

    /// Lengths |ρ^k(c)| for every symbol, saturating.
    pub fn image_lengths(&self, k: usize) -> Vec<u64> {
        let m = self.matrix();
        let n = m.len();
        let mut len = vec![1u64; n];
        for _ in 0..k {
            len = (0..n)
                .map(|a| (0..n).fold(0u64, |s, b| s.saturating_add(m[a][b].saturating_mul(len[b]))))
                .collect();
        }
        len
    }

    /// Smallest k ≥ 1 with min_c |ρ^k(c)| ≥ n.
    pub fn level_for_len(&self, n: usize) -> usize {
        let mut k = 1;
        while *self.image_lengths(k).iter().min().unwrap() < n as u64 {
            k += 1;
        }
        k
    }

    /// Pieces ρ^k(uv) for legal uv; every legal word of length ≤ n is a factor of one piece.
    pub fn pieces(&self, n: usize) -> Arc<Vec<Bytes>> {
        let k = self.level_for_len(n.max(2)) as u32;
        if let Some((_, t)) = self.texts.lock().unwrap().range(k..).next() {
            return t.clone();
        }
        self.pieces_at(k as usize)
    }

    /// The pieces ρ^k(uv), in the order of `legal2`.
    pub fn pieces_at(&self, k: usize) -> Arc<Vec<Bytes>> {
        if let Some(t) = self.texts.lock().unwrap().get(&(k as u32)) {
            return t.clone();
        }
        let images: Vec<Vec<u8>> =
            (0..self.alphabet.len() as u8).map(|c| self.apply_n(&[c], k)).collect();
        let pieces: Vec<Bytes> = self
            .legal2
            .iter()
            .map(|[u, v]| {
                let mut p = images[*u as usize].clone();
                p.extend_from_slice(&images[*v as usize]);
                Bytes::from(p)
            })
            .collect();
        let t = Arc::new(pieces);
        self.texts.lock().unwrap().insert(k as u32, t.clone());
        t
    }

    /// Centred windows recognising the level-`level` cut points ρ^level(𝔛): the smallest depth
    /// at which the cut status of the origin is a function of the window, and the windows
    /// whose origin is a cut.
    pub fn cut_windows(&self, level: usize) -> (usize, Vec<Bytes>) {
        let status = |d: usize| -> Option<Vec<Bytes>> {
            let k = self.level_for_len(d.max(2)).max(level + 1);
            let pieces = self.pieces_at(k);
            let img = self.image_lengths(level);
            let mut seen: HashMap<Bytes, bool> = HashMap::new();
            for (piece, [u, v]) in pieces.iter().zip(&self.legal2) {
                let top = self.apply_n(&[*u, *v], k - level);
                let mut cut = vec![false; piece.len() + 1];
                let mut at = 0usize;
                for &c in &top {
                    cut[at] = true;
                    at += img[c as usize] as usize;
                }
                let (l, h) = (-lo(d) as usize, hi(d) as usize);
                for p in l..=piece.len().saturating_sub(h) {
                    let w = piece.slice(p - l..p + h);
                    match seen.get(&w) {
                        Some(&b) if b != cut[p] => return None,
                        Some(_) => {}
                        None => {
                            seen.insert(w, cut[p]);
                        }
                    }
                }
            }
            let mut out: Vec<Bytes> = seen.into_iter().filter(|(_, b)| *b).map(|(w, _)| w).collect();
            out.sort();
            Some(out)
        };
        let mut hi_d = 1usize;
        while status(hi_d).is_none() {
            hi_d *= 2;
        }
        let mut lo_d = hi_d / 2;
        while lo_d + 1 < hi_d {
            let mid = (lo_d + hi_d) / 2;
            if status(mid).is_some() {
                hi_d = mid;
            } else {
                lo_d = mid;
            }
        }
        (hi_d, status(hi_d).unwrap())
    }

    /// Distinct legal words of length `len` carrying `word` at index `at`, sorted.
    pub fn windows(&self, word: &[u8], at: usize, len: usize, limit: usize) -> Vec<Bytes> {
        assert!(at + word.len() <= len);
        let pieces = self.pieces(len);
        let mut seen: HashSet<Bytes> = HashSet::new();
        'outer: for piece in pieces.iter() {
            if word.is_empty() {
                for p in 0..=piece.len().saturating_sub(len) {
                    if piece.len() < len {
                        break;
                    }
                    seen.insert(piece.slice(p..p + len));
                    if seen.len() >= limit {
                        break 'outer;
                    }
                }
                continue;
            }
            let finder = memmem::Finder::new(word);
            let mut pos = 0;
            while let Some(i) = finder.find(&piece[pos..]) {
                let occ = pos + i;
                pos = occ + 1;
                if occ < at || occ - at + len > piece.len() {
                    continue;
                }
                let s = occ - at;
                seen.insert(piece.slice(s..s + len));
                if seen.len() >= limit {
                    break 'outer;
                }
            }
        }
        let mut out: Vec<Bytes> = seen.into_iter().collect();
        out.sort();
        out
    }

    pub fn is_legal(&self, word: &[u8]) -> bool {
        word.is_empty() || !self.windows(word, 0, word.len(), 1).is_empty()
    }

    /// All legal words of length n.
    pub fn language(&self, n: usize) -> BTreeSet<Vec<u8>> {
        self.windows(&[], 0, n, usize::MAX).into_iter().map(|b| b.to_vec()).collect()
    }

    fn grow_base(&self, half: usize) -> Arc<BaseWindow> {
        let mut guard = self.base.lock().unwrap();
        if guard.half >= half {
            return guard.clone();
        }
        let target = half.max(2 * guard.half).max(64);
        let p = self.seed.power;
        let mut left = vec![self.seed.left];
        let mut right = vec![self.seed.right];
        while left.len() < target || right.len() < target {
            left = self.apply_n(&left, p);
            right = self.apply_n(&right, p);
        }
        let mut data = left[left.len() - target..].to_vec();
        data.extend_from_slice(&right[..target]);
        let w = Arc::new(BaseWindow { half: target, data: Bytes::from(data) });
        *guard = w.clone();
        w
    }

    pub fn base(&self, half: usize) -> Arc<BaseWindow> {
        self.grow_base(half)
    }

    /// Coordinates [a, b) of w₀.
    pub fn base_slice(&self, a: i64, b: i64) -> Bytes {
        let need = a.unsigned_abs().max(b.unsigned_abs()) as usize + 1;
        let w = self.grow_base(need);
        let h = w.half as i64;
        w.data.slice((h + a) as usize..(h + b) as usize)
    }

    pub fn fixed_point_prefix(&self, n: usize) -> Vec<u8> {
        self.base_slice(0, n as i64).to_vec()
    }

    pub fn period_witness(&self, p_max: usize) -> Option<usize> {
        let w = self.fixed_point_prefix(4 * p_max);
        (1..=p_max).find(|&q| (0..w.len() - q).all(|i| w[i] == w[i + q]))
    }

    pub fn report(&self, p_max: usize) -> ValidationReport {
        let prim = self.primitive_power();
        let per = if prim.is_some() { self.period_witness(p_max) } else { None };
        ValidationReport {
            minimal: prim.is_some(),
            aperiodic: prim.is_some() && per.is_none(),
            primitive_power: prim,
            period_witness: per,
            notes: vec![format!(
                "seed {}.{} under ρ^{}",
                self.symbol(self.seed.left),
                self.symbol(self.seed.right),
                self.seed.power
            )],
        }
    }

    pub fn validate(&self, p_max: usize) -> Result<()> {
        let n = self.alphabet.len();
        if self.primitive_power().is_none() {
            return Err(Error::RejectNotPrimitive { bound: n * n });
        }
        if let Some(period) = self.period_witness(p_max) {
            return Err(Error::RejectPeriodic { period });
        }
        Ok(())
    }

    /// Indices of w₀'s coordinate window [a, b) as a word together with its centred depth.
    pub fn centred(&self, d: usize) -> Bytes {
        self.base_slice(lo(d), hi(d))
    }
}

/// Legal two-letter words: closure of the two-letter factors of images under ρ.
fn closure_two_words(images: &[Vec<u8>]) -> Vec<[u8; 2]> {
    let mut set: BTreeSet<[u8; 2]> = BTreeSet::new();
    for img in images {
        for w in img.windows(2) {
            set.insert([w[0], w[1]]);
        }
    }
    loop {
        let mut added = false;
        for [u, v] in set.clone() {
            let a = *images[u as usize].last().unwrap();
            let b = images[v as usize][0];
            let mut cand = vec![[a, b]];
            for img in [&images[u as usize], &images[v as usize]] {
                for w in img.windows(2) {
                    cand.push([w[0], w[1]]);
                }
            }
            for c in cand {
                added |= set.insert(c);
            }
        }
        if !added {
            break;
        }
    }
    set.into_iter().collect()
}
