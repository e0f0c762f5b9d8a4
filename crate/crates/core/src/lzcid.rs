//! LZ77 compression of ±1 sequences and the computable information density.
//!
//! The parser is greedy with an unbounded window. At each position it takes
//! the longest earlier match (which may run into the current position), breaking
//! ties in favour of the closest source. Matches are found with a suffix array,
//! its LCP array, and a range-max tree over the already-parsed positions, so a
//! full parse is `O(N log N)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::Snapshot;

/// One `(d, l, b)` token: copy `l` symbols starting `d` back, then emit `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LzTuple {
    pub d: usize,
    pub l: usize,
    pub b: Option<i8>,
}

impl LzTuple {
    pub fn literal(b: i8) -> Self {
        Self { d: 0, l: 0, b: Some(b) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompressedSeq {
    pub tuples: Vec<LzTuple>,
    pub source_len: usize,
}

impl CompressedSeq {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

/// Greedy longest-match LZ77 parse.
pub fn compress(x: &[i8]) -> Result<CompressedSeq> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = x.len();
    let text: Vec<u8> = x.iter().map(|&v| u8::from(v > 0)).collect();
    let index = MatchIndex::new(&text);
    let mut seen = SeenPositions::new(n);
    let mut tuples = Vec::new();
    let mut i = 0;
    while i < n {
        let (d, l) = index.longest_previous(i, &seen);
        let end = i + l;
        let b = (end < n).then(|| x[end]);
        tuples.push(LzTuple { d, l, b });
        for p in i..(end + 1).min(n) {
            seen.insert(index.rank[p], p);
        }
        i = end + 1;
    }
    Ok(CompressedSeq { tuples, source_len: n })
}

/// Inverse of [`compress`]. Copies run symbol by symbol, so `l > d` is legal.
pub fn decompress(c: &CompressedSeq) -> Result<Vec<i8>> {
    let mut out: Vec<i8> = Vec::with_capacity(c.source_len);
    let last = c.tuples.len().saturating_sub(1);
    for (k, t) in c.tuples.iter().enumerate() {
        if t.d == 0 && t.l != 0 {
            return Err(Error::MalformedTuple { index: k, reason: "zero distance with nonzero length".into() });
        }
        if t.d > out.len() {
            return Err(Error::MalformedTuple {
                index: k,
                reason: format!("distance {} exceeds decoded length {}", t.d, out.len()),
            });
        }
        let start = out.len() - t.d;
        for m in 0..t.l {
            let v = out[start + m];
            out.push(v);
        }
        match t.b {
            Some(v) if v == 1 || v == -1 => out.push(v),
            Some(v) => return Err(Error::MalformedTuple { index: k, reason: format!("literal {v} is not ±1") }),
            None if k != last => {
                return Err(Error::MalformedTuple { index: k, reason: "terminal tuple before end".into() })
            }
            None => {}
        }
    }
    if out.len() != c.source_len {
        return Err(Error::MalformedTuple {
            index: last,
            reason: format!("decoded {} symbols, expected {}", out.len(), c.source_len),
        });
    }
    Ok(out)
}

/// Approximate code length in bits: `|C| log2 |C| + 2 |C| log2(N / |C|)`.
pub fn code_length(c: &CompressedSeq) -> f64 {
    code_length_from_counts(c.tuples.len(), c.source_len)
}

pub fn code_length_from_counts(tuples: usize, n: usize) -> f64 {
    if tuples <= 1 {
        return 0.0;
    }
    let t = tuples as f64;
    t * t.log2() + 2.0 * t * (n as f64 / t).log2()
}

/// Code length of a sequence.
pub fn sequence_code_length(x: &[i8]) -> Result<f64> {
    Ok(code_length(&compress(x)?))
}

/// Uniform ±1 sequence of length `n`.
pub fn random_sequence<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<i8> {
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

/// Mean code length of `k` uniform sequences of length `n`.
///
/// The stream for length `n` is `ChaCha8(seed)` on stream `n`, so every entry
/// is reproducible independently of which other lengths are in the table.
pub fn shuffle_baseline(n: usize, k: usize, seed: u64) -> Result<f64> {
    if n == 0 || k == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    let mut total = 0.0;
    for _ in 0..k {
        let x = random_sequence(&mut rng, n);
        total += sequence_code_length(&x)?;
    }
    Ok(total / k as f64)
}

/// Table of baseline code lengths keyed by sequence length.
#[derive(Clone, Debug, PartialEq)]
pub struct ShuffleBaseline {
    pub k: usize,
    pub seed: u64,
    entries: BTreeMap<usize, f64>,
}

impl ShuffleBaseline {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, entries: BTreeMap::new() }
    }

    /// Builds a table for `lengths`, one independent task per length.
    pub fn build(lengths: &[usize], k: usize, seed: u64, exec: crate::exec::Exec) -> Result<Self> {
        let mut table = Self::new(k, seed);
        table.extend(lengths, exec)?;
        Ok(table)
    }

    /// Adds entries for lengths not yet present. Existing entries are kept.
    pub fn extend(&mut self, lengths: &[usize], exec: crate::exec::Exec) -> Result<()> {
        let missing: Vec<usize> = lengths
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|n| !self.entries.contains_key(n))
            .collect();
        let (k, seed) = (self.k, self.seed);
        let values = crate::exec::map_slice(exec, &missing, |&n| shuffle_baseline(n, k, seed));
        for (n, v) in missing.into_iter().zip(values) {
            self.entries.insert(n, v?);
        }
        Ok(())
    }

    pub fn insert(&mut self, n: usize, value: f64) {
        self.entries.insert(n, value);
    }

    pub fn get(&self, n: usize) -> Result<f64> {
        self.entries.get(&n).copied().ok_or(Error::MissingBaseline(n))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(&n, &v)| (n, v))
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    /// Text table with columns `N K seed N_shuffle`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("N\tK\tseed\tN_shuffle\n");
        for (n, v) in &self.entries {
            let _ = writeln!(s, "{n}\t{}\t{}\t{v}", self.k, self.seed);
        }
        s
    }

    /// Parses [`Self::to_text`] output. Lines starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut table: Option<Self> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("N\t") || line.starts_with("N ") {
                continue;
            }
            let parse_err = |reason: &str| Error::Parse { line: i + 1, reason: reason.to_string() };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(parse_err("expected 4 columns"));
            }
            let n: usize = f[0].parse().map_err(|_| parse_err("bad N"))?;
            let k: usize = f[1].parse().map_err(|_| parse_err("bad K"))?;
            let seed: u64 = f[2].parse().map_err(|_| parse_err("bad seed"))?;
            let v: f64 = f[3].parse().map_err(|_| parse_err("bad N_shuffle"))?;
            let t = table.get_or_insert_with(|| Self::new(k, seed));
            if t.k != k || t.seed != seed {
                return Err(parse_err("mixed K or seed within one table"));
            }
            t.entries.insert(n, v);
        }
        table.ok_or_else(|| Error::Parse { line: 0, reason: "empty baseline table".into() })
    }
}

/// CID of a raw sequence.
pub fn cid_of_sequence(x: &[i8], baseline: &ShuffleBaseline) -> Result<f64> {
    let base = baseline.get(x.len())?;
    Ok(sequence_code_length(x)? / base)
}

/// CID of a snapshot, rasterized row-major.
pub fn cid(x: &Snapshot, baseline: &ShuffleBaseline) -> Result<f64> {
    cid_of_sequence(x.raster(), baseline)
}

/// Suffix array with LCP range-minimum support.
struct MatchIndex {
    sa: Vec<u32>,
    rank: Vec<usize>,
    /// `sparse[k][r]` = min of `lcp[r..r + 2^k]`, where `lcp[r]` is the common
    /// prefix of suffixes at ranks `r - 1` and `r`.
    sparse: Vec<Vec<u32>>,
}

impl MatchIndex {
    fn new(text: &[u8]) -> Self {
        let sa = suffix_array(text);
        let n = text.len();
        let mut rank = vec![0usize; n];
        for (r, &p) in sa.iter().enumerate() {
            rank[p as usize] = r;
        }
        // Kasai
        let mut lcp = vec![0u32; n];
        let mut h = 0usize;
        for i in 0..n {
            let r = rank[i];
            if r > 0 {
                let j = sa[r - 1] as usize;
                while i + h < n && j + h < n && text[i + h] == text[j + h] {
                    h += 1;
                }
                lcp[r] = h as u32;
                h = h.saturating_sub(1);
            } else {
                h = 0;
            }
        }
        let mut sparse = vec![lcp];
        let mut w = 1;
        while 2 * w <= n {
            let prev = sparse.last().expect("level 0 exists");
            let len = n + 1 - 2 * w;
            let next: Vec<u32> = prev[..len].iter().zip(&prev[w..w + len]).map(|(a, b)| *a.min(b)).collect();
            sparse.push(next);
            w *= 2;
        }
        Self { sa, rank, sparse }
    }

    /// Min of `lcp[a..=b]` for `a <= b`.
    fn range_min(&self, a: usize, b: usize) -> u32 {
        let len = b - a + 1;
        let k = usize::BITS as usize - 1 - len.leading_zeros() as usize;
        self.sparse[k][a].min(self.sparse[k][b + 1 - (1 << k)])
    }

    /// Longest common prefix of the suffixes at ranks `r1 != r2`.
    fn lcp_ranks(&self, r1: usize, r2: usize) -> usize {
        let (a, b) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        self.range_min(a + 1, b) as usize
    }

    /// `(d, l)` for the longest match at `i` among already-seen positions.
    fn longest_previous(&self, i: usize, seen: &SeenPositions) -> (usize, usize) {
        let r = self.rank[i];
        let pred = seen.pred(r);
        let succ = seen.succ(r);
        let m = pred
            .map(|p| self.lcp_ranks(p, r))
            .into_iter()
            .chain(succ.map(|s| self.lcp_ranks(s, r)))
            .max()
            .unwrap_or(0);
        if m == 0 {
            return (0, 0);
        }
        // Rank interval of suffixes sharing at least m symbols with suffix i.
        let m32 = m as u32;
        let (mut lo, mut hi) = (0usize, r);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.range_min(mid + 1, r) >= m32 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let first = lo;
        let n = self.sa.len();
        let (mut lo, mut hi) = (r, n - 1);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.range_min(r + 1, mid) >= m32 {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let last = lo;
        let j = seen.max_in(first, last).expect("a match of positive length has a source");
        (i - j, m)
    }
}

/// Already-parsed positions, keyed by suffix rank.
///
/// Positions are inserted in increasing order, so the maximum over any block
/// is simply the last position written into it.
struct SeenPositions {
    /// Bitset over ranks.
    ranks: Vec<u64>,
    /// `position + 1` per rank, 0 if unseen.
    pos: Vec<u32>,
    /// Maxima over blocks of 64 and 4096 ranks.
    small: Vec<u32>,
    large: Vec<u32>,
}

impl SeenPositions {
    fn new(n: usize) -> Self {
        Self {
            ranks: vec![0; n.div_ceil(64)],
            pos: vec![0; n],
            small: vec![0; n.div_ceil(64)],
            large: vec![0; n.div_ceil(4096)],
        }
    }

    fn insert(&mut self, rank: usize, pos: usize) {
        let v = pos as u32 + 1;
        self.ranks[rank / 64] |= 1 << (rank % 64);
        self.pos[rank] = v;
        self.small[rank / 64] = v;
        self.large[rank / 4096] = v;
    }

    /// Largest seen rank below `r`.
    fn pred(&self, r: usize) -> Option<usize> {
        if r == 0 {
            return None;
        }
        let (mut w, b) = ((r - 1) / 64, (r - 1) % 64);
        let mut word = self.ranks[w] & (u64::MAX >> (63 - b));
        loop {
            if word != 0 {
                return Some(w * 64 + 63 - word.leading_zeros() as usize);
            }
            if w == 0 {
                return None;
            }
            w -= 1;
            word = self.ranks[w];
        }
    }

    /// Smallest seen rank above `r`.
    fn succ(&self, r: usize) -> Option<usize> {
        let r = r + 1;
        let (mut w, b) = (r / 64, r % 64);
        if w >= self.ranks.len() {
            return None;
        }
        let mut word = self.ranks[w] & (u64::MAX << b);
        loop {
            if word != 0 {
                return Some(w * 64 + word.trailing_zeros() as usize);
            }
            w += 1;
            if w == self.ranks.len() {
                return None;
            }
            word = self.ranks[w];
        }
    }

    /// Largest position among ranks in `[a, b]`.
    fn max_in(&self, a: usize, b: usize) -> Option<usize> {
        fn span(v: &[u32], a: usize, b: usize) -> u32 {
            v[a..=b].iter().copied().max().unwrap_or(0)
        }
        let best = if b / 64 - a / 64 < 2 {
            span(&self.pos, a, b)
        } else {
            let (ba, bb) = (a / 64 + 1, b / 64 - 1);
            let edges = span(&self.pos, a, ba * 64 - 1).max(span(&self.pos, (bb + 1) * 64, b));
            let inner = if bb / 64 - ba / 64 < 2 {
                span(&self.small, ba, bb)
            } else {
                let (la, lb) = (ba / 64 + 1, bb / 64 - 1);
                span(&self.small, ba, la * 64 - 1)
                    .max(span(&self.small, (lb + 1) * 64, bb))
                    .max(span(&self.large, la, lb))
            };
            edges.max(inner)
        };
        (best > 0).then(|| best as usize - 1)
    }
}

/// Prefix-doubling suffix array.
fn suffix_array(text: &[u8]) -> Vec<u32> {
    let n = text.len();
    let mut sa: Vec<u32> = (0..n as u32).collect();
    if n == 1 {
        return sa;
    }
    // Seed with the first 32 symbols packed two bits each (0 past the end),
    // which already separates almost every suffix of a random text.
    let mut window = vec![0u64; n + 1];
    for i in (0..n).rev() {
        window[i] = (u64::from(text[i]) + 1) << 62 | window[i + 1] >> 2;
    }
    sa.sort_unstable_by_key(|&i| window[i as usize]);
    let mut rank = vec![0u32; n];
    for w in 1..n {
        let bump = u32::from(window[sa[w - 1] as usize] != window[sa[w] as usize]);
        rank[sa[w] as usize] = rank[sa[w - 1] as usize] + bump;
    }
    if rank[sa[n - 1] as usize] as usize == n - 1 {
        return sa;
    }
    let mut tmp = vec![0u32; n];
    let mut k = 32;
    loop {
        let key = |i: u32| -> u64 {
            let i = i as usize;
            let second = if i + k < n { rank[i + k] as u64 + 1 } else { 0 };
            ((rank[i] as u64) << 32) | second
        };
        sa.sort_unstable_by_key(|&i| key(i));
        tmp[sa[0] as usize] = 0;
        for w in 1..n {
            let bump = u32::from(key(sa[w - 1]) != key(sa[w]));
            tmp[sa[w] as usize] = tmp[sa[w - 1] as usize] + bump;
        }
        std::mem::swap(&mut rank, &mut tmp);
        if rank[sa[n - 1] as usize] as usize == n - 1 {
            break;
        }
        k *= 2;
    }
    sa
}
