//! Brute-force edit distance: breadth-first search over restricted edit
//! scripts.

use std::collections::{HashSet, VecDeque};

pub const MAX_LEN: usize = 6;
pub const ALPHABET: u8 = 3;

/// Working sequences are packed four bits per token, low token first, with
/// the length above them. Token codes: `1 + i` is the untouched source
/// symbol at position `i`; `7 + c` is a symbol an edit produced; `10 + c` is
/// the first half of a transposed pair, after which nothing may be inserted.
type State = u32;

const ORIG: u32 = 1;
const DONE: u32 = 7;
const GLUED: u32 = 10;
const LEN_SHIFT: u32 = 28;

fn len(s: State) -> usize {
    (s >> LEN_SHIFT) as usize
}

fn tok(s: State, p: usize) -> u32 {
    (s >> (4 * p)) & 0xf
}

fn pack(toks: &[u32]) -> State {
    toks.iter().enumerate().fold((toks.len() as u32) << LEN_SHIFT, |acc, (p, &t)| acc | (t << (4 * p)))
}

fn unpack(s: State) -> Vec<u32> {
    (0..len(s)).map(|p| tok(s, p)).collect()
}

/// Index of a word among all words of length ≤ MAX_LEN (base-4 digits with
/// a leading 1 so that lengths stay apart).
pub fn word_key(word: impl Iterator<Item = u8>) -> usize {
    word.fold(1usize, |acc, c| acc * 4 + c as usize)
}

pub fn all_sequences() -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..MAX_LEN {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..ALPHABET {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Distances from `source` to every sequence of length ≤ MAX_LEN, where
/// each edit (insert, delete, substitute, swap two neighbours) may touch
/// only symbols no earlier edit produced or moved. Indexed by `word_key`.
pub fn bfs_from(source: &[u8]) -> Vec<usize> {
    let sym = |t: u32| -> u8 {
        match t {
            t if t >= GLUED => (t - GLUED) as u8,
            t if t >= DONE => (t - DONE) as u8,
            t => source[(t - ORIG) as usize],
        }
    };
    let start = pack(&(0..source.len() as u32).map(|i| ORIG + i).collect::<Vec<_>>());
    let mut seen: HashSet<State> = HashSet::from([start]);
    let mut dist = vec![usize::MAX; 4usize.pow(MAX_LEN as u32 + 1)];
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((state, d)) = queue.pop_front() {
        let toks = unpack(state);
        let key = word_key(toks.iter().map(|&t| sym(t)));
        dist[key] = dist[key].min(d);
        // no two words of length ≤ MAX_LEN are further apart than MAX_LEN
        if d == MAX_LEN {
            continue;
        }
        let mut push = |next: Vec<u32>, queue: &mut VecDeque<(State, usize)>| {
            if next.len() <= MAX_LEN {
                let packed = pack(&next);
                if seen.insert(packed) {
                    queue.push_back((packed, d + 1));
                }
            }
        };
        for p in 0..toks.len() {
            let t = toks[p];
            if t >= DONE {
                continue;
            }
            let s = sym(t);
            let mut del = toks.clone();
            del.remove(p);
            push(del, &mut queue);
            for c in (0..ALPHABET).filter(|&c| c != s) {
                let mut sub = toks.clone();
                sub[p] = DONE + c as u32;
                push(sub, &mut queue);
            }
            if toks.get(p + 1) == Some(&(t + 1)) {
                let mut sw = toks.clone();
                sw[p] = GLUED + sym(t + 1) as u32;
                sw[p + 1] = DONE + s as u32;
                push(sw, &mut queue);
            }
        }
        for p in 0..=toks.len() {
            if p > 0 && toks[p - 1] >= GLUED {
                continue;
            }
            for c in 0..ALPHABET {
                let mut ins = toks.clone();
                ins.insert(p, DONE + c as u32);
                push(ins, &mut queue);
            }
        }
    }
    dist
}

/// Compares `dist` with the search on every pair of sequences; returns the
/// number of pairs checked or the first disagreement.
pub fn check_all(dist: impl Fn(&[u8], &[u8]) -> usize) -> Result<usize, String> {
    let seqs = all_sequences();
    let mut checked = 0usize;
    for a in &seqs {
        let oracle = bfs_from(a);
        for b in &seqs {
            let (got, want) = (dist(a, b), oracle[word_key(b.iter().copied())]);
            if got != want {
                return Err(format!("{a:?} -> {b:?}: {got}, search says {want}"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}
