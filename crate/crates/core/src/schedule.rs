//! Fixed match schedules: the circle method for complete graphs, cyclic
//! shifts for complete bipartite graphs, and the helper-probe schedule used
//! by distributed learning.

/// Pairs of positions matched in round `round` of the circle method on `n`
/// positions (`n` even). Rounds `0..n-1` cover every unordered pair once.
pub fn circle_pairs(n: usize, round: usize) -> Vec<(usize, usize)> {
    assert!(n.is_multiple_of(2), "circle method needs an even number of positions");
    if n == 0 {
        return Vec::new();
    }
    let m = n - 1;
    let q = round % m.max(1);
    let mut out = Vec::with_capacity(n / 2);
    out.push((q % m.max(1), m));
    for i in 1..n / 2 {
        out.push(((q + i) % m, (q + m - i) % m));
    }
    out
}

/// Number of rounds needed to cover every pair among `n` participants,
/// padding with a bye when `n` is odd.
pub fn circle_rounds(n: usize) -> usize {
    if n < 2 {
        0
    } else if n.is_multiple_of(2) {
        n - 1
    } else {
        n
    }
}

/// Round `round` of the circle method over `members`. An odd member count is
/// padded with a bye; the worker drawing the bye is returned separately.
pub fn circle_round<T: Copy>(members: &[T], round: usize) -> (Vec<(T, T)>, Option<T>) {
    let n = members.len();
    if n < 2 {
        return (Vec::new(), members.first().copied());
    }
    let padded = n + n % 2;
    let mut pairs = Vec::with_capacity(n / 2);
    let mut bye = None;
    for (x, y) in circle_pairs(padded, round % circle_rounds(n)) {
        match (members.get(x), members.get(y)) {
            (Some(&a), Some(&b)) => pairs.push((a, b)),
            (Some(&a), None) | (None, Some(&a)) => bye = Some(a),
            (None, None) => {}
        }
    }
    (pairs, bye)
}

/// Step `r` of the cyclic 1-factorization of `K_{m,m}`: `a[s]` meets
/// `b[(s + r) mod m]`.
pub fn cyclic_cross<T: Copy>(a: &[T], b: &[T], r: usize) -> Vec<(T, T)> {
    let m = b.len();
    a.iter().enumerate().map(|(s, &x)| (x, b[(s + r) % m])).collect()
}

/// Helper-probe schedule for two cliques of size `m = 2^i`, `i >= 1`.
///
/// At step `r` the first helper probes `c1[r]`, the second probes
/// `c2[probe(r)]`, and every other `c1[s]` meets `c2[partner(r, s)]`. Over
/// the `m` steps each cross pair is used at most once and every member of
/// both cliques meets its helper exactly once.
///
/// For `i >= 2` positions are read as polynomials over GF(2) reduced modulo
/// `x^i + x + 1`, with `partner(r, s) = x*r + s` and `probe(r) = (x + 1)*r`.
/// Both multipliers are invertible because the modulus has a constant term
/// and an odd number of terms.
#[derive(Debug, Clone)]
pub struct ProbeSchedule {
    m: usize,
    bits: u32,
}

impl ProbeSchedule {
    pub fn new(m: usize) -> Self {
        assert!(m >= 2 && m.is_power_of_two(), "probe schedule needs a power of two >= 2");
        Self { m, bits: m.trailing_zeros() }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn times_x(&self, v: usize) -> usize {
        let shifted = v << 1;
        if shifted & self.m != 0 {
            shifted ^ self.m ^ 0b11
        } else {
            shifted
        }
    }

    /// Position in the second clique probed by the second helper at step `r`.
    pub fn probe(&self, r: usize) -> usize {
        if self.bits == 1 {
            1 - r
        } else {
            self.times_x(r) ^ r
        }
    }

    /// Position in the second clique matched with `c1[s]` at step `r`, `s != r`.
    pub fn partner(&self, r: usize, s: usize) -> usize {
        if self.bits == 1 {
            r
        } else {
            self.times_x(r) ^ s
        }
    }
}
