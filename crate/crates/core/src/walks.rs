//! Exact closed-walk counts `W_n` on a root lattice.
//!
//! `N_m(v)` counts length-`m` walks from the origin to `v`, with `v` written
//! in integer lattice-basis coordinates. Levels are built by convolution with
//! the root set, `N_{m+1}(v) = Σ_j N_m(v - c_j)`, and closed walks are
//! assembled meet-in-the-middle:
//!
//! ```text
//! W_{a+b} = Σ_v N_a(v) N_b(-v) = Σ_v N_a(v) N_b(v),   a = ⌈n/2⌉, b = ⌊n/2⌋
//! ```
//!
//! using `N_b(-v) = N_b(v)` (the root set is closed under negation).
//!
//! Per-vertex counts are held in `u128` with checked arithmetic. A single
//! level satisfies `N_m(v) <= τ^m`, which stays below `2^128` for `m <= 16`
//! even on `E8`; a breach surfaces as [`Error::Overflow`]. The closing sums
//! are accumulated in [`BigUint`].

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, RootSystem};
use crate::sampler::DosHistogram;

/// Closed-walk counts `W_0..=W_nmax` for one lattice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkTable {
    pub spec: LatticeSpec,
    #[serde(with = "biguint_list")]
    pub counts: Vec<BigUint>,
    /// Number of distinct endpoints of `N_m` for each level that was built.
    pub support_sizes: Vec<usize>,
}

impl WalkTable {
    pub fn n_max(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn get(&self, n: usize) -> Option<&BigUint> {
        self.counts.get(n)
    }

    /// `W_n` as a float, for comparison with sampled moments.
    pub fn as_f64(&self, n: usize) -> f64 {
        self.counts[n].to_string().parse().unwrap()
    }
}

/// Packs small integer vectors into a `u128`, one offset-binary field per coordinate.
#[derive(Debug, Clone, Copy)]
struct KeyPacker {
    bits: u32,
    dim: usize,
}

impl KeyPacker {
    fn new(dim: usize, bound: i64) -> Result<Self> {
        let bits = (128 / dim as u32).min(32);
        if bound >= 1i64 << (bits - 1) {
            return Err(Error::InvalidConfig(format!(
                "walk endpoints up to {bound} do not fit {bits}-bit coordinate fields"
            )));
        }
        Ok(Self { bits, dim })
    }

    fn origin(&self) -> u128 {
        (0..self.dim).fold(0u128, |k, j| k | (1u128 << (self.bits - 1)) << (self.bits as usize * j))
    }

    /// Signed key increment for a step `c`; fields never carry because endpoints stay in range.
    fn delta(&self, c: &[i32]) -> i128 {
        c.iter()
            .enumerate()
            .map(|(j, &x)| (x as i128) << (self.bits as usize * j))
            .sum()
    }
}

type Level = FxHashMap<u128, u128>;

fn next_level(cur: &Level, deltas: &[i128], level: usize) -> Result<Level> {
    let entries: Vec<(u128, u128)> = cur.iter().map(|(&k, &v)| (k, v)).collect();
    let step = |chunk: &[(u128, u128)]| -> Result<Level> {
        let mut out = Level::default();
        out.reserve(chunk.len() * 4);
        for &(k, n) in chunk {
            for &d in deltas {
                let key = (k as i128).wrapping_add(d) as u128;
                let slot = out.entry(key).or_insert(0);
                *slot = slot.checked_add(n).ok_or(Error::Overflow { level })?;
            }
        }
        Ok(out)
    };
    let chunk = (entries.len() / rayon::current_num_threads().max(1)).max(4096);
    entries
        .par_chunks(chunk)
        .map(step)
        .try_reduce(Level::default, |mut a, b| {
            if a.len() < b.len() {
                return merge(b, a, level);
            }
            for (k, v) in b {
                let slot = a.entry(k).or_insert(0);
                *slot = slot.checked_add(v).ok_or(Error::Overflow { level })?;
            }
            Ok(a)
        })
}

fn merge(mut a: Level, b: Level, level: usize) -> Result<Level> {
    for (k, v) in b {
        let slot = a.entry(k).or_insert(0);
        *slot = slot.checked_add(v).ok_or(Error::Overflow { level })?;
    }
    Ok(a)
}

/// Exact closed-walk counts up to length `n_max`.
pub fn walk_counts(rs: &RootSystem, n_max: usize) -> Result<WalkTable> {
    let half = n_max.div_ceil(2);
    let max_c = rs.root_coords().iter().flatten().map(|x| x.abs() as i64).max().unwrap_or(1);
    let packer = KeyPacker::new(rs.dim(), half as i64 * max_c)?;
    let deltas: Vec<i128> = rs.root_coords().iter().map(|c| packer.delta(c)).collect();

    let mut levels: Vec<Level> = Vec::with_capacity(half + 1);
    let mut origin = Level::default();
    origin.insert(packer.origin(), 1);
    levels.push(origin);
    for m in 1..=half {
        let next = next_level(&levels[m - 1], &deltas, m)?;
        levels.push(next);
    }

    let counts = (0..=n_max)
        .map(|n| {
            let (a, b) = (n.div_ceil(2), n / 2);
            let (small, large) = if levels[a].len() <= levels[b].len() {
                (&levels[a], &levels[b])
            } else {
                (&levels[b], &levels[a])
            };
            let mut total = BigUint::zero();
            for (k, &x) in small {
                if let Some(&y) = large.get(k) {
                    total += BigUint::from(x) * BigUint::from(y);
                }
            }
            total
        })
        .collect();

    Ok(WalkTable {
        spec: rs.spec(),
        counts,
        support_sizes: levels.iter().map(|l| l.len()).collect(),
    })
}

/// Largest length accepted by [`walk_counts_multinomial`].
pub const MULTINOMIAL_MAX_LEN: usize = 4;

/// Direct evaluation of the constrained multinomial sum
/// `Σ_{c: Σc_j = n, Σ c_j α_j = 0} n! / Π c_j!` over the ambient roots.
///
/// Multisets are enumerated as nondecreasing root-index tuples; the final
/// root is the one that closes the walk, if it exists.
pub fn walk_counts_multinomial(rs: &RootSystem, n: usize) -> Result<BigUint> {
    if n > MULTINOMIAL_MAX_LEN {
        return Err(Error::WalkLengthTooLarge { n, max: MULTINOMIAL_MAX_LEN });
    }
    if n == 0 {
        return Ok(BigUint::one());
    }
    let roots = rs.roots();
    let index: HashMap<&[i32], usize> = roots.iter().enumerate().map(|(i, r)| (r.as_slice(), i)).collect();
    let factorial = |k: usize| -> u64 { (1..=k as u64).product() };
    let n_fact = factorial(n);

    let mut total = 0u64;
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut sum = vec![0i32; rs.ambient_dim()];

    fn recurse(
        roots: &[Vec<i32>],
        index: &HashMap<&[i32], usize>,
        n: usize,
        start: usize,
        chosen: &mut Vec<usize>,
        sum: &mut [i32],
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if chosen.len() == n - 1 {
            let closing: Vec<i32> = sum.iter().map(|x| -x).collect();
            if let Some(&last) = index.get(closing.as_slice()) {
                if last >= start {
                    chosen.push(last);
                    visit(chosen);
                    chosen.pop();
                }
            }
            return;
        }
        for i in start..roots.len() {
            chosen.push(i);
            sum.iter_mut().zip(&roots[i]).for_each(|(s, r)| *s += r);
            recurse(roots, index, n, i, chosen, sum, visit);
            sum.iter_mut().zip(&roots[i]).for_each(|(s, r)| *s -= r);
            chosen.pop();
        }
    }

    let mut visit = |multiset: &[usize]| {
        let mut denom = 1u64;
        let mut run = 1usize;
        for w in multiset.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                denom *= factorial(run);
                run = 1;
            }
        }
        denom *= factorial(run);
        total += n_fact / denom;
    };
    recurse(roots, &index, n, 0, &mut chosen, &mut sum, &mut visit);
    Ok(BigUint::from(total))
}

/// Signed relative errors of histogram moments against `(-1)^n W_n`.
///
/// `W_1 = 0`, so the `n = 1` entry is the first moment divided by `sqrt(W_2)`
/// instead of a relative error.
pub fn moments_check(table: &WalkTable, hist: &DosHistogram) -> Vec<f64> {
    (0..=table.n_max())
        .map(|n| {
            if n == 0 {
                return 0.0;
            }
            let m = hist.moment(n as i32);
            let w = table.as_f64(n);
            let exact = if n % 2 == 0 { w } else { -w };
            if w == 0.0 {
                m / table.as_f64(2).sqrt()
            } else {
                (m - exact) / w
            }
        })
        .collect()
}

/// Writes `n W_n` lines, the b-file layout used by integer-sequence archives.
pub fn to_bfile(table: &WalkTable) -> String {
    table.counts.iter().enumerate().map(|(n, w)| format!("{n} {w}\n")).collect()
}

mod biguint_list {
    use num_bigint::BigUint;
    use serde::de::Error as _;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};
    use serde_json::Number;

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            let n: Number = x.to_string().parse().map_err(serde::ser::Error::custom)?;
            seq.serialize_element(&n)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        let raw: Vec<Number> = Vec::deserialize(d)?;
        raw.iter()
            .map(|n| n.to_string().parse::<BigUint>().map_err(D::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_roots, Family};

    fn counts(spec: LatticeSpec, n: usize) -> Vec<u64> {
        let t = walk_counts(&build_roots(spec).unwrap(), n).unwrap();
        t.counts.iter().map(|c| c.to_string().parse().unwrap()).collect()
    }

    #[test]
    fn first_terms() {
        for spec in [LatticeSpec::e6(), LatticeSpec::e7(), LatticeSpec::e8()] {
            let c = counts(spec, 2);
            assert_eq!(c, vec![1, 0, spec.kissing_number() as u64]);
        }
    }

    #[test]
    fn e6_small_lengths() {
        assert_eq!(counts(LatticeSpec::e6(), 4), vec![1, 0, 72, 1440, 54216]);
    }

    #[test]
    fn square_lattice_like_a1() {
        // A_1 is the integer line with steps ±1: W_{2m} = C(2m, m).
        let c = counts(LatticeSpec::new(Family::A, 1).unwrap(), 8);
        assert_eq!(c, vec![1, 0, 2, 0, 6, 0, 20, 0, 70]);
    }

    #[test]
    fn hexagonal_a2() {
        // Triangular lattice closed walks: 1, 0, 6, 12, 90, 360, 2040.
        let c = counts(LatticeSpec::new(Family::A, 2).unwrap(), 6);
        assert_eq!(c, vec![1, 0, 6, 12, 90, 360, 2040]);
    }

    #[test]
    fn multinomial_small() {
        let e6 = build_roots(LatticeSpec::e6()).unwrap();
        assert_eq!(walk_counts_multinomial(&e6, 0).unwrap(), BigUint::one());
        assert_eq!(walk_counts_multinomial(&e6, 1).unwrap(), BigUint::zero());
        assert_eq!(walk_counts_multinomial(&e6, 2).unwrap(), BigUint::from(72u32));
        assert_eq!(walk_counts_multinomial(&e6, 3).unwrap(), BigUint::from(1440u32));
        assert_eq!(walk_counts_multinomial(&e6, 4).unwrap(), BigUint::from(54216u32));
        assert!(matches!(
            walk_counts_multinomial(&e6, 5),
            Err(Error::WalkLengthTooLarge { n: 5, max: 4 })
        ));
    }

    #[test]
    fn level_invariants() {
        let rs = build_roots(LatticeSpec::e7()).unwrap();
        let max_c = rs.root_coords().iter().flatten().map(|x| x.abs() as i64).max().unwrap();
        let packer = KeyPacker::new(rs.dim(), 3 * max_c).unwrap();
        let deltas: Vec<i128> = rs.root_coords().iter().map(|c| packer.delta(c)).collect();
        let mut level = Level::default();
        level.insert(packer.origin(), 1);
        let origin = packer.origin() as i128;
        for m in 1..=3u32 {
            level = next_level(&level, &deltas, m as usize).unwrap();
            let total: u128 = level.values().sum();
            assert_eq!(total, 126u128.pow(m));
            for (&k, &n) in &level {
                let mirror = (2 * origin - k as i128) as u128;
                assert_eq!(level.get(&mirror), Some(&n));
            }
        }
    }

    #[test]
    fn even_and_monotone() {
        let c = counts(LatticeSpec::e7(), 6);
        for n in 2..c.len() {
            assert_eq!(c[n] % 2, 0);
        }
        for m in 1..3 {
            assert!(c[2 * m + 2] >= 126 * c[2 * m]);
        }
    }

    #[test]
    fn json_keeps_integers() {
        let t = walk_counts(&build_roots(LatticeSpec::e6()).unwrap(), 5).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("[1,0,72,1440,54216,2134080]"), "{s}");
        let back: WalkTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(to_bfile(&t).starts_with("0 1\n1 0\n2 72\n"));
    }
}
