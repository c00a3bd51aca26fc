//! Root systems of the ADE lattices.
//!
//! Every lattice is scaled so that its minimal vectors (the roots) have
//! squared length 8. All ambient coordinates are then integers:
//!
//! - `A_d`: permutations of `(-2, 2, 0, ..., 0)` in `R^{d+1}`, spanning the
//!   sum-zero hyperplane.
//! - `D_d`: permutations of `(±2, ±2, 0, ..., 0)` in `R^d`.
//! - `E8`: the `D8` roots plus `(±1, ..., ±1)` with an even number of minus
//!   signs.
//! - `E7`: the `E8` roots whose coordinates sum to zero.
//! - `E6`: the `E8` roots whose last three coordinates are equal.
//!
//! Roots are kept in lexicographic order of their ambient coordinates, which
//! fixes every downstream summation order.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    A,
    D,
    E,
}

/// A lattice family together with its rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    family: Family,
    rank: usize,
}

impl LatticeSpec {
    pub fn new(family: Family, rank: usize) -> Result<Self> {
        let ok = match family {
            Family::A => rank >= 1,
            Family::D => rank >= 4,
            Family::E => (6..=8).contains(&rank),
        };
        if !ok {
            let rule = match family {
                Family::A => "A_d requires d >= 1",
                Family::D => "D_d requires d >= 4",
                Family::E => "E_d requires d in {6, 7, 8}",
            };
            return Err(Error::InvalidLattice(format!("{family:?}{rank}: {rule}")));
        }
        Ok(Self { family, rank })
    }

    pub fn e6() -> Self {
        Self { family: Family::E, rank: 6 }
    }

    pub fn e7() -> Self {
        Self { family: Family::E, rank: 7 }
    }

    pub fn e8() -> Self {
        Self { family: Family::E, rank: 8 }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of roots.
    pub fn kissing_number(&self) -> usize {
        let d = self.rank;
        match (self.family, d) {
            (Family::A, _) => d * d + d,
            (Family::D, _) => 2 * d * d - 2 * d,
            (Family::E, 6) => 72,
            (Family::E, 7) => 126,
            (Family::E, _) => 240,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self.family {
            Family::A => self.rank + 1,
            Family::D => self.rank,
            Family::E => 8,
        }
    }
}

impl fmt::Display for LatticeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.family, self.rank)
    }
}

impl FromStr for LatticeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut chars = s.chars();
        let family = match chars.next().map(|c| c.to_ascii_uppercase()) {
            Some('A') => Family::A,
            Some('D') => Family::D,
            Some('E') => Family::E,
            _ => return Err(Error::Parse(format!("unknown lattice token '{s}'"))),
        };
        let rank: usize = chars
            .as_str()
            .trim_start_matches('_')
            .parse()
            .map_err(|_| Error::Parse(format!("unknown lattice token '{s}'")))?;
        Self::new(family, rank)
    }
}

/// Roots, lattice basis and reciprocal basis of one ADE lattice.
///
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct RootSystem {
    spec: LatticeSpec,
    ambient_dim: usize,
    roots: Vec<Vec<i32>>,
    basis: Vec<Vec<i32>>,
    reciprocal: Vec<Vec<f64>>,
    root_coords: Vec<Vec<i32>>,
    frame: DMatrix<f64>,
}

/// Builds the root system of `spec`.
pub fn build_roots(spec: LatticeSpec) -> Result<RootSystem> {
    // Revalidate in case the spec was deserialized without going through `new`.
    let spec = LatticeSpec::new(spec.family, spec.rank)?;
    let mut roots = match (spec.family, spec.rank) {
        (Family::A, d) => a_roots(d),
        (Family::D, d) => d_roots(d),
        (Family::E, 8) => e8_roots(),
        (Family::E, 7) => e8_roots().into_iter().filter(|r| r.iter().sum::<i32>() == 0).collect(),
        (Family::E, _) => e8_roots()
            .into_iter()
            .filter(|r| r[5] == r[6] && r[6] == r[7])
            .collect(),
    };
    roots.sort();
    roots.dedup();
    debug_assert_eq!(roots.len(), spec.kissing_number());

    let d = spec.rank;
    let basis = match greedy_basis(&roots, d) {
        Some(b) if integer_coords_all(&b, &roots).is_some() => b,
        _ => simple_roots(&roots),
    };
    let root_coords = integer_coords_all(&basis, &roots)
        .ok_or_else(|| Error::InvalidLattice(format!("{spec}: basis does not generate the root lattice")))?;

    let a = basis_matrix(&basis);
    let gram = a.transpose() * &a;
    let gram_inv = gram
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidLattice(format!("{spec}: singular Gram matrix")))?;
    let b = &a * gram_inv * (2.0 * PI);
    let reciprocal = (0..d).map(|j| b.column(j).iter().copied().collect()).collect();
    let frame = orthonormal_frame(&a);

    Ok(RootSystem {
        spec,
        ambient_dim: spec.ambient_dim(),
        roots,
        basis,
        reciprocal,
        root_coords,
        frame,
    })
}

impl RootSystem {
    pub fn spec(&self) -> LatticeSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.rank
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn tau(&self) -> usize {
        self.roots.len()
    }

    pub fn roots(&self) -> &[Vec<i32>] {
        &self.roots
    }

    /// Simple-root basis of the lattice; every root has integer coordinates in it.
    pub fn lattice_basis(&self) -> &[Vec<i32>] {
        &self.basis
    }

    /// Vectors `b_j` in the lattice span with `a_i · b_j = 2π δ_ij`.
    pub fn reciprocal_basis(&self) -> &[Vec<f64>] {
        &self.reciprocal
    }

    /// Integer coordinates of each root in [`Self::lattice_basis`], in root order.
    pub fn root_coords(&self) -> &[Vec<i32>] {
        &self.root_coords
    }

    /// Integer Gram matrix of the lattice basis.
    pub fn gram(&self) -> Vec<Vec<i64>> {
        self.basis
            .iter()
            .map(|a| self.basis.iter().map(|b| dot_i(a, b)).collect())
            .collect()
    }

    pub fn gram_determinant(&self) -> f64 {
        let g = self.gram();
        let d = g.len();
        DMatrix::from_fn(d, d, |i, j| g[i][j] as f64).determinant()
    }

    /// Volume of one lattice cell within the span.
    pub fn covolume(&self) -> f64 {
        self.gram_determinant().sqrt()
    }

    /// Volume of one period cell of the band structure.
    pub fn bz_volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim() as i32) / self.covolume()
    }

    /// Orthonormal basis of the lattice span, as an `N x d` matrix.
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// `k = Σ u_i b_i`.
    pub fn frac_to_cartesian(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dim());
        let mut k = vec![0.0; self.ambient_dim];
        for (ui, b) in u.iter().zip(&self.reciprocal) {
            for (kj, bj) in k.iter_mut().zip(b) {
                *kj += ui * bj;
            }
        }
        k
    }

    /// Inverse of [`Self::frac_to_cartesian`] for momenta in the lattice span.
    pub fn cartesian_to_frac(&self, k: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|a| a.iter().zip(k).map(|(&ai, ki)| ai as f64 * ki).sum::<f64>() / (2.0 * PI))
            .collect()
    }
}

fn a_roots(d: usize) -> Vec<Vec<i32>> {
    let n = d + 1;
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut v = vec![0; n];
                v[i] = 2;
                v[j] = -2;
                out.push(v);
            }
        }
    }
    out
}

fn d_roots(d: usize) -> Vec<Vec<i32>> {
    let mut out = Vec::with_capacity(2 * d * (d - 1));
    for i in 0..d {
        for j in (i + 1)..d {
            for si in [-2, 2] {
                for sj in [-2, 2] {
                    let mut v = vec![0; d];
                    v[i] = si;
                    v[j] = sj;
                    out.push(v);
                }
            }
        }
    }
    out
}

fn e8_roots() -> Vec<Vec<i32>> {
    let mut out = d_roots(8);
    for mask in 0u32..256 {
        if mask.count_ones() % 2 == 0 {
            out.push((0..8).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect());
        }
    }
    out
}

fn dot_i(a: &[i32], b: &[i32]) -> i64 {
    a.iter().zip(b).map(|(&x, &y)| x as i64 * y as i64).sum()
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Fraction-free row echelon form used to test exact linear independence.
struct EchelonSpan {
    rows: Vec<(usize, Vec<i128>)>,
}

impl EchelonSpan {
    fn reduce(&self, v: &[i32]) -> Vec<i128> {
        let mut v: Vec<i128> = v.iter().map(|&x| x as i128).collect();
        for (p, row) in &self.rows {
            if v[*p] != 0 {
                let (a, b) = (row[*p], v[*p]);
                for (x, r) in v.iter_mut().zip(row) {
                    *x = *x * a - r * b;
                }
                let g = v.iter().fold(0, |g, &x| gcd(g, x));
                if g > 1 {
                    v.iter_mut().for_each(|x| *x /= g);
                }
            }
        }
        v
    }

    /// Adds `v` if it extends the span; reports whether it did.
    fn try_push(&mut self, v: &[i32]) -> bool {
        let r = self.reduce(v);
        match r.iter().position(|&x| x != 0) {
            Some(p) => {
                self.rows.push((p, r));
                true
            }
            None => false,
        }
    }
}

/// Roots in lexicographic order, kept whenever they extend the span.
fn greedy_basis(roots: &[Vec<i32>], d: usize) -> Option<Vec<Vec<i32>>> {
    let mut span = EchelonSpan { rows: Vec::new() };
    let mut basis = Vec::with_capacity(d);
    for r in roots {
        if span.try_push(r) {
            basis.push(r.clone());
            if basis.len() == d {
                return Some(basis);
            }
        }
    }
    None
}

/// Simple roots of the positive system "first nonzero coordinate is positive".
fn simple_roots(roots: &[Vec<i32>]) -> Vec<Vec<i32>> {
    let positive: Vec<&Vec<i32>> = roots
        .iter()
        .filter(|r| r.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0))
        .collect();
    let set: std::collections::HashSet<&Vec<i32>> = positive.iter().copied().collect();
    let mut decomposable = vec![false; positive.len()];
    for (i, a) in positive.iter().enumerate() {
        for b in positive.iter().skip(i + 1) {
            let s: Vec<i32> = a.iter().zip(b.iter()).map(|(x, y)| x + y).collect();
            if set.contains(&s) {
                let k = positive.iter().position(|r| **r == s).unwrap();
                decomposable[k] = true;
            }
        }
    }
    positive
        .into_iter()
        .zip(decomposable)
        .filter(|(_, dec)| !dec)
        .map(|(r, _)| r.clone())
        .collect()
}

fn basis_matrix(basis: &[Vec<i32>]) -> DMatrix<f64> {
    let n = basis[0].len();
    DMatrix::from_fn(n, basis.len(), |i, j| basis[j][i] as f64)
}

/// Coordinates of every root in `basis`, or `None` if any is not an exact
/// integer combination.
fn integer_coords_all(basis: &[Vec<i32>], roots: &[Vec<i32>]) -> Option<Vec<Vec<i32>>> {
    let a = basis_matrix(basis);
    let gram = a.transpose() * &a;
    let solver = gram.try_inverse()? * a.transpose();
    roots
        .iter()
        .map(|r| {
            let c: Vec<i32> = (0..basis.len())
                .map(|i| {
                    let x: f64 = r.iter().enumerate().map(|(j, &rj)| solver[(i, j)] * rj as f64).sum();
                    x.round() as i32
                })
                .collect();
            let exact = (0..r.len()).all(|j| {
                let s: i64 = c.iter().zip(basis).map(|(&ci, b)| ci as i64 * b[j] as i64).sum();
                s == r[j] as i64
            });
            exact.then_some(c)
        })
        .collect()
}

/// Modified Gram-Schmidt on the columns of `a`.
pub(crate) fn orthonormal_frame(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = a.clone();
    for j in 0..q.ncols() {
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let qi = q.column(i).clone_owned();
            q.column_mut(j).axpy(-proj, &qi, 1.0);
        }
        let norm = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_specs() -> Vec<LatticeSpec> {
        let mut v = vec![LatticeSpec::e6(), LatticeSpec::e7(), LatticeSpec::e8()];
        for d in 1..=5 {
            v.push(LatticeSpec::new(Family::A, d).unwrap());
        }
        for d in 4..=6 {
            v.push(LatticeSpec::new(Family::D, d).unwrap());
        }
        v
    }

    #[test]
    fn kissing_numbers() {
        assert_eq!(build_roots(LatticeSpec::e8()).unwrap().tau(), 240);
        assert_eq!(build_roots(LatticeSpec::e7()).unwrap().tau(), 126);
        assert_eq!(build_roots(LatticeSpec::e6()).unwrap().tau(), 72);
        let d4 = build_roots(LatticeSpec::new(Family::D, 4).unwrap()).unwrap();
        assert_eq!(d4.tau(), 24);
        for s in all_specs() {
            assert_eq!(build_roots(s).unwrap().tau(), s.kissing_number(), "{s}");
        }
    }

    #[test]
    fn e8_root_classes() {
        let rs = build_roots(LatticeSpec::e8()).unwrap();
        let integral = rs.roots().iter().filter(|r| r.iter().any(|&x| x.abs() == 2)).count();
        assert_eq!(integral, 112);
        assert_eq!(rs.tau() - integral, 128);
    }

    #[test]
    fn a1_is_a_single_pair() {
        let rs = build_roots(LatticeSpec::new(Family::A, 1).unwrap()).unwrap();
        assert_eq!(rs.roots(), &[vec![-2, 2], vec![2, -2]]);
        assert_eq!(rs.lattice_basis(), &[vec![-2, 2]]);
        assert_eq!(rs.gram(), vec![vec![8]]);
        let b = &rs.reciprocal_basis()[0];
        assert!((b[0] + PI / 2.0).abs() < 1e-15 && (b[1] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn root_invariants() {
        for s in all_specs() {
            let rs = build_roots(s).unwrap();
            assert_eq!(rs.tau() % 2, 0);
            for r in rs.roots() {
                assert_eq!(dot_i(r, r), 8, "{s}");
                let neg: Vec<i32> = r.iter().map(|x| -x).collect();
                assert!(rs.roots().binary_search(&neg).is_ok());
            }
            let mut spectrum = std::collections::BTreeSet::new();
            for a in rs.roots() {
                for b in rs.roots() {
                    spectrum.insert(dot_i(a, b));
                }
            }
            let full: std::collections::BTreeSet<i64> = [-8, -4, 0, 4, 8].into();
            assert!(spectrum.is_subset(&full), "{s}");
            if s.family() == Family::E {
                assert_eq!(spectrum, full);
            }
            let total: Vec<i32> = (0..rs.ambient_dim()).map(|j| rs.roots().iter().map(|r| r[j]).sum()).collect();
            assert!(total.iter().all(|&x| x == 0));
        }
    }

    #[test]
    fn root_coords_reproduce_roots_exactly() {
        for s in all_specs() {
            let rs = build_roots(s).unwrap();
            assert_eq!(rs.lattice_basis().len(), s.rank());
            for b in rs.lattice_basis() {
                assert!(rs.roots().contains(b));
            }
            for (r, c) in rs.roots().iter().zip(rs.root_coords()) {
                for j in 0..rs.ambient_dim() {
                    let s: i64 = c.iter().zip(rs.lattice_basis()).map(|(&ci, b)| ci as i64 * b[j] as i64).sum();
                    assert_eq!(s, r[j] as i64);
                }
            }
        }
    }

    #[test]
    fn gram_determinants() {
        // Covolume of E8 is 2^8 after scaling lengths by 2.
        let e8 = build_roots(LatticeSpec::e8()).unwrap();
        assert!((e8.gram_determinant() - 65536.0).abs() < 1e-6);
        let e6 = build_roots(LatticeSpec::e6()).unwrap();
        assert!((e6.gram_determinant() - 12288.0).abs() < 1e-6);
        let e7 = build_roots(LatticeSpec::e7()).unwrap();
        assert!((e7.gram_determinant() - 32768.0).abs() < 1e-6);
        assert!((e8.bz_volume() - (2.0 * PI).powi(8) / 256.0).abs() < 1e-6);
    }

    #[test]
    fn biorthogonality() {
        for s in all_specs() {
            let rs = build_roots(s).unwrap();
            for (i, a) in rs.lattice_basis().iter().enumerate() {
                for (j, b) in rs.reciprocal_basis().iter().enumerate() {
                    let x: f64 = a.iter().zip(b).map(|(&ai, bi)| ai as f64 * bi).sum();
                    let want = if i == j { 2.0 * PI } else { 0.0 };
                    assert!((x - want).abs() < 1e-12, "{s}: {i},{j} -> {x}");
                }
            }
        }
    }

    #[test]
    fn isotropic_second_moment() {
        for s in all_specs() {
            let rs = build_roots(s).unwrap();
            let n = rs.ambient_dim();
            let mut m = DMatrix::<f64>::zeros(n, n);
            for r in rs.roots() {
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] += (r[i] * r[j]) as f64;
                    }
                }
            }
            let q = rs.frame();
            let restricted = q.transpose() * m * q;
            let scale = 8.0 * rs.tau() as f64 / rs.dim() as f64;
            let want = DMatrix::<f64>::identity(rs.dim(), rs.dim()) * scale;
            assert!((restricted - want).abs().max() < 1e-9, "{s}");
        }
    }

    #[test]
    fn frac_cartesian_round_trip() {
        let rs = build_roots(LatticeSpec::e7()).unwrap();
        let u = [0.1, 0.7, 0.25, 0.9, 0.33, 0.5, 0.01];
        let k = rs.frac_to_cartesian(&u);
        let back = rs.cartesian_to_frac(&k);
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        for (r, c) in rs.roots().iter().zip(rs.root_coords()) {
            let lhs: f64 = r.iter().zip(&k).map(|(&ri, ki)| ri as f64 * ki).sum();
            let rhs: f64 = 2.0 * PI * c.iter().zip(&u).map(|(&ci, ui)| ci as f64 * ui).sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-10);
        }
        let zero = rs.frac_to_cartesian(&[0.0; 7]);
        assert!(zero.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rank_restrictions() {
        assert!(LatticeSpec::new(Family::A, 0).is_err());
        assert!(LatticeSpec::new(Family::D, 3).is_err());
        assert!(LatticeSpec::new(Family::E, 9).is_err());
        assert!(LatticeSpec::new(Family::E, 5).is_err());
        let err = "E9".parse::<LatticeSpec>().unwrap_err().to_string();
        assert!(err.contains("E_d requires"), "{err}");
        assert!("X3".parse::<LatticeSpec>().is_err());
        assert_eq!("e8".parse::<LatticeSpec>().unwrap(), LatticeSpec::e8());
        assert_eq!("D5".parse::<LatticeSpec>().unwrap().to_string(), "D5");
    }
}
