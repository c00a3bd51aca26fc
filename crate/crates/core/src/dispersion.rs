//! Nearest-neighbour tight-binding band `ε(u) = -2 Σ_pairs cos(2π c·u)`.
//!
//! Momenta are fractional coordinates `u` with respect to the reciprocal
//! basis, so every frequency `c` is an integer vector (a root written in the
//! lattice basis). Only one root of each `±` pair is stored.
//!
//! The hot path evaluates all pair phases `e^{2πi c·u}` by splitting each
//! frequency into a head (leading coordinates) and a tail. Distinct head
//! and tail products are built from per-coordinate power tables, and each
//! pair then costs one complex product.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{orthonormal_frame, Family, LatticeSpec, RootSystem};

/// Fractional momentum, each component reduced to `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Momentum(Vec<f64>);

#[inline]
pub(crate) fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl Momentum {
    pub fn new(mut u: Vec<f64>) -> Self {
        u.iter_mut().for_each(|x| *x = wrap_unit(*x));
        Self(u)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn negated(&self) -> Self {
        Self::new(self.0.iter().map(|x| -x).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Momentum {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone)]
struct SplitPlan {
    max_freq: i32,
    /// Flattened power-table indices for each distinct head, then each distinct tail.
    terms: Vec<u32>,
    starts: Vec<u32>,
    /// `(head, tail)` slots per frequency; tail slots follow the heads.
    pairs: Vec<(u32, u32)>,
}

impl SplitPlan {
    fn new(freqs: &[Vec<i32>], dim: usize) -> Self {
        let max_freq = freqs.iter().flatten().map(|c| c.abs()).max().unwrap_or(0);
        // Pick the split with the fewest nonzero factors across both halves.
        let cost = |split: usize| {
            let mut total = 0;
            for range in [0..split, split..dim] {
                let mut seen: Vec<&[i32]> = freqs.iter().map(|c| &c[range.clone()]).collect();
                seen.sort();
                seen.dedup();
                total += seen.iter().map(|v| v.iter().filter(|&&x| x != 0).count()).sum::<usize>();
            }
            total
        };
        let split = (1..dim).min_by_key(|&s| cost(s)).unwrap_or(dim);
        let width = 2 * max_freq + 1;
        let mut heads: Vec<&[i32]> = Vec::new();
        let mut tails: Vec<&[i32]> = Vec::new();
        fn index<'f>(pool: &mut Vec<&'f [i32]>, v: &'f [i32]) -> u32 {
            match pool.iter().position(|p| *p == v) {
                Some(i) => i as u32,
                None => {
                    pool.push(v);
                    (pool.len() - 1) as u32
                }
            }
        }
        let raw: Vec<(u32, u32)> = freqs
            .iter()
            .map(|c| (index(&mut heads, &c[..split]), index(&mut tails, &c[split..])))
            .collect();
        let mut terms = Vec::new();
        let mut starts = vec![0u32];
        for (offset, pool) in [(0, &heads), (split, &tails)] {
            for v in pool.iter() {
                for (j, &cj) in v.iter().enumerate() {
                    if cj != 0 {
                        terms.push(((offset + j) as i32 * width + max_freq + cj) as u32);
                    }
                }
                starts.push(terms.len() as u32);
            }
        }
        let n_heads = heads.len();
        let pairs = raw.into_iter().map(|(h, t)| (h, t + n_heads as u32)).collect();
        Self { max_freq, terms, starts, pairs }
    }

    fn n_slots(&self) -> usize {
        self.starts.len() - 1
    }
}

/// Band structure of one lattice.
#[derive(Debug, Clone)]
pub struct Dispersion {
    spec: LatticeSpec,
    dim: usize,
    tau: usize,
    freqs: Vec<Vec<i32>>,
    plan: SplitPlan,
    /// Maps orthonormal span coordinates to fractional coordinates.
    to_frac: DMatrix<f64>,
    covolume: f64,
    kernel: Kernel,
}

/// Energy-only fast path.
#[derive(Debug, Clone)]
enum Kernel {
    Split,
    /// Closed-form root sums for `E6`/`E7`/`E8` in their standard `R^8` embedding.
    /// `phase` is the 8×d row-major map `u -> θ` with `α·θ = 2π c·u`.
    Exceptional { rank: usize, phase: Vec<f64> },
}

fn lex_positive(c: &[i32]) -> bool {
    c.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
}

impl Dispersion {
    pub fn new(rs: &RootSystem) -> Self {
        let freqs: Vec<Vec<i32>> = rs.root_coords().iter().filter(|c| lex_positive(c)).cloned().collect();
        let basis: Vec<Vec<f64>> = rs
            .lattice_basis()
            .iter()
            .map(|b| b.iter().map(|&x| x as f64).collect())
            .collect();
        let mut disp = Self::from_parts(rs.spec(), rs.tau(), freqs, &basis).expect("root system basis is nonsingular");
        if rs.spec().family() == Family::E {
            let a = column_matrix(&basis);
            let gram = a.transpose() * &a;
            let b = &a * gram.try_inverse().expect("nonsingular gram") * (2.0 * PI);
            disp.kernel = Kernel::Exceptional {
                rank: disp.dim,
                phase: b.transpose().as_slice().to_vec(),
            };
        }
        disp
    }

    /// Builds the band from an arbitrary real embedding of the roots, e.g. a
    /// rotated copy. Root coordinates in `basis` must come out integral.
    pub fn from_embedding(spec: LatticeSpec, roots: &[Vec<f64>], basis: &[Vec<f64>]) -> Result<Self> {
        let a = column_matrix(basis);
        let solver = (a.transpose() * &a)
            .try_inverse()
            .ok_or_else(|| Error::InvalidLattice("singular basis".into()))?
            * a.transpose();
        let mut freqs = Vec::with_capacity(roots.len() / 2);
        for r in roots {
            let rv = nalgebra::DVector::from_column_slice(r);
            let c = &solver * rv;
            let ci: Vec<i32> = c.iter().map(|x| x.round() as i32).collect();
            if c.iter().zip(&ci).any(|(x, &n)| (x - n as f64).abs() > 1e-9) {
                return Err(Error::InvalidLattice("root is not an integer combination of the basis".into()));
            }
            if lex_positive(&ci) {
                freqs.push(ci);
            }
        }
        Self::from_parts(spec, roots.len(), freqs, basis)
    }

    fn from_parts(spec: LatticeSpec, tau: usize, freqs: Vec<Vec<i32>>, basis: &[Vec<f64>]) -> Result<Self> {
        let dim = basis.len();
        let a = column_matrix(basis);
        let gram = a.transpose() * &a;
        let covolume = gram.determinant().sqrt();
        let b = &a * gram.try_inverse().ok_or_else(|| Error::InvalidLattice("singular basis".into()))? * (2.0 * PI);
        let q = orthonormal_frame(&a);
        let m = q.transpose() * b;
        let to_frac = m.try_inverse().ok_or_else(|| Error::InvalidLattice("singular frame".into()))?;
        let plan = SplitPlan::new(&freqs, dim);
        Ok(Self { spec, dim, tau, freqs, plan, to_frac, covolume, kernel: Kernel::Split })
    }

    pub fn spec(&self) -> LatticeSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn epsilon_min(&self) -> f64 {
        -(self.tau as f64)
    }

    /// One frequency vector per `±` root pair.
    pub fn frequencies(&self) -> &[Vec<i32>] {
        &self.freqs
    }

    pub fn covolume(&self) -> f64 {
        self.covolume
    }

    pub fn bz_volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim as i32) / self.covolume
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        let p = &self.plan;
        Evaluator {
            disp: self,
            powers: vec![(0.0, 0.0); self.dim * (2 * p.max_freq as usize + 1)],
            halves: vec![(0.0, 0.0); p.n_slots()],
            phases: vec![(0.0, 0.0); p.pairs.len()],
        }
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.evaluator().energy(u)
    }

    /// Energies of `out.len()` momenta stored row-major in `us`.
    pub fn energies(&self, us: &[f64], out: &mut [f64]) {
        assert_eq!(us.len(), out.len() * self.dim);
        let mut ev = self.evaluator();
        for (row, e) in us.chunks_exact(self.dim).zip(out.iter_mut()) {
            *e = ev.energy(row);
        }
    }

    /// Derivative of `ε` with respect to the fractional coordinates.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut ev = self.evaluator();
        let mut g = vec![0.0; self.dim];
        ev.gradient_into(u, &mut g);
        g
    }

    /// Hessian with respect to the fractional coordinates.
    pub fn hessian(&self, u: &[f64]) -> DMatrix<f64> {
        self.evaluator().hessian(u)
    }

    /// Hessian in an orthonormal frame of the lattice span.
    pub fn cartesian_hessian(&self, u: &[f64]) -> DMatrix<f64> {
        self.to_cartesian(&self.hessian(u))
    }

    /// Linear map taking a displacement in an orthonormal momentum frame to
    /// fractional coordinates, rescaled to unit determinant. Random steps
    /// pushed through it are isotropic in momentum space while keeping
    /// fractional-coordinate units on average.
    pub fn step_frame(&self) -> DMatrix<f64> {
        let det = self.to_frac.determinant().abs();
        &self.to_frac / det.powf(1.0 / self.dim as f64)
    }

    /// Conjugates a fractional-coordinate Hessian into the orthonormal frame.
    pub fn to_cartesian(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let hc = self.to_frac.transpose() * h * &self.to_frac;
        (&hc + hc.transpose()) * 0.5
    }
}

fn column_matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let n = cols[0].len();
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

#[inline]
fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// Ambient root sums. With `C_i = cos 2θ_i`, the `±2e_i ± 2e_j` roots give
/// `2[(ΣC)² - ΣC²]`; the half-integer roots reduce to products of `cos θ_i`
/// and `sin θ_i` (E8, E6) or to the fourth elementary symmetric polynomial of
/// `e^{2iθ_i}` (E7, whose `θ` sums to zero).
fn exceptional_energy(rank: usize, phase: &[f64], u: &[f64]) -> f64 {
    let mut cs = [(0.0f64, 0.0f64); 8];
    let centred: [f64; 8] = std::array::from_fn(|j| if j < rank { u[j] - u[j].round() } else { 0.0 });
    for (i, out) in cs.iter_mut().enumerate() {
        let row = &phase[i * rank..(i + 1) * rank];
        let theta: f64 = row.iter().zip(&centred).map(|(a, b)| a * b).sum();
        let (s, c) = theta.sin_cos();
        *out = (c, s);
    }
    let d_part = |n: usize| {
        let (mut sum, mut sq) = (0.0, 0.0);
        for &(c, s) in &cs[..n] {
            let c2 = c * c - s * s;
            sum += c2;
            sq += c2 * c2;
        }
        2.0 * (sum * sum - sq)
    };
    let total = match rank {
        8 => {
            let (pc, ps) = cs.iter().fold((1.0, 1.0), |(pc, ps), &(c, s)| (pc * c, ps * s));
            d_part(8) + 128.0 * (pc + ps)
        }
        7 => {
            // e_k of z_j = e^{2iθ_j} for k ≤ 4, built one variable at a time.
            let mut e = [(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)];
            let mut zsum = (0.0, 0.0);
            for &(c, s) in &cs {
                let z = (c * c - s * s, 2.0 * c * s);
                zsum = (zsum.0 + z.0, zsum.1 + z.1);
                for k in (1..5).rev() {
                    let t = cmul(e[k - 1], z);
                    e[k] = (e[k].0 + t.0, e[k].1 + t.1);
                }
            }
            zsum.0 * zsum.0 + zsum.1 * zsum.1 - 8.0 + e[4].0
        }
        6 => {
            let (p, q) = cs[..5].iter().fold((1.0, 1.0), |(p, q), &(c, s)| (p * 2.0 * c, q * 2.0 * s));
            let (sf, cf) = cs[5..].iter().fold((0.0, 1.0), |acc: (f64, f64), &(c, s)| {
                // Angle addition: accumulate (sin, cos) of θ_6 + θ_7 + θ_8.
                (acc.0 * c + acc.1 * s, acc.1 * c - acc.0 * s)
            });
            d_part(5) + p * cf - q * sf
        }
        _ => unreachable!("exceptional kernel only built for E6, E7, E8"),
    };
    -total
}

/// Scratch buffers for repeated band evaluations; one per thread or chain.
pub struct Evaluator<'a> {
    disp: &'a Dispersion,
    powers: Vec<(f64, f64)>,
    halves: Vec<(f64, f64)>,
    phases: Vec<(f64, f64)>,
}

impl Evaluator<'_> {
    fn fill_halves(&mut self, u: &[f64]) {
        let plan = &self.disp.plan;
        debug_assert_eq!(u.len(), self.disp.dim);
        let m = plan.max_freq as usize;
        let width = 2 * m + 1;
        for (row, &uj) in self.powers.chunks_exact_mut(width).zip(u) {
            // Centred reduction keeps ε(-u) == ε(u) bit-for-bit.
            let (s, c) = (2.0 * PI * (uj - uj.round())).sin_cos();
            row[m] = (1.0, 0.0);
            let mut p = (1.0, 0.0);
            for k in 1..=m {
                p = cmul(p, (c, s));
                row[m + k] = p;
                row[m - k] = (p.0, -p.1);
            }
        }
        let powers = &self.powers;
        for (slot, w) in self.halves.iter_mut().zip(plan.starts.windows(2)) {
            let mut acc = (1.0, 0.0);
            for &t in &plan.terms[w[0] as usize..w[1] as usize] {
                acc = cmul(acc, powers[t as usize]);
            }
            *slot = acc;
        }
    }

    pub fn energy(&mut self, u: &[f64]) -> f64 {
        if let Kernel::Exceptional { rank, phase } = &self.disp.kernel {
            return exceptional_energy(*rank, phase, u);
        }
        self.split_energy(u)
    }

    fn split_energy(&mut self, u: &[f64]) -> f64 {
        self.fill_halves(u);
        let halves = &self.halves;
        let mut sum = 0.0;
        for &(h, t) in &self.disp.plan.pairs {
            let a = halves[h as usize];
            let b = halves[t as usize];
            sum += a.0 * b.0 - a.1 * b.1;
        }
        -2.0 * sum
    }

    /// `(cos, sin)` of `2π c·u` for every pair, in frequency order.
    pub fn pair_phases(&mut self, u: &[f64]) -> &[(f64, f64)] {
        self.fill_halves(u);
        for (p, &(h, t)) in self.phases.iter_mut().zip(&self.disp.plan.pairs) {
            *p = cmul(self.halves[h as usize], self.halves[t as usize]);
        }
        &self.phases
    }

    pub fn gradient_into(&mut self, u: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|x| *x = 0.0);
        let freqs = &self.disp.freqs;
        let phases = self.pair_phases(u);
        for (c, &(_, s)) in freqs.iter().zip(phases) {
            for (gi, &ci) in g.iter_mut().zip(c) {
                *gi += ci as f64 * s;
            }
        }
        g.iter_mut().for_each(|x| *x *= 4.0 * PI);
    }

    pub fn hessian(&mut self, u: &[f64]) -> DMatrix<f64> {
        let d = self.disp.dim;
        let freqs = &self.disp.freqs;
        let phases = self.pair_phases(u);
        let mut h = DMatrix::<f64>::zeros(d, d);
        for (c, &(cos, _)) in freqs.iter().zip(phases) {
            for i in 0..d {
                if c[i] == 0 {
                    continue;
                }
                let ci = c[i] as f64 * cos;
                for j in i..d {
                    h[(i, j)] += ci * c[j] as f64;
                }
            }
        }
        let s = 8.0 * PI * PI;
        for i in 0..d {
            for j in i..d {
                let v = h[(i, j)] * s;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    /// Energy, gradient and Hessian from a single phase evaluation.
    pub fn energy_gradient_hessian(&mut self, u: &[f64], g: &mut [f64]) -> (f64, DMatrix<f64>) {
        let h = self.hessian(u);
        let mut e = 0.0;
        g.iter_mut().for_each(|x| *x = 0.0);
        for (c, &(cos, sin)) in self.disp.freqs.iter().zip(&self.phases) {
            e += cos;
            for (gi, &ci) in g.iter_mut().zip(c) {
                *gi += ci as f64 * sin;
            }
        }
        g.iter_mut().for_each(|x| *x *= 4.0 * PI);
        (-2.0 * e, h)
    }
}
