//! Critical points of the band: search, classification, deduplication,
//! band maximum, and the analytic DOS tails at quadratic extrema.
//!
//! Critical points of every index are zeros of `∇ε`, so a single
//! Levenberg–Marquardt least-squares solve on `g(u) = ∇ε(u)` (Jacobian = the
//! Hessian) is started from many uniform momenta. Runs that stall at a
//! nonzero minimum of `|∇ε|²` are discarded.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::dispersion::{wrap_unit, Dispersion, Evaluator, Momentum};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;

/// Exact fraction `num/den` with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    pub num: i64,
    pub den: u64,
}

impl Rational {
    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl std::str::FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("not a fraction: {s:?}"));
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
            None => (s.trim().parse().map_err(|_| bad())?, 1),
        };
        if den == 0 {
            return Err(bad());
        }
        Ok(Self { num, den })
    }
}

impl Serialize for Rational {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Best continued-fraction convergent `p/q` with `q <= max_denominator` and
/// `|x - p/q| <= 1e-8`, if any.
pub fn rationalize(x: f64, max_denominator: u64) -> Option<Rational> {
    const TOL: f64 = 1e-8;
    if !x.is_finite() {
        return None;
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
    let mut rest = x;
    for _ in 0..64 {
        let a = rest.floor();
        if a.abs() > 1e15 {
            return None;
        }
        let a = a as i128;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > max_denominator as i128 {
            return None;
        }
        if (x - p2 as f64 / q2 as f64).abs() <= TOL {
            return Some(Rational { num: p2 as i64, den: q2 as u64 });
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = rest - a as f64;
        if frac == 0.0 {
            return None;
        }
        rest = 1.0 / frac;
    }
    None
}

/// Eigenvalue counts of the Cartesian Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub n_down: usize,
    pub n_up: usize,
    pub n_zero: usize,
}

impl Signature {
    pub fn is_degenerate(&self) -> bool {
        self.n_zero > 0
    }
}

/// Counts negative, positive and zero eigenvalues of the Cartesian Hessian at `u`.
/// Eigenvalues with `|λ| <= zero_tol * max|λ|` count as zero.
pub fn classify(disp: &Dispersion, u: &[f64], zero_tol: f64) -> Result<Signature> {
    signature_of(&disp.cartesian_hessian(u), zero_tol)
}

fn signature_of(h: &DMatrix<f64>, zero_tol: f64) -> Result<Signature> {
    let eig = h.symmetric_eigenvalues();
    let scale = eig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Err(Error::FlatPoint);
    }
    let cut = zero_tol * scale;
    let n_down = eig.iter().filter(|&&l| l < -cut).count();
    let n_up = eig.iter().filter(|&&l| l > cut).count();
    Ok(Signature { n_down, n_up, n_zero: eig.len() - n_down - n_up })
}

/// One equivalence class of critical points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub energy: f64,
    pub rational: Option<Rational>,
    #[serde(flatten)]
    pub signature: Signature,
    pub degenerate: bool,
    /// Distinct positions per unit cell that were observed; `None` for
    /// degenerate classes, which are not isolated points.
    pub multiplicity: Option<usize>,
    /// Converged runs that landed in this class.
    pub hits: usize,
    /// Gradient norm (fractional coordinates) at `example_u`.
    pub grad_norm: f64,
    pub example_u: Vec<f64>,
}

impl CriticalPoint {
    pub fn momentum(&self) -> Momentum {
        Momentum::new(self.example_u.clone())
    }
}

/// Search tolerances and budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_starts: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub zero_tol: f64,
    pub energy_tol: f64,
    pub position_tol: f64,
    pub max_iter: usize,
    /// Ascent starts used for the band maximum and its multiplicity.
    pub max_starts: usize,
    pub max_denominator: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_starts: 10_000,
            seed: 0,
            grad_tol: 1e-10,
            zero_tol: 1e-6,
            energy_tol: 1e-8,
            position_tol: 1e-6,
            max_iter: 300,
            max_starts: 4000,
            max_denominator: 64,
        }
    }
}

/// Catalog of critical-point classes, sorted by energy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VanHoveCatalog {
    pub lattice: LatticeSpec,
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    /// `-ε_min / ε_max`.
    pub gamma: f64,
    pub gamma_rational: Option<Rational>,
    pub n_starts: usize,
    pub converged: usize,
    pub critical_points: Vec<CriticalPoint>,
}

impl VanHoveCatalog {
    pub fn minimum(&self) -> &CriticalPoint {
        &self.critical_points[0]
    }

    pub fn maximum(&self) -> &CriticalPoint {
        self.critical_points.last().expect("catalog is never empty")
    }

    /// Classes whose energy is within `tol` of `energy`.
    pub fn at_energy(&self, energy: f64, tol: f64) -> Vec<&CriticalPoint> {
        self.critical_points.iter().filter(|c| (c.energy - energy).abs() <= tol).collect()
    }

    /// `(energy, signature)` keys used to compare successive catalogs.
    pub fn keys(&self, energy_tol: f64) -> Vec<(i64, Signature)> {
        self.critical_points
            .iter()
            .map(|c| ((c.energy / (10.0 * energy_tol)).round() as i64, c.signature))
            .collect()
    }
}

/// A converged run.
#[derive(Debug, Clone)]
struct Hit {
    u: Vec<f64>,
    energy: f64,
    grad_norm: f64,
    signature: Signature,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn start_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `Q diag(f(λ)) Qᵀ g`.
fn spectral_apply(eig: &SymmetricEigen<f64, nalgebra::Dyn>, g: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let q = &eig.eigenvectors;
    let gv = DVector::from_column_slice(g);
    let mut coeff = q.tr_mul(&gv);
    for (c, &l) in coeff.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= f(l);
    }
    (q * coeff).as_slice().to_vec()
}

/// Levenberg–Marquardt on `∇ε = 0`, followed by pseudo-inverse Newton polishing.
///
/// Iteration continues past `grad_tol` while each step still cuts `|∇ε|` by
/// at least a tenth. At quadratic points that costs a step or two; at
/// degenerate points, where `|∇ε|` only falls like the cube of the distance,
/// it is what brings the soft Hessian eigenvalues below the zero threshold.
fn solve_gradient_zero(ev: &mut Evaluator<'_>, mut u: Vec<f64>, grad_tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let d = u.len();
    let mut g = vec![0.0; d];
    let mut trial_g = vec![0.0; d];
    let mut damping = 1e-3;
    let mut ratio = 0.0;
    for _ in 0..max_iter {
        let (_, h) = ev.energy_gradient_hessian(&u, &mut g);
        let gn = norm(&g);
        let converged = gn <= grad_tol;
        if gn == 0.0 || (converged && ratio > 0.9) {
            break;
        }
        let eig = h.symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x * x));
        let mut accepted = false;
        for _ in 0..if converged { 6 } else { 40 } {
            let lambda = damping * scale;
            let step = spectral_apply(&eig, &g, |l| -l / (l * l + lambda));
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + b).collect();
            ev.gradient_into(&trial, &mut trial_g);
            let tn = norm(&trial_g);
            if tn < gn {
                u = trial;
                ratio = tn / gn;
                damping = (damping / 3.0).max(1e-18);
                accepted = true;
                break;
            }
            damping *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    polish(ev, u, 5)
}

/// Newton steps on `∇ε = 0` with a pseudo-inverse Hessian; keeps the best iterate.
fn polish(ev: &mut Evaluator<'_>, u: Vec<f64>, steps: usize) -> (Vec<f64>, f64) {
    let d = u.len();
    let mut g = vec![0.0; d];
    ev.gradient_into(&u, &mut g);
    let mut best = (u, norm(&g));
    for _ in 0..steps {
        let (_, h) = ev.energy_gradient_hessian(&best.0, &mut g);
        let eig = h.symmetric_eigen();
        let cut = 1e-6 * eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let step = spectral_apply(&eig, &g, |l| if l.abs() > cut { -1.0 / l } else { 0.0 });
        let trial: Vec<f64> = best.0.iter().zip(&step).map(|(a, b)| a + b).collect();
        ev.gradient_into(&trial, &mut g);
        let gn = norm(&g);
        if gn < best.1 {
            best = (trial, gn);
        } else {
            break;
        }
    }
    best
}

/// Ascent with a saddle-free Newton direction and backtracking line search.
fn ascend(ev: &mut Evaluator<'_>, mut u: Vec<f64>, grad_tol: f64, max_iter: usize) -> Vec<f64> {
    let d = u.len();
    let mut g = vec![0.0; d];
    for _ in 0..max_iter {
        let (e, h) = ev.energy_gradient_hessian(&u, &mut g);
        if norm(&g) <= grad_tol {
            break;
        }
        let eig = h.symmetric_eigen();
        let floor = 1e-8 * eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut step = spectral_apply(&eig, &g, |l| 1.0 / (l.abs() + floor));
        let len = norm(&step);
        if len > 0.25 {
            step.iter_mut().for_each(|s| *s *= 0.25 / len);
        }
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
            if ev.energy(&trial) >= e + 1e-4 * alpha * slope {
                u = trial;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    u
}

/// Set of points on the unit torus, equal when every coordinate agrees to `tol` modulo 1.
#[derive(Debug)]
pub(crate) struct PositionSet {
    tol: f64,
    cells: u64,
    index: FxHashMap<Vec<u64>, Vec<usize>>,
    points: Vec<Vec<f64>>,
}

impl PositionSet {
    pub(crate) fn new(tol: f64) -> Self {
        let cells = ((0.25 / tol).floor() as u64).max(1);
        Self { tol, cells, index: FxHashMap::default(), points: Vec::new() }
    }

    pub(crate) fn len(&self) -> usize {
        self.points.len()
    }

    fn same(&self, a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| {
            let diff = x - y;
            (diff - diff.round()).abs() <= self.tol
        })
    }

    /// Inserts `u` (any representative); returns whether it was new.
    pub(crate) fn insert(&mut self, u: &[f64]) -> bool {
        let w: Vec<f64> = u.iter().map(|&x| wrap_unit(x)).collect();
        let n = self.cells;
        let mut key = Vec::with_capacity(w.len());
        let mut options: Vec<Vec<u64>> = Vec::with_capacity(w.len());
        for &x in &w {
            let scaled = x * n as f64;
            let cell = (scaled.floor() as u64).min(n - 1);
            let frac = scaled - cell as f64;
            key.push(cell);
            let mut opts = vec![cell];
            if frac < 0.25 {
                opts.push((cell + n - 1) % n);
            } else if frac > 0.75 {
                opts.push((cell + 1) % n);
            }
            options.push(opts);
        }
        let total: usize = options.iter().map(|o| o.len()).product();
        let mut probe = vec![0u64; w.len()];
        for combo in 0..total {
            let mut rest = combo;
            for (slot, opts) in probe.iter_mut().zip(&options) {
                *slot = opts[rest % opts.len()];
                rest /= opts.len();
            }
            if let Some(ids) = self.index.get(&probe) {
                if ids.iter().any(|&i| self.same(&self.points[i], &w)) {
                    return false;
                }
            }
        }
        self.index.entry(key).or_default().push(self.points.len());
        self.points.push(w);
        true
    }
}

fn converge_start(disp: &Dispersion, cfg: &SearchConfig, index: u64) -> Option<Hit> {
    let mut rng = start_rng(cfg.seed, index);
    let u0: Vec<f64> = (0..disp.dim()).map(|_| rng.random::<f64>()).collect();
    let mut ev = disp.evaluator();
    let (u, grad_norm) = solve_gradient_zero(&mut ev, u0, cfg.grad_tol, cfg.max_iter);
    hit_at(disp, &mut ev, u, grad_norm, cfg)
}

fn hit_at(disp: &Dispersion, ev: &mut Evaluator<'_>, u: Vec<f64>, grad_norm: f64, cfg: &SearchConfig) -> Option<Hit> {
    if !(grad_norm <= cfg.grad_tol) {
        return None;
    }
    let u: Vec<f64> = u.into_iter().map(wrap_unit).collect();
    let signature = classify(disp, &u, cfg.zero_tol).ok()?;
    Some(Hit { energy: ev.energy(&u), u, grad_norm, signature })
}

/// Result of the maximum search.
#[derive(Debug, Clone)]
pub struct MaximumSearch {
    pub energy: f64,
    pub u: Momentum,
    /// Distinct global-maximum positions found, one representative each.
    pub positions: Vec<Vec<f64>>,
}

/// Global band maximum from multistart ascents, with the distinct positions at which it is attained.
pub fn epsilon_max_search(disp: &Dispersion, cfg: &SearchConfig) -> Result<MaximumSearch> {
    // Separate RNG streams from the critical-point starts.
    let offset = 1u64 << 40;
    let peaks: Vec<Hit> = (0..cfg.max_starts as u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = start_rng(cfg.seed, offset + i);
            let u0: Vec<f64> = (0..disp.dim()).map(|_| rng.random::<f64>()).collect();
            let mut ev = disp.evaluator();
            let u = ascend(&mut ev, u0, cfg.grad_tol, cfg.max_iter);
            let (u, gn) = polish(&mut ev, u, 5);
            hit_at(disp, &mut ev, u, gn, cfg)
        })
        .collect();
    let best = peaks
        .iter()
        .max_by(|a, b| a.energy.total_cmp(&b.energy))
        .ok_or(Error::NoCriticalPoints { starts: cfg.max_starts })?;
    let d = disp.dim();
    // A flat top (fcc has a whole line of maxima) has zero modes but no ascent.
    if best.signature.n_up != 0 || best.signature.n_down == 0 {
        return Err(Error::NotAMaximum { index: best.signature.n_down, dim: d });
    }
    let mut set = PositionSet::new(cfg.position_tol);
    let mut positions = Vec::new();
    for p in &peaks {
        if (p.energy - best.energy).abs() <= cfg.energy_tol && p.signature == best.signature {
            for cand in [p.u.clone(), p.u.iter().map(|x| -x).collect()] {
                if set.insert(&cand) {
                    positions.push(cand.into_iter().map(wrap_unit).collect());
                }
            }
        }
    }
    Ok(MaximumSearch { energy: best.energy, u: Momentum::new(best.u.clone()), positions })
}

/// `(ε_max, argmax)` with default search settings.
pub fn epsilon_max(disp: &Dispersion) -> Result<(f64, Momentum)> {
    let found = epsilon_max_search(disp, &SearchConfig::default())?;
    Ok((found.energy, found.u))
}

struct ClassBuilder {
    best: Hit,
    hits: usize,
    positions: Option<PositionSet>,
}

/// Groups converged points by energy and signature and counts distinct positions modulo 1.
/// Each position and its inversion image are counted separately unless they coincide.
fn dedup(mut hits: Vec<Hit>, cfg: &SearchConfig) -> Vec<ClassBuilder> {
    hits.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let mut classes: Vec<ClassBuilder> = Vec::new();
    for h in hits {
        let found = classes
            .iter_mut()
            .rev()
            .take_while(|c| c.best.energy >= h.energy - 2.0 * cfg.energy_tol)
            .find(|c| c.best.signature == h.signature && (c.best.energy - h.energy).abs() <= cfg.energy_tol);
        let class = match found {
            Some(c) => c,
            None => {
                classes.push(ClassBuilder {
                    positions: (!h.signature.is_degenerate()).then(|| PositionSet::new(cfg.position_tol)),
                    best: h.clone(),
                    hits: 0,
                });
                classes.last_mut().unwrap()
            }
        };
        class.hits += 1;
        if let Some(set) = class.positions.as_mut() {
            set.insert(&h.u);
            set.insert(&h.u.iter().map(|x| -x).collect::<Vec<_>>());
        }
        if h.grad_norm < class.best.grad_norm {
            class.best = h;
        }
    }
    classes
}

fn run_starts(disp: &Dispersion, cfg: &SearchConfig, range: std::ops::Range<u64>) -> Vec<Hit> {
    range.into_par_iter().filter_map(|i| converge_start(disp, cfg, i)).collect()
}

fn assemble(disp: &Dispersion, cfg: &SearchConfig, mut hits: Vec<Hit>, n_starts: usize, max: &MaximumSearch) -> Result<VanHoveCatalog> {
    let converged = hits.len();
    if converged == 0 {
        return Err(Error::NoCriticalPoints { starts: n_starts });
    }
    // The band bottom sits at the origin; it is included directly.
    let mut ev = disp.evaluator();
    let origin = vec![0.0; disp.dim()];
    hits.extend(hit_at(disp, &mut ev, origin, 0.0, cfg));
    let mut max_hit = hit_at(disp, &mut ev, max.u.to_vec(), 0.0, cfg).expect("maximum is classified");
    max_hit.grad_norm = norm(&disp.gradient(&max_hit.u));
    hits.push(max_hit);

    let mut classes = dedup(hits, cfg);
    if let Some(top) = classes.last_mut() {
        if (top.best.energy - max.energy).abs() <= cfg.energy_tol {
            if let Some(set) = top.positions.as_mut() {
                for p in &max.positions {
                    set.insert(p);
                }
            }
        }
    }
    let critical_points: Vec<CriticalPoint> = classes
        .into_iter()
        .map(|c| CriticalPoint {
            energy: c.best.energy,
            rational: rationalize(c.best.energy, cfg.max_denominator),
            signature: c.best.signature,
            degenerate: c.best.signature.is_degenerate(),
            multiplicity: c.positions.map(|s| s.len()),
            hits: c.hits,
            grad_norm: c.best.grad_norm,
            example_u: c.best.u,
        })
        .collect();
    let epsilon_min = disp.epsilon_min();
    let gamma = -epsilon_min / max.energy;
    Ok(VanHoveCatalog {
        lattice: disp.spec(),
        epsilon_min,
        epsilon_max: max.energy,
        gamma,
        gamma_rational: rationalize(gamma, cfg.max_denominator),
        n_starts,
        converged,
        critical_points,
    })
}

/// Multistart critical-point search with `cfg.n_starts` uniform starts.
pub fn find_critical_points(disp: &Dispersion, cfg: &SearchConfig) -> Result<VanHoveCatalog> {
    let max = epsilon_max_search(disp, cfg)?;
    let hits = run_starts(disp, cfg, 0..cfg.n_starts as u64);
    assemble(disp, cfg, hits, cfg.n_starts, &max)
}

/// Doubles the number of starts until two successive catalogs have the same
/// `(energy, signature)` classes, or `max_rounds` is reached. Starts from
/// earlier rounds are reused.
pub fn find_until_stable(disp: &Dispersion, cfg: &SearchConfig, max_rounds: usize) -> Result<(VanHoveCatalog, bool)> {
    let max = epsilon_max_search(disp, cfg)?;
    let mut n = cfg.n_starts.max(1);
    let mut hits = run_starts(disp, cfg, 0..n as u64);
    let mut catalog = assemble(disp, cfg, hits.clone(), n, &max)?;
    for _ in 1..max_rounds {
        hits.extend(run_starts(disp, cfg, n as u64..2 * n as u64));
        n *= 2;
        let next = assemble(disp, cfg, hits.clone(), n, &max)?;
        let stable = next.keys(cfg.energy_tol) == catalog.keys(cfg.energy_tol);
        catalog = next;
        if stable {
            return Ok((catalog, true));
        }
    }
    Ok((catalog, false))
}

/// Leading coefficient `C` in `ρ(ε) ≈ C |ε - ε_ext|^{d/2-1}` near a quadratic extremum:
/// `C = (N/V) (2π)^{d/2} / (Γ(d/2) sqrt|det H|)`, with `V` the Brillouin-zone
/// volume and `N` the number of extremal points per cell.
pub fn tail_coefficient(disp: &Dispersion, extremum: &CriticalPoint, multiplicity: usize) -> Result<f64> {
    if extremum.signature.n_zero > 0 {
        return Err(Error::DegenerateExtremum { n_zero: extremum.signature.n_zero });
    }
    let det = disp.cartesian_hessian(&extremum.example_u).determinant().abs();
    Ok(tail_coefficient_from_det(disp.dim(), disp.bz_volume(), det, multiplicity))
}

pub(crate) fn tail_coefficient_from_det(dim: usize, bz_volume: f64, det: f64, multiplicity: usize) -> f64 {
    let half = dim as f64 / 2.0;
    multiplicity as f64 / bz_volume * (2.0 * std::f64::consts::PI).powf(half) / (gamma(half) * det.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_roots, Family};
    use std::f64::consts::PI;

    fn disp(spec: LatticeSpec) -> Dispersion {
        Dispersion::new(&build_roots(spec).unwrap())
    }

    #[test]
    fn rationalize_examples() {
        assert_eq!(rationalize(11.5625, 64), Some(Rational { num: 185, den: 16 }));
        assert_eq!(rationalize(320.0 / 27.0, 64), Some(Rational { num: 320, den: 27 }));
        assert_eq!(rationalize(3.6, 64), Some(Rational { num: 18, den: 5 }));
        assert_eq!(rationalize(-72.0, 64), Some(Rational { num: -72, den: 1 }));
        assert_eq!(rationalize(-240.0 / 16.0, 64).unwrap().to_string(), "-15");
        assert_eq!(rationalize(PI, 64), None);
        assert_eq!(rationalize(1.0 / 65.0, 64), None);
        assert_eq!("185/16".parse::<Rational>().unwrap(), Rational { num: 185, den: 16 });
    }

    #[test]
    fn classify_band_bottom() {
        for (spec, d) in [(LatticeSpec::e6(), 6), (LatticeSpec::e7(), 7), (LatticeSpec::e8(), 8)] {
            let s = classify(&disp(spec), &vec![0.0; d], 1e-6).unwrap();
            assert_eq!(s, Signature { n_down: 0, n_up: d, n_zero: 0 });
        }
    }

    #[test]
    fn position_set_wraps_and_tolerates() {
        let mut s = PositionSet::new(1e-6);
        assert!(s.insert(&[0.5, 0.0]));
        assert!(!s.insert(&[0.5 + 4e-7, 1.0 - 3e-7]));
        assert!(!s.insert(&[-0.5, 2.0]));
        assert!(s.insert(&[0.5, 0.25]));
        assert!(s.insert(&[0.5 + 3e-6, 0.0]));
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn lm_converges_on_a2() {
        let d = disp(LatticeSpec::new(Family::A, 2).unwrap());
        let cfg = SearchConfig { n_starts: 200, max_starts: 100, ..Default::default() };
        let cat = find_critical_points(&d, &cfg).unwrap();
        let energies: Vec<f64> = cat.critical_points.iter().map(|c| c.energy).collect();
        // Triangular lattice: minimum -6, saddles at 2 (three M points), maxima at 3 (two K points).
        assert_eq!(energies.len(), 3, "{energies:?}");
        assert!((energies[1] - 2.0).abs() < 1e-9);
        assert!((cat.epsilon_max - 3.0).abs() < 1e-9);
        assert_eq!(cat.maximum().multiplicity, Some(2));
        assert_eq!(cat.critical_points[1].multiplicity, Some(3));
        assert_eq!(cat.minimum().multiplicity, Some(1));
        assert_eq!(cat.gamma_rational, Some(Rational { num: 2, den: 1 }));
    }

    #[test]
    fn tail_coefficient_matches_isotropic_closed_form() {
        for spec in [LatticeSpec::e6(), LatticeSpec::e7(), LatticeSpec::e8()] {
            let d = disp(spec);
            let n = spec.rank();
            let bottom = CriticalPoint {
                energy: d.epsilon_min(),
                rational: None,
                signature: Signature { n_down: 0, n_up: n, n_zero: 0 },
                degenerate: false,
                multiplicity: Some(1),
                hits: 1,
                grad_norm: 0.0,
                example_u: vec![0.0; n],
            };
            let got = tail_coefficient(&d, &bottom, 1).unwrap();
            let diag = 8.0 * spec.kissing_number() as f64 / n as f64;
            let want = tail_coefficient_from_det(n, d.bz_volume(), diag.powi(n as i32), 1);
            assert!(((got - want) / want).abs() < 1e-9, "{spec}: {got} vs {want}");
        }
    }

    #[test]
    fn degenerate_extremum_refused() {
        let d = disp(LatticeSpec::e6());
        let cp = CriticalPoint {
            energy: 8.0,
            rational: None,
            signature: Signature { n_down: 1, n_up: 0, n_zero: 5 },
            degenerate: true,
            multiplicity: None,
            hits: 1,
            grad_norm: 0.0,
            example_u: vec![0.0; 6],
        };
        assert!(matches!(tail_coefficient(&d, &cp, 1), Err(Error::DegenerateExtremum { n_zero: 5 })));
    }
}
