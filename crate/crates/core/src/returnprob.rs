//! Probability that a nearest-neighbour random walk ever returns to the origin.
//!
//! With `τ` neighbours the generating function of returns gives
//! `P = 1 + 1/(τ·Re G(ε_min))`, where `Re G(ε_min) = −∫ ρ(ε)/(ε − ε_min) dε`.
//! Sampling the zone with stationary weight `1/(ε − ε_min)` turns that
//! integral into a plain average: the weighted mean energy is
//! `ε̄ = ε_min + 1/∫ρ/(ε − ε_min)`, and since `ε_min = −τ`,
//! `ε̄/ε_min = 1 − 1/(τ∫ρ/(ε − ε_min)) = P`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::Dispersion;
use crate::error::{Error, Result};
use crate::greens::{principal_value, GreensFunction};
use crate::sampler::{chain_rng, DosHistogram, Walker};

/// Proposals closer than this to the band minimum are rejected.
pub const MIN_DISTANCE: f64 = 1e-12;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    #[serde(rename = "P")]
    pub p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Total chain steps, burn-in included.
    pub n: u64,
    /// Effective sample size, `Var(ε)/SE²(ε̄)`.
    pub ess: f64,
}

impl ReturnEstimate {
    /// Half-width of the 95% interval.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }

    /// Whether two estimates agree within the combined 95% interval.
    pub fn agrees_with(&self, other: &ReturnEstimate) -> bool {
        (self.p - other.p).abs() <= self.half_width().hypot(other.half_width())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReturnConfig {
    /// Total steps over all chains, burn-in included.
    pub n_samples: u64,
    pub n_chains: usize,
    pub burn_in: u64,
    pub seed: u64,
    pub proposal_scales: (f64, f64),
    /// Batch count over all chains for the batch-means interval.
    pub batches: usize,
}

impl ReturnConfig {
    pub fn new(n_samples: u64, seed: u64) -> Self {
        Self { n_samples, n_chains: 8, burn_in: 10_000, seed, proposal_scales: (1e-5, 0.5), batches: 200 }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_chains == 0 || self.batches < 2 || self.batches % self.n_chains != 0 {
            return bad("batches must be a positive multiple of n_chains, at least 2");
        }
        if self.n_samples < self.burn_in * self.n_chains as u64 + self.batches as u64 {
            return bad("n_samples must exceed burn_in * n_chains plus one step per batch");
        }
        if !(self.proposal_scales.0 > 0.0 && self.proposal_scales.0 < self.proposal_scales.1) {
            return bad("proposal scales must satisfy 0 < min < max");
        }
        Ok(())
    }
}

/// Direct estimate with the default chain layout.
pub fn estimate_return(disp: &Dispersion, n_samples: u64, seed: u64) -> Result<ReturnEstimate> {
    estimate_return_with(disp, &ReturnConfig::new(n_samples, seed))
}

pub fn estimate_return_with(disp: &Dispersion, cfg: &ReturnConfig) -> Result<ReturnEstimate> {
    cfg.validate()?;
    let emin = disp.epsilon_min();
    let per_chain = cfg.batches / cfg.n_chains;
    let recorded = cfg.n_samples - cfg.burn_in * cfg.n_chains as u64;
    let chains: Vec<Vec<(f64, f64, u64)>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| {
            let steps = recorded * (c as u64 + 1) / cfg.n_chains as u64 - recorded * c as u64 / cfg.n_chains as u64;
            run_chain(disp, cfg, c, steps, per_chain)
        })
        .collect::<Result<_>>()?;
    // Per batch: Σε, Σε², count.
    let batches: Vec<(f64, f64, u64)> = chains.into_iter().flatten().collect();
    let n_tot: u64 = batches.iter().map(|b| b.2).sum();
    let mean = batches.iter().map(|b| b.0).sum::<f64>() / n_tot as f64;
    let var = batches.iter().map(|b| b.1).sum::<f64>() / n_tot as f64 - mean * mean;
    let k = batches.len() as f64;
    let means: Vec<f64> = batches.iter().map(|b| b.0 / b.2 as f64).collect();
    let m = means.iter().sum::<f64>() / k;
    let se = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
    let p = mean / emin;
    let half = Z95 * se / emin.abs();
    Ok(ReturnEstimate { p, ci_lo: p - half, ci_hi: p + half, n: cfg.n_samples, ess: var.max(0.0) / (se * se) })
}

fn run_chain(disp: &Dispersion, cfg: &ReturnConfig, chain: usize, steps: u64, nb: usize) -> Result<Vec<(f64, f64, u64)>> {
    let emin = disp.epsilon_min();
    let target = |e: f64| {
        let x = e - emin;
        (if x < MIN_DISTANCE { f64::NEG_INFINITY } else { -x.ln() }, 0)
    };
    let rng = chain_rng(cfg.seed, chain as u64);
    let bounds = (emin, f64::INFINITY);
    let mut walker = Walker::new(disp, rng, cfg.proposal_scales, bounds, true, &target)?;
    for _ in 0..cfg.burn_in {
        walker.step(&target)?;
    }
    let nb = nb as u64;
    let mut out = Vec::with_capacity(nb as usize);
    for k in 0..nb {
        let len = (k + 1) * steps / nb - k * steps / nb;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..len {
            walker.step(&target)?;
            s1 += walker.energy;
            s2 += walker.energy * walker.energy;
        }
        out.push((s1, s2, len));
    }
    Ok(out)
}

/// `P = 1 + 1/(τ·Re G(ε_min))`.
pub fn return_from_re_g(tau: usize, re_g_min: f64) -> Result<f64> {
    if re_g_min == 0.0 || !re_g_min.is_finite() {
        return Err(Error::ZeroGreens);
    }
    Ok(1.0 + 1.0 / (tau as f64 * re_g_min))
}

/// Evaluates the identity on a Green's function whose grid contains `ε_min`.
pub fn return_from_greens(gf: &GreensFunction) -> Result<f64> {
    return_from_re_g(gf.lattice.kissing_number(), gf.re_at_minimum()?)
}

/// The Green's-function route straight from a histogram, with a
/// batch-means interval from re-running the transform on every batch.
pub fn return_from_histogram(hist: &DosHistogram) -> Result<ReturnEstimate> {
    let tau = hist.lattice.kissing_number();
    let emin = hist.epsilon_min;
    let p_of = |edges: &[f64], density: &[f64]| {
        return_from_re_g(tau, principal_value(edges, density, emin)).unwrap_or(f64::NAN)
    };
    let est = hist.estimate(p_of);
    if !est.value.is_finite() {
        return Err(Error::ZeroGreens);
    }
    let half = Z95 * est.stderr;
    Ok(ReturnEstimate {
        p: est.value,
        ci_lo: est.value - half,
        ci_hi: est.value + half,
        n: hist.total_samples,
        ess: hist.ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_roots, Family, LatticeSpec};
    use crate::sampler::BinLayout;

    #[test]
    fn a1_returns_surely() {
        // The 1-D walk is recurrent: ∫ρ/(ε − ε_min) diverges, so the estimate sits near 1.
        let disp = Dispersion::new(&build_roots(LatticeSpec::new(Family::A, 1).unwrap()).unwrap());
        let est = estimate_return(&disp, 2_000_000, 3).unwrap();
        assert!(est.p > 0.99, "{est:?}");
    }

    #[test]
    fn point_mass_at_bottom_traps_the_walker() {
        // ρ concentrated in ever narrower bins above ε_min = −τ sends P → 1.
        let spec = LatticeSpec::new(Family::A, 1).unwrap();
        let mut last = 0.0;
        for w in [1e-1, 1e-3, 1e-6] {
            let layout = BinLayout::from_edges(vec![-2.0, -2.0 + w, 0.0]).unwrap();
            let mut h = DosHistogram::from_density(spec, layout, vec![1.0 / w, 0.0]).unwrap();
            h.epsilon_min = -2.0;
            let p = return_from_histogram(&h).unwrap().p;
            assert!(p > last && p < 1.0);
            last = p;
        }
        assert!(last > 1.0 - 1e-5);
    }

    #[test]
    fn zero_real_part_is_an_error() {
        assert!(matches!(return_from_re_g(240, 0.0), Err(Error::ZeroGreens)));
    }

    #[test]
    fn invariant_under_rotation() {
        let rs = build_roots(LatticeSpec::e6()).unwrap();
        let rot = crate::testutil::random_rotation(8, 17);
        let apply = |v: &[i32]| -> Vec<f64> { (0..8).map(|i| (0..8).map(|j| rot[(i, j)] * v[j] as f64).sum()).collect() };
        let roots: Vec<Vec<f64>> = rs.roots().iter().map(|r| apply(r)).collect();
        let basis: Vec<Vec<f64>> = rs.lattice_basis().iter().map(|b| apply(b)).collect();
        let rotated = Dispersion::from_embedding(rs.spec(), &roots, &basis).unwrap();
        let plain = Dispersion::new(&rs);
        let a = estimate_return(&plain, 4_000_000, 5).unwrap();
        let b = estimate_return(&rotated, 4_000_000, 6).unwrap();
        assert!(a.agrees_with(&b), "{a:?} {b:?}");
        assert!(a.ci_lo > 0.0 && a.ci_hi < 1.0);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let disp = Dispersion::new(&build_roots(LatticeSpec::e7()).unwrap());
        let a = estimate_return(&disp, 400_000, 9).unwrap();
        let b = estimate_return(&disp, 400_000, 9).unwrap();
        assert_eq!(a, b);
    }
}
