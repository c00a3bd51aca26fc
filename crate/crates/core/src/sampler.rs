//! Density of states by Metropolis–Hastings sampling of the Brillouin zone.
//!
//! Chains target the density `∝ w(ε(u))` on the unit torus of fractional
//! momenta and the histogram is reweighted by `1/w`, so bin values estimate
//! `ρ(ε)`. With `w ≈ 1/ρ` the chain spends roughly equal time at every
//! energy, which is what makes the power-law tails at the band edges
//! resolvable on a log scale.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{Dispersion, Evaluator};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;

/// Samples within this distance outside `[ε_min, ε_max]` are clamped into the end bins.
pub const RANGE_SLACK: f64 = 1e-6;

/// Stationary weight of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Uniform,
    TailFlattened,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub lattice: LatticeSpec,
    /// Total Metropolis steps over all chains, burn-in included.
    pub n_samples: u64,
    pub n_chains: usize,
    /// Discarded steps per chain.
    pub burn_in: u64,
    pub seed: u64,
    /// Uniform bins between the two tail regions.
    pub bins: usize,
    /// Log-spaced bins within distance 1 of each band edge.
    pub tail_bins: usize,
    /// `(min_step, max_step)`; step lengths are drawn log-uniformly.
    pub proposal_scales: (f64, f64),
    pub weight_mode: WeightMode,
    pub epsilon_max: f64,
    pub batches_per_chain: usize,
}

impl SamplerConfig {
    pub fn new(lattice: LatticeSpec, epsilon_max: f64) -> Self {
        Self {
            lattice,
            n_samples: 10_000_000,
            n_chains: 8,
            burn_in: 10_000,
            seed: 0,
            bins: 2000,
            tail_bins: 200,
            proposal_scales: (1e-5, 0.5),
            weight_mode: WeightMode::TailFlattened,
            epsilon_max,
            batches_per_chain: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_chains == 0 || self.bins == 0 || self.batches_per_chain == 0 {
            return bad("n_chains, bins and batches_per_chain must be positive".into());
        }
        if self.n_samples <= self.burn_in * self.n_chains as u64 {
            return bad(format!(
                "n_samples = {} does not exceed burn_in x n_chains = {}",
                self.n_samples,
                self.burn_in * self.n_chains as u64
            ));
        }
        let (lo, hi) = self.proposal_scales;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return bad(format!("proposal scales must satisfy 0 < min <= max <= 0.5, got ({lo}, {hi})"));
        }
        if !(self.epsilon_max > -(self.lattice.kissing_number() as f64)) {
            return bad(format!("epsilon_max = {} is not above the band bottom", self.epsilon_max));
        }
        let per_chain = self.n_samples / self.n_chains as u64 - self.burn_in;
        if per_chain < self.batches_per_chain as u64 {
            return bad("fewer recorded steps per chain than batches".into());
        }
        Ok(())
    }

    fn recorded_steps(&self, chain: usize) -> u64 {
        let base = self.n_samples / self.n_chains as u64;
        let extra = (chain as u64) < self.n_samples % self.n_chains as u64;
        base + extra as u64 - self.burn_in
    }
}

/// Bin edges: log-spaced near each band edge, uniform in between.
///
/// Each tail region spans `min(1, (hi - lo)/4)`; its first bin covers the
/// innermost `1e-4` of that span and the rest are log-spaced out to the full span.
#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    edges: Vec<f64>,
    tail_bins: usize,
    bulk_bins: usize,
    span: f64,
}

impl BinLayout {
    pub fn new(lo: f64, hi: f64, bulk_bins: usize, tail_bins: usize) -> Self {
        assert!(hi > lo && bulk_bins > 0);
        let span = if tail_bins == 0 { 0.0 } else { (0.25 * (hi - lo)).min(1.0) };
        let r = |k: usize| -> f64 {
            match k {
                0 => 0.0,
                _ if k == tail_bins => 1.0,
                _ if tail_bins == 1 => 1.0,
                _ => 10f64.powf(-4.0 + 4.0 * (k - 1) as f64 / (tail_bins - 1) as f64),
            }
        };
        let mut edges = Vec::with_capacity(2 * tail_bins + bulk_bins + 1);
        for k in 0..tail_bins {
            edges.push(lo + span * r(k));
        }
        let (blo, bhi) = (lo + span, hi - span);
        for j in 0..bulk_bins {
            edges.push(blo + (bhi - blo) * j as f64 / bulk_bins as f64);
        }
        for m in 0..tail_bins {
            edges.push(hi - span * r(tail_bins - m));
        }
        edges.push(hi);
        Self { edges, tail_bins, bulk_bins, span }
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse("bin edges must be strictly increasing".into()));
        }
        let n = edges.len() - 1;
        Ok(Self { edges, tail_bins: 0, bulk_bins: n, span: 0.0 })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn width(&self, b: usize) -> f64 {
        self.edges[b + 1] - self.edges[b]
    }

    pub fn midpoint(&self, b: usize) -> f64 {
        0.5 * (self.edges[b] + self.edges[b + 1])
    }

    /// Bin containing `e`, clamped to the end bins.
    pub fn locate(&self, e: f64) -> usize {
        let n = self.len();
        let t = self.tail_bins;
        let guess = if self.span > 0.0 && e < self.edges[t] {
            let x = (e - self.lo()) / self.span;
            if x < 1e-4 {
                0
            } else {
                1 + ((x.log10() + 4.0) * (t - 1) as f64 / 4.0) as usize
            }
        } else if self.span > 0.0 && e >= self.edges[t + self.bulk_bins] {
            let x = (self.hi() - e) / self.span;
            if x < 1e-4 {
                n - 1
            } else {
                (n - 2).saturating_sub(((x.log10() + 4.0) * (t - 1) as f64 / 4.0) as usize)
            }
        } else {
            let (blo, bhi) = (self.edges[t], self.edges[t + self.bulk_bins]);
            t + ((e - blo) / (bhi - blo) * self.bulk_bins as f64) as usize
        };
        let mut b = guess.min(n - 1);
        while b > 0 && e < self.edges[b] {
            b -= 1;
        }
        while b + 1 < n && e >= self.edges[b + 1] {
            b += 1;
        }
        b
    }
}

/// Log of the sampling weight, piecewise: power laws `|ε - ε_ext|^{1-d/2}`
/// near the band edges, linear interpolation of `-ln ρ_pilot` between bin
/// midpoints in the bulk. The pieces meet continuously at the outermost
/// bulk midpoints.
///
/// Weights built from a pilot also carry a factor `s/x` within the log-binned
/// edge regions (`x` the distance to the edge, `s` the region width, `x`
/// floored at the innermost bin width). Without it the chain is flat in
/// energy and the bins nearest the edges see almost no visits; with it the
/// chain is flat in `ln x` there.
#[derive(Debug, Clone)]
pub struct WeightFunction {
    layout: BinLayout,
    exponent: f64,
    epsilon_min: f64,
    epsilon_max: f64,
    first: usize,
    last: usize,
    /// `ln w` at bin midpoints for bins `first..=last`.
    knots: Vec<f64>,
    lo_const: f64,
    hi_const: f64,
    /// Width of the edge regions carrying the `1/x` factor; zero switches it off.
    edge_span: f64,
    log_floor: f64,
}

/// Smallest band-edge distance used when evaluating the tail power laws.
const MIN_EDGE_DISTANCE: f64 = 1e-14;

impl WeightFunction {
    /// Builds the weight from a (uniform-mode) pilot histogram and raw per-bin counts.
    pub fn from_pilot(hist: &DosHistogram, counts: &[u64], dim: usize, min_count: u64) -> Result<Self> {
        let layout = hist.layout.clone();
        let n = layout.len();
        let bulk = layout.tail_bins..layout.tail_bins + layout.bulk_bins;
        let populated = |b: usize| counts[b] >= min_count;
        let (lo_pop, hi_pop) = (bulk.clone().find(|&b| populated(b)), bulk.clone().rfind(|&b| populated(b)));
        if let (Some(a), Some(z)) = (lo_pop, hi_pop) {
            if let Some(b) = (a..=z).find(|&b| counts[b] == 0) {
                return Err(Error::EmptyBulkBins { bin: b });
            }
        }
        // Trust the contiguous run of well-populated bins around the peak;
        // beyond it, sparse tail bins are left to the power laws.
        let peak = (0..n).max_by_key(|&b| counts[b]).unwrap_or(0);
        if n == 0 || !populated(peak) {
            return Err(Error::EmptyBulkBins { bin: n / 2 });
        }
        let mut first = peak;
        while first > 0 && populated(first - 1) {
            first -= 1;
        }
        let mut last = peak;
        while last + 1 < n && populated(last + 1) {
            last += 1;
        }
        let smoothed: Vec<f64> = (first..=last)
            .map(|b| {
                let lo = b.saturating_sub(2).max(first);
                let hi = (b + 2).min(last);
                (lo..=hi).map(|k| hist.density[k]).sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        let knots: Vec<f64> = smoothed.iter().map(|r| -r.ln()).collect();
        let exponent = 1.0 - dim as f64 / 2.0;
        let epsilon_min = hist.epsilon_min;
        let epsilon_max = hist.epsilon_max;
        let x_lo = (layout.midpoint(first) - epsilon_min).max(MIN_EDGE_DISTANCE);
        let x_hi = (epsilon_max - layout.midpoint(last)).max(MIN_EDGE_DISTANCE);
        let lo_const = knots[0] - exponent * x_lo.ln();
        let hi_const = knots[knots.len() - 1] - exponent * x_hi.ln();
        let (edge_span, log_floor) = (layout.span, layout.span * 1e-4);
        let w = Self { layout, exponent, epsilon_min, epsilon_max, first, last, knots, lo_const, hi_const, edge_span, log_floor };
        Ok(w)
    }

    /// Pure power laws at both edges, meeting where they are equal.
    pub fn power_law(epsilon_min: f64, epsilon_max: f64, dim: usize) -> Self {
        let layout = BinLayout::new(epsilon_min, epsilon_max, 1, 0);
        let mid = 0.5 * (epsilon_min + epsilon_max);
        let exponent = 1.0 - dim as f64 / 2.0;
        let k = exponent * (mid - epsilon_min).ln();
        Self {
            layout,
            exponent,
            epsilon_min,
            epsilon_max,
            first: 0,
            last: 0,
            knots: vec![k],
            lo_const: 0.0,
            hi_const: 0.0,
            edge_span: 0.0,
            log_floor: 0.0,
        }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Energies where the tail power laws take over.
    pub fn splice_points(&self) -> (f64, f64) {
        (self.layout.midpoint(self.first), self.layout.midpoint(self.last))
    }

    pub fn log_weight(&self, e: f64) -> f64 {
        self.base_log_weight(e) + self.edge_factor(e - self.epsilon_min) + self.edge_factor(self.epsilon_max - e)
    }

    fn base_log_weight(&self, e: f64) -> f64 {
        let (lo, hi) = self.splice_points();
        if e <= lo {
            return self.lo_const + self.exponent * (e - self.epsilon_min).max(MIN_EDGE_DISTANCE).ln();
        }
        if e >= hi {
            return self.hi_const + self.exponent * (self.epsilon_max - e).max(MIN_EDGE_DISTANCE).ln();
        }
        let b = self.layout.locate(e);
        let m = self.layout.midpoint(b);
        let (a, c) = if e < m { (b - 1, b) } else { (b, b + 1) };
        let (ma, mc) = (self.layout.midpoint(a), self.layout.midpoint(c));
        let (ka, kc) = (self.knots[a - self.first], self.knots[c - self.first]);
        ka + (kc - ka) * (e - ma) / (mc - ma)
    }

    fn edge_factor(&self, x: f64) -> f64 {
        if self.edge_span > 0.0 && x < self.edge_span {
            (self.edge_span / x.max(self.log_floor)).ln()
        } else {
            0.0
        }
    }

    pub fn weight(&self, e: f64) -> f64 {
        self.log_weight(e).exp()
    }
}

/// Binned density estimate with batch-means error bars.
#[derive(Debug, Clone)]
pub struct DosHistogram {
    pub lattice: LatticeSpec,
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    layout: BinLayout,
    pub density: Vec<f64>,
    pub stderr: Vec<f64>,
    pub total_samples: u64,
    /// Kish effective sample size of the importance weights, `(Σw)²/Σw²`.
    pub ess: f64,
    sums: Vec<f64>,
    /// Raw per-bin visit counts of the chains, before reweighting.
    pub visits: Vec<u64>,
    /// Raw per-bin weight sums of each batch, chain-major.
    batches: Vec<Vec<f64>>,
    sum_w: f64,
    sum_w2: f64,
}

/// A scalar estimate with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl DosHistogram {
    fn empty(lattice: LatticeSpec, epsilon_min: f64, epsilon_max: f64, layout: BinLayout) -> Self {
        let n = layout.len();
        Self {
            lattice,
            epsilon_min,
            epsilon_max,
            layout,
            density: vec![0.0; n],
            stderr: vec![f64::NAN; n],
            total_samples: 0,
            ess: 0.0,
            sums: vec![0.0; n],
            visits: vec![0; n],
            batches: Vec::new(),
            sum_w: 0.0,
            sum_w2: 0.0,
        }
    }

    /// Histogram with the given densities and no sampling record (e.g. a synthetic density).
    pub fn from_density(lattice: LatticeSpec, layout: BinLayout, density: Vec<f64>) -> Result<Self> {
        if density.len() != layout.len() || density.iter().any(|&r| !(r >= 0.0)) {
            return Err(Error::InvalidConfig("density must be non-negative, one value per bin".into()));
        }
        let mut h = Self::empty(lattice, layout.lo(), layout.hi(), layout);
        h.sums = (0..h.len()).map(|b| density[b] * h.layout.width(b)).collect();
        h.density = density;
        Ok(h)
    }

    pub fn layout(&self) -> &BinLayout {
        &self.layout
    }

    pub fn edges(&self) -> &[f64] {
        self.layout.edges()
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    pub fn n_batches(&self) -> usize {
        self.batches.len()
    }

    /// Recomputes densities and standard errors from the raw sums so that `Σ ρ·width = 1`.
    pub fn normalize(&mut self) {
        self.density = density_from_sums(&self.layout, &self.sums);
        let k = self.batches.len();
        if k < 2 {
            self.stderr = vec![f64::NAN; self.len()];
            return;
        }
        let per_batch: Vec<Vec<f64>> = self.batches.iter().map(|s| density_from_sums(&self.layout, s)).collect();
        self.stderr = (0..self.len())
            .map(|b| {
                let mean = per_batch.iter().map(|r| r[b]).sum::<f64>() / k as f64;
                let var = per_batch.iter().map(|r| (r[b] - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
                (var / k as f64).sqrt()
            })
            .collect();
    }

    /// `Σ ρ·width`.
    pub fn total_mass(&self) -> f64 {
        (0..self.len()).map(|b| self.density[b] * self.layout.width(b)).sum()
    }

    /// `Σ midpointⁿ·ρ·width`.
    pub fn moment(&self, n: i32) -> f64 {
        moment_of(self.layout.edges(), &self.density, n)
    }

    /// Applies `f(edges, density)` to the full histogram and to every batch;
    /// the standard error is the spread of the batch values over `sqrt(#batches)`.
    pub fn estimate(&self, f: impl Fn(&[f64], &[f64]) -> f64) -> Estimate {
        let value = f(self.layout.edges(), &self.density);
        let k = self.batches.len();
        if k < 2 {
            return Estimate { value, stderr: f64::NAN };
        }
        let vals: Vec<f64> = self
            .batches
            .iter()
            .map(|s| f(self.layout.edges(), &density_from_sums(&self.layout, s)))
            .collect();
        let mean = vals.iter().sum::<f64>() / k as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        Estimate { value, stderr: (var / k as f64).sqrt() }
    }

    /// Pools the raw sums and batches of two histograms over the same bins.
    pub fn merge(&self, other: &DosHistogram) -> Result<DosHistogram> {
        if self.layout != other.layout || self.lattice != other.lattice {
            return Err(Error::InvalidConfig("histograms have different lattices or bins".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in out.visits.iter_mut().zip(&other.visits) {
            *a += b;
        }
        out.batches.extend(other.batches.iter().cloned());
        out.total_samples += other.total_samples;
        out.sum_w += other.sum_w;
        out.sum_w2 += other.sum_w2;
        out.ess = if out.sum_w2 > 0.0 { out.sum_w * out.sum_w / out.sum_w2 } else { 0.0 };
        out.normalize();
        Ok(out)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "# schema_version=1").unwrap();
        writeln!(s, "# lattice={}", self.lattice).unwrap();
        writeln!(s, "# epsilon_min={}", self.epsilon_min).unwrap();
        writeln!(s, "# epsilon_max={}", self.epsilon_max).unwrap();
        writeln!(s, "# total_samples={}", self.total_samples).unwrap();
        writeln!(s, "# ess={}", self.ess).unwrap();
        writeln!(s, "bin_lo,bin_hi,density,stderr").unwrap();
        for b in 0..self.len() {
            let e = self.layout.edges();
            writeln!(s, "{},{},{},{}", e[b], e[b + 1], self.density[b], self.stderr[b]).unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Two columns, bin midpoint and density, for log-scale plots.
    pub fn write_gnuplot(&self, mut w: impl Write) -> Result<()> {
        let mut s = format!("# {} density of states\n# midpoint density\n", self.lattice);
        for b in 0..self.len() {
            writeln!(s, "{} {}", self.layout.midpoint(b), self.density[b]).unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<DosHistogram> {
        let mut meta = std::collections::HashMap::new();
        let mut edges = Vec::new();
        let mut density = Vec::new();
        let mut stderr = Vec::new();
        let mut header = false;
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !header {
                if line != "bin_lo,bin_hi,density,stderr" {
                    return Err(Error::Parse(format!("unexpected DOS header {line:?}")));
                }
                header = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("line {}: bad number {s:?}", i + 1)));
            if cols.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 columns", i + 1)));
            }
            let (lo, hi) = (num(cols[0])?, num(cols[1])?);
            match edges.last() {
                None => edges.extend([lo, hi]),
                Some(&prev) if prev == lo => edges.push(hi),
                Some(_) => return Err(Error::Parse(format!("line {}: bins are not contiguous", i + 1))),
            }
            density.push(num(cols[2])?);
            stderr.push(num(cols[3])?);
        }
        let get = |k: &str| meta.get(k).ok_or_else(|| Error::Parse(format!("missing metadata {k:?}")));
        let lattice = LatticeSpec::from_str(get("lattice")?)?;
        let parse_f = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Parse(format!("bad {k}"))) };
        let layout = BinLayout::from_edges(edges)?;
        let mut h = DosHistogram::from_density(lattice, layout, density)?;
        h.epsilon_min = parse_f("epsilon_min")?;
        h.epsilon_max = parse_f("epsilon_max")?;
        h.total_samples = get("total_samples")?.parse().map_err(|_| Error::Parse("bad total_samples".into()))?;
        h.ess = parse_f("ess")?;
        h.stderr = stderr;
        Ok(h)
    }
}

fn density_from_sums(layout: &BinLayout, sums: &[f64]) -> Vec<f64> {
    let total: f64 = sums.iter().sum();
    if total == 0.0 {
        return vec![0.0; sums.len()];
    }
    sums.iter().enumerate().map(|(b, s)| s / (total * layout.width(b))).collect()
}

/// Which end of the band a tail fit looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandEdge {
    Lower,
    Upper,
}

/// Fits `ln ρ = c + s·ln x` over bins whose midpoint distance `x` from the
/// chosen edge lies in `window`, weighting each bin by `(ρ/σ)²`.
///
/// Returns the slope `s` with its weighted-least-squares standard error, or
/// `None` when fewer than three bins carry a positive density and a finite error.
pub fn tail_exponent(hist: &DosHistogram, edge: BandEdge, window: (f64, f64)) -> Option<Estimate> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0);
    for b in 0..hist.len() {
        let m = hist.layout.midpoint(b);
        let x = match edge {
            BandEdge::Lower => m - hist.epsilon_min,
            BandEdge::Upper => hist.epsilon_max - m,
        };
        let (rho, se) = (hist.density[b], hist.stderr[b]);
        if x < window.0 || x > window.1 || !(rho > 0.0) || !(se > 0.0) {
            continue;
        }
        let w = (rho / se).powi(2);
        let (lx, ly) = (x.ln(), rho.ln());
        sw += w;
        sx += w * lx;
        sy += w * ly;
        sxx += w * lx * lx;
        sxy += w * lx * ly;
        n += 1;
    }
    let det = sw * sxx - sx * sx;
    if n < 3 || !(det > 0.0) {
        return None;
    }
    Some(Estimate { value: (sw * sxy - sx * sy) / det, stderr: (sw / det).sqrt() })
}

pub(crate) fn moment_of(edges: &[f64], density: &[f64], n: i32) -> f64 {
    density
        .iter()
        .enumerate()
        .map(|(b, r)| {
            let (lo, hi) = (edges[b], edges[b + 1]);
            (0.5 * (lo + hi)).powi(n) * r * (hi - lo)
        })
        .sum()
}

/// One Metropolis chain over the unit torus. Proposals are isotropic in
/// momentum space (see [`Dispersion::step_frame`]) with log-uniform lengths.
pub(crate) struct Walker<'a> {
    ev: Evaluator<'a>,
    rng: ChaCha8Rng,
    u: Vec<f64>,
    trial: Vec<f64>,
    normal: Vec<f64>,
    /// Row-major `d x d` map from an isotropic momentum step to fractional coordinates.
    frame: Vec<f64>,
    pub(crate) energy: f64,
    pub(crate) log_weight: f64,
    /// Caller-defined value attached to the current state (e.g. its bin).
    pub(crate) tag: usize,
    ln_step_lo: f64,
    ln_step_span: f64,
    bounds: (f64, f64),
    allow_zero_weight: bool,
}

pub(crate) fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

impl<'a> Walker<'a> {
    /// `target(ε)` returns `(ln w, tag)`. A zero weight (`ln w = -∞`) is a
    /// hard rejection when `allow_zero_weight`, a breach otherwise.
    pub(crate) fn new(
        disp: &'a Dispersion,
        mut rng: ChaCha8Rng,
        scales: (f64, f64),
        bounds: (f64, f64),
        allow_zero_weight: bool,
        target: &impl Fn(f64) -> (f64, usize),
    ) -> Result<Self> {
        let mut ev = disp.evaluator();
        let d = disp.dim();
        loop {
            let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let energy = ev.energy(&u);
            let (log_weight, tag) = target(energy);
            if log_weight.is_finite() {
                let frame = disp.step_frame();
                return Ok(Self {
                    ev,
                    rng,
                    trial: vec![0.0; d],
                    normal: vec![0.0; d],
                    frame: (0..d * d).map(|k| frame[(k / d, k % d)]).collect(),
                    u,
                    energy,
                    log_weight,
                    tag,
                    ln_step_lo: scales.0.ln(),
                    ln_step_span: (scales.1 / scales.0).ln(),
                    bounds,
                    allow_zero_weight,
                });
            }
            if !allow_zero_weight {
                return Err(Error::WeightBreach { energy, weight: log_weight.exp() });
            }
        }
    }

    /// One proposal; returns whether it was accepted.
    #[inline]
    pub(crate) fn step(&mut self, target: &impl Fn(f64) -> (f64, usize)) -> Result<bool> {
        let mut norm2 = 0.0;
        for z in self.normal.iter_mut() {
            *z = self.rng.sample(StandardNormal);
            norm2 += *z * *z;
        }
        let len = (self.ln_step_lo + self.ln_step_span * self.rng.random::<f64>()).exp();
        let scale = len / norm2.sqrt();
        let d = self.u.len();
        for (i, t) in self.trial.iter_mut().enumerate() {
            let row = &self.frame[i * d..(i + 1) * d];
            let step: f64 = row.iter().zip(&self.normal).map(|(m, z)| m * z).sum();
            let y = self.u[i] + scale * step;
            *t = y - y.floor();
        }
        let e = self.ev.energy(&self.trial);
        let (lo, hi) = self.bounds;
        if !(e >= lo - RANGE_SLACK && e <= hi + RANGE_SLACK) {
            return Err(Error::EnergyOutOfRange { energy: e, lo, hi });
        }
        let (lw, tag) = target(e);
        if lw.is_nan() || lw == f64::INFINITY || (lw == f64::NEG_INFINITY && !self.allow_zero_weight) {
            return Err(Error::WeightBreach { energy: e, weight: lw.exp() });
        }
        let accept = lw >= self.log_weight || self.rng.random::<f64>() < (lw - self.log_weight).exp();
        if accept {
            std::mem::swap(&mut self.u, &mut self.trial);
            self.energy = e;
            self.log_weight = lw;
            self.tag = tag;
        }
        Ok(accept)
    }
}

/// Per-chain accumulation for the histogram.
struct ChainTally {
    batches: Vec<Vec<f64>>,
    visits: Vec<u64>,
    sum_w: f64,
    sum_w2: f64,
    steps: u64,
}

fn run_dos_chain(
    disp: &Dispersion,
    cfg: &SamplerConfig,
    layout: &BinLayout,
    weight: Option<&WeightFunction>,
    chain: usize,
) -> Result<ChainTally> {
    let target = |e: f64| {
        let lw = weight.map_or(0.0, |w| w.log_weight(e));
        (lw, layout.locate(e))
    };
    let rng = chain_rng(cfg.seed, chain as u64);
    let bounds = (disp.epsilon_min(), cfg.epsilon_max);
    let mut walker = Walker::new(disp, rng, cfg.proposal_scales, bounds, false, &target)?;
    for _ in 0..cfg.burn_in {
        walker.step(&target)?;
    }
    let steps = cfg.recorded_steps(chain);
    let nb = cfg.batches_per_chain as u64;
    let mut batches = Vec::with_capacity(nb as usize);
    let (mut sum_w, mut sum_w2) = (0.0, 0.0);
    let mut visits = vec![0u64; layout.len()];
    let mut inv_w = (-walker.log_weight).exp();
    let mut current_lw = walker.log_weight;
    for k in 0..nb {
        let mut sums = vec![0.0; layout.len()];
        let len = (k + 1) * steps / nb - k * steps / nb;
        for _ in 0..len {
            walker.step(&target)?;
            if walker.log_weight != current_lw {
                current_lw = walker.log_weight;
                inv_w = (-current_lw).exp();
            }
            sums[walker.tag] += inv_w;
            visits[walker.tag] += 1;
            sum_w += inv_w;
            sum_w2 += inv_w * inv_w;
        }
        batches.push(sums);
    }
    Ok(ChainTally { batches, visits, sum_w, sum_w2, steps })
}

fn sample_with(disp: &Dispersion, cfg: &SamplerConfig, weight: Option<&WeightFunction>) -> Result<DosHistogram> {
    cfg.validate()?;
    if disp.spec() != cfg.lattice {
        return Err(Error::InvalidConfig(format!("config is for {}, band is {}", cfg.lattice, disp.spec())));
    }
    let layout = BinLayout::new(disp.epsilon_min(), cfg.epsilon_max, cfg.bins, cfg.tail_bins);
    let tallies: Vec<ChainTally> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_dos_chain(disp, cfg, &layout, weight, c))
        .collect::<Result<_>>()?;
    let mut h = DosHistogram::empty(cfg.lattice, disp.epsilon_min(), cfg.epsilon_max, layout);
    for t in tallies {
        for s in &t.batches {
            for (a, b) in h.sums.iter_mut().zip(s) {
                *a += b;
            }
        }
        h.batches.extend(t.batches);
        for (a, b) in h.visits.iter_mut().zip(&t.visits) {
            *a += b;
        }
        h.sum_w += t.sum_w;
        h.sum_w2 += t.sum_w2;
        h.total_samples += t.steps;
    }
    h.ess = h.sum_w * h.sum_w / h.sum_w2;
    h.normalize();
    Ok(h)
}

/// Seed offset for the pilot run, so pilot and production chains use different streams.
const PILOT_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Pilot counts per bin below which the analytic tail takes over.
pub const SPLICE_MIN_COUNT: u64 = 100;

/// Builds the tail-flattening weight from pilot runs on a tenth of the budget.
///
/// The first half of the pilot samples uniformly; a uniform chain almost
/// never reaches the band edges, so its splice points sit far inside the
/// band. The second half samples with that first weight, which reaches
/// close to both edges, and the weight is rebuilt from its reweighted
/// histogram with the splice moved to where that run's counts run out.
pub fn pilot_then_flatten(disp: &Dispersion, cfg: &SamplerConfig) -> Result<WeightFunction> {
    let floor = cfg.burn_in * cfg.n_chains as u64 + (cfg.n_chains * cfg.batches_per_chain) as u64;
    let mut pilot = cfg.clone();
    pilot.n_samples = (cfg.n_samples / 20).max(floor);
    pilot.weight_mode = WeightMode::Uniform;
    pilot.seed = cfg.seed ^ PILOT_SEED_MIX;
    let uniform = sample_with(disp, &pilot, None)?;
    let first = WeightFunction::from_pilot(&uniform, &uniform.visits, disp.dim(), SPLICE_MIN_COUNT)?;
    pilot.weight_mode = WeightMode::TailFlattened;
    pilot.seed = cfg.seed ^ PILOT_SEED_MIX.rotate_left(17);
    let refined = sample_with(disp, &pilot, Some(&first))?;
    WeightFunction::from_pilot(&refined, &refined.visits, disp.dim(), SPLICE_MIN_COUNT)
}

/// Samples the density of states. In tail-flattened mode a tenth of
/// `n_samples` is spent on the pilot and the rest on the production run.
pub fn sample_dos(disp: &Dispersion, cfg: &SamplerConfig) -> Result<DosHistogram> {
    cfg.validate()?;
    match cfg.weight_mode {
        WeightMode::Uniform => sample_with(disp, cfg, None),
        WeightMode::TailFlattened => {
            let weight = pilot_then_flatten(disp, cfg)?;
            let mut main = cfg.clone();
            main.n_samples = cfg.n_samples - cfg.n_samples / 10;
            sample_with(disp, &main, Some(&weight))
        }
    }
}

/// Samples with a caller-supplied weight function.
pub fn sample_dos_weighted(disp: &Dispersion, cfg: &SamplerConfig, weight: &WeightFunction) -> Result<DosHistogram> {
    sample_with(disp, cfg, Some(weight))
}

/// `Σ midpointⁿ·ρ·width` of a histogram.
pub fn moment(hist: &DosHistogram, n: i32) -> f64 {
    hist.moment(n)
}
