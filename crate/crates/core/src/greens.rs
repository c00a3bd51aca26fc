//! On-site lattice Green's function from a binned density of states.
//!
//! Convention: `G(ε) = ∫ ρ(ε') / (ε − ε' − i0) dε'`, so `Im G = πρ` and
//! `Re G(ε) = ∫ ρ(ε') / (ε − ε') dε'` (principal value). With this sign
//! `Re G < 0` below the band and `> 0` above it.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::sampler::DosHistogram;

/// Fraction of a bin width by which an evaluation point sitting exactly on a bin edge is moved.
pub const EDGE_NUDGE: f64 = 0.5e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GreensFunction {
    pub lattice: LatticeSpec,
    /// Support of the source histogram.
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    pub energy: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Energies to mark on plots, typically the Van Hove singularities.
    pub markers: Vec<f64>,
}

/// `Im G = πρ` at the bin midpoints.
pub fn im_from_dos(hist: &DosHistogram) -> (Vec<f64>, Vec<f64>) {
    let grid = (0..hist.len()).map(|b| hist.layout().midpoint(b)).collect();
    let im = hist.density.iter().map(|r| std::f64::consts::PI * r).collect();
    (grid, im)
}

/// Principal-value transform of a piecewise-constant density, evaluated at `e`.
///
/// Each bin contributes `ρ_b ln|(e − lo)/(e − hi)|`. If `e` lands exactly on
/// an edge it is moved by [`EDGE_NUDGE`] times the narrower adjacent bin,
/// outward at the ends of the support and downward inside it.
pub fn principal_value(edges: &[f64], density: &[f64], e: f64) -> f64 {
    let e = nudge_off_edges(edges, e);
    density
        .iter()
        .enumerate()
        .filter(|(_, r)| **r != 0.0)
        .map(|(b, r)| r * ((e - edges[b]) / (e - edges[b + 1])).abs().ln())
        .sum()
}

fn nudge_off_edges(edges: &[f64], e: f64) -> f64 {
    let n = edges.len() - 1;
    let Ok(k) = edges.binary_search_by(|x| x.total_cmp(&e)) else {
        return e;
    };
    let width = |b: usize| edges[b + 1] - edges[b];
    if k == n {
        e + EDGE_NUDGE * width(n - 1)
    } else if k == 0 {
        e - EDGE_NUDGE * width(0)
    } else {
        e - EDGE_NUDGE * width(k - 1).min(width(k))
    }
}

/// `Re G` on `grid` by the per-bin analytic principal value.
pub fn kramers_kronig(hist: &DosHistogram, grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&e| principal_value(hist.edges(), &hist.density, e)).collect()
}

impl GreensFunction {
    /// Evaluates `G` on an arbitrary grid; `Im G` is `π` times the density of
    /// the bin containing each point and zero outside the support.
    pub fn from_dos(hist: &DosHistogram, grid: &[f64]) -> Self {
        let edges = hist.edges();
        let (lo, hi) = (edges[0], edges[edges.len() - 1]);
        let im = grid
            .iter()
            .map(|&e| {
                if e <= lo || e >= hi {
                    0.0
                } else {
                    std::f64::consts::PI * hist.density[hist.layout().locate(e)]
                }
            })
            .collect();
        Self {
            lattice: hist.lattice,
            epsilon_min: hist.epsilon_min,
            epsilon_max: hist.epsilon_max,
            energy: grid.to_vec(),
            re: kramers_kronig(hist, grid),
            im,
            markers: Vec::new(),
        }
    }

    /// The band edges plus every bin midpoint.
    pub fn on_midpoints(hist: &DosHistogram) -> Self {
        let (mid, _) = im_from_dos(hist);
        let mut grid = Vec::with_capacity(mid.len() + 2);
        grid.push(hist.epsilon_min);
        grid.extend(mid);
        grid.push(hist.epsilon_max);
        Self::from_dos(hist, &grid)
    }

    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    /// `Re G(ε_min)`, which must be on the grid.
    pub fn re_at_minimum(&self) -> Result<f64> {
        self.energy
            .iter()
            .position(|&e| (e - self.epsilon_min).abs() <= 1e-12 * (1.0 + self.epsilon_min.abs()))
            .map(|i| self.re[i])
            .ok_or_else(|| Error::InvalidConfig("grid does not contain the band minimum".into()))
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "# schema_version=1").unwrap();
        writeln!(s, "# lattice={}", self.lattice).unwrap();
        writeln!(s, "# epsilon_min={}", self.epsilon_min).unwrap();
        writeln!(s, "# epsilon_max={}", self.epsilon_max).unwrap();
        for m in &self.markers {
            writeln!(s, "# marker={m}").unwrap();
        }
        writeln!(s, "energy,re_g,im_g").unwrap();
        for i in 0..self.len() {
            writeln!(s, "{},{},{}", self.energy[i], self.re[i], self.im[i]).unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let (mut lattice, mut emin, mut emax) = (None, None, None);
        let mut gf = GreensFunction {
            lattice: LatticeSpec::e8(),
            epsilon_min: 0.0,
            epsilon_max: 0.0,
            energy: Vec::new(),
            re: Vec::new(),
            im: Vec::new(),
            markers: Vec::new(),
        };
        let mut header = false;
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("line {}: bad number {s:?}", i + 1)));
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                match rest.trim().split_once('=') {
                    Some(("lattice", v)) => lattice = Some(LatticeSpec::from_str(v.trim())?),
                    Some(("epsilon_min", v)) => emin = Some(num(v)?),
                    Some(("epsilon_max", v)) => emax = Some(num(v)?),
                    Some(("marker", v)) => gf.markers.push(num(v)?),
                    _ => {}
                }
                continue;
            }
            if !header {
                if line != "energy,re_g,im_g" {
                    return Err(Error::Parse(format!("unexpected Green's function header {line:?}")));
                }
                header = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 columns", i + 1)));
            }
            gf.energy.push(num(cols[0])?);
            gf.re.push(num(cols[1])?);
            gf.im.push(num(cols[2])?);
        }
        let missing = |k: &str| Error::Parse(format!("missing metadata {k:?}"));
        gf.lattice = lattice.ok_or_else(|| missing("lattice"))?;
        gf.epsilon_min = emin.ok_or_else(|| missing("epsilon_min"))?;
        gf.epsilon_max = emax.ok_or_else(|| missing("epsilon_max"))?;
        Ok(gf)
    }
}
