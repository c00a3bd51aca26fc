//! Recomputes the reference tables and compares against [`crate::tables`].

use std::fmt;

use serde::Serialize;

use crate::dispersion::Dispersion;
use crate::error::Result;
use crate::lattice::{build_roots, LatticeSpec};
use crate::returnprob::estimate_return;
use crate::sampler::{sample_dos, tail_exponent, BandEdge, DosHistogram, SamplerConfig};
use crate::tables::{self, RowNote};
use crate::vanhove::{find_critical_points, rationalize, tail_coefficient, SearchConfig, VanHoveCatalog};
use crate::walks::walk_counts;

pub const EXCEPTIONAL: [fn() -> LatticeSpec; 3] = [LatticeSpec::e6, LatticeSpec::e7, LatticeSpec::e8];

/// Energy tolerance when matching catalog rows.
pub const ENERGY_TOL: f64 = 1e-6;
/// Relative tolerance on tail constants.
pub const TAIL_TOL: f64 = 1e-9;
/// Relative tolerance on return probabilities against the published midpoints.
pub const RETURN_TOL: f64 = 5e-3;
/// Absolute tolerance on fitted tail exponents.
pub const SLOPE_TOL: f64 = 0.05;

/// One compared quantity.
#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub name: String,
    pub expected: String,
    pub found: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub entries: Vec<Entry>,
}

impl Report {
    pub fn push(&mut self, name: impl Into<String>, expected: impl ToString, found: impl ToString, pass: bool) {
        self.entries.push(Entry { name: name.into(), expected: expected.to_string(), found: found.to_string(), pass });
    }

    pub fn passed(&self) -> usize {
        self.entries.iter().filter(|e| e.pass).count()
    }

    pub fn all_pass(&self) -> bool {
        self.passed() == self.entries.len()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let tag = if e.pass { "ok  " } else { "DIFF" };
            writeln!(f, "{tag} {:<40} expected {:<28} found {}", e.name, e.expected, e.found)?;
        }
        write!(f, "{}/{} entries match", self.passed(), self.entries.len())
    }
}

/// Closed-walk counts `W_3..W_8` of the three exceptional lattices.
pub fn table3() -> Result<Report> {
    let mut r = Report::default();
    for spec in EXCEPTIONAL.map(|f| f()) {
        let rs = build_roots(spec)?;
        let t = walk_counts(&rs, 8)?;
        let expected = tables::walk_counts(spec).expect("exceptional lattice");
        for (n, want) in (3..).zip(expected) {
            let got = &t.counts[n];
            r.push(format!("{spec} W_{n}"), want, got, *got == want.into());
        }
    }
    Ok(r)
}

/// Checks that a catalog contains every tabulated row of its lattice.
pub fn compare_catalog(cat: &VanHoveCatalog, r: &mut Report) {
    let spec = cat.lattice;
    for row in tables::van_hove_rows(spec).unwrap_or(&[]) {
        let e = row.energy.to_f64();
        let candidates = cat.at_energy(e, ENERGY_TOL);
        let hit = candidates.iter().find(|c| {
            c.signature.n_down == row.n_down
                && c.signature.n_up == row.n_up
                && (row.note != RowNote::Degenerate || (c.degenerate && c.signature.n_zero == 5))
        });
        let expected = format!("{} ({},{}){}", row.energy, row.n_down, row.n_up, note_suffix(row.note));
        let found = match hit {
            Some(c) => format!("{} ({},{},{})", c.energy, c.signature.n_down, c.signature.n_up, c.signature.n_zero),
            None => "missing".into(),
        };
        r.push(format!("{spec} critical point at {}", row.energy), expected, found, hit.is_some());
    }
}

fn note_suffix(note: RowNote) -> &'static str {
    match note {
        RowNote::Degenerate => " degenerate",
        RowNote::Distinct => " second class",
        RowNote::Minimum => " minimum",
        RowNote::Maximum => " maximum",
        RowNote::Plain => "",
    }
}

/// Van Hove catalogs of the three lattices with `n_starts` multistarts each.
pub fn table1(n_starts: usize, seed: u64) -> Result<(Report, Vec<VanHoveCatalog>)> {
    let mut r = Report::default();
    let mut cats = Vec::new();
    for spec in EXCEPTIONAL.map(|f| f()) {
        let disp = Dispersion::new(&build_roots(spec)?);
        let cat = find_critical_points(&disp, &SearchConfig { n_starts, seed, ..Default::default() })?;
        compare_catalog(&cat, &mut r);
        cats.push(cat);
    }
    Ok((r, cats))
}

/// Skewness, extremum multiplicities, tail constants and return probabilities.
pub fn table2(n_starts: usize, samples: u64, seed: u64) -> Result<Report> {
    let mut r = Report::default();
    for spec in EXCEPTIONAL.map(|f| f()) {
        let want = tables::edge_data(spec).expect("exceptional lattice");
        let disp = Dispersion::new(&build_roots(spec)?);
        let cat = find_critical_points(&disp, &SearchConfig { n_starts, seed, ..Default::default() })?;
        let gamma = rationalize(cat.gamma, 64);
        r.push(format!("{spec} gamma"), want.gamma, cat.gamma, gamma.is_some_and(|g| g.den == 1 && g.num == want.gamma));
        r.push(format!("{spec} epsilon_max"), want.epsilon_max, cat.epsilon_max, (cat.epsilon_max - want.epsilon_max as f64).abs() < 1e-9);
        let (min, max) = (cat.minimum(), cat.maximum());
        let n_max = max.multiplicity.unwrap_or(0);
        r.push(format!("{spec} N_min"), 1, min.multiplicity.unwrap_or(0), min.multiplicity == Some(1));
        r.push(format!("{spec} N_max"), want.n_max, n_max, n_max == want.n_max);
        for (label, cp, n, expected) in [("minimum", min, 1, want.min_tail), ("maximum", max, n_max, want.max_tail)] {
            let got = tail_coefficient(&disp, cp, n)?;
            r.push(format!("{spec} tail at {label}"), expected, got, ((got - expected) / expected).abs() <= TAIL_TOL);
        }
        let p = estimate_return(&disp, samples, seed)?;
        let mid = want.return_midpoint();
        r.push(
            format!("{spec} return probability"),
            mid,
            format!("{} [{}, {}]", p.p, p.ci_lo, p.ci_hi),
            ((p.p - mid) / mid).abs() <= RETURN_TOL,
        );
    }
    Ok(r)
}

/// Fit window for the tail exponent at one edge, as distances from the edge.
///
/// It spans two decades and ends a tenth of the way to the nearest other
/// critical energy, capped at distance 1 where the log-spaced tail bins end;
/// beyond that the next critical point bends the curve.
pub fn tail_window(cat: &VanHoveCatalog, edge: BandEdge) -> (f64, f64) {
    let cps = &cat.critical_points;
    let gap = match edge {
        BandEdge::Lower => cps[1].energy - cps[0].energy,
        BandEdge::Upper => cps[cps.len() - 1].energy - cps[cps.len() - 2].energy,
    };
    let hi = (0.1 * gap).min(1.0);
    (hi / 100.0, hi)
}

/// Samples the three densities of states and checks normalization,
/// moments against the walk counts and the tail exponents.
pub fn fig_dos(samples: u64, seed: u64, mut sink: impl FnMut(&DosHistogram) -> Result<()>) -> Result<Report> {
    let mut r = Report::default();
    for spec in EXCEPTIONAL.map(|f| f()) {
        let rs = build_roots(spec)?;
        let disp = Dispersion::new(&rs);
        let cat = find_critical_points(&disp, &SearchConfig { n_starts: 2000, seed, ..Default::default() })?;
        let mut cfg = SamplerConfig::new(spec, cat.epsilon_max);
        cfg.n_samples = samples;
        cfg.seed = seed;
        let h = sample_dos(&disp, &cfg)?;
        sink(&h)?;
        let mass = h.total_mass();
        r.push(format!("{spec} normalization"), 1, mass, (mass - 1.0).abs() <= 2e-3);
        let walks = walk_counts(&rs, 8)?;
        let errs = crate::walks::moments_check(&walks, &h);
        for (n, err) in errs.iter().enumerate().skip(1) {
            let tol = if n <= 4 { 0.02 } else { 0.05 };
            r.push(format!("{spec} moment {n}"), format!("rel err <= {tol}"), err, err.abs() <= tol);
        }
        let want = disp.dim() as f64 / 2.0 - 1.0;
        for edge in [BandEdge::Lower, BandEdge::Upper] {
            let window = tail_window(&cat, edge);
            let fit = tail_exponent(&h, edge, window);
            let found = fit.map_or("no fit".to_string(), |f| format!("{:.4} ± {:.4}", f.value, f.stderr));
            let pass = fit.is_some_and(|f| (f.value - want).abs() <= SLOPE_TOL);
            r.push(format!("{spec} {edge:?} tail exponent on [{:.0e}, {:.0e}]", window.0, window.1), want, found, pass);
        }
    }
    Ok(r)
}
