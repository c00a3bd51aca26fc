//! Critical points of the E7 band found by multistart Newton search.
//!
//! cargo run --release --example van_hove_catalog [-- STARTS]

use adelattice::vanhove::{find_critical_points, SearchConfig};
use adelattice::{build_roots, Dispersion, LatticeSpec};

fn main() -> adelattice::Result<()> {
    let n_starts = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5000);
    let disp = Dispersion::new(&build_roots(LatticeSpec::e7())?);
    let cat = find_critical_points(&disp, &SearchConfig { n_starts, ..Default::default() })?;
    let gamma = cat.gamma_rational.map_or(format!("{:.6}", cat.gamma), |g| g.to_string());
    println!("E7: {} of {} starts converged, γ = {gamma}", cat.converged, cat.n_starts);
    println!("{:>10} {:>8}  (n↓,n↑,n0)  {:>6} {:>6}", "energy", "exact", "hits", "mult");
    for c in &cat.critical_points {
        let exact = c.rational.map_or("-".to_string(), |r| r.to_string());
        let mult = c.multiplicity.map_or("-".to_string(), |m| m.to_string());
        let s = c.signature;
        println!("{:>10.5} {exact:>8}  ({},{},{})     {:>6} {mult:>6}", c.energy, s.n_down, s.n_up, s.n_zero, c.hits);
    }
    Ok(())
}
