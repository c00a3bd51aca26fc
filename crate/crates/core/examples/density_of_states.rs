//! Tail-flattened Metropolis estimate of the E6 density of states, checked
//! against the exact moments and the band-edge power laws.
//!
//! cargo run --release --example density_of_states [-- SAMPLES [OUT.csv]]

use std::fs::File;
use std::io::BufWriter;

use adelattice::reproduce::tail_window;
use adelattice::sampler::{sample_dos, tail_exponent, BandEdge, SamplerConfig};
use adelattice::vanhove::{find_critical_points, SearchConfig};
use adelattice::walks::{moments_check, walk_counts};
use adelattice::{build_roots, Dispersion, LatticeSpec};

fn main() -> adelattice::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples = args.next().and_then(|a| a.parse::<f64>().ok()).map_or(20_000_000, |x| x as u64);
    let rs = build_roots(LatticeSpec::e6())?;
    let disp = Dispersion::new(&rs);
    let cat = find_critical_points(&disp, &SearchConfig { n_starts: 1000, ..Default::default() })?;

    let mut cfg = SamplerConfig::new(LatticeSpec::e6(), cat.epsilon_max);
    cfg.n_samples = samples;
    let h = sample_dos(&disp, &cfg)?;
    println!("E6, {samples} steps: mass {:.6}, Kish ESS {:.3e}", h.total_mass(), h.ess);

    let walks = walk_counts(&rs, 8)?;
    for (n, err) in moments_check(&walks, &h).iter().enumerate().skip(1) {
        println!("  moment {n}: relative error {err:+.2e}");
    }
    for edge in [BandEdge::Lower, BandEdge::Upper] {
        let w = tail_window(&cat, edge);
        if let Some(f) = tail_exponent(&h, edge, w) {
            println!("  {edge:?} edge exponent {:.3} ± {:.3} (power law predicts 2)", f.value, f.stderr);
        }
    }
    if let Some(path) = args.next() {
        h.write_csv(BufWriter::new(File::create(&path)?))?;
        println!("histogram written to {path}");
    }
    Ok(())
}
