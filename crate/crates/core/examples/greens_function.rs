//! Lattice Green's function of E7 from a sampled density of states, and the
//! return probability it implies.
//!
//! cargo run --release --example greens_function [-- SAMPLES]

use adelattice::greens::GreensFunction;
use adelattice::returnprob::{return_from_greens, return_from_histogram};
use adelattice::sampler::{sample_dos, SamplerConfig};
use adelattice::{build_roots, Dispersion, LatticeSpec};

fn main() -> adelattice::Result<()> {
    let samples = std::env::args().nth(1).and_then(|a| a.parse::<f64>().ok()).map_or(20_000_000, |x| x as u64);
    let disp = Dispersion::new(&build_roots(LatticeSpec::e7())?);
    let mut cfg = SamplerConfig::new(LatticeSpec::e7(), 14.0);
    cfg.n_samples = samples;
    let h = sample_dos(&disp, &cfg)?;
    let gf = GreensFunction::on_midpoints(&h);

    println!("{:>10} {:>12} {:>12}", "energy", "Re G", "Im G");
    for i in (0..gf.len()).step_by(gf.len() / 25) {
        println!("{:>10.4} {:>12.6} {:>12.6}", gf.energy[i], gf.re[i], gf.im[i]);
    }
    let re_min = gf.re_at_minimum()?;
    println!("Re G(ε_min) = {re_min:.7}");
    println!("P from Re G(ε_min): {:.6}", return_from_greens(&gf)?);
    let est = return_from_histogram(&h)?;
    println!("with batch error:   {:.6} [{:.6}, {:.6}]", est.p, est.ci_lo, est.ci_hi);
    Ok(())
}
