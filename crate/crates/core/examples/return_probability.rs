//! Return probabilities by Metropolis sampling with weight 1/(ε − ε_min),
//! starting with the face-centred cubic lattice where a closed form exists.
//!
//! cargo run --release --example return_probability [-- SAMPLES]

use adelattice::returnprob::estimate_return;
use adelattice::tables::watson_a3;
use adelattice::{build_roots, Dispersion, Family, LatticeSpec};

fn main() -> adelattice::Result<()> {
    let samples = std::env::args().nth(1).and_then(|a| a.parse::<f64>().ok()).map_or(20_000_000, |x| x as u64);
    let fcc = Dispersion::new(&build_roots(LatticeSpec::new(Family::A, 3)?)?);
    let p = estimate_return(&fcc, samples, 1)?;
    println!("A3: {:.6} [{:.6}, {:.6}], closed form {:.6}", p.p, p.ci_lo, p.ci_hi, watson_a3());
    for spec in [LatticeSpec::e6(), LatticeSpec::e7(), LatticeSpec::e8()] {
        let p = estimate_return(&Dispersion::new(&build_roots(spec)?), samples, 1)?;
        println!("{spec}: {:.7} [{:.7}, {:.7}], ESS {:.3e}", p.p, p.ci_lo, p.ci_hi, p.ess);
    }
    Ok(())
}
