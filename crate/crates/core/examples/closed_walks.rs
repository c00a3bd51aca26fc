//! Exact closed-walk counts, which are the signed moments of the density of states.
//!
//! cargo run --release --example closed_walks [-- NMAX]

use adelattice::walks::{to_bfile, walk_counts};
use adelattice::{build_roots, LatticeSpec};

fn main() -> adelattice::Result<()> {
    let n_max: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    for spec in [LatticeSpec::e6(), LatticeSpec::e7(), LatticeSpec::e8()] {
        let t = walk_counts(&build_roots(spec)?, n_max)?;
        println!("{spec}");
        for (n, w) in t.counts.iter().enumerate() {
            // Normalized moment W_n / W_2^{n/2}, a scale-free shape measure.
            let shape = t.as_f64(n) / t.as_f64(2).powf(n as f64 / 2.0);
            println!("  W_{n:<2} = {w:>32}  ({shape:.4})");
        }
    }
    let e8 = walk_counts(&build_roots(LatticeSpec::e8())?, 6)?;
    print!("E8 b-file:\n{}", to_bfile(&e8));
    Ok(())
}
