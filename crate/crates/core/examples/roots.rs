//! Root systems of the three exceptional lattices: counts, span and Gram data.
//!
//! cargo run --release --example roots

use adelattice::{build_roots, LatticeSpec};

fn main() -> adelattice::Result<()> {
    for spec in [LatticeSpec::e6(), LatticeSpec::e7(), LatticeSpec::e8()] {
        let rs = build_roots(spec)?;
        let mut shells = [0usize; 5];
        let first = &rs.roots()[0];
        for r in rs.roots() {
            let ip: i32 = first.iter().zip(r).map(|(a, b)| a * b).sum();
            shells[((ip + 8) / 4) as usize] += 1;
        }
        println!("{spec}: {} roots in R^{}, rank {}", rs.tau(), rs.ambient_dim(), rs.dim());
        println!("  covolume {:.6}, Brillouin zone volume {:.6e}", rs.covolume(), rs.bz_volume());
        println!("  inner products with one root (-8,-4,0,4,8): {shells:?}");
        println!("  basis:");
        for b in rs.lattice_basis() {
            println!("    {b:?}");
        }
    }
    Ok(())
}
