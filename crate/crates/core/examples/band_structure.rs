//! Band energy along the straight line from the band bottom to a band maximum,
//! with the Hessian spectrum at the two ends.
//!
//! cargo run --release --example band_structure

use adelattice::vanhove::epsilon_max;
use adelattice::{build_roots, Dispersion, LatticeSpec};

fn main() -> adelattice::Result<()> {
    let disp = Dispersion::new(&build_roots(LatticeSpec::e8())?);
    let (top, at) = epsilon_max(&disp)?;
    let at = at.into_inner();
    println!("E8 band: [{}, {top:.9}], maximum at u = {at:.4?}", disp.epsilon_min());
    for k in 0..=20 {
        let t = k as f64 / 20.0;
        let u: Vec<f64> = at.iter().map(|x| t * x).collect();
        let g = disp.gradient(&u);
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("  t = {t:.2}  ε = {:>11.5}  |∇ε| = {gn:>10.4}", disp.energy(&u));
    }
    for (label, u) in [("bottom", vec![0.0; disp.dim()]), ("top", at)] {
        let mut eig: Vec<f64> = disp.cartesian_hessian(&u).symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        println!("Hessian eigenvalues at the {label}: {eig:.4?}");
    }
    Ok(())
}
