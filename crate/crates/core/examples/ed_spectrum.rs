//! Low-lying spectrum of the J1-J2 chain, including the dimer point where
//! the ground energy is exactly -3L/8.
//!
//!     cargo run --release --example ed_spectrum -- 16

use kan_nqs::exact::ed_solve;
use kan_nqs::hamiltonian::Hamiltonian;
use kan_nqs::spin::SectorBasis;

fn main() -> kan_nqs::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(12);
    println!("L = {n}, zero magnetization, sign rule on");
    for j2 in [0.0, 0.2, 0.4, 0.5, 0.6] {
        let ham = Hamiltonian::j1j2(n, 1.0, j2)?.with_msr(true)?;
        let sol = ed_solve(&ham, SectorBasis::enumerate(n, true)?, 4)?;
        println!(
            "J2 = {j2:.1}: E/L = {:.6}  levels {:.6?}  degeneracy {}",
            sol.ground_energy() / n as f64,
            sol.eigenvalues,
            sol.ground_degeneracy(1e-8)
        );
    }
    println!("dimer point reference -3L/8 = {}", -3.0 * n as f64 / 8.0);
    Ok(())
}
