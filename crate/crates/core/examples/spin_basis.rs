//! Spin configurations, the zero-magnetization basis and the sign rule.

use kan_nqs::spin::{SectorBasis, SpinConfig};

fn main() -> kan_nqs::Result<()> {
    let c = SpinConfig::parse("uddudu")?;
    println!("{c:?}: M = {}, sigma = {:?}", c.magnetization(), c.spins());
    println!("flip(0) -> {:?}, exchange(0,1) -> {:?}", c.flip(0)?, c.exchange(0, 1)?);
    println!("reflected: {:?}, sign-rule factor {}", c.reflect(), c.msr_sign());

    for n in [8, 12, 16, 20] {
        let b = SectorBasis::enumerate(n, true)?;
        println!("L = {n:2}: sector dimension {:6}", b.dim());
    }
    let b = SectorBasis::enumerate(6, true)?;
    let neel = SpinConfig::neel(6)?;
    println!("Neel state {neel:?} sits at index {:?} of {}", b.index_of(&neel), b.dim());
    Ok(())
}
