//! Saves and reloads each model family and checks the amplitudes agree bit
//! for bit.

use kan_nqs::ansatz::{Ansatz, SineKanOptions};
use kan_nqs::checkpoint;
use kan_nqs::spin::SpinConfig;

fn main() -> kan_nqs::Result<()> {
    let dir = std::env::temp_dir().join("kan-nqs-checkpoint-example");
    let n = 12;
    let models = [
        Ansatz::sinekan(n, &SineKanOptions { hidden: vec![8, 8], reflected: true, ..Default::default() })?,
        Ansatz::mlp(n, &[16, 16], false, 1)?,
        Ansatz::rbm(n, 2, false, 2)?,
    ];
    let c = SpinConfig::neel(n)?;
    for m in models {
        let path = dir.join(format!("{}.ckpt", m.tag()));
        checkpoint::save(&path, &m)?;
        let back = checkpoint::load(&path)?;
        let same = back.log_psi(&c)?.to_bits() == m.log_psi(&c)?.to_bits();
        println!(
            "{:9} {:6} params -> {} ({} bytes), identical: {same}",
            m.tag(),
            m.param_count(),
            path.display(),
            std::fs::metadata(&path).map(|md| md.len()).unwrap_or(0)
        );
    }
    Ok(())
}
