//! Trains a small SineKAN on the Ising chain in a transverse field and
//! compares energy and m^2 with exact diagonalization.
//!
//!     cargo run --release --example tfim_train -- 1.0

use kan_nqs::ansatz::{Ansatz, FrequencyInit, SineKanOptions};
use kan_nqs::exact::{ed_solve, model_vector};
use kan_nqs::hamiltonian::Hamiltonian;
use kan_nqs::observables::{relative_error, tfim_m2, Source};
use kan_nqs::sampler::{MoveKind, SamplerConfig};
use kan_nqs::spin::SectorBasis;
use kan_nqs::vmc::{train, LrSchedule, TrainConfig};

fn main() -> kan_nqs::Result<()> {
    let h: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let n = 10;
    let ham = Hamiltonian::tfim(n, 1.0, h)?;
    let opts = SineKanOptions {
        hidden: vec![16, 16],
        frequency_init: FrequencyInit::Constant(1.0),
        seed: 3,
        ..Default::default()
    };
    let mut model = Ansatz::sinekan(n, &opts)?;
    let cfg = TrainConfig {
        schedule: LrSchedule::flat_then_linear(1e-3, 300, 600, 1e-5)?,
        annealing: None,
        sampler: SamplerConfig { n_chains: 128, n_samples: 1024, warmup_sweeps: 100, move_kind: MoveKind::LocalFlip, seed: 3 },
        eval_samples: 4096,
    };
    let out = train(&mut model, &ham, &cfg, |r| {
        if r.epoch % 100 == 0 {
            println!("epoch {:4}  E = {:.6}  var = {:.2e}", r.epoch, r.energy, r.variance);
        }
    })?;

    let basis = SectorBasis::enumerate(n, false)?;
    let sol = ed_solve(&ham, basis.clone(), 2)?;
    let v = model_vector(&model, &basis)?;
    let m2 = |vector: &[f64]| tfim_m2(&Source::Exact { basis: &basis, vector, msr: false }, h).map(|e| e.value);
    println!(
        "h = {h}: E = {:.6} +- {:.1e}, ED {:.6}, eps = {:.2e}",
        out.final_estimate.energy,
        out.final_estimate.stderr,
        sol.ground_energy(),
        relative_error(out.final_estimate.energy, sol.ground_energy())?
    );
    println!("m^2 model {:.4}, ED {:.4}  ({:.1}s)", m2(&v)?, m2(sol.ground_vector())?, out.seconds);
    Ok(())
}
