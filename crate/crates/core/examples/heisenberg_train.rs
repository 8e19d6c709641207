//! Reflection-symmetric SineKAN on the Heisenberg chain in the
//! zero-magnetization sector: energy, fidelity and spin correlations.

use kan_nqs::ansatz::{Ansatz, FrequencyInit, SineKanOptions};
use kan_nqs::exact::{ed_solve, fidelity, model_vector};
use kan_nqs::hamiltonian::Hamiltonian;
use kan_nqs::observables::{isotropic, Source};
use kan_nqs::sampler::{MoveKind, SamplerConfig};
use kan_nqs::spin::SectorBasis;
use kan_nqs::vmc::{train, LrSchedule, TrainConfig};

fn main() -> kan_nqs::Result<()> {
    let n = 12;
    let ham = Hamiltonian::j1j2(n, 1.0, 0.0)?.with_msr(true)?;
    let mut model = Ansatz::sinekan(
        n,
        &SineKanOptions {
            hidden: vec![16, 16],
            grid: 4,
            reflected: true,
            frequency_init: FrequencyInit::Constant(1.0),
            seed: 1,
            ..Default::default()
        },
    )?;
    let cfg = TrainConfig {
        schedule: LrSchedule::flat_then_linear(3e-3, 400, 800, 1e-4)?,
        annealing: None,
        sampler: SamplerConfig { n_chains: 256, n_samples: 1024, warmup_sweeps: 100, move_kind: MoveKind::PairExchange, seed: 1 },
        eval_samples: 4096,
    };
    let out = train(&mut model, &ham, &cfg, |r| {
        if r.epoch % 100 == 0 {
            println!("epoch {:4}  E = {:.6}  acc = {:.2}", r.epoch, r.energy, r.acceptance);
        }
    })?;

    let basis = SectorBasis::enumerate(n, true)?;
    let sol = ed_solve(&ham, basis.clone(), 2)?;
    let v = model_vector(&model, &basis)?;
    println!(
        "E = {:.6}, ED {:.6}, fidelity {:.5}",
        out.final_estimate.energy,
        sol.ground_energy(),
        fidelity(&v, &sol, 1e-8)?
    );
    let ours = Source::Exact { basis: &basis, vector: &v, msr: true };
    let exact = Source::Exact { basis: &basis, vector: sol.ground_vector(), msr: true };
    for r in 0..=n / 2 {
        println!("C({r}) = {:+.5}  ED {:+.5}", isotropic(&ours, r)?.value, isotropic(&exact, r)?.value);
    }
    Ok(())
}
