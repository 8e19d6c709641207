//! Anisotropic chain trained through the staged field quench, with and
//! without the pinning field.

use kan_nqs::ansatz::{Ansatz, FrequencyInit, SineKanOptions};
use kan_nqs::exact::{ed_solve, fidelity, model_vector};
use kan_nqs::hamiltonian::Hamiltonian;
use kan_nqs::sampler::{MoveKind, SamplerConfig};
use kan_nqs::spin::SectorBasis;
use kan_nqs::vmc::{train, Annealing, LrSchedule, TrainConfig};

fn main() -> kan_nqs::Result<()> {
    let (n, gamma) = (10, 0.8);
    let ham = Hamiltonian::ahm(n, gamma)?.with_msr(true)?;
    let basis = SectorBasis::enumerate(n, true)?;
    let sol = ed_solve(&ham, basis.clone(), 2)?;

    for h_init in [gamma + 0.2, 0.0] {
        let annealing = Annealing { h_init, n_stages: 15, iters_per_stage: 40, post_iters: 400 };
        let total = annealing.total_epochs();
        let cfg = TrainConfig {
            schedule: LrSchedule::flat_then_linear(3e-3, total / 2, total, 1e-4)?,
            annealing: Some(annealing),
            sampler: SamplerConfig { n_chains: 128, n_samples: 1024, warmup_sweeps: 100, move_kind: MoveKind::PairExchange, seed: 2 },
            eval_samples: 4096,
        };
        let mut model = Ansatz::sinekan(
            n,
            &SineKanOptions { hidden: vec![16, 16], grid: 4, reflected: true, frequency_init: FrequencyInit::Constant(1.0), seed: 2, ..Default::default() },
        )?;
        let out = train(&mut model, &ham, &cfg, |r| {
            if r.epoch % 200 == 0 {
                println!("  epoch {:4}  h = {:.3}  E = {:.6}", r.epoch, r.bias_h, r.energy);
            }
        })?;
        let f = fidelity(&model_vector(&model, &basis)?, &sol, 1e-8)?;
        println!(
            "h_init = {h_init:.1}: E = {:.6} (ED {:.6}), fidelity {f:.4}",
            out.final_estimate.energy,
            sol.ground_energy()
        );
    }
    Ok(())
}
