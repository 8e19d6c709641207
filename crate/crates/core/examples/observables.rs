//! Exact and sampled correlators of an ED ground state wrapped as a table
//! wavefunction.

use kan_nqs::exact::ed_solve;
use kan_nqs::hamiltonian::Hamiltonian;
use kan_nqs::observables::{dimer_dimer, isotropic, structure_factor, Source};
use kan_nqs::sampler::{ChainEnsemble, MoveKind, SamplerConfig};
use kan_nqs::spin::SectorBasis;
use kan_nqs::wavefunction::{Evaluator, TableState};

fn main() -> kan_nqs::Result<()> {
    let n = 10;
    let ham = Hamiltonian::j1j2(n, 1.0, 0.3)?.with_msr(true)?;
    let basis = SectorBasis::enumerate(n, true)?;
    let sol = ed_solve(&ham, basis.clone(), 1)?;
    let exact = Source::Exact { basis: &basis, vector: sol.ground_vector(), msr: true };

    // the sign-rule ground state is non-negative, so |psi| is the state itself
    let amps: Vec<f64> = sol.ground_vector().iter().map(|x| x.abs()).collect();
    let table = TableState::new(basis.clone(), &amps)?;
    let cfg = SamplerConfig { n_chains: 64, n_samples: 64 * 2000, warmup_sweeps: 200, move_kind: MoveKind::PairExchange, seed: 5 };
    let mut eval = Evaluator::new(&table);
    let mut ens = ChainEnsemble::new(&cfg, n, &mut eval)?;
    ens.warmup(cfg.warmup_sweeps, &mut eval);
    let (samples, acc) = ens.draw_samples(cfg.n_samples, &mut eval)?;
    let sampled = Source::Sampled { model: &table, samples: &samples, msr: true, sector: true };
    println!("{} samples, acceptance {acc:.3}", samples.len());

    for r in 0..=n / 2 {
        let (e, s) = (isotropic(&exact, r)?, isotropic(&sampled, r)?);
        let d = dimer_dimer(&exact, r)?;
        println!("r = {r}: C exact {:+.5}  sampled {:+.5} +- {:.5}  dimer {:+.5}", e.value, s.value, s.stderr, d.value);
    }
    let pi = std::f64::consts::PI;
    for m in 0..=n / 2 {
        let k = 2.0 * pi * m as f64 / n as f64;
        println!("S({k:.3}) = {:.5}", structure_factor(&exact, k)?.value);
    }
    Ok(())
}
