//! Command implementations shared by the binary and the examples. Each
//! command writes its files under the run's output directory and returns a
//! results record.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::ansatz::Ansatz;
use crate::bench;
use crate::checkpoint::{self, write_atomic};
use crate::config::{ResolvedRun, ResultsRecord};
use crate::error::{Error, Result};
use crate::exact::{ed_solve_with, fidelity, model_vector, EdSolution};
use crate::hamiltonian::Hamiltonian;
use crate::observables::{relative_error, Mode, ObservableKind, ObservableSeries, Source, SERIES_HEADER};
use crate::sampler::ChainEnsemble;
use crate::spin::{binomial, SectorBasis, MAX_ENUMERATED_SITES};
use crate::vmc::{estimate_weighted, history_csv, train, SampleSet, VmcEstimate};
use crate::wavefunction::Evaluator;

/// Largest basis for which runs compute ED references on their own.
pub const AUTO_ED_DIM: usize = 200_000;

pub fn basis_dim(n_sites: usize, sector: bool) -> u64 {
    if sector {
        binomial(n_sites as u64, n_sites as u64 / 2)
    } else if n_sites >= 64 {
        u64::MAX
    } else {
        1 << n_sites
    }
}

/// The Hamiltonian a trained state is judged against: annealing pins are
/// only a training device.
pub fn target_hamiltonian(run: &ResolvedRun) -> Result<Hamiltonian> {
    match run.train.annealing {
        Some(_) => run.hamiltonian.with_bias(0.0),
        None => Ok(run.hamiltonian.clone()),
    }
}

fn reference_basis(run: &ResolvedRun) -> Option<Result<SectorBasis>> {
    let n = run.hamiltonian.n_sites;
    if n > MAX_ENUMERATED_SITES || basis_dim(n, run.sector) > AUTO_ED_DIM as u64 {
        return None;
    }
    Some(SectorBasis::enumerate(n, run.sector))
}

fn solve(run: &ResolvedRun, basis: SectorBasis, k: usize) -> Result<EdSolution> {
    let ham = target_hamiltonian(run)?;
    let k = k.min(basis.dim());
    ed_solve_with(&ham, basis, k, run.config.ed.method)
}

fn rel(path: &Path) -> String {
    path.display().to_string()
}

fn base_record(run: &ResolvedRun, command: &str) -> ResultsRecord {
    ResultsRecord {
        run_id: run.run_id.clone(),
        command: command.to_string(),
        model_seed: run.config.model.seed,
        sampler_seed: run.train.sampler.seed,
        warnings: run.warnings.clone(),
        config: Some(run.config.clone()),
        ..Default::default()
    }
}

fn write_record(run: &ResolvedRun, name: &str, rec: &ResultsRecord) -> Result<PathBuf> {
    let path = run.out_dir.join(name);
    write_atomic(&path, rec.to_json().as_bytes())?;
    Ok(path)
}

/// Rayleigh quotient of the model over the whole basis.
fn exact_energy(model: &Ansatz, ham: &Hamiltonian, basis: &SectorBasis) -> Result<VmcEstimate> {
    let mut eval = Evaluator::new(model);
    let set = SampleSet::exhaustive(&mut eval, basis)?;
    estimate_weighted(&mut eval, ham, &set)
}

pub struct TrainResult {
    pub record: ResultsRecord,
    pub model: Ansatz,
}

pub fn cmd_train(run: &ResolvedRun, desk_scale: bool) -> Result<TrainResult> {
    let start = Instant::now();
    let mut model = run.build_model()?;
    let total = run.train.schedule.total;
    let every = (total / 20).max(1);
    info!("training {} ({} parameters) for {total} epochs", model.tag(), model.param_count());
    let outcome = train(&mut model, &run.hamiltonian, &run.train, |r| {
        if r.epoch % every == 0 || r.epoch + 1 == total {
            info!(
                "epoch {:>6}  E = {:.8}  var = {:.3e}  acc = {:.3}  lr = {:.2e}  h = {:.4}",
                r.epoch, r.energy, r.variance, r.acceptance, r.lr, r.bias_h
            );
        }
    })?;

    let mut rec = base_record(run, "train");
    rec.desk_scale = desk_scale;
    rec.model_tag = model.tag();
    rec.param_count = model.param_count();
    rec.epochs = total;
    let est = outcome.final_estimate;
    rec.energy = Some(est.energy);
    rec.variance = Some(est.variance);
    rec.stderr = Some(est.stderr);
    rec.acceptance = Some(est.acceptance);

    if run.config.output.history {
        let path = run.out_dir.join("history.csv");
        write_atomic(&path, history_csv(&outcome.history).as_bytes())?;
        rec.history_path = Some(rel(&path));
    }
    if run.config.output.checkpoint {
        let path = run.out_dir.join("model.ckpt");
        checkpoint::save(&path, &model)?;
        rec.checkpoint_path = Some(rel(&path));
    }
    if let Some(basis) = reference_basis(run) {
        let basis = basis?;
        let target = target_hamiltonian(run)?;
        let sol = solve(run, basis.clone(), 2)?;
        let e0 = sol.ground_energy();
        rec.ed_energy = Some(e0);
        rec.eigenvalues = sol.eigenvalues.clone();
        rec.relative_error = relative_error(est.energy, e0).ok();
        rec.relative_error_exact = relative_error(exact_energy(&model, &target, &basis)?.energy, e0).ok();
        rec.fidelity = Some(fidelity(&model_vector(&model, &basis)?, &sol, run.config.ed.degenerate_tol)?);
    }
    rec.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_record(run, "results.json", &rec)?;
    Ok(TrainResult { record: rec, model })
}

pub fn cmd_ed(run: &ResolvedRun) -> Result<ResultsRecord> {
    let start = Instant::now();
    let n = run.hamiltonian.n_sites;
    let basis = SectorBasis::enumerate(n, run.sector)?;
    let sol = solve(run, basis, run.config.ed.k)?;
    let mut rec = base_record(run, "ed");
    rec.ed_energy = Some(sol.ground_energy());
    rec.eigenvalues = sol.eigenvalues.clone();

    let mut csv = String::from("index,eigenvalue,degenerate_with_ground\n");
    let tol = run.config.ed.degenerate_tol;
    for (i, e) in sol.eigenvalues.iter().enumerate() {
        csv.push_str(&format!("{i},{e},{}\n", e - sol.ground_energy() <= tol));
    }
    let path = run.out_dir.join("eigenvalues.csv");
    write_atomic(&path, csv.as_bytes())?;
    rec.outputs.push(rel(&path));

    if !run.config.output.observables.is_empty() {
        let src = Source::Exact {
            basis: &sol.basis,
            vector: sol.ground_vector(),
            msr: run.hamiltonian.msr,
        };
        let mut out = format!("{SERIES_HEADER}\n");
        for name in &run.config.output.observables {
            let kind: ObservableKind = name.parse()?;
            out.push_str(&ObservableSeries::compute(&src, kind, "ED", run.hamiltonian.h_field)?.csv_rows());
        }
        let path = run.out_dir.join("ed_observables.csv");
        write_atomic(&path, out.as_bytes())?;
        rec.outputs.push(rel(&path));
    }
    rec.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_record(run, "ed_results.json", &rec)?;
    Ok(rec)
}

pub fn load_checked(run: &ResolvedRun, ckpt: &Path) -> Result<Ansatz> {
    let model = checkpoint::load(ckpt)?;
    run.check_model(&model)?;
    Ok(model)
}

/// Draws `n_samples` from a fresh, warmed-up ensemble.
pub fn sample_model(run: &ResolvedRun, model: &Ansatz, n_samples: usize) -> Result<Vec<crate::spin::SpinConfig>> {
    let mut eval = Evaluator::new(model);
    let mut ens = ChainEnsemble::new(&run.train.sampler, model.n_sites(), &mut eval)?;
    ens.warmup(run.train.sampler.warmup_sweeps, &mut eval);
    Ok(ens.draw_samples(n_samples, &mut eval)?.0)
}

pub fn cmd_observe(run: &ResolvedRun, ckpt: &Path) -> Result<ResultsRecord> {
    let start = Instant::now();
    let model = load_checked(run, ckpt)?;
    let ham = &run.hamiltonian;
    let kinds: Vec<ObservableKind> = if run.config.output.observables.is_empty() {
        match ham.kind {
            crate::hamiltonian::ModelKind::Tfim => vec![ObservableKind::M2],
            _ => vec![ObservableKind::Isotropic, ObservableKind::DimerDimer, ObservableKind::StructureFactor],
        }
    } else {
        run.config
            .output
            .observables
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?
    };
    let mode = run.config.output.observable_mode;
    let tag = model.tag();
    let mut out = format!("{SERIES_HEADER}\n");

    if mode.includes(Mode::Exact) {
        match reference_basis(run) {
            Some(basis) => {
                let basis = basis?;
                let v = model_vector(&model, &basis)?;
                let src = Source::Exact { basis: &basis, vector: &v, msr: ham.msr };
                let sol = solve(run, basis.clone(), 2)?;
                let ed = Source::Exact { basis: &basis, vector: sol.ground_vector(), msr: ham.msr };
                for k in &kinds {
                    out.push_str(&ObservableSeries::compute(&src, *k, &tag, ham.h_field)?.csv_rows());
                    out.push_str(&ObservableSeries::compute(&ed, *k, "ED", ham.h_field)?.csv_rows());
                }
            }
            None => log::warn!("basis too large for exact observables; skipping exact mode"),
        }
    }
    if mode.includes(Mode::Stochastic) {
        let samples = sample_model(run, &model, run.config.output.observable_samples)?;
        let src = Source::Sampled {
            model: &model,
            samples: &samples,
            msr: ham.msr,
            sector: run.sector,
        };
        for k in &kinds {
            out.push_str(&ObservableSeries::compute(&src, *k, &tag, ham.h_field)?.csv_rows());
        }
    }
    let path = run.out_dir.join("observables.csv");
    write_atomic(&path, out.as_bytes())?;
    let mut rec = base_record(run, "observe");
    rec.model_tag = tag;
    rec.param_count = model.param_count();
    rec.checkpoint_path = Some(rel(ckpt));
    rec.outputs.push(rel(&path));
    rec.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_record(run, "observe_results.json", &rec)?;
    Ok(rec)
}

pub fn cmd_fidelity(run: &ResolvedRun, ckpt: &Path) -> Result<ResultsRecord> {
    let start = Instant::now();
    let model = load_checked(run, ckpt)?;
    let basis = SectorBasis::enumerate(model.n_sites(), run.sector)?;
    if basis.dim() > crate::exact::MAX_DIM {
        return Err(Error::Config(format!("basis dimension {} exceeds the limit", basis.dim())));
    }
    let sol = solve(run, basis.clone(), 2)?;
    let target = target_hamiltonian(run)?;
    let v = model_vector(&model, &basis)?;
    let f = fidelity(&v, &sol, run.config.ed.degenerate_tol)?;
    let e = exact_energy(&model, &target, &basis)?;
    let mut rec = base_record(run, "fidelity");
    rec.model_tag = model.tag();
    rec.param_count = model.param_count();
    rec.checkpoint_path = Some(rel(ckpt));
    rec.fidelity = Some(f);
    rec.ed_energy = Some(sol.ground_energy());
    rec.eigenvalues = sol.eigenvalues.clone();
    rec.energy = Some(e.energy);
    rec.variance = Some(e.variance);
    rec.relative_error_exact = relative_error(e.energy, sol.ground_energy()).ok();
    rec.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_record(run, "fidelity_results.json", &rec)?;
    Ok(rec)
}

pub fn cmd_bench(run: &ResolvedRun) -> Result<ResultsRecord> {
    let start = Instant::now();
    let b = &run.config.bench;
    let mut section = run.config.clone();
    let rows = bench::sweep(&b.lengths, b.passes, b.warmup_passes, |n| {
        section.hamiltonian.n_sites = n;
        section.hamiltonian.sector = Some(false);
        section.hamiltonian.msr = Some(false);
        section.sampler.move_kind = None;
        section.training.annealing.enabled = Some(false);
        section.resolve(&Default::default())?.build_model()
    })?;
    let path = run.out_dir.join("bench.csv");
    write_atomic(&path, bench::bench_csv(&rows).as_bytes())?;
    let mut rec = base_record(run, "bench");
    rec.outputs.push(rel(&path));
    rec.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_record(run, "bench_results.json", &rec)?;
    Ok(rec)
}

/// Summary of a resolved configuration; nothing is written.
pub fn cmd_validate(run: &ResolvedRun) -> Result<ResultsRecord> {
    let model = run.build_model()?;
    let mut rec = base_record(run, "validate");
    rec.model_tag = model.tag();
    rec.param_count = model.param_count();
    rec.epochs = run.train.schedule.total;
    Ok(rec)
}
