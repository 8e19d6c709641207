//! Variational Monte Carlo: local energies, estimators, Adam and the
//! training loop.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{Ansatz, Workspace};
use crate::error::{Error, Result};
use crate::hamiltonian::{ConnectionSet, Hamiltonian, LocalOperator};
use crate::sampler::{ChainEnsemble, SamplerConfig};
use crate::spin::{SectorBasis, SpinConfig};
use crate::wavefunction::{Evaluator, LogAmplitude};

/// Bound on |log ψ(σ′) − log ψ(σ)| before exponentiation.
pub const LOG_RATIO_CLAMP: f64 = 60.0;

/// Configurations with statistical weights summing to one. Repeated Monte
/// Carlo samples are merged, keeping first-appearance order.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub configs: Vec<SpinConfig>,
    pub weights: Vec<f64>,
    /// Number of draws behind the weights, used for standard errors.
    pub n_samples: usize,
}

impl SampleSet {
    pub fn from_samples(samples: &[SpinConfig]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut index: HashMap<SpinConfig, usize> = HashMap::with_capacity(samples.len());
        let mut configs = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for s in samples {
            let k = *index.entry(*s).or_insert_with(|| {
                configs.push(*s);
                counts.push(0);
                configs.len() - 1
            });
            counts[k] += 1;
        }
        let n = samples.len() as f64;
        Ok(Self {
            configs,
            weights: counts.into_iter().map(|c| c as f64 / n).collect(),
            n_samples: samples.len(),
        })
    }

    /// The whole basis weighted by the exact Born probabilities of `model`.
    pub fn exhaustive<W: LogAmplitude + ?Sized>(eval: &mut Evaluator<'_, W>, basis: &SectorBasis) -> Result<Self> {
        if basis.dim() == 0 {
            return Err(Error::EmptySamples);
        }
        let mut logs = Vec::new();
        eval.get_batch(basis.states(), &mut logs);
        let ymax = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p: Vec<f64> = logs.iter().map(|y| (2.0 * (y - ymax)).exp()).collect();
        let z: f64 = p.iter().sum();
        Ok(Self {
            configs: basis.states().to_vec(),
            weights: p.into_iter().map(|x| x / z).collect(),
            n_samples: basis.dim(),
        })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalEnergies {
    pub values: Vec<f64>,
    pub clamp_count: u64,
}

fn ratio(y_target: f64, y_source: f64, clamps: &mut u64) -> f64 {
    if y_target == f64::NEG_INFINITY {
        return 0.0;
    }
    let d = y_target - y_source;
    if d.abs() > LOG_RATIO_CLAMP {
        *clamps += 1;
        return d.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP).exp();
    }
    d.exp()
}

/// E_loc(σ) = Σ_σ′ ⟨σ′|H|σ⟩ ψ(σ′)/ψ(σ) for one configuration.
pub fn local_energy<W, O>(eval: &mut Evaluator<'_, W>, op: &O, c: &SpinConfig) -> Result<f64>
where
    W: LogAmplitude + ?Sized,
    O: LocalOperator + ?Sized,
{
    let conn = op.connections(c)?;
    let y = eval.get(c);
    let mut clamps = 0;
    let mut e = conn.diagonal();
    for (t, amp) in conn.off_diagonal() {
        e += amp * ratio(eval.get(t), y, &mut clamps);
    }
    Ok(e)
}

/// Local energies of many configurations. All amplitudes needed are
/// requested as one batch so cache misses are evaluated in parallel.
pub fn local_energies<W, O>(eval: &mut Evaluator<'_, W>, op: &O, configs: &[SpinConfig]) -> Result<LocalEnergies>
where
    W: LogAmplitude + ?Sized,
    O: LocalOperator + ?Sized,
{
    let n = op.n_sites();
    let mut diag = Vec::with_capacity(configs.len());
    let mut offsets = Vec::with_capacity(configs.len() + 1);
    let mut targets = Vec::new();
    let mut amps = Vec::new();
    offsets.push(0);
    let Some(first) = configs.first() else {
        return Ok(LocalEnergies::default());
    };
    let mut conn = ConnectionSet::new(*first);
    for c in configs {
        if c.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: c.len() });
        }
        op.connections_into(c, &mut conn);
        diag.push(conn.diagonal());
        for (t, a) in conn.off_diagonal() {
            targets.push(*t);
            amps.push(*a);
        }
        offsets.push(targets.len());
    }
    let mut y_src = Vec::new();
    eval.get_batch(configs, &mut y_src);
    let mut y_tgt = Vec::new();
    eval.get_batch(&targets, &mut y_tgt);

    let mut clamp_count = 0;
    let values = (0..configs.len())
        .map(|k| {
            let mut e = diag[k];
            for m in offsets[k]..offsets[k + 1] {
                e += amps[m] * ratio(y_tgt[m], y_src[k], &mut clamp_count);
            }
            e
        })
        .collect();
    Ok(LocalEnergies { values, clamp_count })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VmcEstimate {
    pub energy: f64,
    pub variance: f64,
    pub stderr: f64,
    pub acceptance: f64,
    pub n_samples: usize,
}

impl VmcEstimate {
    fn from_weighted(values: &[f64], weights: &[f64], n_samples: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mean: f64 = values.iter().zip(weights).map(|(e, w)| w * e).sum();
        let variance: f64 = values
            .iter()
            .zip(weights)
            .map(|(e, w)| w * (e - mean) * (e - mean))
            .sum::<f64>()
            .max(0.0);
        Ok(Self {
            energy: mean,
            variance,
            stderr: (variance / n_samples as f64).sqrt(),
            acceptance: f64::NAN,
            n_samples,
        })
    }
}

/// Sample mean and variance of the local energy.
pub fn estimate<W, O>(eval: &mut Evaluator<'_, W>, op: &O, samples: &[SpinConfig]) -> Result<VmcEstimate>
where
    W: LogAmplitude + ?Sized,
    O: LocalOperator + ?Sized,
{
    estimate_weighted(eval, op, &SampleSet::from_samples(samples)?)
}

pub fn estimate_weighted<W, O>(eval: &mut Evaluator<'_, W>, op: &O, set: &SampleSet) -> Result<VmcEstimate>
where
    W: LogAmplitude + ?Sized,
    O: LocalOperator + ?Sized,
{
    let el = local_energies(eval, op, &set.configs)?;
    VmcEstimate::from_weighted(&el.values, &set.weights, set.n_samples)
}

const GRAD_CHUNK: usize = 32;

/// Σ_i c_i ∂_θ log ψ(σ_i), reduced chunk by chunk in a fixed order.
fn weighted_grad(model: &Ansatz, configs: &[SpinConfig], coef: &[f64]) -> Vec<f64> {
    let np = model.param_count();
    let partials: Vec<Vec<f64>> = configs
        .par_chunks(GRAD_CHUNK)
        .zip(coef.par_chunks(GRAD_CHUNK))
        .map(|(cs, ws)| {
            let mut g = vec![0.0; np];
            let mut scratch = Workspace::default();
            for (c, w) in cs.iter().zip(ws) {
                if *w != 0.0 {
                    model.accumulate_grad(c, *w, &mut scratch, &mut g);
                }
            }
            g
        })
        .collect();
    let mut total = vec![0.0; np];
    for p in &partials {
        total.iter_mut().zip(p).for_each(|(t, x)| *t += x);
    }
    total
}

/// Estimate, energy gradient and clamp count from one set of samples.
/// The gradient is G = 2 Σ w (E_loc − Ē) ∂ log ψ, which equals the
/// covariance form with centered log-derivatives.
pub fn energy_and_gradient<O: LocalOperator + ?Sized>(
    eval: &mut Evaluator<'_, Ansatz>,
    op: &O,
    set: &SampleSet,
) -> Result<(VmcEstimate, Vec<f64>, u64)> {
    let el = local_energies(eval, op, &set.configs)?;
    let est = VmcEstimate::from_weighted(&el.values, &set.weights, set.n_samples)?;
    let coef: Vec<f64> = el
        .values
        .iter()
        .zip(&set.weights)
        .map(|(e, w)| 2.0 * w * (e - est.energy))
        .collect();
    let g = weighted_grad(eval.model(), &set.configs, &coef);
    Ok((est, g, el.clamp_count))
}

pub fn gradient<O: LocalOperator + ?Sized>(
    eval: &mut Evaluator<'_, Ansatz>,
    op: &O,
    samples: &[SpinConfig],
) -> Result<Vec<f64>> {
    Ok(energy_and_gradient(eval, op, &SampleSet::from_samples(samples)?)?.1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                expected: self.m.len(),
                got: if theta.len() != self.m.len() { theta.len() } else { grad.len() },
            });
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powf(self.step as f64);
        let c2 = 1.0 - b2.powf(self.step as f64);
        for k in 0..theta.len() {
            let g = grad[k];
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g;
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            theta[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Piecewise-linear learning rate through `(epoch, lr)` knots; constant
/// after the last knot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub total: usize,
    pub knots: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn new(total: usize, knots: Vec<(usize, f64)>) -> Result<Self> {
        if total == 0 || knots.is_empty() {
            return Err(Error::InvalidParameter("schedule needs epochs and at least one knot".into()));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidParameter("schedule knots must be strictly increasing".into()));
        }
        if knots.iter().any(|(_, lr)| !(*lr > 0.0 && lr.is_finite())) {
            return Err(Error::InvalidParameter("learning rates must be positive".into()));
        }
        Ok(Self { total, knots })
    }

    pub fn constant(lr: f64, total: usize) -> Result<Self> {
        Self::new(total, vec![(0, lr)])
    }

    /// `lr` until epoch `flat`, then linear down to `end` at the last epoch.
    pub fn flat_then_linear(lr: f64, flat: usize, total: usize, end: f64) -> Result<Self> {
        if flat + 1 >= total {
            return Self::constant(lr, total);
        }
        if flat == 0 {
            return Self::new(total, vec![(0, lr), (total - 1, end)]);
        }
        Self::new(total, vec![(0, lr), (flat, lr), (total - 1, end)])
    }

    pub fn lr_at(&self, t: usize) -> Result<f64> {
        if t >= self.total {
            return Err(Error::InvalidParameter(format!(
                "epoch {t} outside schedule of {} epochs",
                self.total
            )));
        }
        let k = self.knots.partition_point(|(e, _)| *e <= t);
        if k == 0 {
            return Ok(self.knots[0].1);
        }
        let (e0, l0) = self.knots[k - 1];
        match self.knots.get(k) {
            None => Ok(l0),
            Some(&(e1, l1)) => Ok(l0 + (l1 - l0) * (t - e0) as f64 / (e1 - e0) as f64),
        }
    }
}

/// Zeeman-pin quench: `n_stages` stages at decreasing fields followed by
/// unbiased iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annealing {
    pub h_init: f64,
    pub n_stages: usize,
    pub iters_per_stage: usize,
    pub post_iters: usize,
}

impl Annealing {
    pub fn for_gamma(gamma: f64) -> Self {
        Self {
            h_init: gamma + 0.2,
            n_stages: 15,
            iters_per_stage: 333,
            post_iters: 5005,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_stages == 0 || self.iters_per_stage == 0 || !(self.h_init >= 0.0) {
            return Err(Error::InvalidParameter(
                "annealing needs stages >= 1, iterations >= 1 and h_init >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.n_stages * self.iters_per_stage + self.post_iters
    }

    pub fn field(&self, stage: usize) -> Result<f64> {
        if stage >= self.n_stages {
            return Err(Error::InvalidParameter(format!(
                "stage {stage} outside 0..{}",
                self.n_stages
            )));
        }
        Ok(self.h_init * (1.0 - (stage + 1) as f64 / self.n_stages as f64))
    }

    pub fn field_at_epoch(&self, t: usize) -> f64 {
        self.field(t / self.iters_per_stage).unwrap_or(0.0)
    }
}

pub fn annealing_field(a: &Annealing, stage: usize) -> Result<f64> {
    a.field(stage)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub schedule: LrSchedule,
    pub annealing: Option<Annealing>,
    pub sampler: SamplerConfig,
    /// Samples for the closing estimate (a multiple of the chain count).
    pub eval_samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub energy: f64,
    pub variance: f64,
    pub stderr: f64,
    pub acceptance: f64,
    pub lr: f64,
    pub bias_h: f64,
    pub clamp_count: u64,
}

pub const HISTORY_HEADER: &str = "epoch,energy,variance,stderr,acceptance,lr,bias_h,clamp_count";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.energy,
            self.variance,
            self.stderr,
            self.acceptance,
            self.lr,
            self.bias_h,
            self.clamp_count
        )
    }
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub final_estimate: VmcEstimate,
    pub seconds: f64,
}

/// Runs sample → estimate → gradient → Adam for every scheduled epoch.
/// `on_epoch` sees each record as soon as it exists.
pub fn train(
    model: &mut Ansatz,
    ham: &Hamiltonian,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let start = Instant::now();
    if ham.n_sites != model.n_sites() {
        return Err(Error::LengthMismatch {
            expected: ham.n_sites,
            got: model.n_sites(),
        });
    }
    if let Some(a) = &cfg.annealing {
        a.validate()?;
        ham.with_bias(0.0)?;
    }
    let epochs = cfg.schedule.total;
    let mut adam = Adam::new(model.param_count());
    let mut history = Vec::with_capacity(epochs);

    let mut ensemble = {
        let mut eval = Evaluator::new(&*model);
        let mut ens = ChainEnsemble::new(&cfg.sampler, model.n_sites(), &mut eval)?;
        ens.warmup(cfg.sampler.warmup_sweeps, &mut eval);
        ens
    };

    for epoch in 0..epochs {
        let lr = cfg.schedule.lr_at(epoch)?;
        let (h, op) = match &cfg.annealing {
            Some(a) => {
                let h = a.field_at_epoch(epoch);
                (h, ham.with_bias(h)?)
            }
            None => (ham.bias.strength, ham.clone()),
        };
        let (est, grad, clamps, acceptance) = {
            let mut eval = Evaluator::new(&*model);
            if epoch > 0 {
                ensemble.refresh(&mut eval);
            }
            let (samples, acceptance) = ensemble.draw_samples(cfg.sampler.n_samples, &mut eval)?;
            let set = SampleSet::from_samples(&samples)?;
            let (est, grad, clamps) = energy_and_gradient(&mut eval, &op, &set)?;
            (est, grad, clamps, acceptance)
        };
        if !est.energy.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical {
                epoch,
                message: format!("non-finite energy {} or gradient", est.energy),
            });
        }
        let record = EpochRecord {
            epoch,
            energy: est.energy,
            variance: est.variance,
            stderr: est.stderr,
            acceptance,
            lr,
            bias_h: h,
            clamp_count: clamps,
        };
        on_epoch(&record);
        history.push(record);
        adam.step(model.params_mut(), &grad, lr)?;
    }

    let final_ham = match &cfg.annealing {
        Some(_) => ham.with_bias(0.0)?,
        None => ham.clone(),
    };
    let mut eval = Evaluator::new(&*model);
    ensemble.refresh(&mut eval);
    ensemble.warmup(cfg.sampler.warmup_sweeps.min(20), &mut eval);
    let (samples, acceptance) = ensemble.draw_samples(cfg.eval_samples, &mut eval)?;
    let mut final_estimate = estimate(&mut eval, &final_ham, &samples)?;
    final_estimate.acceptance = acceptance;
    if !final_estimate.energy.is_finite() {
        return Err(Error::Numerical {
            epoch: epochs,
            message: "non-finite final energy".into(),
        });
    }
    Ok(TrainOutcome {
        history,
        final_estimate,
        seconds: start.elapsed().as_secs_f64(),
    })
}
