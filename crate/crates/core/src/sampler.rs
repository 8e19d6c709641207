//! Metropolis–Hastings chains targeting p(σ) ∝ exp(2 y(σ)).
//!
//! Every chain owns a ChaCha stream (same key, stream id = chain index), so
//! chains never share random numbers and results do not depend on how the
//! proposals of one step are evaluated. A sweep is `L` proposals per chain;
//! one sample is recorded per chain after every sweep.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::SpinConfig;
use crate::wavefunction::{Evaluator, LogAmplitude};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    /// Flip one uniformly chosen site.
    LocalFlip,
    /// Swap a uniformly chosen pair of opposite spins anywhere on the chain.
    PairExchange,
    /// Swap a site with its right neighbour when the two spins differ.
    NeighborExchange,
}

impl MoveKind {
    pub fn conserves_magnetization(self) -> bool {
        !matches!(self, MoveKind::LocalFlip)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_samples: usize,
    pub warmup_sweeps: usize,
    pub move_kind: MoveKind,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 1024,
            n_samples: 1024,
            warmup_sweeps: 200,
            move_kind: MoveKind::LocalFlip,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.n_samples == 0 {
            return Err(Error::Config("n_chains and n_samples must be >= 1".into()));
        }
        if !self.n_samples.is_multiple_of(self.n_chains) {
            return Err(Error::Config(format!(
                "n_samples ({}) must be a multiple of n_chains ({})",
                self.n_samples, self.n_chains
            )));
        }
        Ok(())
    }

    pub fn sweeps_per_draw(&self) -> usize {
        self.n_samples / self.n_chains
    }
}

#[derive(Clone, Debug)]
pub struct ChainEnsemble {
    n_sites: usize,
    move_kind: MoveKind,
    configs: Vec<SpinConfig>,
    log_psi: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    accepted: u64,
    proposed: u64,
}

impl ChainEnsemble {
    /// Random starting states (balanced ones for magnetization-conserving
    /// moves) with their log-amplitudes cached.
    pub fn new<W: LogAmplitude + ?Sized>(
        cfg: &SamplerConfig,
        n_sites: usize,
        eval: &mut Evaluator<'_, W>,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.move_kind.conserves_magnetization() && n_sites % 2 == 1 {
            return Err(Error::OddSector(n_sites));
        }
        let mut rngs = Vec::with_capacity(cfg.n_chains);
        let mut configs = Vec::with_capacity(cfg.n_chains);
        for chain in 0..cfg.n_chains {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(chain as u64);
            let spins: Vec<f64> = if cfg.move_kind.conserves_magnetization() {
                let mut s: Vec<f64> = (0..n_sites).map(|i| if i < n_sites / 2 { 1.0 } else { -1.0 }).collect();
                s.shuffle(&mut rng);
                s
            } else {
                (0..n_sites).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
            };
            configs.push(SpinConfig::from_spins(&spins)?);
            rngs.push(rng);
        }
        let mut ens = Self {
            n_sites,
            move_kind: cfg.move_kind,
            configs,
            log_psi: Vec::new(),
            rngs,
            accepted: 0,
            proposed: 0,
        };
        ens.refresh(eval);
        Ok(ens)
    }

    pub fn n_chains(&self) -> usize {
        self.configs.len()
    }

    pub fn configs(&self) -> &[SpinConfig] {
        &self.configs
    }

    pub fn cached_log_psi(&self) -> &[f64] {
        &self.log_psi
    }

    pub fn move_kind(&self) -> MoveKind {
        self.move_kind
    }

    /// Recomputes the cached log-amplitudes, e.g. after a parameter update.
    pub fn refresh<W: LogAmplitude + ?Sized>(&mut self, eval: &mut Evaluator<'_, W>) {
        let mut out = Vec::new();
        eval.get_batch(&self.configs, &mut out);
        self.log_psi = out;
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn reset_counters(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
    }

    fn propose(&self, chain: usize, rng: &mut ChaCha8Rng) -> Option<SpinConfig> {
        let c = &self.configs[chain];
        let n = self.n_sites;
        match self.move_kind {
            MoveKind::LocalFlip => {
                let mut t = *c;
                t.toggle(rng.gen_range(0..n));
                Some(t)
            }
            MoveKind::PairExchange => {
                // uniform over ordered pairs of opposite spins
                loop {
                    let i = rng.gen_range(0..n);
                    let j = rng.gen_range(0..n);
                    if c.is_up(i) != c.is_up(j) {
                        let mut t = *c;
                        t.toggle(i);
                        t.toggle(j);
                        return Some(t);
                    }
                }
            }
            MoveKind::NeighborExchange => {
                let i = rng.gen_range(0..n);
                let j = (i + 1) % n;
                if c.is_up(i) == c.is_up(j) {
                    return None;
                }
                let mut t = *c;
                t.toggle(i);
                t.toggle(j);
                Some(t)
            }
        }
    }

    /// One sweep: `L` proposal steps for every chain.
    pub fn sweep<W: LogAmplitude + ?Sized>(&mut self, eval: &mut Evaluator<'_, W>) {
        let n_chains = self.configs.len();
        let mut proposals: Vec<Option<SpinConfig>> = vec![None; n_chains];
        let mut batch = Vec::with_capacity(n_chains);
        let mut values = Vec::with_capacity(n_chains);
        let mut rngs = std::mem::take(&mut self.rngs);
        for _ in 0..self.n_sites {
            batch.clear();
            for (chain, rng) in rngs.iter_mut().enumerate() {
                proposals[chain] = self.propose(chain, rng);
                if let Some(t) = proposals[chain] {
                    batch.push(t);
                }
            }
            eval.get_batch(&batch, &mut values);
            let mut next = values.iter();
            for (chain, rng) in rngs.iter_mut().enumerate() {
                self.proposed += 1;
                let u: f64 = rng.gen();
                let Some(t) = proposals[chain] else { continue };
                let y_new = *next.next().expect("one value per proposal");
                let log_ratio = 2.0 * (y_new - self.log_psi[chain]);
                if log_ratio >= 0.0 || u < log_ratio.exp() {
                    self.configs[chain] = t;
                    self.log_psi[chain] = y_new;
                    self.accepted += 1;
                }
            }
        }
        self.rngs = rngs;
    }

    pub fn warmup<W: LogAmplitude + ?Sized>(&mut self, sweeps: usize, eval: &mut Evaluator<'_, W>) {
        for _ in 0..sweeps {
            self.sweep(eval);
        }
    }

    /// `n_samples / n_chains` sweeps, recording every chain after each one.
    /// Samples are laid out chain by chain. Returns the samples and the
    /// acceptance rate over these sweeps.
    pub fn draw_samples<W: LogAmplitude + ?Sized>(
        &mut self,
        n_samples: usize,
        eval: &mut Evaluator<'_, W>,
    ) -> Result<(Vec<SpinConfig>, f64)> {
        let n_chains = self.configs.len();
        if n_samples == 0 || !n_samples.is_multiple_of(n_chains) {
            return Err(Error::Config(format!(
                "n_samples ({n_samples}) must be a positive multiple of n_chains ({n_chains})"
            )));
        }
        let per_chain = n_samples / n_chains;
        self.reset_counters();
        let mut by_sweep = Vec::with_capacity(per_chain);
        for _ in 0..per_chain {
            self.sweep(eval);
            by_sweep.push(self.configs.clone());
        }
        let mut samples = Vec::with_capacity(n_samples);
        for chain in 0..n_chains {
            samples.extend(by_sweep.iter().map(|s| s[chain]));
        }
        Ok((samples, self.acceptance()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{Ansatz, SineKanOptions};

    fn cfg(move_kind: MoveKind, n_chains: usize, n_samples: usize) -> SamplerConfig {
        SamplerConfig {
            n_chains,
            n_samples,
            warmup_sweeps: 10,
            move_kind,
            seed: 42,
        }
    }

    fn model(n: usize) -> Ansatz {
        Ansatz::sinekan(
            n,
            &SineKanOptions {
                hidden: vec![4],
                grid: 2,
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap()
    }

    struct Flat(usize);
    impl LogAmplitude for Flat {
        fn n_sites(&self) -> usize {
            self.0
        }
        fn log_amplitude(&self, _: &SpinConfig, _: &mut crate::ansatz::Workspace) -> f64 {
            0.3
        }
    }

    #[test]
    fn sector_chains_stay_balanced() {
        let m = model(8);
        let mut eval = Evaluator::new(&m);
        for kind in [MoveKind::PairExchange, MoveKind::NeighborExchange] {
            let mut ens = ChainEnsemble::new(&cfg(kind, 64, 256), 8, &mut eval).unwrap();
            assert!(ens.configs().iter().all(|c| c.magnetization() == 0));
            ens.warmup(20, &mut eval);
            let (samples, acc) = ens.draw_samples(256, &mut eval).unwrap();
            assert_eq!(samples.len(), 256);
            assert!((0.0..=1.0).contains(&acc));
            assert!(samples.iter().all(|c| c.magnetization() == 0));
        }
    }

    #[test]
    fn odd_chain_rejected_for_sector_moves() {
        let m = model(7);
        let mut eval = Evaluator::new(&m);
        assert!(matches!(
            ChainEnsemble::new(&cfg(MoveKind::PairExchange, 4, 4), 7, &mut eval),
            Err(Error::OddSector(7))
        ));
    }

    #[test]
    fn flat_model_accepts_everything() {
        let flat = Flat(6);
        let mut eval = Evaluator::new(&flat);
        let mut ens = ChainEnsemble::new(&cfg(MoveKind::LocalFlip, 16, 64), 6, &mut eval).unwrap();
        let (_, acc) = ens.draw_samples(64, &mut eval).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn seeding_is_deterministic() {
        let m = model(8);
        let run = || {
            let mut eval = Evaluator::new(&m);
            let mut ens = ChainEnsemble::new(&cfg(MoveKind::LocalFlip, 32, 128), 8, &mut eval).unwrap();
            ens.warmup(5, &mut eval);
            ens.draw_samples(128, &mut eval).unwrap()
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn caches_track_the_model() {
        let m = model(8);
        let mut eval = Evaluator::new(&m);
        let mut ens = ChainEnsemble::new(&cfg(MoveKind::PairExchange, 16, 16), 8, &mut eval).unwrap();
        ens.warmup(3, &mut eval);
        for (c, y) in ens.configs().iter().zip(ens.cached_log_psi()) {
            assert_eq!(*y, m.log_psi(c).unwrap());
        }
    }

    #[test]
    fn chains_use_distinct_streams() {
        let flat = Flat(16);
        let mut eval = Evaluator::new(&flat);
        let ens = ChainEnsemble::new(&cfg(MoveKind::LocalFlip, 64, 64), 16, &mut eval).unwrap();
        let mut starts: Vec<u64> = ens.configs().iter().map(|c| c.code()).collect();
        starts.sort_unstable();
        starts.dedup();
        assert!(starts.len() > 60);
    }

    #[test]
    fn pair_exchange_reaches_whole_sector() {
        let m = model(6);
        let mut eval = Evaluator::new(&m);
        let mut ens = ChainEnsemble::new(&cfg(MoveKind::PairExchange, 8, 8), 6, &mut eval).unwrap();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..400 {
            ens.sweep(&mut eval);
            seen.extend(ens.configs().iter().map(|c| c.code()));
        }
        assert_eq!(seen.len(), 20);

        let mut ens = ChainEnsemble::new(&cfg(MoveKind::LocalFlip, 8, 8), 6, &mut eval).unwrap();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..400 {
            ens.sweep(&mut eval);
            seen.extend(ens.configs().iter().map(|c| c.code()));
        }
        assert_eq!(seen.len(), 64);
    }
}
