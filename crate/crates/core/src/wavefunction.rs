//! Log-amplitude sources and a memoizing batch evaluator.
//!
//! Parameters are fixed for the lifetime of an [`Evaluator`], so every
//! configuration is evaluated at most once per optimization step.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::ansatz::{Ansatz, Workspace};
use crate::error::{Error, Result};
use crate::spin::{SectorBasis, SpinConfig};

/// A positive wavefunction given through `log ψ(σ)`; `-∞` means ψ(σ) = 0.
pub trait LogAmplitude: Sync {
    fn n_sites(&self) -> usize;
    fn log_amplitude(&self, c: &SpinConfig, ws: &mut Workspace) -> f64;
}

impl LogAmplitude for Ansatz {
    fn n_sites(&self) -> usize {
        Ansatz::n_sites(self)
    }

    fn log_amplitude(&self, c: &SpinConfig, ws: &mut Workspace) -> f64 {
        self.log_psi_with(c, ws)
    }
}

/// Lookup-table state over a basis, e.g. an exact eigenvector. Amplitudes
/// must be non-negative; states outside the basis have zero amplitude.
#[derive(Clone, Debug)]
pub struct TableState {
    basis: SectorBasis,
    log_amp: Vec<f64>,
}

impl TableState {
    pub fn new(basis: SectorBasis, amplitudes: &[f64]) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::LengthMismatch {
                expected: basis.dim(),
                got: amplitudes.len(),
            });
        }
        if let Some(a) = amplitudes.iter().find(|a| **a < 0.0 || !a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "table states need non-negative finite amplitudes, found {a}"
            )));
        }
        let log_amp = amplitudes.iter().map(|a| a.ln()).collect();
        Ok(Self { basis, log_amp })
    }

    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }
}

impl LogAmplitude for TableState {
    fn n_sites(&self) -> usize {
        self.basis.len_sites()
    }

    fn log_amplitude(&self, c: &SpinConfig, _ws: &mut Workspace) -> f64 {
        self.basis
            .index_of(c)
            .map_or(f64::NEG_INFINITY, |i| self.log_amp[i])
    }
}

/// Memoized evaluation of a fixed wavefunction.
pub struct Evaluator<'m, W: LogAmplitude + ?Sized> {
    model: &'m W,
    memo: HashMap<SpinConfig, f64>,
    ws: Workspace,
    evaluations: u64,
}

impl<'m, W: LogAmplitude + ?Sized> Evaluator<'m, W> {
    pub fn new(model: &'m W) -> Self {
        Self {
            model,
            memo: HashMap::new(),
            ws: Workspace::default(),
            evaluations: 0,
        }
    }

    pub fn model(&self) -> &'m W {
        self.model
    }

    /// Number of network evaluations performed (cache misses).
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn get(&mut self, c: &SpinConfig) -> f64 {
        if let Some(&y) = self.memo.get(c) {
            return y;
        }
        let y = self.model.log_amplitude(c, &mut self.ws);
        self.evaluations += 1;
        self.memo.insert(*c, y);
        y
    }

    /// Evaluates every configuration, computing cache misses in parallel.
    /// `out` receives the values in input order.
    pub fn get_batch(&mut self, configs: &[SpinConfig], out: &mut Vec<f64>) {
        let mut missing: Vec<SpinConfig> = Vec::new();
        for c in configs {
            if !self.memo.contains_key(c) {
                self.memo.insert(*c, f64::NAN);
                missing.push(*c);
            }
        }
        if !missing.is_empty() {
            let model = self.model;
            let values: Vec<f64> = missing
                .par_iter()
                .with_min_len(32)
                .map_init(Workspace::default, |ws, c| model.log_amplitude(c, ws))
                .collect();
            self.evaluations += missing.len() as u64;
            for (c, y) in missing.into_iter().zip(values) {
                self.memo.insert(c, y);
            }
        }
        out.clear();
        out.extend(configs.iter().map(|c| self.memo[c]));
    }
}
