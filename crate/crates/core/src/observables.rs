//! Correlation functions, dimer correlations, structure factor and the
//! Ising order parameter, evaluated exactly on a vector or stochastically
//! from samples.
//!
//! Each observable is a [`LocalOperator`], so both modes share the machinery
//! of the local energy. States may live in the Marshall-rotated frame; the
//! operators then carry the rotation sign so values refer to the physical
//! frame.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ansatz::Workspace;
use crate::error::{Error, Result};
use crate::exact::exact_expectation;
use crate::hamiltonian::{ConnectionSet, LocalOperator};
use crate::spin::{SectorBasis, SpinConfig};
use crate::vmc::{local_energies, SampleSet};
use crate::wavefunction::{Evaluator, LogAmplitude};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    SpinSpin(Axis),
    Isotropic,
    DimerDimer,
    StructureFactor,
    M2,
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableKind::SpinSpin(Axis::X) => f.write_str("spin_spin_xx"),
            ObservableKind::SpinSpin(Axis::Y) => f.write_str("spin_spin_yy"),
            ObservableKind::SpinSpin(Axis::Z) => f.write_str("spin_spin_zz"),
            ObservableKind::Isotropic => f.write_str("isotropic"),
            ObservableKind::DimerDimer => f.write_str("dimer_dimer"),
            ObservableKind::StructureFactor => f.write_str("structure_factor"),
            ObservableKind::M2 => f.write_str("m2"),
        }
    }
}

impl std::str::FromStr for ObservableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spin_spin_xx" | "xx" => ObservableKind::SpinSpin(Axis::X),
            "spin_spin_yy" | "yy" => ObservableKind::SpinSpin(Axis::Y),
            "spin_spin_zz" | "zz" | "spin_spin" => ObservableKind::SpinSpin(Axis::Z),
            "isotropic" => ObservableKind::Isotropic,
            "dimer_dimer" => ObservableKind::DimerDimer,
            "structure_factor" => ObservableKind::StructureFactor,
            "m2" => ObservableKind::M2,
            other => return Err(Error::Parse(format!("unknown observable `{other}`"))),
        })
    }
}

/// (1/L) Σ_ℓ Σ_γ w_γ S^γ_ℓ S^γ_{ℓ+r} with spin-1/2 operators.
#[derive(Clone, Debug, PartialEq)]
pub struct Correlator {
    pub n_sites: usize,
    pub r: usize,
    /// Weights of the x, y and z axes.
    pub weights: [f64; 3],
    /// The state is expressed in the Marshall-rotated frame.
    pub msr: bool,
}

impl Correlator {
    pub fn new(n_sites: usize, r: usize, weights: [f64; 3], msr: bool) -> Result<Self> {
        if r >= n_sites {
            return Err(Error::SiteOutOfRange { site: r, len: n_sites });
        }
        Ok(Self { n_sites, r, weights, msr })
    }

    pub fn axis(n_sites: usize, r: usize, axis: Axis, msr: bool) -> Result<Self> {
        let mut w = [0.0; 3];
        w[axis as usize] = 1.0;
        Self::new(n_sites, r, w, msr)
    }

    pub fn isotropic(n_sites: usize, r: usize, msr: bool) -> Result<Self> {
        Self::new(n_sites, r, [1.0 / 3.0; 3], msr)
    }
}

impl LocalOperator for Correlator {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn connections_into(&self, c: &SpinConfig, out: &mut ConnectionSet) {
        out.reset(*c);
        let n = self.n_sites;
        let inv = 1.0 / n as f64;
        let [wx, wy, wz] = self.weights;
        if self.r == 0 {
            out.entries.push((*c, 0.25 * (wx + wy + wz)));
            return;
        }
        let zz: f64 = (0..n).map(|l| c.sigma(l) * c.sigma((l + self.r) % n)).sum();
        out.entries.push((*c, 0.25 * wz * zz * inv));
        for l in 0..n {
            let m = (l + self.r) % n;
            let ss = c.sigma(l) * c.sigma(m);
            // σ^x σ^x flips both spins with +1, σ^y σ^y with −σ_l σ_m
            let amp = 0.25 * inv * (wx - wy * ss);
            if amp == 0.0 {
                continue;
            }
            let sign = if self.msr && (l % 2 == 0) != m.is_multiple_of(2) { -1.0 } else { 1.0 };
            let mut t = *c;
            t.toggle(l);
            t.toggle(m);
            out.entries.push((t, sign * amp));
        }
    }

    fn conserves_magnetization(&self) -> bool {
        self.weights[0] == self.weights[1]
    }
}

/// Diagonal observable defined by its value on basis states.
pub struct Diagonal<F> {
    pub n_sites: usize,
    pub f: F,
}

impl<F: Fn(&SpinConfig) -> f64> LocalOperator for Diagonal<F> {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn connections_into(&self, c: &SpinConfig, out: &mut ConnectionSet) {
        out.reset(*c);
        out.entries.push((*c, (self.f)(c)));
    }

    fn conserves_magnetization(&self) -> bool {
        true
    }
}

fn check_r(n: usize, r: usize) -> Result<()> {
    if r >= n {
        return Err(Error::SiteOutOfRange { site: r, len: n });
    }
    Ok(())
}

/// Four-point term (1/L) Σ_ℓ S^z_ℓ S^z_{ℓ+1} S^z_{ℓ+r} S^z_{ℓ+r+1}.
pub fn dimer_four_point(n: usize, r: usize) -> Diagonal<impl Fn(&SpinConfig) -> f64> {
    Diagonal {
        n_sites: n,
        f: move |c: &SpinConfig| {
            let s: f64 = (0..n)
                .map(|l| c.sigma(l) * c.sigma((l + 1) % n) * c.sigma((l + r) % n) * c.sigma((l + r + 1) % n))
                .sum();
            s / (16.0 * n as f64)
        },
    }
}

/// (1/L) |Σ_j e^{ikj} S^z_j|² with k = 2πm/L.
pub fn structure_factor_op(n: usize, m: usize) -> Diagonal<impl Fn(&SpinConfig) -> f64> {
    let k = 2.0 * PI * m as f64 / n as f64;
    let phases: Vec<(f64, f64)> = (0..n).map(|j| ((k * j as f64).cos(), (k * j as f64).sin())).collect();
    Diagonal {
        n_sites: n,
        f: move |c: &SpinConfig| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, (cr, ci)) in phases.iter().enumerate() {
                let s = 0.5 * c.sigma(j);
                re += s * cr;
                im += s * ci;
            }
            (re * re + im * im) / n as f64
        },
    }
}

/// (1/L) Σ_i σ^z_i σ^z_{i+L/2} with Pauli operators.
pub fn m2_op(n: usize) -> Diagonal<impl Fn(&SpinConfig) -> f64> {
    Diagonal {
        n_sites: n,
        f: move |c: &SpinConfig| (0..n).map(|i| c.sigma(i) * c.sigma((i + n / 2) % n)).sum::<f64>() / n as f64,
    }
}

/// Hides amplitudes outside the zero-magnetization sector, where a network
/// trained on sector samples has no meaning.
struct SectorOnly<'a>(&'a dyn LogAmplitude);

impl LogAmplitude for SectorOnly<'_> {
    fn n_sites(&self) -> usize {
        self.0.n_sites()
    }

    fn log_amplitude(&self, c: &SpinConfig, ws: &mut Workspace) -> f64 {
        if c.magnetization() != 0 {
            return f64::NEG_INFINITY;
        }
        self.0.log_amplitude(c, ws)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Stochastic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Stochastic => "stochastic",
        })
    }
}

/// Where expectation values come from.
pub enum Source<'a> {
    /// Amplitude vector over a basis.
    Exact {
        basis: &'a SectorBasis,
        vector: &'a [f64],
        msr: bool,
    },
    /// Samples of |ψ|² together with the wavefunction that produced them.
    /// `sector` restricts ψ to zero magnetization.
    Sampled {
        model: &'a dyn LogAmplitude,
        samples: &'a [SpinConfig],
        msr: bool,
        sector: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Per-configuration local values of an operator.
struct Locals {
    values: Vec<f64>,
    weights: Vec<f64>,
    n: usize,
}

impl Locals {
    fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    fn stderr_of(values: &[f64], weights: &[f64], n: usize) -> f64 {
        let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
        let var: f64 = values.iter().zip(weights).map(|(v, w)| w * (v - mean) * (v - mean)).sum();
        (var.max(0.0) / n as f64).sqrt()
    }
}

impl Source<'_> {
    pub fn n_sites(&self) -> usize {
        match self {
            Source::Exact { basis, .. } => basis.len_sites(),
            Source::Sampled { model, .. } => model.n_sites(),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Source::Exact { .. } => Mode::Exact,
            Source::Sampled { .. } => Mode::Stochastic,
        }
    }

    pub fn msr(&self) -> bool {
        match self {
            Source::Exact { msr, .. } | Source::Sampled { msr, .. } => *msr,
        }
    }

    /// Local values ⟨σ|O|ψ⟩/ψ(σ) on every distinct sample.
    fn locals<O: LocalOperator + ?Sized>(&self, op: &O) -> Result<Locals> {
        let Source::Sampled {
            model, samples, sector, ..
        } = self
        else {
            unreachable!("locals are only defined for sampled sources");
        };
        let set = SampleSet::from_samples(samples)?;
        let restricted = SectorOnly(*model);
        let values = if *sector {
            local_energies(&mut Evaluator::new(&restricted), op, &set.configs)?.values
        } else {
            local_energies(&mut Evaluator::new(*model), op, &set.configs)?.values
        };
        Ok(Locals {
            values,
            weights: set.weights,
            n: set.n_samples,
        })
    }

    pub fn expect<O: LocalOperator + ?Sized>(&self, op: &O) -> Result<Estimate> {
        match self {
            Source::Exact { basis, vector, .. } => Ok(Estimate {
                value: exact_expectation(vector, basis, op)?,
                stderr: 0.0,
            }),
            Source::Sampled { .. } => {
                let l = self.locals(op)?;
                Ok(Estimate {
                    value: l.mean(),
                    stderr: Locals::stderr_of(&l.values, &l.weights, l.n),
                })
            }
        }
    }
}

pub fn spin_spin(src: &Source<'_>, axis: Axis, r: usize) -> Result<Estimate> {
    src.expect(&Correlator::axis(src.n_sites(), r, axis, src.msr())?)
}

pub fn isotropic(src: &Source<'_>, r: usize) -> Result<Estimate> {
    src.expect(&Correlator::isotropic(src.n_sites(), r, src.msr())?)
}

/// Connected dimer correlation. The stochastic error bar propagates the
/// subtracted square to first order.
pub fn dimer_dimer(src: &Source<'_>, r: usize) -> Result<Estimate> {
    let n = src.n_sites();
    check_r(n, r)?;
    let four = dimer_four_point(n, r);
    let bond = Correlator::axis(n, 1 % n, Axis::Z, src.msr())?;
    match src {
        Source::Exact { .. } => {
            let a = src.expect(&four)?.value;
            let b = src.expect(&bond)?.value;
            Ok(Estimate {
                value: a - b * b,
                stderr: 0.0,
            })
        }
        Source::Sampled { .. } => {
            let la = src.locals(&four)?;
            let lb = src.locals(&bond)?;
            let (a, b) = (la.mean(), lb.mean());
            let combined: Vec<f64> = la.values.iter().zip(&lb.values).map(|(x, y)| x - 2.0 * b * y).collect();
            Ok(Estimate {
                value: a - b * b,
                stderr: Locals::stderr_of(&combined, &la.weights, la.n),
            })
        }
    }
}

/// Index m of k = 2πm/L, or an error when k is off the lattice grid.
pub fn momentum_index(n: usize, k: f64) -> Result<usize> {
    let x = k * n as f64 / (2.0 * PI);
    let m = x.round();
    if (x - m).abs() > 1e-9 || m < 0.0 || m >= n as f64 {
        return Err(Error::InvalidParameter(format!(
            "k = {k} is not of the form 2πm/{n} with 0 <= m < {n}"
        )));
    }
    Ok(m as usize)
}

pub fn structure_factor(src: &Source<'_>, k: f64) -> Result<Estimate> {
    let n = src.n_sites();
    src.expect(&structure_factor_op(n, momentum_index(n, k)?))
}

/// Pauli-normalized order parameter; `h` only labels the result.
pub fn tfim_m2(src: &Source<'_>, _h: f64) -> Result<Estimate> {
    let n = src.n_sites();
    if n % 2 == 1 {
        return Err(Error::InvalidParameter(format!("m² needs an even chain, got L = {n}")));
    }
    src.expect(&m2_op(n))
}

pub fn relative_error(e_model: f64, e_ref: f64) -> Result<f64> {
    if e_ref == 0.0 {
        return Err(Error::InvalidParameter("relative error against a zero reference".into()));
    }
    Ok((e_ref - e_model).abs() / e_ref.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub kind: ObservableKind,
    pub mode: Mode,
    pub tag: String,
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub const SERIES_HEADER: &str = "abscissa,value,stderr,mode,observable,model_tag";

impl ObservableSeries {
    /// Full series over r = 0..L−1 (or k = 2πm/L). `m2` yields a single
    /// point at abscissa `h`.
    pub fn compute(src: &Source<'_>, kind: ObservableKind, tag: &str, h: f64) -> Result<Self> {
        let n = src.n_sites();
        let mut s = Self {
            kind,
            mode: src.mode(),
            tag: tag.to_string(),
            abscissa: Vec::new(),
            values: Vec::new(),
            stderr: Vec::new(),
        };
        let mut push = |x: f64, e: Estimate| {
            s.abscissa.push(x);
            s.values.push(e.value);
            s.stderr.push(e.stderr);
        };
        match kind {
            ObservableKind::M2 => push(h, tfim_m2(src, h)?),
            ObservableKind::StructureFactor => {
                for m in 0..n {
                    let k = 2.0 * PI * m as f64 / n as f64;
                    push(k, structure_factor(src, k)?);
                }
            }
            _ => {
                for r in 0..n {
                    let e = match kind {
                        ObservableKind::SpinSpin(a) => spin_spin(src, a, r)?,
                        ObservableKind::Isotropic => isotropic(src, r)?,
                        _ => dimer_dimer(src, r)?,
                    };
                    push(r as f64, e);
                }
            }
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.abscissa[i], self.values[i], self.stderr[i], self.mode, self.kind, self.tag
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{SERIES_HEADER}\n{}", self.csv_rows())
    }
}
