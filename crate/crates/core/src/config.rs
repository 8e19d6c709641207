//! Run configuration (TOML) and results records (JSON).
//!
//! Every field has a protocol default, so a minimal file names only the
//! Hamiltonian. `[training.desk]` holds the reduced budget used when a run is
//! started in desk-scale mode.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::ansatz::{grid_anomaly, Ansatz, AnsatzKind, FrequencyInit, SineKanOptions};
use crate::error::{Error, Result};
use crate::exact::Method;
use crate::hamiltonian::{BiasAxis, BiasField, Hamiltonian, ModelKind};
use crate::observables::{Mode, ObservableKind};
use crate::sampler::{MoveKind, SamplerConfig};
use crate::vmc::{Annealing, LrSchedule, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSection,
    pub hamiltonian: HamiltonianSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub ed: EdSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: AnsatzKind,
    pub hidden: Option<Vec<usize>>,
    pub grid: Option<usize>,
    pub reflected: bool,
    pub seed: u64,
    /// RBM hidden density.
    pub alpha: Option<usize>,
    pub delta_max: Option<f64>,
    /// Constant initial SineKAN frequency; the harmonic ramp when absent.
    pub omega_init: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: AnsatzKind::Sinekan,
            hidden: None,
            grid: None,
            reflected: false,
            seed: 0,
            alpha: None,
            delta_max: None,
            omega_init: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticBias {
    pub axis: BiasAxis,
    pub strength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSection {
    pub kind: ModelKind,
    pub n_sites: usize,
    pub j: Option<f64>,
    pub h: Option<f64>,
    pub gamma: Option<f64>,
    pub j1: Option<f64>,
    pub j2: Option<f64>,
    pub msr: Option<bool>,
    /// Restrict to zero magnetization.
    pub sector: Option<bool>,
    pub bias: Option<StaticBias>,
}

impl Default for HamiltonianSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::J1j2,
            n_sites: 16,
            j: None,
            h: None,
            gamma: None,
            j1: None,
            j2: None,
            msr: None,
            sector: None,
            bias: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub n_chains: Option<usize>,
    pub n_samples: Option<usize>,
    pub warmup_sweeps: Option<usize>,
    pub move_kind: Option<MoveKind>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealingSection {
    pub enabled: Option<bool>,
    pub h_init: Option<f64>,
    pub n_stages: Option<usize>,
    pub iters_per_stage: Option<usize>,
    pub post_iters: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskSection {
    pub epochs: Option<usize>,
    pub flat_epochs: Option<usize>,
    pub lr: Option<f64>,
    pub lr_end: Option<f64>,
    pub n_chains: Option<usize>,
    pub n_samples: Option<usize>,
    pub warmup_sweeps: Option<usize>,
    pub iters_per_stage: Option<usize>,
    pub post_iters: Option<usize>,
    pub eval_samples: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub lr_end: Option<f64>,
    pub flat_epochs: Option<usize>,
    /// Explicit `[epoch, lr]` knots; overrides lr, lr_end and flat_epochs.
    pub knots: Option<Vec<(usize, f64)>>,
    pub eval_samples: Option<usize>,
    #[serde(default)]
    pub annealing: AnnealingSection,
    #[serde(default)]
    pub desk: DeskSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserveMode {
    Exact,
    Stochastic,
    Both,
}

impl ObserveMode {
    pub fn includes(self, m: Mode) -> bool {
        matches!(
            (self, m),
            (ObserveMode::Both, _) | (ObserveMode::Exact, Mode::Exact) | (ObserveMode::Stochastic, Mode::Stochastic)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub run_id: Option<String>,
    pub history: bool,
    pub checkpoint: bool,
    /// Observables written by `observe`, e.g. `["isotropic", "m2"]`.
    pub observables: Vec<String>,
    pub observable_mode: ObserveMode,
    pub observable_samples: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            run_id: None,
            history: true,
            checkpoint: true,
            observables: Vec::new(),
            observable_mode: ObserveMode::Both,
            observable_samples: 16384,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdSection {
    pub k: usize,
    pub method: Method,
    pub degenerate_tol: f64,
}

impl Default for EdSection {
    fn default() -> Self {
        Self {
            k: 4,
            method: Method::Auto,
            degenerate_tol: crate::exact::DEGENERATE_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub lengths: Vec<usize>,
    pub passes: usize,
    pub warmup_passes: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            lengths: vec![16, 32, 64, 128, 256],
            passes: 100_000,
            warmup_passes: 200_000,
        }
    }
}

/// Command-line overrides applied on top of a file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub desk_scale: bool,
}

/// A configuration with every default filled in and checked.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub run_id: String,
    pub hamiltonian: Hamiltonian,
    pub sector: bool,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    pub warnings: Vec<String>,
    pub config: RunConfig,
    model: ModelSection,
}

impl ResolvedRun {
    /// Fresh model as configured.
    pub fn build_model(&self) -> Result<Ansatz> {
        build_model(&self.model, self.hamiltonian.n_sites)
    }

    /// Rejects a checkpoint whose shape does not match the configuration.
    pub fn check_model(&self, m: &Ansatz) -> Result<()> {
        let expect = self.build_model()?;
        if m.kind() != expect.kind()
            || m.n_sites() != expect.n_sites()
            || m.is_reflected() != expect.is_reflected()
            || m.param_count() != expect.param_count()
            || m.grid() != expect.grid()
        {
            return Err(Error::Config(format!(
                "checkpoint holds a {} with L = {} and {} parameters, the config describes a {} with L = {} and {}",
                m.tag(),
                m.n_sites(),
                m.param_count(),
                expect.tag(),
                expect.n_sites(),
                expect.param_count()
            )));
        }
        Ok(())
    }
}

fn default_hidden(kind: AnsatzKind) -> Vec<usize> {
    match kind {
        AnsatzKind::Mlp => vec![256, 256],
        _ => vec![64, 64],
    }
}

fn build_model(m: &ModelSection, n: usize) -> Result<Ansatz> {
    let hidden = m.hidden.clone().unwrap_or_else(|| default_hidden(m.kind));
    match m.kind {
        AnsatzKind::Sinekan => {
            let grid = m.grid.unwrap_or(if grid_anomaly(n, &hidden, 8) { 7 } else { 8 });
            let opts = SineKanOptions {
                hidden,
                grid,
                reflected: m.reflected,
                seed: m.seed,
                delta_max: m.delta_max.unwrap_or(0.01),
                frequency_init: m.omega_init.map_or(FrequencyInit::Harmonic, FrequencyInit::Constant),
            };
            Ansatz::sinekan(n, &opts)
        }
        AnsatzKind::Mlp => Ansatz::mlp(n, &hidden, m.reflected, m.seed),
        AnsatzKind::Rbm => Ansatz::rbm(n, m.alpha.unwrap_or(128), m.reflected, m.seed),
    }
}

/// Learning rate for the frustrated chain: the per-length table where the
/// protocol lists one, otherwise the general J2 rule.
pub fn j1j2_learning_rate(kind: AnsatzKind, reflected: bool, n_sites: usize, j2: f64) -> f64 {
    match kind {
        AnsatzKind::Rbm => 1e-5,
        AnsatzKind::Mlp => {
            if j2 < 0.4 {
                1e-3
            } else {
                1e-4
            }
        }
        AnsatzKind::Sinekan => match (n_sites, reflected) {
            (32, true) | (100, true) => {
                if j2 < 0.3 - 1e-12 {
                    1e-3
                } else {
                    1e-4
                }
            }
            (64, true) => 1e-3,
            (32, false) | (64, false) => {
                if j2 < 0.6 - 1e-12 {
                    1e-4
                } else {
                    1e-5
                }
            }
            (100, false) => {
                if j2 < 0.3 - 1e-12 {
                    1e-4
                } else {
                    1e-5
                }
            }
            _ => {
                if j2 < 0.3 - 1e-12 {
                    1e-3
                } else {
                    1e-4
                }
            }
        },
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    fn hamiltonian(&self, sector: bool) -> Result<Hamiltonian> {
        let h = &self.hamiltonian;
        let n = h.n_sites;
        let cfg_err = |e: Error| Error::Config(e.to_string());
        let mut ham = match h.kind {
            ModelKind::Tfim => {
                let (j, field) = (h.j.unwrap_or(1.0), h.h.unwrap_or(1.0));
                if j < 0.0 || field < 0.0 {
                    return Err(Error::Config(format!(
                        "the Ising chain needs J >= 0 and h >= 0, got J = {j}, h = {field}"
                    )));
                }
                Hamiltonian::tfim(n, j, field).map_err(cfg_err)?
            }
            ModelKind::Ahm => Hamiltonian::ahm(n, h.gamma.unwrap_or(0.0)).map_err(cfg_err)?,
            ModelKind::J1j2 => Hamiltonian::j1j2(n, h.j1.unwrap_or(1.0), h.j2.unwrap_or(0.0)).map_err(cfg_err)?,
        };
        let msr = h.msr.unwrap_or(h.kind != ModelKind::Tfim && n.is_multiple_of(2));
        ham = ham.with_msr(msr).map_err(cfg_err)?;
        if let Some(b) = &h.bias {
            if b.axis == BiasAxis::UniformX && sector {
                return Err(Error::Config("a uniform x field does not conserve the magnetization sector".into()));
            }
            ham = ham.with_bias_field(BiasField::new(b.axis, b.strength).map_err(cfg_err)?);
        }
        Ok(ham)
    }

    fn annealing(&self, desk: bool) -> Option<Annealing> {
        let h = &self.hamiltonian;
        let a = &self.training.annealing;
        let gamma = h.gamma.unwrap_or(0.0);
        let enabled = a.enabled.unwrap_or(h.kind == ModelKind::Ahm && gamma > 0.0);
        if !enabled {
            return None;
        }
        let mut ann = Annealing::for_gamma(gamma);
        if let Some(x) = a.h_init {
            ann.h_init = x;
        }
        if let Some(x) = a.n_stages {
            ann.n_stages = x;
        }
        if let Some(x) = a.iters_per_stage {
            ann.iters_per_stage = x;
        }
        if let Some(x) = a.post_iters {
            ann.post_iters = x;
        }
        if desk {
            let d = &self.training.desk;
            ann.iters_per_stage = d.iters_per_stage.unwrap_or(100);
            ann.post_iters = d.post_iters.unwrap_or(1500);
        }
        Some(ann)
    }

    /// Fills defaults, applies overrides and validates.
    pub fn resolve(&self, ov: &Overrides) -> Result<ResolvedRun> {
        let mut cfg = self.clone();
        if let Some(s) = ov.seed {
            cfg.model.seed = s;
            cfg.sampler.seed = Some(s);
        }
        let desk = ov.desk_scale;
        let h = &cfg.hamiltonian;
        let n = h.n_sites;
        let mut warnings = Vec::new();

        let annealing = cfg.annealing(desk);
        let x_pin = annealing.is_some() && h.kind == ModelKind::Ahm && h.gamma.unwrap_or(0.0) >= 0.9;
        let sector = h.sector.unwrap_or(h.kind != ModelKind::Tfim && !x_pin);
        if sector && n % 2 == 1 {
            return Err(Error::Config(format!(
                "the zero-magnetization sector needs an even chain, got L = {n}"
            )));
        }
        if sector && h.kind == ModelKind::Tfim {
            return Err(Error::Config(
                "the transverse-field Ising chain does not conserve magnetization; set sector = false".into(),
            ));
        }
        if sector && x_pin {
            return Err(Error::Config(
                "the x pinning field used for gamma >= 0.9 leaves the sector; set sector = false".into(),
            ));
        }
        let hamiltonian = cfg.hamiltonian(sector)?;

        let model = build_model(&cfg.model, n).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(g) = model.grid() {
            let hidden = cfg.model.hidden.clone().unwrap_or_else(|| default_hidden(cfg.model.kind));
            if grid_anomaly(n, &hidden, g) {
                let w = format!(
                    "grid size {g} with hidden dims {hidden:?} at L = {n} hits the phase-shift degeneracy; consider grid {}",
                    g - 1
                );
                warn!("{w}");
                warnings.push(w);
            }
        }

        let s = &cfg.sampler;
        let d = &cfg.training.desk;
        let pick = |full: Option<usize>, desk_v: Option<usize>, def: usize, desk_def: usize| {
            if desk {
                desk_v.or(full.map(|v| v.min(desk_def))).unwrap_or(desk_def)
            } else {
                full.unwrap_or(def)
            }
        };
        let move_kind = s.move_kind.unwrap_or(if sector { MoveKind::PairExchange } else { MoveKind::LocalFlip });
        if sector && move_kind == MoveKind::LocalFlip {
            return Err(Error::Config("local_flip moves leave the magnetization sector".into()));
        }
        if !sector && move_kind != MoveKind::LocalFlip {
            return Err(Error::Config("exchange moves cannot explore the full space; use local_flip".into()));
        }
        let n_chains = pick(s.n_chains, d.n_chains, 1024, 256);
        let sampler = SamplerConfig {
            n_chains,
            n_samples: pick(s.n_samples, d.n_samples, 1024, 1024),
            warmup_sweeps: pick(s.warmup_sweeps, d.warmup_sweeps, 200, 200),
            move_kind,
            seed: s.seed.unwrap_or(cfg.model.seed),
        };
        sampler.validate()?;

        let schedule = cfg.schedule(&hamiltonian, annealing.as_ref(), desk)?;
        let t = &cfg.training;
        let eval_default = 4096usize.div_ceil(n_chains) * n_chains;
        let eval_samples = if desk {
            d.eval_samples.or(t.eval_samples).unwrap_or(eval_default)
        } else {
            t.eval_samples.unwrap_or(eval_default)
        };
        if eval_samples == 0 || eval_samples % n_chains != 0 {
            return Err(Error::Config(format!(
                "eval_samples ({eval_samples}) must be a positive multiple of n_chains ({n_chains})"
            )));
        }
        if cfg.output.observable_samples == 0 || !cfg.output.observable_samples.is_multiple_of(n_chains) {
            return Err(Error::Config(format!(
                "observable_samples ({}) must be a positive multiple of n_chains ({n_chains})",
                cfg.output.observable_samples
            )));
        }
        for o in &cfg.output.observables {
            o.parse::<ObservableKind>().map_err(|e| Error::Config(e.to_string()))?;
        }
        if cfg.ed.k == 0 {
            return Err(Error::Config("ed.k must be >= 1".into()));
        }
        if cfg.bench.passes == 0 || cfg.bench.lengths.is_empty() {
            return Err(Error::Config("bench needs passes >= 1 and at least one length".into()));
        }

        let run_id = cfg.output.run_id.clone().unwrap_or_else(|| {
            let tag = model.tag();
            let kind = match h.kind {
                ModelKind::Tfim => format!("tfim-h{}", hamiltonian.h_field),
                ModelKind::Ahm => format!("ahm-g{}", hamiltonian.gamma),
                ModelKind::J1j2 => format!("j1j2-j2{}", hamiltonian.j2),
            };
            format!("{tag}-{kind}-L{n}-s{}", cfg.model.seed)
        });
        let out_dir = ov
            .out
            .clone()
            .or_else(|| cfg.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
        let model_section = cfg.model.clone();
        Ok(ResolvedRun {
            run_id,
            hamiltonian,
            sector,
            train: TrainConfig {
                schedule,
                annealing,
                sampler,
                eval_samples,
            },
            out_dir,
            warnings,
            config: cfg,
            model: model_section,
        })
    }

    fn schedule(&self, ham: &Hamiltonian, annealing: Option<&Annealing>, desk: bool) -> Result<LrSchedule> {
        let t = &self.training;
        let d = &t.desk;
        let (mut lr, mut end_ratio, mut total, mut flat) = match ham.kind {
            ModelKind::Tfim if ham.h_field == 0.0 => (1e-2, 1.0, 100, 100),
            ModelKind::Tfim | ModelKind::Ahm => (1e-4, 1e-2, 10_000, 5_000),
            ModelKind::J1j2 => (
                j1j2_learning_rate(self.model.kind, self.model.reflected, ham.n_sites, ham.j2),
                0.2,
                34_000,
                30_000,
            ),
        };
        if desk && !(ham.kind == ModelKind::Tfim && ham.h_field == 0.0) {
            (total, flat) = match ham.kind {
                ModelKind::J1j2 => (2_000, 1_200),
                _ => (4_000, 2_000),
            };
        }
        if let Some(a) = annealing {
            total = a.total_epochs();
            flat = total / 2;
        }
        let epochs = if desk { d.epochs.or(t.epochs) } else { t.epochs };
        if let Some(e) = epochs {
            if annealing.is_some() && e != total {
                return Err(Error::Config(format!(
                    "epochs = {e} disagrees with the annealing budget of {total} iterations"
                )));
            }
            total = e;
            flat = flat.min(e);
        }
        if let Some(x) = if desk { d.flat_epochs.or(t.flat_epochs) } else { t.flat_epochs } {
            flat = x;
        }
        if let Some(x) = if desk { d.lr.or(t.lr) } else { t.lr } {
            lr = x;
        }
        let lr_end = if desk { d.lr_end.or(t.lr_end) } else { t.lr_end };
        if let Some(x) = lr_end {
            end_ratio = x / lr;
        }
        let result = match &t.knots {
            Some(k) => LrSchedule::new(total, k.clone()),
            None => LrSchedule::flat_then_linear(lr, flat, total, lr * end_ratio),
        };
        result.map_err(|e| Error::Config(e.to_string()))
    }
}

/// Machine-readable summary of one command invocation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub run_id: String,
    pub command: String,
    pub model_seed: u64,
    pub sampler_seed: u64,
    pub desk_scale: bool,
    pub model_tag: String,
    pub param_count: usize,
    pub epochs: usize,
    pub energy: Option<f64>,
    pub variance: Option<f64>,
    pub stderr: Option<f64>,
    pub acceptance: Option<f64>,
    pub ed_energy: Option<f64>,
    pub eigenvalues: Vec<f64>,
    pub relative_error: Option<f64>,
    /// Relative error of the exact Rayleigh quotient of the trained model.
    pub relative_error_exact: Option<f64>,
    pub fidelity: Option<f64>,
    pub wall_clock_seconds: f64,
    pub history_path: Option<String>,
    pub checkpoint_path: Option<String>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub config: Option<RunConfig>,
}

impl ResultsRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }
}
