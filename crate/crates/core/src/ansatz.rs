//! Log-amplitude networks `y(σ) = log ψ(σ)` with exact parameter gradients.
//!
//! Three architectures share one flat parameter vector:
//!
//! * **SineKAN**: a stack of layers
//!   `y_m = Σ_{n,l} A[m][n][l] · sin(ω[n][l]·x_l + φ[n][l]) + b_m`
//!   with frozen phases `φ[n][l] = π n/N + π l/I + δ[n][l]`.
//! * **MLP**: affine layers with a rectifier after every hidden layer.
//! * **RBM**: `Σ_i a_i σ_i + Σ_j ln(2 cosh(b_j + Σ_i W_ji σ_i))`.
//!
//! Any of them can be reflection-symmetrized, `y(σ) = S(σ) + S(Rσ)`, where
//! `R` mirrors the chain.
//!
//! Flattened parameter order (format version 1):
//!
//! | kind    | per layer / block, in order                          |
//! |---------|------------------------------------------------------|
//! | SineKAN | `A` as `[m][n][l]`, `ω` as `[n][l]`, `b` as `[m]`     |
//! | MLP     | `W` as `[out][in]`, `b` as `[out]`                    |
//! | RBM     | visible bias `a[L]`, hidden bias `b[H]`, `W[H][L]`    |

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::SpinConfig;

/// Version of the flattened parameter ordering written into checkpoints.
pub const FLATTEN_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzKind {
    Sinekan,
    Mlp,
    Rbm,
}

impl AnsatzKind {
    pub fn name(self) -> &'static str {
        match self {
            AnsatzKind::Sinekan => "sinekan",
            AnsatzKind::Mlp => "mlp",
            AnsatzKind::Rbm => "rbm",
        }
    }
}

/// Initial SineKAN frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "type", content = "value")]
pub enum FrequencyInit {
    /// ω[n][l] = n + 1
    #[default]
    Harmonic,
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineKanOptions {
    pub hidden: Vec<usize>,
    pub grid: usize,
    pub reflected: bool,
    pub seed: u64,
    pub delta_max: f64,
    pub frequency_init: FrequencyInit,
}

impl Default for SineKanOptions {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            grid: 8,
            reflected: false,
            seed: 0,
            delta_max: 0.01,
            frequency_init: FrequencyInit::Harmonic,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SineKanLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub grid: usize,
    offset: usize,
    delta: Vec<f64>,
    phase: Vec<f64>,
}

impl SineKanLayer {
    fn new(in_dim: usize, out_dim: usize, grid: usize, offset: usize, delta: Vec<f64>) -> Self {
        let phase = (0..grid)
            .flat_map(|n| {
                let delta = &delta;
                (0..in_dim).map(move |l| {
                    PI * n as f64 / grid as f64 + PI * l as f64 / in_dim as f64 + delta[n * in_dim + l]
                })
            })
            .collect();
        Self {
            in_dim,
            out_dim,
            grid,
            offset,
            delta,
            phase,
        }
    }

    pub fn param_count(&self) -> usize {
        let ni = self.grid * self.in_dim;
        self.out_dim * ni + ni + self.out_dim
    }

    /// Frozen perturbations δ[n][l].
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Frozen phases φ[n][l].
    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    fn ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>) {
        let ni = self.grid * self.in_dim;
        let a = self.offset..self.offset + self.out_dim * ni;
        let w = a.end..a.end + ni;
        let b = w.end..w.end + self.out_dim;
        (a, w, b)
    }

    pub fn amplitudes<'p>(&self, params: &'p [f64]) -> &'p [f64] {
        &params[self.ranges().0]
    }

    pub fn frequencies<'p>(&self, params: &'p [f64]) -> &'p [f64] {
        &params[self.ranges().1]
    }

    pub fn bias<'p>(&self, params: &'p [f64]) -> &'p [f64] {
        &params[self.ranges().2]
    }

    /// Evaluates the layer; `sines` receives sin(ω x + φ) as `[n][l]`.
    pub fn forward(&self, params: &[f64], x: &[f64], sines: &mut [f64], out: &mut [f64]) {
        let (ar, wr, br) = self.ranges();
        let (amp, freq, bias) = (&params[ar], &params[wr], &params[br]);
        let ni = self.grid * self.in_dim;
        for n in 0..self.grid {
            let row = n * self.in_dim;
            for l in 0..self.in_dim {
                sines[row + l] = (freq[row + l] * x[l] + self.phase[row + l]).sin();
            }
        }
        for m in 0..self.out_dim {
            out[m] = bias[m] + dot(&amp[m * ni..(m + 1) * ni], &sines[..ni]);
        }
    }

    /// Accumulates parameter gradients for upstream gradient `g_out` and
    /// writes the input gradient into `g_in` when requested. `t` is scratch
    /// of length N·I.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        sines: &[f64],
        g_out: &[f64],
        t: &mut [f64],
        grad: &mut [f64],
        g_in: Option<&mut [f64]>,
    ) {
        let (ar, wr, br) = self.ranges();
        let ni = self.grid * self.in_dim;
        let amp = &params[ar.clone()];
        t[..ni].iter_mut().for_each(|v| *v = 0.0);
        {
            let ga = &mut grad[ar];
            for m in 0..self.out_dim {
                let g = g_out[m];
                if g == 0.0 {
                    continue;
                }
                axpy(g, &sines[..ni], &mut ga[m * ni..(m + 1) * ni]);
                axpy(g, &amp[m * ni..(m + 1) * ni], &mut t[..ni]);
            }
        }
        for (gb, g) in grad[br].iter_mut().zip(g_out) {
            *gb += g;
        }
        let freq = &params[wr.clone()];
        let gw = &mut grad[wr];
        let mut g_in = g_in;
        if let Some(gi) = g_in.as_deref_mut() {
            gi[..self.in_dim].iter_mut().for_each(|v| *v = 0.0);
        }
        for n in 0..self.grid {
            let row = n * self.in_dim;
            for l in 0..self.in_dim {
                let k = row + l;
                if t[k] == 0.0 {
                    continue;
                }
                let tc = t[k] * (freq[k] * x[l] + self.phase[k]).cos();
                gw[k] += tc * x[l];
                if let Some(gi) = g_in.as_deref_mut() {
                    gi[l] += tc * freq[k];
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    offset: usize,
}

impl DenseLayer {
    pub fn param_count(&self) -> usize {
        self.out_dim * self.in_dim + self.out_dim
    }

    fn forward(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        let w = &params[self.offset..self.offset + self.out_dim * self.in_dim];
        let b = &params[self.offset + self.out_dim * self.in_dim..self.offset + self.param_count()];
        for m in 0..self.out_dim {
            out[m] = b[m] + dot(&w[m * self.in_dim..(m + 1) * self.in_dim], x);
        }
    }

    fn backward(&self, params: &[f64], x: &[f64], g_out: &[f64], grad: &mut [f64], g_in: Option<&mut [f64]>) {
        let nw = self.out_dim * self.in_dim;
        let w = &params[self.offset..self.offset + nw];
        let (gw, gb) = grad[self.offset..self.offset + self.param_count()].split_at_mut(nw);
        let mut g_in = g_in;
        if let Some(gi) = g_in.as_deref_mut() {
            gi[..self.in_dim].iter_mut().for_each(|v| *v = 0.0);
        }
        for m in 0..self.out_dim {
            let g = g_out[m];
            if g == 0.0 {
                continue;
            }
            gb[m] += g;
            axpy(g, x, &mut gw[m * self.in_dim..(m + 1) * self.in_dim]);
            if let Some(gi) = g_in.as_deref_mut() {
                axpy(g, &w[m * self.in_dim..(m + 1) * self.in_dim], &mut gi[..self.in_dim]);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Architecture {
    SineKan(Vec<SineKanLayer>),
    Mlp(Vec<DenseLayer>),
    Rbm { hidden: usize },
}

/// Scratch buffers for forward and backward passes, reusable across calls.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    input: Vec<f64>,
    acts: Vec<Vec<f64>>,
    sines: Vec<Vec<f64>>,
    g_a: Vec<f64>,
    g_b: Vec<f64>,
    t: Vec<f64>,
}

/// A variational log-amplitude model.
#[derive(Clone, Debug, PartialEq)]
pub struct Ansatz {
    kind: AnsatzKind,
    n_sites: usize,
    reflected: bool,
    seed: u64,
    arch: Architecture,
    params: Vec<f64>,
}

impl Ansatz {
    /// SineKAN stack `n_sites → hidden… → 1`.
    pub fn sinekan(n_sites: usize, opts: &SineKanOptions) -> Result<Self> {
        SpinConfig::all_down(n_sites)?;
        if opts.grid == 0 || opts.hidden.contains(&0) {
            return Err(Error::InvalidParameter("grid size and hidden dims must be >= 1".into()));
        }
        if !(opts.delta_max > 0.0) {
            return Err(Error::InvalidParameter("delta_max must be positive".into()));
        }
        if grid_anomaly(n_sites, &opts.hidden, opts.grid) {
            log::warn!(
                "grid size {} squared equals L = {} with a hidden width close to L; \
                 this configuration is known to train poorly, consider grid {} or {}",
                opts.grid,
                n_sites,
                opts.grid - 1,
                opts.grid + 1
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut dims = vec![n_sites];
        dims.extend(&opts.hidden);
        dims.push(1);
        let mut layers = Vec::new();
        let mut params = Vec::new();
        for w in dims.windows(2) {
            let (inp, out) = (w[0], w[1]);
            let n = opts.grid;
            let bound = (6.0 / (inp * n + out) as f64).sqrt();
            let offset = params.len();
            params.extend((0..out * n * inp).map(|_| rng.gen_range(-bound..bound)));
            params.extend((0..n).flat_map(|g| {
                let f = match opts.frequency_init {
                    FrequencyInit::Harmonic => (g + 1) as f64,
                    FrequencyInit::Constant(v) => v,
                };
                std::iter::repeat_n(f, inp)
            }));
            params.extend(std::iter::repeat_n(0.0, out));
            // δ lies in (0, δ_max]
            let delta = (0..n * inp)
                .map(|_| opts.delta_max * (1.0 - rng.gen::<f64>()))
                .collect();
            layers.push(SineKanLayer::new(inp, out, n, offset, delta));
        }
        Ok(Self {
            kind: AnsatzKind::Sinekan,
            n_sites,
            reflected: opts.reflected,
            seed: opts.seed,
            arch: Architecture::SineKan(layers),
            params,
        })
    }

    /// Rebuilds a SineKAN from stored frozen perturbations and parameters.
    pub fn sinekan_from_parts(
        n_sites: usize,
        hidden: &[usize],
        grid: usize,
        reflected: bool,
        seed: u64,
        deltas: Vec<Vec<f64>>,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut dims = vec![n_sites];
        dims.extend(hidden);
        dims.push(1);
        if deltas.len() != dims.len() - 1 {
            return Err(Error::LengthMismatch {
                expected: dims.len() - 1,
                got: deltas.len(),
            });
        }
        let mut layers = Vec::new();
        let mut offset = 0;
        for (w, delta) in dims.windows(2).zip(deltas) {
            if delta.len() != grid * w[0] {
                return Err(Error::LengthMismatch {
                    expected: grid * w[0],
                    got: delta.len(),
                });
            }
            let layer = SineKanLayer::new(w[0], w[1], grid, offset, delta);
            offset += layer.param_count();
            layers.push(layer);
        }
        if params.len() != offset {
            return Err(Error::LengthMismatch {
                expected: offset,
                got: params.len(),
            });
        }
        Ok(Self {
            kind: AnsatzKind::Sinekan,
            n_sites,
            reflected,
            seed,
            arch: Architecture::SineKan(layers),
            params,
        })
    }

    /// MLP `n_sites → hidden… → 1` with rectifiers after hidden layers.
    pub fn mlp(n_sites: usize, hidden: &[usize], reflected: bool, seed: u64) -> Result<Self> {
        SpinConfig::all_down(n_sites)?;
        if hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden dims must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![n_sites];
        dims.extend(hidden);
        dims.push(1);
        let mut layers = Vec::new();
        let mut params = Vec::new();
        for w in dims.windows(2) {
            let (inp, out) = (w[0], w[1]);
            let bound = (6.0 / (inp + out) as f64).sqrt();
            let offset = params.len();
            params.extend((0..out * inp).map(|_| rng.gen_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, out));
            layers.push(DenseLayer {
                in_dim: inp,
                out_dim: out,
                offset,
            });
        }
        Ok(Self {
            kind: AnsatzKind::Mlp,
            n_sites,
            reflected,
            seed,
            arch: Architecture::Mlp(layers),
            params,
        })
    }

    /// RBM with `alpha · n_sites` hidden units and small uniform initial weights.
    pub fn rbm(n_sites: usize, alpha: usize, reflected: bool, seed: u64) -> Result<Self> {
        SpinConfig::all_down(n_sites)?;
        if alpha == 0 {
            return Err(Error::InvalidParameter("alpha must be >= 1".into()));
        }
        let hidden = alpha * n_sites;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = n_sites + hidden + hidden * n_sites;
        let params = (0..count).map(|_| rng.gen_range(-0.01..0.01)).collect();
        Ok(Self {
            kind: AnsatzKind::Rbm,
            n_sites,
            reflected,
            seed,
            arch: Architecture::Rbm { hidden },
            params,
        })
    }

    /// Hidden dims and output width, for rebuilding layer stacks.
    pub(crate) fn layer_dims(&self) -> Vec<usize> {
        match &self.arch {
            Architecture::SineKan(ls) => ls.iter().map(|l| l.out_dim).collect(),
            Architecture::Mlp(ls) => ls.iter().map(|l| l.out_dim).collect(),
            Architecture::Rbm { hidden } => vec![*hidden],
        }
    }

    pub fn kind(&self) -> AnsatzKind {
        self.kind
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn is_reflected(&self) -> bool {
        self.reflected
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> Option<usize> {
        match &self.arch {
            Architecture::SineKan(ls) => ls.first().map(|l| l.grid),
            _ => None,
        }
    }

    pub fn sinekan_layers(&self) -> Option<&[SineKanLayer]> {
        match &self.arch {
            Architecture::SineKan(ls) => Some(ls),
            _ => None,
        }
    }

    /// Label used in reports, e.g. `rSineKAN`.
    pub fn tag(&self) -> String {
        let base = match self.kind {
            AnsatzKind::Sinekan => "SineKAN",
            AnsatzKind::Mlp => "MLP",
            AnsatzKind::Rbm => "RBM",
        };
        format!("{}{}", if self.reflected { "r" } else { "v" }, base)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Flattened trainable parameters.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                expected: self.params.len(),
                got: theta.len(),
            });
        }
        self.params.copy_from_slice(theta);
        Ok(())
    }

    pub fn unflatten(&self, theta: &[f64]) -> Result<Self> {
        let mut m = self.clone();
        m.set_params(theta)?;
        Ok(m)
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check(&self, c: &SpinConfig) -> Result<()> {
        if c.len() != self.n_sites {
            return Err(Error::LengthMismatch {
                expected: self.n_sites,
                got: c.len(),
            });
        }
        Ok(())
    }

    pub fn log_psi(&self, c: &SpinConfig) -> Result<f64> {
        self.check(c)?;
        Ok(self.log_psi_with(c, &mut Workspace::default()))
    }

    pub fn grad_log_psi(&self, c: &SpinConfig) -> Result<Vec<f64>> {
        self.check(c)?;
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_grad(c, 1.0, &mut Workspace::default(), &mut g);
        Ok(g)
    }

    /// log ψ(σ) reusing caller-owned buffers. The length is not checked.
    pub fn log_psi_with(&self, c: &SpinConfig, ws: &mut Workspace) -> f64 {
        ws.input.resize(self.n_sites, 0.0);
        c.write_spins(&mut ws.input);
        let direct = self.network(ws);
        if !self.reflected {
            return direct;
        }
        ws.input.reverse();
        let mirrored = self.network(ws);
        direct + mirrored
    }

    /// Adds `weight · ∂ log ψ(σ)/∂θ` to `grad`.
    pub fn accumulate_grad(&self, c: &SpinConfig, weight: f64, ws: &mut Workspace, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        ws.input.resize(self.n_sites, 0.0);
        c.write_spins(&mut ws.input);
        self.network_grad(ws, weight, grad);
        if self.reflected {
            ws.input.reverse();
            self.network_grad(ws, weight, grad);
        }
    }

    fn network(&self, ws: &mut Workspace) -> f64 {
        let p = &self.params;
        match &self.arch {
            Architecture::SineKan(layers) => {
                prepare(ws, layers.len(), layers.iter().map(|l| (l.out_dim, l.grid * l.in_dim)));
                let Workspace { input, acts, sines, .. } = ws;
                for (k, layer) in layers.iter().enumerate() {
                    let (done, rest) = acts.split_at_mut(k);
                    let x = if k == 0 { &input[..] } else { &done[k - 1][..] };
                    layer.forward(p, x, &mut sines[k], &mut rest[0]);
                }
                acts[layers.len() - 1][0]
            }
            Architecture::Mlp(layers) => {
                prepare(ws, layers.len(), layers.iter().map(|l| (l.out_dim, 0)));
                let Workspace { input, acts, .. } = ws;
                let last = layers.len() - 1;
                for (k, layer) in layers.iter().enumerate() {
                    let (done, rest) = acts.split_at_mut(k);
                    let x = if k == 0 { &input[..] } else { &done[k - 1][..] };
                    layer.forward(p, x, &mut rest[0]);
                    if k != last {
                        rest[0].iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                }
                acts[last][0]
            }
            Architecture::Rbm { hidden } => {
                let n = self.n_sites;
                let (a, rest) = p.split_at(n);
                let (b, w) = rest.split_at(*hidden);
                let mut y = dot(a, &ws.input);
                for j in 0..*hidden {
                    y += ln_2cosh(b[j] + dot(&w[j * n..(j + 1) * n], &ws.input));
                }
                y
            }
        }
    }

    fn network_grad(&self, ws: &mut Workspace, weight: f64, grad: &mut [f64]) {
        let p = &self.params;
        match &self.arch {
            Architecture::SineKan(layers) => {
                self.network(ws);
                let Workspace { input, acts, sines, g_a, g_b, t } = ws;
                let width = layers.iter().map(|l| l.in_dim.max(l.out_dim)).max().unwrap_or(1);
                let span = layers.iter().map(|l| l.grid * l.in_dim).max().unwrap_or(1);
                g_a.resize(width, 0.0);
                g_b.resize(width, 0.0);
                t.resize(span, 0.0);
                g_a[0] = weight;
                for k in (0..layers.len()).rev() {
                    let x = if k == 0 { &input[..] } else { &acts[k - 1][..] };
                    let need_input = k > 0;
                    let layer = &layers[k];
                    layer.backward(
                        p,
                        x,
                        &sines[k],
                        &g_a[..layer.out_dim],
                        t,
                        grad,
                        need_input.then_some(&mut g_b[..]),
                    );
                    std::mem::swap(g_a, g_b);
                }
            }
            Architecture::Mlp(layers) => {
                self.network(ws);
                let Workspace { input, acts, g_a, g_b, .. } = ws;
                let width = layers.iter().map(|l| l.in_dim.max(l.out_dim)).max().unwrap_or(1);
                g_a.resize(width, 0.0);
                g_b.resize(width, 0.0);
                g_a[0] = weight;
                for k in (0..layers.len()).rev() {
                    let layer = &layers[k];
                    let x = if k == 0 { &input[..] } else { &acts[k - 1][..] };
                    layer.backward(p, x, &g_a[..layer.out_dim], grad, (k > 0).then_some(&mut g_b[..]));
                    if k > 0 {
                        // rectifier mask: the stored activation is zero where the unit was off
                        for (g, &a) in g_b.iter_mut().zip(&acts[k - 1]) {
                            if a <= 0.0 {
                                *g = 0.0;
                            }
                        }
                    }
                    std::mem::swap(g_a, g_b);
                }
            }
            Architecture::Rbm { hidden } => {
                let n = self.n_sites;
                let x = &ws.input;
                let (pa, rest) = p.split_at(n);
                let (pb, pw) = rest.split_at(*hidden);
                let _ = pa;
                let (ga, rest) = grad.split_at_mut(n);
                let (gb, gw) = rest.split_at_mut(*hidden);
                axpy(weight, x, ga);
                for j in 0..*hidden {
                    let th = (pb[j] + dot(&pw[j * n..(j + 1) * n], x)).tanh() * weight;
                    gb[j] += th;
                    axpy(th, x, &mut gw[j * n..(j + 1) * n]);
                }
            }
        }
    }
}

fn prepare(ws: &mut Workspace, n: usize, shapes: impl Iterator<Item = (usize, usize)>) {
    ws.acts.resize_with(n, Vec::new);
    ws.sines.resize_with(n, Vec::new);
    for (k, (out, span)) in shapes.enumerate() {
        ws.acts[k].resize(out, 0.0);
        ws.sines[k].resize(span, 0.0);
    }
}

/// True when the grid size squared equals L while a hidden width is within
/// 10% of L.
pub fn grid_anomaly(n_sites: usize, hidden: &[usize], grid: usize) -> bool {
    grid * grid == n_sites
        && hidden
            .iter()
            .any(|&h| (h as f64 - n_sites as f64).abs() <= 0.1 * n_sites as f64)
}

/// Closed-form SineKAN parameter count Σ (M·N·I + N·I + M).
pub fn sinekan_param_count(n_sites: usize, hidden: &[usize], grid: usize) -> usize {
    let mut dims = vec![n_sites];
    dims.extend(hidden);
    dims.push(1);
    dims.windows(2).map(|w| w[1] * grid * w[0] + grid * w[0] + w[1]).sum()
}

#[inline]
fn ln_2cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize; the order is fixed
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..n {
        s += a[k] * b[k];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_config(rng: &mut ChaCha8Rng, n: usize) -> SpinConfig {
        SpinConfig::from_code(rng.gen::<u64>(), n).unwrap()
    }

    fn small_sinekan(n: usize, reflected: bool, seed: u64) -> Ansatz {
        Ansatz::sinekan(
            n,
            &SineKanOptions {
                hidden: vec![5, 4],
                grid: 3,
                reflected,
                seed,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn table_one_parameter_counts() {
        let sk = Ansatz::sinekan(100, &SineKanOptions::default()).unwrap();
        assert_eq!(sk.param_count(), 86_433);
        assert_eq!(sinekan_param_count(100, &[64, 64], 8), 86_433);
        assert_eq!(Ansatz::mlp(100, &[256, 256], false, 0).unwrap().param_count(), 91_905);
        assert_eq!(Ansatz::rbm(100, 128, false, 0).unwrap().param_count(), 1_292_900);
    }

    #[test]
    fn full_size_parameter_counts() {
        // per layer M·N·I + N·I + M
        assert_eq!(sinekan_param_count(64, &[64, 64], 7), 29_184 + 29_184 + 897);
        assert_eq!(sinekan_param_count(32, &[64, 64], 8), 16_704 + 33_344 + 1_025);
    }

    #[test]
    fn layer_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (i_dim, m_dim, n_grid) = (4, 3, 2);
        let delta: Vec<f64> = (0..n_grid * i_dim).map(|_| rng.gen_range(0.0..0.01)).collect();
        let layer = SineKanLayer::new(i_dim, m_dim, n_grid, 0, delta.clone());
        let params: Vec<f64> = (0..layer.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..i_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut sines = vec![0.0; n_grid * i_dim];
        let mut out = vec![0.0; m_dim];
        layer.forward(&params, &x, &mut sines, &mut out);

        let a_len = m_dim * n_grid * i_dim;
        for m in 0..m_dim {
            let mut y = params[a_len + n_grid * i_dim + m];
            for l in 0..i_dim {
                for n in 0..n_grid {
                    let a = params[m * n_grid * i_dim + n * i_dim + l];
                    let w = params[a_len + n * i_dim + l];
                    let phi = PI * n as f64 / n_grid as f64
                        + PI * l as f64 / i_dim as f64
                        + delta[n * i_dim + l];
                    y += a * (w * x[l] + phi).sin();
                }
            }
            assert!((y - out[m]).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_amplitudes_give_bias() {
        let layer = SineKanLayer::new(3, 2, 4, 0, vec![0.005; 12]);
        let mut params = vec![0.0; layer.param_count()];
        let nb = params.len();
        params[nb - 2] = 0.25;
        params[nb - 1] = -1.5;
        let mut sines = vec![0.0; 12];
        let mut out = vec![0.0; 2];
        layer.forward(&params, &[1.0, -1.0, 1.0], &mut sines, &mut out);
        assert_eq!(out, vec![0.25, -1.5]);

        // ω = 0 and δ = 0 on a single input with one grid point: sin(0) = 0
        let tiny = SineKanLayer::new(1, 2, 1, 0, vec![0.0]);
        let p = vec![0.7, -0.3, 0.0, 0.1, 0.2];
        let mut s = vec![0.0];
        let mut o = vec![0.0; 2];
        tiny.forward(&p, &[1.0], &mut s, &mut o);
        assert_eq!(o, vec![0.1, 0.2]);
    }

    #[test]
    fn frozen_perturbations_are_positive_and_small() {
        let m = Ansatz::sinekan(10, &SineKanOptions::default()).unwrap();
        for layer in m.sinekan_layers().unwrap() {
            assert!(layer.delta().iter().all(|&d| d > 0.0 && d <= 0.01));
        }
    }

    #[test]
    fn reflected_models_are_mirror_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let models = [
            small_sinekan(10, true, 1),
            Ansatz::mlp(10, &[7, 5], true, 2).unwrap(),
            Ansatz::rbm(10, 2, true, 3).unwrap(),
        ];
        for m in &models {
            for _ in 0..200 {
                let c = random_config(&mut rng, 10);
                assert_eq!(m.log_psi(&c).unwrap(), m.log_psi(&c.reflect()).unwrap());
            }
        }
    }

    #[test]
    fn zero_amplitudes_make_a_constant_model() {
        let mut m = small_sinekan(6, false, 9);
        let mut theta = m.flatten();
        let layers = m.sinekan_layers().unwrap().to_vec();
        for l in &layers {
            let (a, _, b) = l.ranges();
            theta[a].iter_mut().for_each(|v| *v = 0.0);
            theta[b].iter_mut().for_each(|v| *v = 0.0);
        }
        let last = layers.last().unwrap();
        theta[last.ranges().2.start] = 0.75;
        m.set_params(&theta).unwrap();
        for code in 0..64 {
            let c = SpinConfig::from_code(code, 6).unwrap();
            assert_eq!(m.log_psi(&c).unwrap(), 0.75);
        }
    }

    #[test]
    fn rbm_matches_closed_form() {
        let m = Ansatz::rbm(6, 2, false, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noisy: Vec<f64> = m.params().iter().map(|p| p * 50.0 + rng.gen_range(-0.1..0.1)).collect();
        let m = m.unflatten(&noisy).unwrap();
        let p = m.params();
        let (n, h) = (6, 12);
        for code in 0..64 {
            let c = SpinConfig::from_code(code, n).unwrap();
            let s = c.spins();
            let mut y = 0.0;
            for i in 0..n {
                y += p[i] * s[i];
            }
            for j in 0..h {
                let mut th = p[n + j];
                for i in 0..n {
                    th += p[n + h + j * n + i] * s[i];
                }
                y += (2.0 * th.cosh()).ln();
            }
            assert!((y - m.log_psi(&c).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn final_bias_derivative() {
        let c = SpinConfig::parse("uddudu").unwrap();
        for reflected in [false, true] {
            let m = small_sinekan(6, reflected, 4);
            let g = m.grad_log_psi(&c).unwrap();
            let expected = if reflected { 2.0 } else { 1.0 };
            assert_eq!(*g.last().unwrap(), expected);
            let mlp = Ansatz::mlp(6, &[4], reflected, 4).unwrap();
            assert_eq!(*mlp.grad_log_psi(&c).unwrap().last().unwrap(), expected);
        }
    }

    fn fd_check(m: &Ansatz, c: &SpinConfig, tol: f64) {
        let g = m.grad_log_psi(c).unwrap();
        assert_eq!(g.len(), m.param_count());
        let theta = m.flatten();
        let h = 1e-5;
        for k in 0..theta.len() {
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let fd = (m.unflatten(&tp).unwrap().log_psi(c).unwrap()
                - m.unflatten(&tm).unwrap().log_psi(c).unwrap())
                / (2.0 * h);
            let err = (fd - g[k]).abs() / g[k].abs().max(fd.abs()).max(1e-3);
            assert!(err < tol, "{} param {k}: analytic {} fd {fd}", m.tag(), g[k]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for reflected in [false, true] {
            let c = random_config(&mut rng, 8);
            fd_check(&small_sinekan(8, reflected, 21), &c, 1e-6);
            fd_check(&Ansatz::mlp(8, &[6, 5], reflected, 22).unwrap(), &c, 1e-6);
            fd_check(&Ansatz::rbm(8, 1, reflected, 23).unwrap(), &c, 1e-6);
        }
    }

    #[test]
    fn unflatten_round_trip_and_errors() {
        let m = small_sinekan(8, true, 2);
        let back = m.unflatten(&m.flatten()).unwrap();
        assert_eq!(back, m);
        assert!(m.unflatten(&[0.0; 3]).is_err());
        assert!(m.log_psi(&SpinConfig::all_up(4).unwrap()).is_err());
    }

    #[test]
    fn seeding_is_deterministic() {
        assert_eq!(small_sinekan(8, false, 7), small_sinekan(8, false, 7));
        assert_ne!(small_sinekan(8, false, 7).flatten(), small_sinekan(8, false, 8).flatten());
    }

    #[test]
    fn grid_anomaly_detection() {
        assert!(grid_anomaly(64, &[64, 64], 8));
        assert!(!grid_anomaly(64, &[64, 64], 7));
        assert!(grid_anomaly(100, &[100, 100], 10));
        assert!(!grid_anomaly(100, &[64, 64], 10));
    }
}
