//! Model Hamiltonians on a periodic chain and their sparse action on basis
//! states.
//!
//! Conventions: the transverse-field Ising model uses Pauli matrices
//! (σ = ±1), the anisotropic Heisenberg and J1–J2 chains use spin-1/2
//! operators (S = σ/2). With `msr` set the exchange part is rotated by the
//! Marshall sign `R|σ⟩ = (−1)^N_A(σ) |σ⟩`; the pinning fields are added
//! after the rotation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{SectorBasis, SpinConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tfim,
    Ahm,
    J1j2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BiasAxis {
    #[default]
    None,
    /// −h Σᵢ (−1)ⁱ Sᶻᵢ
    StaggeredZ,
    /// −h Σᵢ Sᶻᵢ; a constant on any fixed-magnetization sector.
    UniformZ,
    /// −h Σᵢ Sˣᵢ
    UniformX,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct BiasField {
    pub axis: BiasAxis,
    pub strength: f64,
}

impl BiasField {
    pub const NONE: BiasField = BiasField {
        axis: BiasAxis::None,
        strength: 0.0,
    };

    pub fn new(axis: BiasAxis, strength: f64) -> Result<Self> {
        if !(strength >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bias strength must be >= 0, got {strength}"
            )));
        }
        if strength == 0.0 || axis == BiasAxis::None {
            return Ok(Self::NONE);
        }
        Ok(Self { axis, strength })
    }

    pub fn is_active(&self) -> bool {
        self.axis != BiasAxis::None && self.strength != 0.0
    }
}

/// Sparse row of an operator: the diagonal element first, then the
/// off-diagonal targets in deterministic site order.
#[derive(Clone, Debug)]
pub struct ConnectionSet {
    pub source: SpinConfig,
    pub entries: Vec<(SpinConfig, f64)>,
}

impl ConnectionSet {
    pub fn new(source: SpinConfig) -> Self {
        Self {
            source,
            entries: Vec::with_capacity(2 * source.len() + 1),
        }
    }

    pub(crate) fn reset(&mut self, source: SpinConfig) {
        self.source = source;
        self.entries.clear();
    }

    pub fn diagonal(&self) -> f64 {
        self.entries[0].1
    }

    pub fn off_diagonal(&self) -> &[(SpinConfig, f64)] {
        &self.entries[1..]
    }
}

/// Anything that acts on basis states through a finite, real connection set.
pub trait LocalOperator {
    fn n_sites(&self) -> usize;

    /// Fills `out` with the row of `⟨σ′|O|σ⟩`. The first entry is the diagonal.
    fn connections_into(&self, c: &SpinConfig, out: &mut ConnectionSet);

    /// Whether the operator maps the zero-magnetization sector onto itself.
    fn conserves_magnetization(&self) -> bool;

    fn connections(&self, c: &SpinConfig) -> Result<ConnectionSet> {
        if c.len() != self.n_sites() {
            return Err(Error::LengthMismatch {
                expected: self.n_sites(),
                got: c.len(),
            });
        }
        let mut out = ConnectionSet::new(*c);
        self.connections_into(c, &mut out);
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    pub kind: ModelKind,
    pub n_sites: usize,
    /// Ising coupling (TFIM).
    pub j: f64,
    /// Transverse field (TFIM).
    pub h_field: f64,
    /// Anisotropy (AHM).
    pub gamma: f64,
    pub j1: f64,
    pub j2: f64,
    pub msr: bool,
    pub bias: BiasField,
}

impl Hamiltonian {
    fn base(kind: ModelKind, n_sites: usize) -> Result<Self> {
        SpinConfig::all_down(n_sites)?;
        Ok(Self {
            kind,
            n_sites,
            j: 0.0,
            h_field: 0.0,
            gamma: 0.0,
            j1: 0.0,
            j2: 0.0,
            msr: false,
            bias: BiasField::NONE,
        })
    }

    pub fn tfim(n_sites: usize, j: f64, h_field: f64) -> Result<Self> {
        let mut m = Self::base(ModelKind::Tfim, n_sites)?;
        m.j = j;
        m.h_field = h_field;
        Ok(m)
    }

    pub fn ahm(n_sites: usize, gamma: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "anisotropy gamma must lie in [-1, 1], got {gamma}"
            )));
        }
        let mut m = Self::base(ModelKind::Ahm, n_sites)?;
        m.gamma = gamma;
        Ok(m)
    }

    pub fn j1j2(n_sites: usize, j1: f64, j2: f64) -> Result<Self> {
        if !(j1 > 0.0) || !(j2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "J1 > 0 and J2 >= 0 required, got J1 = {j1}, J2 = {j2}"
            )));
        }
        let mut m = Self::base(ModelKind::J1j2, n_sites)?;
        m.j1 = j1;
        m.j2 = j2;
        Ok(m)
    }

    pub fn with_msr(mut self, msr: bool) -> Result<Self> {
        if msr && self.n_sites % 2 == 1 {
            return Err(Error::InvalidParameter(
                "the Marshall rotation needs an even chain length".into(),
            ));
        }
        self.msr = msr;
        Ok(self)
    }

    pub fn with_bias_field(mut self, bias: BiasField) -> Self {
        self.bias = bias;
        self
    }

    /// Pinning field used while annealing the anisotropic chain: staggered
    /// along z for γ < 0.9, uniform along x in the Ising limit γ ≥ 0.9.
    pub fn with_bias(&self, h: f64) -> Result<Self> {
        if self.kind != ModelKind::Ahm {
            return Err(Error::InvalidParameter(
                "pinning fields are defined for the anisotropic chain only".into(),
            ));
        }
        if h < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "pinning field must be >= 0, got {h}"
            )));
        }
        let axis = if self.gamma < 0.9 {
            BiasAxis::StaggeredZ
        } else {
            BiasAxis::UniformX
        };
        Ok(self.clone().with_bias_field(BiasField::new(axis, h)?))
    }

    /// Sign picked up by an off-diagonal element that flips the given sites.
    #[inline]
    fn rotation(&self, flipped: &[usize]) -> f64 {
        if !self.msr {
            return 1.0;
        }
        let even = flipped.iter().filter(|&&s| s % 2 == 0).count();
        if even % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Adds a flip-flop entry for every antiparallel pair at distance `dist`.
    fn push_exchange(&self, c: &SpinConfig, dist: usize, amp: f64, out: &mut ConnectionSet) {
        if amp == 0.0 {
            return;
        }
        let n = self.n_sites;
        for i in 0..n {
            let j = (i + dist) % n;
            if c.is_up(i) != c.is_up(j) {
                let mut t = *c;
                t.toggle(i);
                t.toggle(j);
                out.entries.push((t, amp * self.rotation(&[i, j])));
            }
        }
    }

    fn bond_sum(&self, c: &SpinConfig, dist: usize) -> f64 {
        let n = self.n_sites;
        (0..n).map(|i| c.sigma(i) * c.sigma((i + dist) % n)).sum()
    }
}

impl LocalOperator for Hamiltonian {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn connections_into(&self, c: &SpinConfig, out: &mut ConnectionSet) {
        debug_assert_eq!(c.len(), self.n_sites);
        out.reset(*c);
        let n = self.n_sites;
        let mut diag = match self.kind {
            ModelKind::Tfim => -self.j * self.bond_sum(c, 1),
            ModelKind::Ahm => 0.25 * (1.0 + self.gamma) * self.bond_sum(c, 1),
            ModelKind::J1j2 => 0.25 * (self.j1 * self.bond_sum(c, 1) + self.j2 * self.bond_sum(c, 2)),
        };
        match self.bias.axis {
            BiasAxis::StaggeredZ => {
                let stag: f64 = (0..n)
                    .map(|i| if i % 2 == 0 { c.sigma(i) } else { -c.sigma(i) })
                    .sum();
                diag -= 0.5 * self.bias.strength * stag;
            }
            BiasAxis::UniformZ => diag -= 0.5 * self.bias.strength * c.magnetization() as f64,
            BiasAxis::None | BiasAxis::UniformX => {}
        }
        out.entries.push((*c, diag));

        match self.kind {
            ModelKind::Tfim => {
                if self.h_field != 0.0 {
                    for i in 0..n {
                        let mut t = *c;
                        t.toggle(i);
                        out.entries.push((t, -self.h_field * self.rotation(&[i])));
                    }
                }
            }
            ModelKind::Ahm => self.push_exchange(c, 1, 0.5 * (1.0 - self.gamma), out),
            ModelKind::J1j2 => {
                self.push_exchange(c, 1, 0.5 * self.j1, out);
                self.push_exchange(c, 2, 0.5 * self.j2, out);
            }
        }

        if self.bias.axis == BiasAxis::UniformX && self.bias.strength != 0.0 {
            for i in 0..n {
                let mut t = *c;
                t.toggle(i);
                out.entries.push((t, -0.5 * self.bias.strength));
            }
        }
    }

    fn conserves_magnetization(&self) -> bool {
        let transverse = match self.kind {
            ModelKind::Tfim => self.h_field != 0.0,
            ModelKind::Ahm | ModelKind::J1j2 => false,
        };
        !transverse && !(self.bias.axis == BiasAxis::UniformX && self.bias.strength != 0.0)
    }
}

/// Real symmetric matrix in compressed sparse row form.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// y = A x, parallel over rows.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        use rayon::prelude::*;
        y.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, yi)| {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.cols[r.clone()]
                .iter()
                .zip(&self.vals[r])
                .map(|(&c, &v)| v * x[c as usize])
                .sum();
        });
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Largest absolute row sum, an upper bound on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Assembles the operator restricted to `basis`, merging duplicate targets.
pub fn build_sector_matrix<O: LocalOperator + ?Sized>(
    op: &O,
    basis: &SectorBasis,
) -> Result<SparseMatrix> {
    if basis.len_sites() != op.n_sites() {
        return Err(Error::LengthMismatch {
            expected: op.n_sites(),
            got: basis.len_sites(),
        });
    }
    if basis.is_constrained() && !op.conserves_magnetization() {
        return Err(Error::SectorNotClosed(
            "operator changes the magnetization but the basis is the zero-magnetization sector"
                .into(),
        ));
    }
    let dim = basis.dim();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    let mut conn = ConnectionSet::new(basis.state(0));
    let mut row: Vec<(u32, f64)> = Vec::new();
    for s in basis.states() {
        op.connections_into(s, &mut conn);
        row.clear();
        for (t, amp) in &conn.entries {
            let j = basis.index_of(t).ok_or_else(|| {
                Error::SectorNotClosed(format!("{s} connects to {t} outside the basis"))
            })?;
            row.push((j as u32, *amp));
        }
        row.sort_by_key(|&(j, _)| j);
        let mut k = 0;
        while k < row.len() {
            let j = row[k].0;
            let mut v = 0.0;
            while k < row.len() && row[k].0 == j {
                v += row[k].1;
                k += 1;
            }
            cols.push(j);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    Ok(SparseMatrix {
        dim,
        row_ptr,
        cols,
        vals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn sorted_eigs(m: DMatrix<f64>) -> Vec<f64> {
        let mut e: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    fn heisenberg(n: usize, msr: bool) -> Hamiltonian {
        Hamiltonian::j1j2(n, 1.0, 0.0).unwrap().with_msr(msr).unwrap()
    }

    #[test]
    fn tfim_aligned_state_has_no_offdiagonal() {
        let m = Hamiltonian::tfim(4, 1.0, 0.0).unwrap();
        let c = m.connections(&SpinConfig::all_up(4).unwrap()).unwrap();
        assert_eq!(c.entries.len(), 1);
        assert_eq!(c.diagonal(), -4.0);
    }

    #[test]
    fn tfim_field_flips_each_site() {
        let m = Hamiltonian::tfim(6, 1.0, 0.7).unwrap();
        let c = m.connections(&SpinConfig::parse("uuduuu").unwrap()).unwrap();
        assert_eq!(c.entries.len(), 7);
        assert_eq!(c.diagonal(), -2.0);
        assert!(c.off_diagonal().iter().all(|&(_, a)| a == -0.7));
    }

    #[test]
    fn heisenberg_bond_sign_follows_msr() {
        let c = SpinConfig::parse("uudd").unwrap();
        let on = heisenberg(4, true).connections(&c).unwrap();
        let off = heisenberg(4, false).connections(&c).unwrap();
        // bonds (1,2) and (3,0) are antiparallel
        assert_eq!(on.off_diagonal().len(), 2);
        assert!(on.off_diagonal().iter().all(|&(_, a)| a == -0.5));
        assert!(off.off_diagonal().iter().all(|&(_, a)| a == 0.5));
        assert_eq!(on.diagonal(), 0.0);
    }

    #[test]
    fn neel_connection_set() {
        let c = SpinConfig::neel(4).unwrap();
        let set = heisenberg(4, true).connections(&c).unwrap();
        assert_eq!(set.diagonal(), -1.0);
        assert_eq!(set.off_diagonal().len(), 4);
        assert!(set.entries.len() <= 1 + 2 * 4);
    }

    #[test]
    fn ahm_at_zero_anisotropy_equals_heisenberg() {
        for msr in [false, true] {
            let a = Hamiltonian::ahm(8, 0.0).unwrap().with_msr(msr).unwrap();
            let h = heisenberg(8, msr);
            for code in 0..256u64 {
                let c = SpinConfig::from_code(code, 8).unwrap();
                let x = a.connections(&c).unwrap();
                let y = h.connections(&c).unwrap();
                assert_eq!(x.entries, y.entries);
            }
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let m = heisenberg(6, true);
        assert!(matches!(
            m.connections(&SpinConfig::all_up(4).unwrap()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn four_site_heisenberg_ground_energy() {
        // Independent dense construction from Kronecker products of spin matrices.
        let sx = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let sz = DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 0.5]);
        // S^y S^y is real: (i/2)^2 * [[0,-1],[1,0]] ⊗ [[0,-1],[1,0]] with sign folded in
        let iy = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0]);
        let n = 4;
        let site_op = |op: &DMatrix<f64>, site: usize| {
            let mut m = DMatrix::<f64>::identity(1, 1);
            // site i is bit i, so the highest site is the leftmost factor
            for s in (0..n).rev() {
                let f = if s == site { op.clone() } else { DMatrix::identity(2, 2) };
                m = m.kronecker(&f);
            }
            m
        };
        let mut h = DMatrix::<f64>::zeros(16, 16);
        for i in 0..n {
            let j = (i + 1) % n;
            h += site_op(&sx, i) * site_op(&sx, j);
            h -= site_op(&iy, i) * site_op(&iy, j);
            h += site_op(&sz, i) * site_op(&sz, j);
        }
        let oracle = sorted_eigs(h.clone());
        assert!((oracle[0] + 2.0).abs() < 1e-12);

        let basis = SectorBasis::enumerate(4, false).unwrap();
        let mine = build_sector_matrix(&heisenberg(4, false), &basis).unwrap().to_dense();
        assert!((&mine - &h).abs().max() < 1e-14);
        let e = sorted_eigs(mine);
        assert!((e[0] + 2.0).abs() < 1e-12);
    }

    fn models(n: usize) -> Vec<Hamiltonian> {
        vec![
            Hamiltonian::tfim(n, 1.0, 0.8).unwrap(),
            Hamiltonian::ahm(n, -0.5).unwrap(),
            Hamiltonian::ahm(n, 0.7).unwrap().with_bias(0.3).unwrap(),
            Hamiltonian::ahm(n, 0.95).unwrap().with_bias(0.3).unwrap(),
            Hamiltonian::j1j2(n, 1.0, 0.0).unwrap(),
            Hamiltonian::j1j2(n, 1.0, 0.6).unwrap(),
        ]
    }

    #[test]
    fn hermitian_on_full_space() {
        for n in [4usize, 6, 10] {
            let basis = SectorBasis::enumerate(n, false).unwrap();
            for m in models(n) {
                for msr in [false, true] {
                    let m = m.clone().with_msr(msr).unwrap();
                    let a = build_sector_matrix(&m, &basis).unwrap();
                    for i in 0..a.dim() {
                        for (j, v) in a.row(i) {
                            assert_eq!(v, a.get(j, i), "{m:?} ({i},{j})");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn spectrum_invariant_under_msr() {
        for n in [4usize, 6, 8] {
            let basis = SectorBasis::enumerate(n, false).unwrap();
            // a uniform_x pin is added in the rotated frame, so it is excluded
            for m in models(n).into_iter().filter(|m| m.bias.axis != BiasAxis::UniformX) {
                let a = sorted_eigs(build_sector_matrix(&m, &basis).unwrap().to_dense());
                let r = m.clone().with_msr(true).unwrap();
                let b = sorted_eigs(build_sector_matrix(&r, &basis).unwrap().to_dense());
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-10, "{m:?}");
                }
            }
        }
    }

    #[test]
    fn msr_makes_unfrustrated_offdiagonals_nonpositive() {
        let n = 10;
        let basis = SectorBasis::enumerate(n, true).unwrap();
        for m in [
            Hamiltonian::ahm(n, -0.5).unwrap(),
            Hamiltonian::ahm(n, 0.0).unwrap(),
            Hamiltonian::ahm(n, 0.6).unwrap(),
            Hamiltonian::j1j2(n, 1.0, 0.0).unwrap(),
        ] {
            let a = build_sector_matrix(&m.with_msr(true).unwrap(), &basis).unwrap();
            for i in 0..a.dim() {
                for (j, v) in a.row(i) {
                    assert!(i == j || v <= 0.0);
                }
            }
        }
    }

    #[test]
    fn aligned_tfim_is_degenerate() {
        let basis = SectorBasis::enumerate(4, false).unwrap();
        let e = sorted_eigs(
            build_sector_matrix(&Hamiltonian::tfim(4, 1.0, 0.0).unwrap(), &basis)
                .unwrap()
                .to_dense(),
        );
        assert_eq!(e[0], -4.0);
        assert_eq!(e[1], -4.0);
    }

    #[test]
    fn bias_axis_selection() {
        let m = Hamiltonian::ahm(8, 0.5).unwrap();
        assert_eq!(m.with_bias(0.3).unwrap().bias.axis, BiasAxis::StaggeredZ);
        let m9 = Hamiltonian::ahm(8, 0.9).unwrap();
        assert_eq!(m9.with_bias(0.3).unwrap().bias.axis, BiasAxis::UniformX);
        let zero = m.with_bias(0.0).unwrap();
        assert_eq!(zero.bias, BiasField::NONE);
        assert_eq!(zero, m);
        assert!(m.with_bias(-0.1).is_err());
        assert!(Hamiltonian::j1j2(8, 1.0, 0.0).unwrap().with_bias(0.1).is_err());
    }

    #[test]
    fn staggered_bias_splits_neel_states() {
        let m = Hamiltonian::ahm(8, 0.8).unwrap().with_bias(0.5).unwrap();
        let a = SpinConfig::neel(8).unwrap();
        let b = a.flip(0).unwrap().flip(1).unwrap().flip(2).unwrap().flip(3).unwrap();
        let b = b.flip(4).unwrap().flip(5).unwrap().flip(6).unwrap().flip(7).unwrap();
        let da = m.connections(&a).unwrap().diagonal();
        let db = m.connections(&b).unwrap().diagonal();
        // splitting L h between the two Néel states
        assert!((db - da - 8.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn sector_closure_is_checked() {
        let basis = SectorBasis::enumerate(6, true).unwrap();
        let tfim = Hamiltonian::tfim(6, 1.0, 1.0).unwrap();
        assert!(matches!(
            build_sector_matrix(&tfim, &basis),
            Err(Error::SectorNotClosed(_))
        ));
        let x = Hamiltonian::ahm(6, 0.95).unwrap().with_bias(0.2).unwrap();
        assert!(build_sector_matrix(&x, &basis).is_err());
    }
}
