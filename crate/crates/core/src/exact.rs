//! Exact diagonalization on a sector basis: dense for small spaces, deflated
//! Lanczos with full reorthogonalization otherwise. Also model-state
//! vectorization and (degenerate-subspace) fidelity.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::{Ansatz, Workspace};
use crate::error::{Error, Result};
use crate::hamiltonian::{build_sector_matrix, ConnectionSet, LocalOperator, SparseMatrix};
use crate::spin::SectorBasis;

/// Spaces up to this dimension are diagonalized densely.
pub const DENSE_LIMIT: usize = 1024;
/// Largest space the oracle accepts.
pub const MAX_DIM: usize = 1 << 20;
/// Default window for counting eigenvalues as degenerate with the minimum.
pub const DEGENERATE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct EdSolution {
    pub basis: SectorBasis,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal, sign-fixed so the largest-magnitude entry is positive.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl EdSolution {
    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn ground_vector(&self) -> &[f64] {
        &self.eigenvectors[0]
    }

    /// Number of computed eigenvalues within `tol` of the lowest one.
    pub fn ground_degeneracy(&self, tol: f64) -> usize {
        let e0 = self.eigenvalues[0];
        self.eigenvalues.iter().filter(|&&e| e - e0 <= tol).count()
    }
}

/// `k` lowest eigenpairs of `op` restricted to `basis`.
pub fn ed_solve<O: LocalOperator + ?Sized>(op: &O, basis: SectorBasis, k: usize) -> Result<EdSolution> {
    ed_solve_with(op, basis, k, Method::Auto)
}

pub fn ed_solve_with<O: LocalOperator + ?Sized>(
    op: &O,
    basis: SectorBasis,
    k: usize,
    method: Method,
) -> Result<EdSolution> {
    let dim = basis.dim();
    if dim > MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "sector dimension {dim} exceeds the oracle limit {MAX_DIM}"
        )));
    }
    if k == 0 || k > dim {
        return Err(Error::TooManyEigenpairs { k, dim });
    }
    let h = build_sector_matrix(op, &basis)?;
    let dense = match method {
        Method::Auto => dim <= DENSE_LIMIT,
        Method::Dense => true,
        Method::Lanczos => false,
    };
    let (eigenvalues, mut eigenvectors) = if dense {
        dense_lowest(&h, k)
    } else {
        lanczos_lowest(&h, k, &LanczosOptions::default())?
    };
    for v in &mut eigenvectors {
        fix_sign(v);
    }
    Ok(EdSolution {
        basis,
        eigenvalues,
        eigenvectors,
    })
}

fn dense_lowest(h: &SparseMatrix, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = h.to_dense().symmetric_eigen();
    let mut order: Vec<usize> = (0..h.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order[..k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (vals, vecs)
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Krylov space size per restart.
    pub max_krylov: usize,
    pub max_restarts: usize,
    /// Residual target relative to the matrix norm bound.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            max_krylov: 200,
            max_restarts: 50,
            rel_tol: 1e-11,
            seed: 0x5eed,
        }
    }
}

/// Lowest `k` eigenpairs of a symmetric sparse matrix. Each pair is found by
/// an explicitly restarted Lanczos run kept orthogonal to the pairs already
/// locked, so degenerate eigenvalues are resolved one vector at a time.
pub fn lanczos_lowest(
    h: &SparseMatrix,
    k: usize,
    opts: &LanczosOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dim = h.dim();
    let norm = h.norm_bound().max(1e-300);
    let tol = opts.rel_tol * norm;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    let mut hv = vec![0.0; dim];

    for _ in 0..k {
        let mut start: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut converged = None;
        for _ in 0..opts.max_restarts {
            let (theta, x) = lanczos_run(h, &start, &locked, opts.max_krylov, tol)?;
            h.matvec(&x, &mut hv);
            let res = hv
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - theta * b).powi(2))
                .sum::<f64>()
                .sqrt();
            if res <= tol.max(1e-13 * norm) * 10.0 {
                converged = Some((theta, x));
                break;
            }
            start = x;
        }
        let (theta, x) = converged.ok_or_else(|| {
            Error::NoConvergence(format!("eigenpair {} after {} restarts", locked.len(), opts.max_restarts))
        })?;
        values.push(theta);
        locked.push(x);
    }
    // locked pairs come out in ascending order up to round-off; sort to be safe
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let vals = order.iter().map(|&i| values[i]).collect();
    let vecs = order.iter().map(|&i| locked[i].clone()).collect();
    Ok((vals, vecs))
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    // twice is enough
    for _ in 0..2 {
        for u in against {
            let c = dot(u, v);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
        }
    }
}

fn lanczos_run(
    h: &SparseMatrix,
    start: &[f64],
    locked: &[Vec<f64>],
    max_krylov: usize,
    tol: f64,
) -> Result<(f64, Vec<f64>)> {
    let dim = h.dim();
    let room = dim - locked.len();
    let m_max = max_krylov.min(room).max(1);
    // a tiny beta means the Krylov space is exhausted; normalizing the
    // remainder would amplify round-off along the locked vectors
    let breakdown = tol.max(1e-9 * h.norm_bound());
    let mut v = start.to_vec();
    orthogonalize(&mut v, locked);
    let n0 = norm2(&v);
    if n0 == 0.0 {
        return Err(Error::NoConvergence("start vector lies in the locked space".into()));
    }
    v.iter_mut().for_each(|x| *x /= n0);

    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    loop {
        let j = basis.len() - 1;
        h.matvec(&basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        orthogonalize(&mut w, &basis);
        orthogonalize(&mut w, locked);
        let b = norm2(&w);
        let m = alpha.len();
        let check = m == m_max || b <= breakdown || m.is_multiple_of(10);
        if check {
            let (theta, s) = tridiagonal_lowest(&alpha, &beta);
            let resid = b * s[m - 1].abs();
            if m == m_max || b <= breakdown || resid <= tol {
                let mut x = vec![0.0; dim];
                for (coef, q) in s.iter().zip(&basis) {
                    x.iter_mut().zip(q).for_each(|(xi, qi)| *xi += coef * qi);
                }
                orthogonalize(&mut x, locked);
                let nx = norm2(&x);
                x.iter_mut().for_each(|xi| *xi /= nx);
                return Ok((theta, x));
            }
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
}

/// Lowest eigenpair of the tridiagonal matrix with diagonal `alpha` and
/// off-diagonal `beta`.
fn tridiagonal_lowest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    let i = eig.eigenvalues.imin();
    (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect())
}

fn fix_sign(v: &mut [f64]) {
    let imax = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc })
        .0;
    if v[imax] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Normalized amplitude vector of `model` over `basis`, exp(y − max y).
pub fn model_vector(model: &Ansatz, basis: &SectorBasis) -> Result<Vec<f64>> {
    if basis.dim() > MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "basis dimension {} exceeds {MAX_DIM}",
            basis.dim()
        )));
    }
    if basis.len_sites() != model.n_sites() {
        return Err(Error::LengthMismatch {
            expected: model.n_sites(),
            got: basis.len_sites(),
        });
    }
    use rayon::prelude::*;
    let logs: Vec<f64> = basis
        .states()
        .par_iter()
        .with_min_len(256)
        .map_init(Workspace::default, |ws, c| model.log_psi_with(c, ws))
        .collect();
    Ok(normalized_from_logs(&logs))
}

pub(crate) fn normalized_from_logs(logs: &[f64]) -> Vec<f64> {
    let ymax = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut v: Vec<f64> = logs.iter().map(|y| (y - ymax).exp()).collect();
    let n = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Squared overlap of `v` with the ground space of `sol`: the sum over every
/// computed eigenvector whose eigenvalue lies within `degenerate_tol` of the
/// minimum.
pub fn fidelity(v: &[f64], sol: &EdSolution, degenerate_tol: f64) -> Result<f64> {
    if v.len() != sol.basis.dim() {
        return Err(Error::LengthMismatch {
            expected: sol.basis.dim(),
            got: v.len(),
        });
    }
    let vv = dot(v, v);
    let e0 = sol.eigenvalues[0];
    let f: f64 = sol
        .eigenvalues
        .iter()
        .zip(&sol.eigenvectors)
        .filter(|(e, _)| **e - e0 <= degenerate_tol)
        .map(|(_, u)| dot(u, v).powi(2) / (vv * dot(u, u)))
        .sum();
    Ok(f.clamp(0.0, 1.0))
}

/// ⟨v|O|v⟩/⟨v|v⟩ with `O` applied through its connection sets. Targets
/// outside the basis carry zero amplitude and drop out.
pub fn exact_expectation<O: LocalOperator + ?Sized>(
    v: &[f64],
    basis: &SectorBasis,
    op: &O,
) -> Result<f64> {
    if v.len() != basis.dim() {
        return Err(Error::LengthMismatch {
            expected: basis.dim(),
            got: v.len(),
        });
    }
    if op.n_sites() != basis.len_sites() {
        return Err(Error::LengthMismatch {
            expected: op.n_sites(),
            got: basis.len_sites(),
        });
    }
    let mut conn = ConnectionSet::new(basis.state(0));
    let mut acc = 0.0;
    for (i, s) in basis.states().iter().enumerate() {
        if v[i] == 0.0 {
            continue;
        }
        op.connections_into(s, &mut conn);
        let mut row = 0.0;
        for (t, amp) in &conn.entries {
            if let Some(j) = basis.index_of(t) {
                row += amp * v[j];
            }
        }
        acc += v[i] * row;
    }
    Ok(acc / dot(v, v))
}

/// Dense symmetric eigendecomposition, exposed for cross-checks.
pub fn dense_spectrum(h: &SparseMatrix) -> Vec<f64> {
    let mut e: Vec<f64> = h.to_dense().symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// ‖Hv − λv‖ for one pair.
pub fn residual(h: &SparseMatrix, lambda: f64, v: &[f64]) -> f64 {
    let mut hv = vec![0.0; v.len()];
    h.matvec(v, &mut hv);
    let r = DVector::from_iterator(v.len(), hv.iter().zip(v).map(|(a, b)| a - lambda * b));
    r.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::SineKanOptions;
    use crate::hamiltonian::Hamiltonian;

    fn j1j2(n: usize, j2: f64) -> Hamiltonian {
        Hamiltonian::j1j2(n, 1.0, j2).unwrap().with_msr(true).unwrap()
    }

    #[test]
    fn four_site_heisenberg() {
        let h = Hamiltonian::j1j2(4, 1.0, 0.0).unwrap();
        let sol = ed_solve(&h, SectorBasis::enumerate(4, false).unwrap(), 2).unwrap();
        assert!((sol.ground_energy() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        for (n, sector, h) in [
            (10, true, j1j2(10, 0.3)),
            (8, false, Hamiltonian::tfim(8, 1.0, 0.9).unwrap()),
            (12, true, j1j2(12, 0.5)),
        ] {
            let basis = SectorBasis::enumerate(n, sector).unwrap();
            let d = ed_solve_with(&h, basis.clone(), 4, Method::Dense).unwrap();
            let l = ed_solve_with(&h, basis, 4, Method::Lanczos).unwrap();
            for (a, b) in d.eigenvalues.iter().zip(&l.eigenvalues) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn majumdar_ghosh_twelve_sites() {
        let basis = SectorBasis::enumerate(12, true).unwrap();
        let sol = ed_solve_with(&j1j2(12, 0.5), basis, 3, Method::Lanczos).unwrap();
        assert!((sol.eigenvalues[0] + 4.5).abs() < 1e-9);
        assert!((sol.eigenvalues[1] + 4.5).abs() < 1e-9);
        assert!(sol.eigenvalues[2] + 4.5 > 1e-3);
        assert_eq!(sol.ground_degeneracy(1e-8), 2);
    }

    #[test]
    fn residuals_and_orthonormality() {
        let h = j1j2(14, 0.2);
        let basis = SectorBasis::enumerate(14, true).unwrap();
        let m = build_sector_matrix(&h, &basis).unwrap();
        let sol = ed_solve(&h, basis, 3).unwrap();
        for (i, (e, v)) in sol.eigenvalues.iter().zip(&sol.eigenvectors).enumerate() {
            assert!(residual(&m, *e, v) <= 1e-9 * m.norm_bound());
            for (j, u) in sol.eigenvectors.iter().enumerate() {
                let d = dot(u, v);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((d - target).abs() < 1e-10);
            }
        }
        assert!(sol.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn fidelity_edge_cases() {
        let basis = SectorBasis::enumerate(8, true).unwrap();
        let sol = ed_solve(&j1j2(8, 0.0), basis, 3).unwrap();
        let g = sol.ground_vector().to_vec();
        assert!((fidelity(&g, &sol, DEGENERATE_TOL).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = g.iter().map(|x| -3.0 * x).collect();
        assert!((fidelity(&neg, &sol, DEGENERATE_TOL).unwrap() - 1.0).abs() < 1e-12);
        let e1 = sol.eigenvectors[1].clone();
        assert!(fidelity(&e1, &sol, DEGENERATE_TOL).unwrap() < 1e-20);
        assert!(fidelity(&g[..3], &sol, DEGENERATE_TOL).is_err());
    }

    #[test]
    fn fidelity_is_rotation_invariant_in_degenerate_space() {
        let basis = SectorBasis::enumerate(8, true).unwrap();
        let sol = ed_solve(&j1j2(8, 0.5), basis, 3).unwrap();
        assert_eq!(sol.ground_degeneracy(DEGENERATE_TOL), 2);
        let (a, b) = (&sol.eigenvectors[0], &sol.eigenvectors[1]);
        for t in [0.1f64, 0.7, 2.0] {
            let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| t.cos() * x + t.sin() * y).collect();
            assert!((fidelity(&v, &sol, DEGENERATE_TOL).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn model_vectors() {
        let basis = SectorBasis::enumerate(8, true).unwrap();
        let m = Ansatz::sinekan(
            8,
            &SineKanOptions {
                hidden: vec![6],
                grid: 3,
                reflected: true,
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let v = model_vector(&m, &basis).unwrap();
        assert!((norm2(&v) - 1.0).abs() < 1e-14);
        for (i, s) in basis.states().iter().enumerate() {
            let j = basis.index_of(&s.reflect()).unwrap();
            assert_eq!(v[i], v[j]);
        }
        let flat = normalized_from_logs(&vec![3.5; basis.dim()]);
        let u = 1.0 / (basis.dim() as f64).sqrt();
        assert!(flat.iter().all(|x| (x - u).abs() < 1e-15));
    }

    #[test]
    fn expectation_of_hamiltonian_is_eigenvalue() {
        let h = j1j2(10, 0.4);
        let basis = SectorBasis::enumerate(10, true).unwrap();
        let sol = ed_solve(&h, basis.clone(), 2).unwrap();
        let e = exact_expectation(sol.ground_vector(), &basis, &h).unwrap();
        assert!((e - sol.ground_energy()).abs() < 1e-10);
    }

    #[test]
    fn guards() {
        let basis = SectorBasis::enumerate(4, true).unwrap();
        assert!(matches!(
            ed_solve(&j1j2(4, 0.0), basis.clone(), 7),
            Err(Error::TooManyEigenpairs { .. })
        ));
        let tfim = Hamiltonian::tfim(4, 1.0, 1.0).unwrap();
        assert!(matches!(ed_solve(&tfim, basis, 1), Err(Error::SectorNotClosed(_))));
    }
}
