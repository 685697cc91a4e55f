//! Block-tridiagonal GOE chain.
//!
//! The chain Hamiltonian consists of `K` GOE blocks of dimension `N` on the
//! diagonal, coupled to their nearest neighbours by Gaussian matrices. Each
//! end of the chain carries `n_surf` distinguished surface states: they sit at
//! energy `E1` and couple with Gaussian amplitudes of variance `v²` to the
//! remaining states of their own block only.
//!
//! Site ordering: block `k` (zero based) occupies sites `k*N .. (k+1)*N`. The
//! left surface states are sites `0, 1, ..` and the right surface states are
//! sites `M-1, M-2, ..`, outermost first.

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Which end of the chain a surface state or bath belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainEnd {
    /// Block 1.
    Left,
    /// Block K.
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Number of blocks `K`; stands in for the length of the system.
    pub blocks: usize,
    /// Block dimension `N`.
    pub block_dim: usize,
    /// Intra-block GOE scale λ.
    pub lambda: f64,
    /// Inter-block coupling scale w.
    pub w: f64,
    /// Surface-state coupling scale v, `<V_μ V_ν> = v² δ_μν`.
    pub v: f64,
    /// Diagonal energy of the surface states.
    pub e1: f64,
    /// Surface states per end.
    pub n_surf: usize,
    pub seed: u64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            blocks: 4,
            block_dim: 100,
            lambda: 1.0,
            w: 0.5,
            v: (0.5f64 / 100.0).sqrt(),
            e1: 0.0,
            n_surf: 1,
            seed: 1,
        }
    }
}

impl ChainParams {
    pub fn validate(&self) -> Result<()> {
        if self.blocks < 1 {
            return Err(Error::param("block count K must be at least 1"));
        }
        if self.block_dim < 2 {
            return Err(Error::param("block dimension N must be at least 2"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::param(format!("w must be non-negative, got {}", self.w)));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(Error::param(format!("v must be non-negative, got {}", self.v)));
        }
        if !self.e1.is_finite() {
            return Err(Error::param("E1 must be finite"));
        }
        if self.n_surf < 1 || self.n_surf >= self.block_dim {
            return Err(Error::param(format!(
                "n_surf must satisfy 1 <= n_surf < N, got n_surf={} N={}",
                self.n_surf, self.block_dim
            )));
        }
        if self.blocks == 1 && 2 * self.n_surf >= self.block_dim {
            return Err(Error::param(
                "with a single block both surfaces share it; need 2*n_surf < N",
            ));
        }
        if self.w > self.lambda {
            warn!(
                "inter-block coupling w={} exceeds the intra-block scale lambda={}",
                self.w, self.lambda
            );
        }
        Ok(())
    }

    /// Total dimension `M = K N`.
    pub fn dim(&self) -> usize {
        self.blocks * self.block_dim
    }

    /// `λ' = sqrt(λ² + 2w²)`, the bulk semicircle scale.
    pub fn lambda_bulk(&self) -> f64 {
        (self.lambda * self.lambda + 2.0 * self.w * self.w).sqrt()
    }

    /// `sqrt(λ² + w²)`, the end-block scale of a two-block chain.
    pub fn lambda_edge(&self) -> f64 {
        (self.lambda * self.lambda + self.w * self.w).sqrt()
    }

    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        k * self.block_dim..(k + 1) * self.block_dim
    }

    /// Surface sites of one end, outermost first.
    pub fn surface_sites(&self, end: ChainEnd) -> Vec<usize> {
        let m = self.dim();
        match end {
            ChainEnd::Left => (0..self.n_surf).collect(),
            ChainEnd::Right => (0..self.n_surf).map(|i| m - 1 - i).collect(),
        }
    }

    fn home_block(&self, end: ChainEnd) -> usize {
        match end {
            ChainEnd::Left => 0,
            ChainEnd::Right => self.blocks - 1,
        }
    }

    /// Mean level spacing at the band centre, `π λ' / (K N)`.
    pub fn mean_spacing(&self) -> f64 {
        std::f64::consts::PI * self.lambda_bulk() / self.dim() as f64
    }

    /// Default smoothing width for empirical densities: two mean spacings.
    pub fn default_eta(&self) -> f64 {
        2.0 * self.mean_spacing()
    }
}

/// A sampled chain Hamiltonian. Exactly symmetric and block tridiagonal.
#[derive(Debug, Clone)]
pub struct ChainHamiltonian {
    matrix: DMatrix<f64>,
    params: ChainParams,
}

impl ChainHamiltonian {
    /// Wraps an explicit matrix. It must be square with dimension `K N` and exactly symmetric.
    pub fn from_matrix(matrix: DMatrix<f64>, params: ChainParams) -> Result<Self> {
        if matrix.nrows() != params.dim() || matrix.ncols() != params.dim() {
            return Err(Error::Dimension {
                expected: params.dim(),
                found: matrix.nrows(),
                context: "chain Hamiltonian",
            });
        }
        for i in 0..matrix.nrows() {
            for j in 0..i {
                if matrix[(i, j)].to_bits() != matrix[(j, i)].to_bits() {
                    return Err(Error::param(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { matrix, params })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        std * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Draws a chain Hamiltonian.
///
/// Bulk blocks: GOE with off-diagonal variance `λ²/N` and diagonal variance
/// `2λ²/N`. Each inter-block matrix `W^(k,k+1)` is a general real Gaussian
/// matrix with entry variance `w²/N`; its transpose fills the mirror block.
/// The surface rows are then overwritten: diagonal `E1`, couplings of
/// variance `v²` to the non-surface states of the home block, zero elsewhere.
pub fn sample_chain_hamiltonian<R: Rng + ?Sized>(params: &ChainParams, rng: &mut R) -> Result<ChainHamiltonian> {
    params.validate()?;
    let n = params.block_dim;
    let m = params.dim();
    let mut h = DMatrix::<f64>::zeros(m, m);

    let off_std = params.lambda / (n as f64).sqrt();
    let diag_std = off_std * std::f64::consts::SQRT_2;
    for k in 0..params.blocks {
        let base = k * n;
        for i in 0..n {
            h[(base + i, base + i)] = gaussian(rng, diag_std);
            for j in (i + 1)..n {
                let x = gaussian(rng, off_std);
                h[(base + i, base + j)] = x;
                h[(base + j, base + i)] = x;
            }
        }
    }

    let w_std = params.w / (n as f64).sqrt();
    for k in 0..params.blocks.saturating_sub(1) {
        let (r0, c0) = (k * n, (k + 1) * n);
        for i in 0..n {
            for j in 0..n {
                let x = gaussian(rng, w_std);
                h[(r0 + i, c0 + j)] = x;
                h[(c0 + j, r0 + i)] = x;
            }
        }
    }

    let mut surface = params.surface_sites(ChainEnd::Left);
    surface.extend(params.surface_sites(ChainEnd::Right));
    for &s in &surface {
        for j in 0..m {
            h[(s, j)] = 0.0;
            h[(j, s)] = 0.0;
        }
    }
    for end in [ChainEnd::Left, ChainEnd::Right] {
        let block = params.block_range(params.home_block(end));
        for s in params.surface_sites(end) {
            h[(s, s)] = params.e1;
            for nu in block.clone() {
                if surface.contains(&nu) {
                    continue;
                }
                let x = gaussian(rng, params.v);
                h[(s, nu)] = x;
                h[(nu, s)] = x;
            }
        }
    }

    Ok(ChainHamiltonian {
        matrix: h,
        params: params.clone(),
    })
}

/// Eigenvalues and eigenvectors of a chain Hamiltonian.
#[derive(Debug, Clone)]
pub struct SystemSpectrum {
    energies: Vec<f64>,
    modes: DMatrix<f64>,
    params: ChainParams,
}

impl SystemSpectrum {
    /// Builds a spectrum from explicit data. Energies must be ascending and
    /// `modes` square with one eigenvector per column.
    pub fn from_parts(energies: Vec<f64>, modes: DMatrix<f64>, params: ChainParams) -> Result<Self> {
        if modes.nrows() != energies.len() || modes.ncols() != energies.len() {
            return Err(Error::Dimension {
                expected: energies.len(),
                found: modes.ncols(),
                context: "eigenvector matrix",
            });
        }
        if energies.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::param("energies must be sorted ascending"));
        }
        Ok(Self {
            energies,
            modes,
            params,
        })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Eigenvectors as columns, site basis.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `|<m|site>|²` for every eigenstate `m`.
    pub fn site_weights(&self, site: usize) -> Vec<f64> {
        self.modes.row(site).iter().map(|u| u * u).collect()
    }

    /// `max |H - U diag(E) Uᵀ|`.
    pub fn reconstruction_residual(&self, h: &DMatrix<f64>) -> f64 {
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.modes[(i, j)] * self.energies[j]);
        (scaled * self.modes.transpose() - h).amax()
    }

    /// `max |UᵀU - 1|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.dim();
        (self.modes.transpose() * &self.modes - DMatrix::identity(n, n)).amax()
    }
}

pub fn diagonalize_chain(h: &ChainHamiltonian) -> Result<SystemSpectrum> {
    let (energies, modes) = linalg::symmetric_eigen(&h.matrix)?;
    Ok(SystemSpectrum {
        energies,
        modes,
        params: h.params.clone(),
    })
}

/// Eigenvalues only; several times cheaper than [`diagonalize_chain`].
pub fn chain_eigenvalues(h: &ChainHamiltonian) -> Result<Vec<f64>> {
    linalg::symmetric_eigenvalues(&h.matrix)
}

/// Lorentzian-smoothed level density
/// `ρ_η(E) = (1/π) Σ_m η / ((E - E_m)² + η²)` on `grid`.
pub fn smoothed_level_density(energies: &[f64], grid: &[f64], eta: f64) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::param(format!("smoothing width must be positive, got {eta}")));
    }
    Ok(grid
        .iter()
        .map(|&e| {
            energies
                .iter()
                .map(|&em| eta / ((e - em).powi(2) + eta * eta))
                .sum::<f64>()
                / std::f64::consts::PI
        })
        .collect())
}

/// Spectral range estimate `sqrt(Tr(H²) / (K N))`.
pub fn spectral_range_estimate(h: &ChainHamiltonian) -> f64 {
    spectral_range_of(&h.matrix)
}

pub(crate) fn spectral_range_of(m: &DMatrix<f64>) -> f64 {
    (m.iter().map(|x| x * x).sum::<f64>() / m.nrows() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;

    fn params(k: usize, n: usize, w: f64, v: f64) -> ChainParams {
        ChainParams {
            blocks: k,
            block_dim: n,
            lambda: 1.0,
            w,
            v,
            e1: 0.0,
            n_surf: 1,
            seed: 11,
        }
    }

    fn draw(p: &ChainParams, index: u64) -> ChainHamiltonian {
        sample_chain_hamiltonian(p, &mut rng::stream(p.seed, &[index])).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        let bad = [
            ChainParams {
                blocks: 0,
                ..params(2, 10, 0.5, 0.1)
            },
            ChainParams {
                block_dim: 1,
                ..params(2, 10, 0.5, 0.1)
            },
            ChainParams {
                lambda: 0.0,
                ..params(2, 10, 0.5, 0.1)
            },
            ChainParams {
                w: -0.1,
                ..params(2, 10, 0.5, 0.1)
            },
            ChainParams {
                n_surf: 10,
                ..params(2, 10, 0.5, 0.1)
            },
            ChainParams {
                n_surf: 5,
                ..params(1, 10, 0.5, 0.1)
            },
        ];
        for p in bad {
            let r = sample_chain_hamiltonian(&p, &mut rng::stream(0, &[]));
            assert!(matches!(r, Err(Error::Parameter(_))), "{p:?}");
        }
        // w > lambda is accepted
        assert!(ChainParams {
            w: 2.0,
            ..params(2, 10, 0.5, 0.1)
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn exact_symmetry_and_block_tridiagonal() {
        let p = params(5, 12, 0.7, 0.2);
        let h = draw(&p, 0);
        let m = h.matrix();
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                assert_eq!(m[(i, j)].to_bits(), m[(j, i)].to_bits());
                if (i / 12).abs_diff(j / 12) >= 2 {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = params(3, 10, 0.5, 0.1);
        assert_eq!(draw(&p, 4).matrix(), draw(&p, 4).matrix());
        assert_ne!(draw(&p, 4).matrix(), draw(&p, 5).matrix());
    }

    #[test]
    fn surface_rows_follow_construction() {
        let p = ChainParams {
            e1: 0.3,
            n_surf: 2,
            ..params(3, 8, 0.5, 0.2)
        };
        let h = draw(&p, 1);
        let m = h.matrix();
        let left = p.surface_sites(ChainEnd::Left);
        let right = p.surface_sites(ChainEnd::Right);
        assert_eq!(left, vec![0, 1]);
        assert_eq!(right, vec![23, 22]);
        for &s in left.iter().chain(&right) {
            assert_eq!(m[(s, s)], 0.3);
            let home = if s < 8 { 0..8 } else { 16..24 };
            for j in 0..24 {
                if j == s {
                    continue;
                }
                let other_surface = left.contains(&j) || right.contains(&j);
                if !home.contains(&j) || other_surface {
                    assert_eq!(m[(s, j)], 0.0, "({s}, {j})");
                } else {
                    assert_ne!(m[(s, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn decoupled_blocks_limit() {
        let p = params(3, 6, 0.0, 0.0);
        let h = draw(&p, 2);
        let m = h.matrix();
        for i in 0..18 {
            for j in 0..18 {
                if i / 6 != j / 6 {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        let mut union = Vec::new();
        for k in 0..3 {
            let block = m.view((6 * k, 6 * k), (6, 6)).into_owned();
            union.extend(linalg::symmetric_eigenvalues(&block).unwrap());
        }
        union.sort_by(f64::total_cmp);
        let all = chain_eigenvalues(&h).unwrap();
        for (a, b) in union.iter().zip(&all) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn second_moments_match_goe_statistics() {
        // bulk blocks 2..K: off-diagonal λ²/N, diagonal 2λ²/N, inter-block w²/N
        let n = 100;
        let p = params(4, n, 0.6, 0.0);
        let h = draw(&p, 3);
        let m = h.matrix();
        let (mut off, mut diag, mut inter) = (Vec::new(), Vec::new(), Vec::new());
        for k in 1..4 {
            let r = p.block_range(k);
            for i in r.clone() {
                diag.push(m[(i, i)]);
                for j in (i + 1)..r.end {
                    if j == p.dim() - 1 {
                        continue;
                    }
                    off.push(m[(i, j)]);
                }
            }
        }
        for k in 0..3 {
            for i in p.block_range(k) {
                for j in p.block_range(k + 1) {
                    if i != 0 && j != p.dim() - 1 {
                        inter.push(m[(i, j)]);
                    }
                }
            }
        }
        let check = |xs: &[f64], target: f64| {
            let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
            let se = target * (2.0 / xs.len() as f64).sqrt();
            assert!((var - target).abs() < 3.0 * se, "var {var} target {target} se {se}");
        };
        assert!(off.len() >= 10_000 && inter.len() >= 10_000);
        check(&off, 1.0 / n as f64);
        check(&inter, 0.36 / n as f64);
        // 300 diagonal samples; variance of the estimator is larger but 3 SE still applies
        check(&diag, 2.0 / n as f64);
    }

    #[test]
    fn eigen_decomposition_reconstructs_hamiltonian() {
        let p = params(4, 50, 0.5, 0.07);
        let h = draw(&p, 5);
        let s = diagonalize_chain(&h).unwrap();
        assert!(s.energies().windows(2).all(|w| w[0] <= w[1]));
        assert!(s.orthogonality_defect() < 1e-10);
        assert!(s.reconstruction_residual(h.matrix()) <= 1e-9 * h.matrix().amax());
        let total: f64 = s.site_weights(0).iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scalar_chain_matrix() {
        let (e, u) = linalg::symmetric_eigen(&DMatrix::from_element(1, 1, -0.75)).unwrap();
        assert_eq!(e, vec![-0.75]);
        assert_eq!(u[(0, 0)].abs(), 1.0);
    }

    #[test]
    fn single_goe_block_obeys_semicircle_radius() {
        let p = params(1, 400, 0.0, 0.0);
        let mut outside = 0usize;
        let mut total = 0usize;
        for r in 0..20 {
            let e = chain_eigenvalues(&draw(&p, 100 + r)).unwrap();
            total += e.len();
            outside += e.iter().filter(|x| x.abs() > 2.1).count();
        }
        assert!((outside as f64) < 0.01 * total as f64, "{outside}/{total}");
    }

    #[test]
    fn lorentzian_of_single_level() {
        let eta = 0.1;
        let grid = [0.5, 0.6, 0.4];
        let rho = smoothed_level_density(&[0.5], &grid, eta).unwrap();
        assert_relative_eq!(rho[0], 1.0 / (std::f64::consts::PI * eta), max_relative = 1e-14);
        assert_relative_eq!(rho[1], rho[0] / 2.0, max_relative = 1e-12);
        assert_relative_eq!(rho[1], rho[2], max_relative = 1e-12);
        assert!(matches!(
            smoothed_level_density(&[0.0], &grid, 0.0),
            Err(Error::Parameter(_))
        ));
    }

    fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
        x.windows(2)
            .zip(y.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    #[test]
    fn smoothed_density_counts_states() {
        let p = params(3, 60, 0.5, 0.09);
        let e = chain_eigenvalues(&draw(&p, 6)).unwrap();
        let lp = p.lambda_bulk();
        let grid: Vec<f64> = (0..=4000).map(|i| -5.0 * lp + 10.0 * lp * i as f64 / 4000.0).collect();
        let rho = smoothed_level_density(&e, &grid, 0.05).unwrap();
        let integral = trapezoid(&grid, &rho);
        assert!((integral / 180.0 - 1.0).abs() < 0.02, "{integral}");
    }

    #[test]
    fn band_centre_density_grows_with_block_count() {
        let density_at_zero = |k: usize| {
            let p = params(k, 50, 0.5, 0.1);
            (0..20)
                .map(|r| {
                    let e = chain_eigenvalues(&draw(&p, 200 + r)).unwrap();
                    smoothed_level_density(&e, &[0.0], 0.1).unwrap()[0]
                })
                .sum::<f64>()
                / 20.0
        };
        let ratio = density_at_zero(8) / density_at_zero(4);
        assert!((ratio / 2.0 - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn spectral_range_of_diagonal_matrix() {
        let p = ChainParams {
            blocks: 1,
            block_dim: 2,
            ..params(1, 2, 0.0, 0.0)
        };
        let h = ChainHamiltonian::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), p).unwrap();
        assert_eq!(spectral_range_estimate(&h), 1.0);
    }

    #[test]
    fn spectral_range_tracks_widened_semicircle() {
        let p = params(8, 100, 0.5, 0.07);
        let mean = (0..10)
            .map(|r| spectral_range_estimate(&draw(&p, 300 + r)))
            .sum::<f64>()
            / 10.0;
        assert!((mean / 1.5f64.sqrt() - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn spectral_range_of_uncoupled_goe() {
        // E[Tr H² / N] = λ² (N + 1) / N for a pure GOE block
        let p = params(2, 100, 0.0, 0.0);
        let mean = (0..10)
            .map(|r| spectral_range_estimate(&draw(&p, 400 + r)))
            .sum::<f64>()
            / 10.0;
        let expected = (101.0f64 / 100.0).sqrt();
        assert!((mean / expected - 1.0).abs() < 0.03, "{mean}");
    }
}
