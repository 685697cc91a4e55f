//! Ensemble-averaged Green functions of the block chain.
//!
//! For `N ≫ 1` the block averages `G_k(E) = ⟨(E⁺ - H)⁻¹⟩` restricted to block
//! `k` satisfy the coupled Pastur equations
//! `E⁺ G_k = 1 + [λ² G_k + w² (G_{k-1} + G_{k+1})] G_k`, `G_0 = G_{K+1} = 0`,
//! with `E⁺ = E + iη`. The surface state sees
//! `G_s = 1 / (E⁺ - E₁ - v² N G_1)`.

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fit::{lorentzian_fit, LorentzianFit};
use crate::rmt_chain::{ChainParams, SystemSpectrum};

const FIXED_POINT_DAMPING: f64 = 0.5;
const FIXED_POINT_WARMUP: usize = 500;
const FIXED_POINT_MAX: usize = 200_000;
const NEWTON_MAX: usize = 60;
const SOLVE_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

/// Semicircle Green function with `λ'² = λ² + 2w²` at real energy `e`.
///
/// Inside the band `λ' G = x - i√(1 - x²)`, `x = E/(2λ')`. Outside it the real
/// branch `x - sign(x)√(x² - 1)` is returned, the `η → 0⁺` limit of the
/// retarded function.
pub fn bulk_green(lambda: f64, w: f64, e: f64) -> Complex64 {
    let lp = (lambda * lambda + 2.0 * w * w).sqrt();
    let x = e / (2.0 * lp);
    if x.abs() <= 1.0 {
        Complex64::new(x, -(1.0 - x * x).sqrt()) / lp
    } else {
        Complex64::new(x - x.signum() * (x * x - 1.0).sqrt(), 0.0) / lp
    }
}

/// Root of `λ'² G² - z G + 1 = 0` with `Im G < 0`, for `Im z > 0`.
pub fn semicircle_green(lambda_prime: f64, z: Complex64) -> Complex64 {
    let l2 = lambda_prime * lambda_prime;
    let root = (z * z - 4.0 * l2).sqrt();
    let (a, b) = ((z - root) / (2.0 * l2), (z + root) / (2.0 * l2));
    if a.im <= b.im {
        a
    } else {
        b
    }
}

#[derive(Debug, Clone)]
pub struct GreenProfile {
    grid: Vec<f64>,
    eta: f64,
    /// `g_blocks[i][k]` is `G_{k+1}` at `grid[i]`.
    g_blocks: Vec<Vec<Complex64>>,
    g_surface: Vec<Complex64>,
    params: ChainParams,
    max_residual: f64,
}

impl GreenProfile {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn g_blocks(&self) -> &[Vec<Complex64>] {
        &self.g_blocks
    }

    pub fn g_surface(&self) -> &[Complex64] {
        &self.g_surface
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    /// Largest `|F_k|` of the block equations over the grid.
    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    /// `G_k` across the grid for block `k` (1-based).
    pub fn block(&self, k: usize) -> Vec<Complex64> {
        self.g_blocks.iter().map(|g| g[k - 1]).collect()
    }

    /// Index of the grid point closest to `e`.
    pub fn nearest(&self, e: f64) -> usize {
        (0..self.grid.len())
            .min_by(|&i, &j| (self.grid[i] - e).abs().total_cmp(&(self.grid[j] - e).abs()))
            .unwrap_or(0)
    }

    /// `1 / |G_k|` at the grid point nearest `E = 0`, per block: the local
    /// semicircle radius parameter `λ'`.
    pub fn effective_lambda(&self) -> Vec<f64> {
        self.g_blocks[self.nearest(0.0)]
            .iter()
            .map(|g| 1.0 / g.norm())
            .collect()
    }
}

fn block_residuals(z: Complex64, l2: f64, w2: f64, g: &[Complex64]) -> Vec<Complex64> {
    let k = g.len();
    (0..k)
        .map(|i| {
            let nb = neighbours(g, i);
            g[i] * (z - l2 * g[i] - w2 * nb) - 1.0
        })
        .collect()
}

fn neighbours(g: &[Complex64], i: usize) -> Complex64 {
    let left = if i > 0 { g[i - 1] } else { Complex64::new(0.0, 0.0) };
    let right = if i + 1 < g.len() {
        g[i + 1]
    } else {
        Complex64::new(0.0, 0.0)
    };
    left + right
}

fn max_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Thomas algorithm for a complex tridiagonal system.
fn solve_tridiagonal(
    sub: &[Complex64],
    diag: &[Complex64],
    sup: &[Complex64],
    rhs: &[Complex64],
) -> Option<Vec<Complex64>> {
    let n = diag.len();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let den = diag[i]
            - if i > 0 {
                sub[i] * c[i - 1]
            } else {
                Complex64::new(0.0, 0.0)
            };
        if den.norm() == 0.0 {
            return None;
        }
        c[i] = if i + 1 < n {
            sup[i] / den
        } else {
            Complex64::new(0.0, 0.0)
        };
        d[i] = (rhs[i]
            - if i > 0 {
                sub[i] * d[i - 1]
            } else {
                Complex64::new(0.0, 0.0)
            })
            / den;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        let next = d[i + 1];
        d[i] -= c[i] * next;
    }
    Some(d)
}

fn fixed_point_sweep(z: Complex64, l2: f64, w2: f64, g: &mut [Complex64]) {
    let next: Vec<Complex64> = (0..g.len())
        .map(|i| 1.0 / (z - l2 * g[i] - w2 * neighbours(g, i)))
        .collect();
    for (gi, ni) in g.iter_mut().zip(next) {
        *gi = (1.0 - FIXED_POINT_DAMPING) * *gi + FIXED_POINT_DAMPING * ni;
    }
}

fn newton(z: Complex64, l2: f64, w2: f64, g: &mut [Complex64]) -> bool {
    let k = g.len();
    for _ in 0..NEWTON_MAX {
        let f = block_residuals(z, l2, w2, g);
        if max_norm(&f) <= SOLVE_TOL {
            return true;
        }
        let diag: Vec<Complex64> = (0..k).map(|i| z - 2.0 * l2 * g[i] - w2 * neighbours(g, i)).collect();
        let off: Vec<Complex64> = g.iter().map(|gi| -w2 * gi).collect();
        let rhs: Vec<Complex64> = f.iter().map(|fi| -fi).collect();
        let Some(step) = solve_tridiagonal(&off, &diag, &off, &rhs) else {
            return false;
        };
        for (gi, si) in g.iter_mut().zip(step) {
            *gi += si;
        }
        if g.iter().any(|gi| !gi.re.is_finite() || !gi.im.is_finite()) {
            return false;
        }
    }
    max_norm(&block_residuals(z, l2, w2, g)) <= SOLVE_TOL
}

fn solve_point(params: &ChainParams, e: f64, eta: f64) -> Result<(Vec<Complex64>, f64)> {
    let z = Complex64::new(e, eta);
    let (l2, w2) = (params.lambda * params.lambda, params.w * params.w);
    let start = vec![semicircle_green(params.lambda_bulk(), z); params.blocks];
    let mut g = start.clone();
    for _ in 0..FIXED_POINT_WARMUP {
        fixed_point_sweep(z, l2, w2, &mut g);
    }
    // Newton finishes what the contraction starts; the damped iteration alone
    // stalls for η much below the band width
    let mut polished = g.clone();
    let physical = |g: &[Complex64]| g.iter().all(|gi| gi.im < 0.0);
    if !(newton(z, l2, w2, &mut polished) && physical(&polished)) {
        let mut done = false;
        for _ in FIXED_POINT_WARMUP..FIXED_POINT_MAX {
            fixed_point_sweep(z, l2, w2, &mut g);
            if max_norm(&block_residuals(z, l2, w2, &g)) <= SOLVE_TOL {
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::numerical(format!(
                "block Green functions did not converge at E = {e} (eta = {eta})"
            )));
        }
        polished = g;
    }
    let residual = max_norm(&block_residuals(z, l2, w2, &polished));
    if residual > RESIDUAL_TOL || !physical(&polished) {
        return Err(Error::numerical(format!(
            "block Green functions at E = {e}: residual {residual:.2e}, retarded sign violated: {}",
            !physical(&polished)
        )));
    }
    Ok((polished, residual))
}

/// Solves the block equations at every grid energy.
pub fn pastur_solve(params: &ChainParams, grid: &[f64], eta: f64, exec: Execution) -> Result<GreenProfile> {
    params.validate()?;
    if !(eta > 0.0) {
        return Err(Error::param("eta must be positive"));
    }
    if grid.is_empty() {
        return Err(Error::param("empty energy grid"));
    }
    let reach = 3.0 * params.lambda_bulk();
    if grid.iter().any(|e| !e.is_finite() || e.abs() > reach) {
        return Err(Error::param(format!("grid energies must lie within ±3λ' = ±{reach}")));
    }
    let points = exec::map_slice(exec, grid, |e| solve_point(params, *e, eta));
    let mut g_blocks = Vec::with_capacity(grid.len());
    let mut max_residual: f64 = 0.0;
    for point in points {
        let (g, r) = point?;
        max_residual = max_residual.max(r);
        g_blocks.push(g);
    }
    let v2n = params.v * params.v * params.block_dim as f64;
    let g_surface = grid
        .iter()
        .zip(&g_blocks)
        .map(|(e, g)| 1.0 / (Complex64::new(e - params.e1, eta) - v2n * g[0]))
        .collect();
    Ok(GreenProfile {
        grid: grid.to_vec(),
        eta,
        g_blocks,
        g_surface,
        params: params.clone(),
        max_residual,
    })
}

/// `ρ(E) = -(N/π) Im Σ_k G_k(E)`.
pub fn average_level_density(profile: &GreenProfile) -> Vec<f64> {
    let n = profile.params.block_dim as f64;
    profile
        .g_blocks
        .iter()
        .map(|g| -n / std::f64::consts::PI * g.iter().map(|c| c.im).sum::<f64>())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrengthFunction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Fitted Lorentzian half-width.
    pub width: f64,
    /// Fitted peak position.
    pub center: f64,
    pub fit: LorentzianFit,
}

impl StrengthFunction {
    /// Wraps tabulated values and fits their Lorentzian.
    pub fn fitted(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let fit = lorentzian_fit(&grid, &values)?;
        Ok(Self {
            width: fit.half_width,
            center: fit.center,
            fit,
            grid,
            values,
        })
    }

    pub fn fwhm(&self) -> f64 {
        2.0 * self.width
    }

    /// Trapezoidal integral over the grid.
    pub fn weight(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

/// `-(1/π) Im G_s(E)` of the surface state, with its fitted Lorentzian.
pub fn strength_function_analytic(profile: &GreenProfile) -> Result<StrengthFunction> {
    let values = profile.g_surface.iter().map(|g| -g.im / std::f64::consts::PI).collect();
    StrengthFunction::fitted(profile.grid.clone(), values)
}

/// Breit–Wigner half-width `v² N (-Im G_1)` at the grid point nearest `E₁`, plus `η`.
pub fn breit_wigner_half_width(profile: &GreenProfile) -> f64 {
    let p = &profile.params;
    let i = profile.nearest(p.e1);
    p.v * p.v * p.block_dim as f64 * -profile.g_blocks[i][0].im + profile.eta
}

/// Ensemble- and site-averaged `Σ_m |⟨m|s⟩|² δ_η(E - E_m)`, `δ_η` a Lorentzian of half-width `η`.
pub fn strength_function_empirical(
    ensemble: &[SystemSpectrum],
    sites: &[usize],
    grid: &[f64],
    eta: f64,
) -> Result<StrengthFunction> {
    if ensemble.is_empty() || sites.is_empty() {
        return Err(Error::param(
            "strength function needs a non-empty ensemble and site list",
        ));
    }
    if !(eta > 0.0) {
        return Err(Error::param("eta must be positive"));
    }
    if ensemble.len() < 10 {
        warn!("strength function averaged over only {} realizations", ensemble.len());
    }
    let spacing = ensemble[0].params().mean_spacing();
    if eta < spacing {
        warn!("eta = {eta} is below the mean level spacing {spacing}");
    }
    let mut values = vec![0.0; grid.len()];
    for spectrum in ensemble {
        for (acc, v) in values.iter_mut().zip(surface_strength(spectrum, sites, grid, eta)?) {
            *acc += v / ensemble.len() as f64;
        }
    }
    StrengthFunction::fitted(grid.to_vec(), values)
}

/// Site-averaged `(1/π) Σ_m |⟨m|s⟩|² η / ((E - E_m)² + η²)` of one spectrum.
pub fn surface_strength(spectrum: &SystemSpectrum, sites: &[usize], grid: &[f64], eta: f64) -> Result<Vec<f64>> {
    if sites.is_empty() {
        return Err(Error::param("empty surface site list"));
    }
    let mut values = vec![0.0; grid.len()];
    for &site in sites {
        if site >= spectrum.dim() {
            return Err(Error::param(format!(
                "site {site} outside a chain of {} sites",
                spectrum.dim()
            )));
        }
        let weights = spectrum.site_weights(site);
        for (value, e) in values.iter_mut().zip(grid) {
            *value += spectrum
                .energies()
                .iter()
                .zip(&weights)
                .map(|(em, wm)| wm * eta / ((e - em).powi(2) + eta * eta))
                .sum::<f64>();
        }
    }
    let norm = std::f64::consts::PI * sites.len() as f64;
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(values)
}

/// Uniform grid of `points` energies on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}
