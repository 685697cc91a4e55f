//! Least-squares fits used by the experiments: straight lines (optionally in
//! log-log), the through-origin quadratic for current sweeps, and Lorentzian
//! peaks for strength functions.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn, OMatrix, OVector, Vector3, U3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard errors from the residual variance (zero for two points).
    pub slope_se: f64,
    pub intercept_se: f64,
    /// `cov(slope, intercept)`.
    pub covariance: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
            context: "line fit",
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Fit("a line needs at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite data in line fit".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - slope * xi - intercept).powi(2))
        .sum();
    let sigma2 = if n > 2 { ssr / (nf - 2.0) } else { 0.0 };
    Ok(LineFit {
        slope,
        intercept,
        slope_se: (sigma2 / sxx).sqrt(),
        intercept_se: (sigma2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        covariance: -mx * sigma2 / sxx,
        rms_residual: (ssr / nf).sqrt(),
    })
}

/// Line fit of `ln y` against `ln x`; every value must be positive.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    line_fit(&lx, &ly)
}

/// `y = c·x + q·x²` fitted by least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub linear: f64,
    pub quadratic: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

pub fn origin_quadratic_fit(x: &[f64], y: &[f64]) -> Result<QuadraticFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
            context: "quadratic fit",
        });
    }
    let n = x.len();
    let design = DMatrix::from_fn(n, 2, |i, j| x[i].powi(j as i32 + 1));
    let rhs = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Fit(format!("quadratic least squares failed: {e}")))?;
    if svd.singular_values.min() <= 1e-14 * svd.singular_values.max() {
        return Err(Error::Fit("quadratic design matrix is rank deficient".into()));
    }
    let resid = &design * &coef - rhs;
    Ok(QuadraticFit {
        linear: coef[0],
        quadratic: coef[1],
        residual: (resid.norm_squared() / n as f64).sqrt(),
    })
}

/// `f(E) = (A/π)·Γ / ((E - c)² + Γ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub half_width: f64,
    pub amplitude: f64,
    /// Root-mean-square residual over the fitted window.
    pub residual: f64,
    /// Number of grid points in the fitted window.
    pub points: usize,
}

impl LorentzianFit {
    pub fn fwhm(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn eval(&self, e: f64) -> f64 {
        lorentzian(e, self.center, self.half_width, self.amplitude)
    }
}

pub fn lorentzian(e: f64, center: f64, half_width: f64, amplitude: f64) -> f64 {
    amplitude / std::f64::consts::PI * half_width / ((e - center).powi(2) + half_width * half_width)
}

struct LorentzProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    p: Vector3<f64>,
}

impl LeastSquaresProblem<f64, Dyn, U3> for LorentzProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U3>;
    type ParameterStorage = Owned<f64, U3>;

    fn set_params(&mut self, p: &Vector3<f64>) {
        self.p = *p;
    }

    fn params(&self) -> Vector3<f64> {
        self.p
    }

    fn residuals(&self) -> Option<OVector<f64, Dyn>> {
        let (c, g, a) = (self.p[0], self.p[1], self.p[2]);
        Some(OVector::<f64, Dyn>::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(e, y)| lorentzian(*e, c, g, a) - y),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U3>> {
        let (c, g, a) = (self.p[0], self.p[1], self.p[2]);
        let pi = std::f64::consts::PI;
        let mut j = OMatrix::<f64, Dyn, U3>::zeros(self.x.len());
        for (i, e) in self.x.iter().enumerate() {
            let d = e - c;
            let den = d * d + g * g;
            j[(i, 0)] = a / pi * g * 2.0 * d / (den * den);
            j[(i, 1)] = a / pi * (d * d - g * g) / (den * den);
            j[(i, 2)] = g / pi / den;
        }
        Some(j)
    }
}

fn trapezoid_cumulative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 1..x.len() {
        out[i] = out[i - 1] + 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    }
    out
}

/// Fits a Lorentzian to the central part of a peak.
///
/// The window grows symmetrically (in grid index) around the maximum until it
/// holds at least 80% of the weight integrated over the whole grid.
pub fn lorentzian_fit(grid: &[f64], values: &[f64]) -> Result<LorentzianFit> {
    if grid.len() != values.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            found: values.len(),
            context: "Lorentzian fit",
        });
    }
    let n = grid.len();
    if n < 5 {
        return Err(Error::Fit("Lorentzian fit needs at least five points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("grid must be strictly increasing with finite values".into()));
    }
    let peak = (0..n).max_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    if peak == 0 || peak == n - 1 {
        return Err(Error::Fit(format!("peak at the grid boundary (E = {})", grid[peak])));
    }
    let ymax = values[peak];
    if !(ymax > 0.0) {
        return Err(Error::Fit("no positive peak".into()));
    }
    let cumulative = trapezoid_cumulative(grid, values);
    let total = cumulative[n - 1];
    let mut half = 1;
    loop {
        let (lo, hi) = (peak.saturating_sub(half), (peak + half).min(n - 1));
        if cumulative[hi] - cumulative[lo] >= 0.8 * total || (lo == 0 && hi == n - 1) {
            break;
        }
        half += 1;
    }
    let (lo, hi) = (peak.saturating_sub(half), (peak + half).min(n - 1));
    let (x, y) = (&grid[lo..=hi], &values[lo..=hi]);

    // half-maximum crossings give the starting width
    let left = (0..peak)
        .rev()
        .find(|&i| values[i] < 0.5 * ymax)
        .map_or(grid[0], |i| grid[i]);
    let right = (peak + 1..n)
        .find(|&i| values[i] < 0.5 * ymax)
        .map_or(grid[n - 1], |i| grid[i]);
    let g0 = (0.5 * (right - left)).max(grid[peak + 1] - grid[peak]);
    let start = LorentzProblem {
        x,
        y,
        p: Vector3::new(grid[peak], g0, ymax * std::f64::consts::PI * g0),
    };
    let (solved, report) = LevenbergMarquardt::new().minimize(start);
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!(
            "Lorentzian fit did not converge: {:?}",
            report.termination
        )));
    }
    let p = solved.params();
    let half_width = p[1].abs();
    if !(half_width > 0.0) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Fit("Lorentzian fit produced a degenerate width".into()));
    }
    let residual = (2.0 * report.objective_function / x.len() as f64).sqrt();
    Ok(LorentzianFit {
        center: p[0],
        half_width,
        amplitude: p[2],
        residual,
        points: x.len(),
    })
}
