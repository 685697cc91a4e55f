//! Stationary occupations of the two-bath master equation.
//!
//! The exact route extracts the null vector of the rate generator
//! `L_nm = W_nm - δ_nm Σ_k W_kn` (`W = W¹ + W²`). The perturbative route
//! expands around a reference temperature `T₀ = α T₁ + (1 - α) T₂`:
//! `P_m ∝ exp(-β₀ E_m) (1 + δP_m)` with `δP` linear in `δT = (T₂ - T₁)/2`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bath_coupling::{check_dim, perturbation_objects, CouplingKernel, PerturbationObjects, RateMatrix};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative Frobenius residual separating proportional kernels from dissimilar ones.
pub const DEFAULT_CLASS_TOL: f64 = 1e-8;

const ZERO_MODE_TOL: f64 = 1e-10;
const NULL_SPACE_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-6;
const T0_TOL: f64 = 1e-10;
const T0_DAMPING: f64 = 0.5;
const T0_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "lowercase")]
pub enum CouplingKind {
    Equal,
    /// `X¹ = a X²`.
    Similar {
        a: f64,
    },
    Dissimilar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingClass {
    pub kind: CouplingKind,
    /// Least-squares ratio `argmin_a ‖X¹ - a X²‖_F`.
    pub ratio: f64,
    /// `‖X¹ - a X²‖_F / ‖X¹‖_F` at the optimal ratio.
    pub fit_residual: f64,
}

/// Classifies a pair of kernels as equal, proportional or dissimilar.
pub fn classify_couplings(x1: &CouplingKernel, x2: &CouplingKernel, class_tol: f64) -> Result<CouplingClass> {
    check_dim(x1.dim(), x2.dim(), "kernel pair")?;
    if !(class_tol > 0.0) {
        return Err(Error::param("classification tolerance must be positive"));
    }
    let (a1, a2) = (x1.matrix(), x2.matrix());
    let norm2_sq = a2.norm_squared();
    if norm2_sq == 0.0 {
        return Err(Error::PathologicalCoupling("bath-2 kernel vanishes identically".into()));
    }
    let ratio = a1.dot(a2) / norm2_sq;
    let norm1 = a1.norm();
    let fit_residual = if norm1 == 0.0 {
        f64::INFINITY
    } else {
        (a1 - a2 * ratio).norm() / norm1
    };
    let kind = if fit_residual <= class_tol {
        if (ratio - 1.0).abs() <= class_tol {
            CouplingKind::Equal
        } else {
            CouplingKind::Similar { a: ratio }
        }
    } else {
        CouplingKind::Dissimilar
    };
    Ok(CouplingClass {
        kind,
        ratio,
        fit_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Exact,
    Perturbative,
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    p: DVector<f64>,
    delta_p: DVector<f64>,
    t0: Option<f64>,
    alpha: Option<f64>,
    klass: Option<CouplingClass>,
    method: SolveMethod,
}

impl SteadyState {
    /// Normalized occupation probabilities.
    pub fn p(&self) -> &DVector<f64> {
        &self.p
    }

    /// First-order correction `δP` (zero for exact solutions).
    pub fn delta_p(&self) -> &DVector<f64> {
        &self.delta_p
    }

    pub fn t0(&self) -> Option<f64> {
        self.t0
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn klass(&self) -> Option<&CouplingClass> {
        self.klass.as_ref()
    }

    pub fn method(&self) -> SolveMethod {
        self.method
    }
}

/// Gibbs distribution at temperature `t`.
pub fn gibbs(energies: &[f64], t: f64) -> DVector<f64> {
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w = DVector::from_iterator(energies.len(), energies.iter().map(|e| (-(e - e_min) / t).exp()));
    let z = w.sum();
    w / z
}

/// `L_nm = W_nm - δ_nm Σ_k W_kn` for `W = W¹ + W²`; `dP/dt = L P`.
pub fn rate_generator(w1: &RateMatrix, w2: &RateMatrix) -> Result<DMatrix<f64>> {
    check_dim(w1.dim(), w2.dim(), "rate matrix pair")?;
    let w = w1.matrix() + w2.matrix();
    let mut l = w.clone();
    for n in 0..w.ncols() {
        let out: f64 = w.column(n).sum();
        l[(n, n)] -= out;
    }
    Ok(l)
}

fn is_irreducible(w: &DMatrix<f64>) -> bool {
    let m = w.nrows();
    let mut seen = vec![false; m];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..m {
            if !seen[j] && (w[(i, j)] > 0.0 || w[(j, i)] > 0.0) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Exact stationary solution of the two-bath master equation.
pub fn stationary_exact(w1: &RateMatrix, w2: &RateMatrix) -> Result<SteadyState> {
    let generator = rate_generator(w1, w2)?;
    let m = generator.nrows();
    if m < 2 {
        return Err(Error::param("master equation needs at least two levels"));
    }
    if !is_irreducible(&(w1.matrix() + w2.matrix())) {
        return Err(Error::Structural(
            "the levels split into mutually uncoupled groups".into(),
        ));
    }
    let (sv, null) = linalg::smallest_right_singular(&generator)?;
    let (s_max, s_min, s_gap) = (sv[0], sv[m - 1], sv[m - 2]);
    if s_min > NULL_SPACE_TOL * s_max {
        return Err(Error::numerical(format!(
            "generator has no null vector: smallest singular value {s_min:.3e} vs largest {s_max:.3e}"
        )));
    }
    if s_gap < GAP_TOL * s_max {
        return Err(Error::Degeneracy(format!(
            "second-smallest singular value {s_gap:.3e} below {GAP_TOL:e} x {s_max:.3e}"
        )));
    }
    let sign = if null.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut p = DVector::from_iterator(m, null.iter().map(|x| sign * x));
    let total = p.sum();
    p /= total;
    let floor = p.min();
    if floor < -1e-12 {
        return Err(Error::numerical(format!(
            "stationary vector has negative entry {floor:.3e}"
        )));
    }
    p.apply(|x| *x = x.max(0.0));
    let total = p.sum();
    p /= total;
    let residual = (&generator * &p).amax();
    if residual > 1e-10 * generator.amax() {
        return Err(Error::numerical(format!(
            "stationary residual {residual:.3e} exceeds 1e-10 x {:.3e}",
            generator.amax()
        )));
    }
    Ok(SteadyState {
        delta_p: DVector::zeros(m),
        p,
        t0: None,
        alpha: None,
        klass: None,
        method: SolveMethod::Exact,
    })
}

/// Spectral decomposition of `B̃ = B - diag(Σ_k B_nk)`, `B = B¹ + B²`,
/// certified to have a single zero mode along `(1, ..., 1)`.
#[derive(Debug, Clone)]
pub struct ReducedGenerator {
    /// Ascending; the last one is the zero mode.
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl ReducedGenerator {
    pub fn new(p1: &PerturbationObjects, p2: &PerturbationObjects) -> Result<Self> {
        check_dim(p1.dim(), p2.dim(), "perturbation objects")?;
        if (p1.t0() - p2.t0()).abs() > 1e-14 * p1.t0() {
            return Err(Error::param(format!(
                "perturbation objects built at different T0 ({} vs {})",
                p1.t0(),
                p2.t0()
            )));
        }
        let b = p1.b() + p2.b();
        let mut reduced = b.clone();
        for n in 0..b.nrows() {
            reduced[(n, n)] -= b.row(n).sum();
        }
        let (values, vectors) = linalg::symmetric_eigen(&reduced)?;
        let m = values.len();
        let scale = values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::PathologicalCoupling("coupling matrices vanish".into()));
        }
        let tol = ZERO_MODE_TOL * scale;
        let zero = values[m - 1];
        if zero > tol {
            return Err(Error::numerical(format!(
                "reduced generator has positive eigenvalue {zero:.3e}"
            )));
        }
        if m >= 2 && values[m - 2] >= -tol {
            return Err(Error::PathologicalCoupling(format!(
                "more than one vanishing eigenvalue ({:.3e}, {zero:.3e}); couplings nearly diagonal",
                values[m - 2]
            )));
        }
        let uniform = 1.0 / (m as f64).sqrt();
        let deviation = vectors
            .column(m - 1)
            .iter()
            .map(|x| (x.abs() - uniform).abs())
            .fold(0.0, f64::max);
        if deviation > 1e-8 {
            return Err(Error::numerical(format!(
                "zero mode deviates from the uniform vector by {deviation:.3e}"
            )));
        }
        Ok(Self { values, vectors })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Components `Ã_k` of `v` along the non-zero modes, in eigenvalue order.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = self.values.len();
        self.vectors.columns(0, m - 1).tr_mul(v)
    }

    /// `Σ_{k≥2} Ã_k Ã'_k / λ_k`.
    pub fn inverse_form(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let (pa, pb) = (self.project(a), self.project(b));
        pa.iter()
            .zip(pb.iter())
            .zip(&self.values)
            .map(|((x, y), l)| x * y / l)
            .sum()
    }

    /// Solves `B̃ x = rhs` on the zero-sum subspace (`rhs` must sum to zero).
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let m = self.values.len();
        let coeff = DVector::from_iterator(m - 1, self.project(rhs).iter().zip(&self.values).map(|(c, l)| c / l));
        self.vectors.columns(0, m - 1) * coeff
    }
}

/// The three response sums `S_ij = Σ_{k≥2} Ã^(i)_k λ_k⁻¹ Ã^(j)_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseSums {
    pub s11: f64,
    pub s12: f64,
    pub s22: f64,
}

impl ResponseSums {
    pub fn new(p1: &PerturbationObjects, p2: &PerturbationObjects) -> Result<Self> {
        let g = ReducedGenerator::new(p1, p2)?;
        Ok(Self {
            s11: g.inverse_form(p1.a(), p1.a()),
            s12: g.inverse_form(p1.a(), p2.a()),
            s22: g.inverse_form(p2.a(), p2.a()),
        })
    }

    /// Bracket multiplying `2T₀²δT` in `Σ_mn (E_m - E_n) B¹_mn δP_n`:
    /// `α S₁₂ - (1 - α) S₁₁`.
    pub fn bath1_bracket(&self, alpha: f64) -> f64 {
        alpha * self.s12 - (1.0 - alpha) * self.s11
    }

    /// Bath-2 counterpart `α S₂₂ - (1 - α) S₁₂`.
    pub fn bath2_bracket(&self, alpha: f64) -> f64 {
        alpha * self.s22 - (1.0 - alpha) * self.s12
    }

    /// Root of [`Self::bath1_bracket`], `S₁₁ / (S₁₁ + S₁₂)`.
    pub fn alpha1(&self) -> Result<f64> {
        root(self.s11, self.s12)
    }

    /// Root of [`Self::bath2_bracket`], `S₁₂ / (S₁₂ + S₂₂)`.
    pub fn alpha2(&self) -> Result<f64> {
        root(self.s12, self.s22)
    }
}

fn root(num: f64, other: f64) -> Result<f64> {
    let den = num + other;
    if den == 0.0 || den.abs() <= 1e-14 * (num.abs() + other.abs()) {
        return Err(Error::PathologicalCoupling(format!(
            "response sums cancel ({num:.3e} + {other:.3e}); no reference temperature"
        )));
    }
    Ok(num / den)
}

/// A reference temperature and its mixing parameter, `T₀ = α T₁ + (1 - α) T₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureChoice {
    pub t0: f64,
    pub alpha: f64,
    /// Fixed-point iterations used (0 for closed forms).
    pub iterations: usize,
}

impl TemperatureChoice {
    /// `α` outside `[0, 1]` places `T₀` outside the bath temperatures.
    pub fn is_implausible(&self) -> bool {
        !(0.0..=1.0).contains(&self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTemperature {
    /// Bath-1 convention (the only one for equal and similar couplings).
    pub bath1: TemperatureChoice,
    /// Bath-2 convention, dissimilar couplings only.
    pub bath2: Option<TemperatureChoice>,
}

impl ReferenceTemperature {
    /// `|T₀⁽¹⁾ - T₀⁽²⁾|`, zero unless dissimilar.
    pub fn t0_spread(&self) -> f64 {
        self.bath2.map_or(0.0, |b2| (self.bath1.t0 - b2.t0).abs())
    }
}

/// Chooses the reference temperature.
///
/// Equal couplings: `α = 1/2`. Similar couplings `X¹ = a X²`: `α = a/(1+a)`.
/// Dissimilar couplings: `α₁` and `α₂` are the roots of the bath-1 and bath-2
/// brackets, with the response sums evaluated at the resulting `T₀`; this is
/// solved by damped fixed-point iteration starting from `(T₁ + T₂)/2`.
/// `objects_at(T₀)` must return the perturbation objects of both baths at `T₀`.
pub fn reference_temperature<F>(klass: &CouplingClass, t1: f64, t2: f64, objects_at: F) -> Result<ReferenceTemperature>
where
    F: Fn(f64) -> Result<(PerturbationObjects, PerturbationObjects)>,
{
    if !(t1 > 0.0 && t1 <= t2 && t2.is_finite()) {
        return Err(Error::param(format!("need 0 < T1 <= T2, got T1={t1}, T2={t2}")));
    }
    let closed = |alpha: f64| TemperatureChoice {
        t0: alpha * t1 + (1.0 - alpha) * t2,
        alpha,
        iterations: 0,
    };
    let out = match klass.kind {
        CouplingKind::Equal => ReferenceTemperature {
            bath1: closed(0.5),
            bath2: None,
        },
        CouplingKind::Similar { a } => {
            if !(a > 0.0) {
                return Err(Error::PathologicalCoupling(format!(
                    "similarity ratio {a} is not positive"
                )));
            }
            ReferenceTemperature {
                bath1: closed(a / (1.0 + a)),
                bath2: None,
            }
        }
        CouplingKind::Dissimilar => {
            let b1 = self_consistent_t0(t1, t2, &objects_at, ResponseSums::alpha1)?;
            let b2 = self_consistent_t0(t1, t2, &objects_at, ResponseSums::alpha2)?;
            ReferenceTemperature {
                bath1: b1,
                bath2: Some(b2),
            }
        }
    };
    for choice in std::iter::once(out.bath1).chain(out.bath2) {
        if choice.is_implausible() {
            warn!("mixing parameter alpha = {} lies outside [0, 1]", choice.alpha);
        }
    }
    Ok(out)
}

fn self_consistent_t0<F, G>(t1: f64, t2: f64, objects_at: &F, alpha_of: G) -> Result<TemperatureChoice>
where
    F: Fn(f64) -> Result<(PerturbationObjects, PerturbationObjects)>,
    G: Fn(&ResponseSums) -> Result<f64>,
{
    let alpha_at = |t0: f64| -> Result<f64> {
        let (p1, p2) = objects_at(t0)?;
        alpha_of(&ResponseSums::new(&p1, &p2)?)
    };
    let mut t0 = 0.5 * (t1 + t2);
    for iteration in 1..=T0_MAX_ITER {
        let target = {
            let alpha = alpha_at(t0)?;
            alpha * t1 + (1.0 - alpha) * t2
        };
        if !(target > 0.0) {
            return Err(Error::PathologicalCoupling(format!(
                "reference temperature iteration left the positive axis (T0 -> {target:.3e})"
            )));
        }
        let step = T0_DAMPING * (target - t0);
        if (target - t0).abs() <= T0_TOL * t0 {
            // α is re-evaluated at the returned T₀ so the bracket vanishes there
            let alpha = alpha_at(t0)?;
            return Ok(TemperatureChoice {
                t0,
                alpha,
                iterations: iteration,
            });
        }
        t0 += step;
    }
    Err(Error::numerical(format!(
        "reference temperature did not converge in {T0_MAX_ITER} iterations (last T0 = {t0})"
    )))
}

/// First-order correction `δP` for mixing parameter `α` and half-difference `δT`.
///
/// Solves `h δT + B̃ δP = 0` with `h = -2(1-α) A¹ + 2α A²` on the zero-sum
/// subspace: `δP = -δT Σ_{k≥2} o_k (o_k · h) / λ_k`.
pub fn linearized_solve(
    p1: &PerturbationObjects,
    p2: &PerturbationObjects,
    alpha: f64,
    dt: f64,
) -> Result<DVector<f64>> {
    let g = ReducedGenerator::new(p1, p2)?;
    Ok(linearized_solve_with(&g, p1, p2, alpha, dt))
}

pub(crate) fn inhomogeneity(p1: &PerturbationObjects, p2: &PerturbationObjects, alpha: f64) -> DVector<f64> {
    p1.a() * (-2.0 * (1.0 - alpha)) + p2.a() * (2.0 * alpha)
}

fn linearized_solve_with(
    g: &ReducedGenerator,
    p1: &PerturbationObjects,
    p2: &PerturbationObjects,
    alpha: f64,
    dt: f64,
) -> DVector<f64> {
    g.solve(&inhomogeneity(p1, p2, alpha)) * (-dt)
}

/// Normalized first-order occupations
/// `P_m = g_m (1 + δP_m - Σ_k g_k δP_k)`, `g` the Gibbs weights at `T₀`.
pub fn occupation_probabilities(energies: &[f64], t0: f64, delta_p: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(energies.len(), delta_p.len(), "energies vs delta_p")?;
    if !(t0 > 0.0) {
        return Err(Error::param("reference temperature must be positive"));
    }
    if delta_p.amax() > 0.5 {
        warn!("first-order correction max |dP| = {:.3} is not small", delta_p.amax());
    }
    let g = gibbs(energies, t0);
    let mean = g.dot(delta_p);
    Ok(DVector::from_iterator(
        g.len(),
        g.iter().zip(delta_p.iter()).map(|(gm, d)| gm * (1.0 + d - mean)),
    ))
}

/// Full perturbative pipeline for two baths at `t1 <= t2`: classification,
/// reference temperature (bath-1 convention), `δP`, normalized occupations.
pub fn stationary_perturbative(
    energies: &[f64],
    x1: &CouplingKernel,
    x2: &CouplingKernel,
    t1: f64,
    t2: f64,
    class_tol: f64,
) -> Result<SteadyState> {
    let klass = classify_couplings(x1, x2, class_tol)?;
    let objects_at = |t0: f64| {
        Ok((
            perturbation_objects(x1, t0, energies)?,
            perturbation_objects(x2, t0, energies)?,
        ))
    };
    let reference = reference_temperature(&klass, t1, t2, objects_at)?;
    let TemperatureChoice { t0, alpha, .. } = reference.bath1;
    let dt = 0.5 * (t2 - t1);
    if dt > 0.1 * t0 {
        warn!("temperature difference dT = {dt} exceeds 0.1 T0 = {}", 0.1 * t0);
    }
    let (p1, p2) = objects_at(t0)?;
    let delta_p = linearized_solve(&p1, &p2, alpha, dt)?;
    let p = occupation_probabilities(energies, t0, &delta_p)?;
    Ok(SteadyState {
        p,
        delta_p,
        t0: Some(t0),
        alpha: Some(alpha),
        klass: Some(klass),
        method: SolveMethod::Perturbative,
    })
}
