//! Heat currents and conductances.
//!
//! Sign convention: `I` is the energy per unit time flowing from bath 2 into
//! the system, which at stationarity equals the flow from the system into
//! bath 1. With `T₂ > T₁` it is positive. `δT = (T₂ - T₁)/2`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bath_coupling::{check_dim, perturbation_objects, rate_matrix, CouplingKernel, RateMatrix};
use crate::error::{Error, Result};
use crate::fit::{origin_quadratic_fit, QuadraticFit};
use crate::steady_state::{
    classify_couplings, reference_temperature, stationary_exact, CouplingClass, CouplingKind, SteadyState,
};

/// `Σ_mn (E_n - E_m) W_nm P_m`: energy gained by the system through `w`.
fn energy_gain(energies: &[f64], w: &RateMatrix, p: &DVector<f64>) -> (f64, f64) {
    let w = w.matrix();
    let (mut net, mut gross) = (0.0, 0.0);
    for m in 0..energies.len() {
        for n in 0..energies.len() {
            let term = (energies[n] - energies[m]) * w[(n, m)] * p[m];
            net += term;
            gross += term.abs();
        }
    }
    (net, gross)
}

/// `I = Σ_mn E_n [W²_nm P_m - W²_mn P_n]`, energy entering from bath 2.
pub fn heat_current_exact(energies: &[f64], w2: &RateMatrix, p: &SteadyState) -> Result<f64> {
    check_dim(energies.len(), w2.dim(), "energies vs rate matrix")?;
    check_dim(energies.len(), p.p().len(), "energies vs occupations")?;
    Ok(energy_gain(energies, w2, p.p()).0)
}

/// `Σ_mn E_n [W¹_mn P_n - W¹_nm P_m]`, energy leaving into bath 1.
pub fn bath1_outflow(energies: &[f64], w1: &RateMatrix, p: &SteadyState) -> Result<f64> {
    check_dim(energies.len(), w1.dim(), "energies vs rate matrix")?;
    check_dim(energies.len(), p.p().len(), "energies vs occupations")?;
    Ok(-energy_gain(energies, w1, p.p()).0)
}

/// Exact stationary current between baths at `t1` and `t2`.
#[derive(Debug, Clone)]
pub struct ExactCurrent {
    pub current: f64,
    pub bath1_outflow: f64,
    /// `|I - I₁| / max(|I|, |I₁|)`, or relative to the gross exchanged flow
    /// when the net current itself is at roundoff level.
    pub flow_mismatch: f64,
    pub steady_state: SteadyState,
}

pub fn exact_current(
    energies: &[f64],
    x1: &CouplingKernel,
    x2: &CouplingKernel,
    t1: f64,
    t2: f64,
) -> Result<ExactCurrent> {
    let w1 = rate_matrix(x1, t1, energies)?;
    let w2 = rate_matrix(x2, t2, energies)?;
    let steady_state = stationary_exact(&w1, &w2)?;
    let (current, gross) = energy_gain(energies, &w2, steady_state.p());
    let outflow = bath1_outflow(energies, &w1, &steady_state)?;
    let net = current.abs().max(outflow.abs());
    let scale = if net > 1e-12 * gross {
        net
    } else {
        gross.max(f64::MIN_POSITIVE)
    };
    Ok(ExactCurrent {
        current,
        bath1_outflow: outflow,
        flow_mismatch: (current - outflow).abs() / scale,
        steady_state,
    })
}

/// Ingredients of `C = (γ/T₀²) · numerator / Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenKuboTerms {
    /// `Σ_mn (E_m - E_n)² exp[-β₀(E_m + E_n)/2] X_mn`.
    pub numerator: f64,
    /// `Σ_m exp(-β₀ E_m)`.
    pub z: f64,
    pub t0: f64,
}

impl GreenKuboTerms {
    pub fn conductance(&self, gamma: f64) -> f64 {
        gamma / (self.t0 * self.t0) * self.numerator / self.z
    }
}

pub fn green_kubo_terms(energies: &[f64], x: &CouplingKernel, t0: f64) -> Result<GreenKuboTerms> {
    check_dim(energies.len(), x.dim(), "energies vs kernel")?;
    if !(t0 > 0.0) {
        return Err(Error::param("T0 must be positive"));
    }
    let beta = 1.0 / t0;
    let weights: Vec<f64> = energies.iter().map(|e| (-beta * e).exp()).collect();
    let x = x.matrix();
    let mut numerator = 0.0;
    for m in 0..energies.len() {
        for n in 0..energies.len() {
            let d = energies[m] - energies[n];
            numerator += d * d * (weights[m] * weights[n]).sqrt() * x[(m, n)];
        }
    }
    Ok(GreenKuboTerms {
        numerator,
        z: weights.iter().sum(),
        t0,
    })
}

/// Equilibrium conductance `C = (γ/T₀²) Z⁻¹ Σ_mn (E_m - E_n)² e^{-β₀(E_m+E_n)/2} X_mn`.
pub fn conductance_green_kubo(energies: &[f64], x: &CouplingKernel, t0: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::param("gamma must be positive"));
    }
    Ok(green_kubo_terms(energies, x, t0)?.conductance(gamma))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportDiagnostics {
    pub delta_t: f64,
    /// Every closed-form evaluation of `C` (two for similar and dissimilar couplings).
    pub forms: Vec<f64>,
    /// `max |form - C| / C`.
    pub form_spread: f64,
    /// Bath-1 vs bath-2 flow mismatch, when an exact solution was computed.
    pub flow_mismatch: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportResult {
    pub current: f64,
    pub conductance: f64,
    /// Reference temperature(s): one entry, or `[T₀⁽¹⁾, T₀⁽²⁾]` for dissimilar couplings.
    pub t0_used: Vec<f64>,
    /// `α`, or `[α₁, α₂]` for dissimilar couplings.
    pub alpha_used: Vec<f64>,
    /// Coefficient for which `C = γ/T₀² · terms.numerator / terms.z`
    /// (`1/2` equal, `a/(1+a)` similar with the bath-2 kernel). Dissimilar
    /// couplings carry `1 - α₁` with the bath-1 kernel at `T₀⁽¹⁾`; the headline
    /// `C` is then the mean of both forms and differs from that product.
    pub gamma: f64,
    pub terms: GreenKuboTerms,
    pub klass: CouplingClass,
    pub diagnostics: TransportDiagnostics,
}

/// Linear-response conductance for the coupling class of `(x1, x2)`.
///
/// Equal: `C = (2T₀²Z)⁻¹ Σ (E_m - E_n)² B_mn`. Similar (`X¹ = aX²`): the
/// bath-1 form with prefactor `2/(1+a)` and the bath-2 form with `2a/(1+a)`,
/// which must agree to `1e-12` (plus the classification residual).
/// Dissimilar: `(1-α₁)/T₀⁽¹⁾²` with bath-1 objects at `T₀⁽¹⁾` and
/// `α₂/T₀⁽²⁾²` with bath-2 objects at `T₀⁽²⁾`; `C` is their mean.
pub fn conductance_linear_response(
    energies: &[f64],
    x1: &CouplingKernel,
    x2: &CouplingKernel,
    t1: f64,
    t2: f64,
    class_tol: f64,
) -> Result<TransportResult> {
    if !(t1 > 0.0 && t2 > t1) {
        return Err(Error::param(format!("need 0 < T1 < T2, got T1={t1}, T2={t2}")));
    }
    let klass = classify_couplings(x1, x2, class_tol)?;
    let objects_at = |t0: f64| {
        Ok((
            perturbation_objects(x1, t0, energies)?,
            perturbation_objects(x2, t0, energies)?,
        ))
    };
    let reference = reference_temperature(&klass, t1, t2, objects_at)?;
    let delta_t = 0.5 * (t2 - t1);
    let (conductance, forms, gamma, terms, t0_used, alpha_used) = match klass.kind {
        CouplingKind::Equal => {
            let t0 = reference.bath1.t0;
            let terms = green_kubo_terms(energies, x1, t0)?;
            let c = terms.conductance(0.5);
            (c, vec![c], 0.5, terms, vec![t0], vec![reference.bath1.alpha])
        }
        CouplingKind::Similar { a } => {
            let t0 = reference.bath1.t0;
            let first = green_kubo_terms(energies, x1, t0)?;
            let second = green_kubo_terms(energies, x2, t0)?;
            let c1 = first.conductance(1.0 / (1.0 + a));
            let c2 = second.conductance(a / (1.0 + a));
            let tol = 1e-12 + 10.0 * klass.fit_residual;
            if (c1 - c2).abs() > tol * c1.abs().max(c2.abs()) {
                return Err(Error::numerical(format!(
                    "the two similar-coupling conductance forms disagree: {c1:e} vs {c2:e}"
                )));
            }
            (
                c2,
                vec![c1, c2],
                a / (1.0 + a),
                second,
                vec![t0],
                vec![reference.bath1.alpha],
            )
        }
        CouplingKind::Dissimilar => {
            let b1 = reference.bath1;
            let b2 = reference.bath2.expect("dissimilar couplings carry both conventions");
            let first = green_kubo_terms(energies, x1, b1.t0)?;
            let second = green_kubo_terms(energies, x2, b2.t0)?;
            let c1 = first.conductance(1.0 - b1.alpha);
            let c2 = second.conductance(b2.alpha);
            (
                0.5 * (c1 + c2),
                vec![c1, c2],
                1.0 - b1.alpha,
                first,
                vec![b1.t0, b2.t0],
                vec![b1.alpha, b2.alpha],
            )
        }
    };
    let form_spread = forms.iter().map(|f| (f - conductance).abs()).fold(0.0, f64::max) / conductance.abs();
    Ok(TransportResult {
        current: conductance * delta_t,
        conductance,
        t0_used,
        alpha_used,
        gamma,
        terms,
        klass,
        diagnostics: TransportDiagnostics {
            delta_t,
            forms,
            form_spread,
            flow_mismatch: None,
        },
    })
}

/// Least-squares `I(δT) = C·δT + q·δT²` over a temperature sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearityFit {
    pub conductance: f64,
    pub curvature: f64,
    pub residual: f64,
}

pub fn fourier_linearity_fit(delta_ts: &[f64], currents: &[f64]) -> Result<LinearityFit> {
    if delta_ts.len() < 4 {
        return Err(Error::param(format!(
            "linearity fit needs at least 4 points, got {}",
            delta_ts.len()
        )));
    }
    let QuadraticFit {
        linear,
        quadratic,
        residual,
    } = origin_quadratic_fit(delta_ts, currents)?;
    Ok(LinearityFit {
        conductance: linear,
        curvature: quadratic,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath_coupling::{BathSpec, SurfaceRecipe};
    use crate::rmt_chain::ChainEnd;
    use crate::rng;
    use crate::steady_state::DEFAULT_CLASS_TOL;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn kernel(x: DMatrix<f64>) -> CouplingKernel {
        let spec = BathSpec {
            temperature: 1.0,
            a0: 1.0,
            delta: 1.0,
            end: ChainEnd::Left,
            recipe: SurfaceRecipe::default(),
        };
        CouplingKernel::from_matrix(x, spec).unwrap()
    }

    fn random_kernel(m: usize, seed: u64) -> CouplingKernel {
        let mut r = rng::stream(seed, &[7]);
        let mut x = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = 0.05 + r.random::<f64>();
                x[(i, j)] = v;
                x[(j, i)] = v;
            }
        }
        kernel(x)
    }

    fn random_energies(m: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &[8]);
        let mut e: Vec<f64> = (0..m).map(|_| 4.0 * r.random::<f64>() - 2.0).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn equilibrium_current_vanishes() {
        let e = random_energies(10, 1);
        let x = random_kernel(10, 2);
        let w = rate_matrix(&x, 1.0, &e).unwrap();
        let s = stationary_exact(&w, &w).unwrap();
        let i = heat_current_exact(&e, &w, &s).unwrap();
        let scale: f64 = e.iter().map(|v| v.abs()).sum::<f64>() * w.matrix().max();
        assert!(i.abs() <= 1e-12 * scale, "{i:e}");
    }

    #[test]
    fn two_level_hand_sum() {
        let e = [0.0, 1.0];
        let x1 = kernel(DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]));
        let x2 = kernel(DMatrix::from_row_slice(2, 2, &[0.0, 1.5, 1.5, 0.0]));
        let (t1, t2) = (0.7, 1.3);
        let (w1, w2) = (rate_matrix(&x1, t1, &e).unwrap(), rate_matrix(&x2, t2, &e).unwrap());
        // closed-form stationary state of a two-level system
        let up = w1.matrix()[(1, 0)] + w2.matrix()[(1, 0)];
        let down = w1.matrix()[(0, 1)] + w2.matrix()[(0, 1)];
        let p = [down / (up + down), up / (up + down)];
        let w = w2.matrix();
        let hand = e[0] * (w[(0, 0)] * p[0] - w[(0, 0)] * p[0])
            + e[0] * (w[(0, 1)] * p[1] - w[(1, 0)] * p[0])
            + e[1] * (w[(1, 0)] * p[0] - w[(0, 1)] * p[1])
            + e[1] * (w[(1, 1)] * p[1] - w[(1, 1)] * p[1]);
        let s = stationary_exact(&w1, &w2).unwrap();
        assert_relative_eq!(heat_current_exact(&e, &w2, &s).unwrap(), hand, max_relative = 1e-12);
        assert!(hand > 0.0);
    }

    #[test]
    fn energy_is_conserved_and_current_positive() {
        for seed in 0..5 {
            let e = random_energies(14, 10 + seed);
            let r = exact_current(
                &e,
                &random_kernel(14, 20 + seed),
                &random_kernel(14, 30 + seed),
                0.8,
                1.2,
            )
            .unwrap();
            assert!(r.flow_mismatch <= 1e-9, "{}", r.flow_mismatch);
            assert!(r.current > 0.0);
        }
    }

    #[test]
    fn green_kubo_matches_equal_formula_and_vanishes_without_coupling() {
        let e = random_energies(8, 3);
        let x = random_kernel(8, 4);
        let lr = conductance_linear_response(&e, &x, &x, 0.9, 1.1, DEFAULT_CLASS_TOL).unwrap();
        let gk = conductance_green_kubo(&e, &x, 1.0, 0.5).unwrap();
        assert_relative_eq!(lr.conductance, gk, max_relative = 1e-12);
        assert_relative_eq!(lr.current, gk * 0.1, max_relative = 1e-12);
        let zero = kernel(DMatrix::zeros(8, 8));
        assert_eq!(conductance_green_kubo(&e, &zero, 1.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn similar_forms_agree_and_reduce_to_equal_at_unit_ratio() {
        let e = random_energies(8, 5);
        let x2 = random_kernel(8, 6);
        let x1 = x2.scaled(3.0).unwrap();
        let r = conductance_linear_response(&e, &x1, &x2, 0.9, 1.1, DEFAULT_CLASS_TOL).unwrap();
        assert!(r.diagnostics.form_spread <= 1e-12);
        assert_relative_eq!(r.gamma, 0.75, max_relative = 1e-14);
        let gk = conductance_green_kubo(&e, &x2, r.t0_used[0], 0.75).unwrap();
        assert_relative_eq!(r.conductance, gk, max_relative = 1e-12);

        let equal = conductance_linear_response(&e, &x2, &x2, 0.9, 1.1, DEFAULT_CLASS_TOL).unwrap();
        let t = green_kubo_terms(&e, &x2, 1.0).unwrap();
        assert_relative_eq!(equal.conductance, t.numerator / (2.0 * t.z), max_relative = 1e-12);
    }

    fn mismatch(e: &[f64], x1: &CouplingKernel, x2: &CouplingKernel, t0: f64, dt: f64) -> f64 {
        let c = conductance_linear_response(e, x1, x2, t0 - dt, t0 + dt, DEFAULT_CLASS_TOL).unwrap();
        let ex = exact_current(e, x1, x2, t0 - dt, t0 + dt).unwrap();
        (ex.current / dt - c.conductance).abs()
    }

    #[test]
    fn exact_slope_converges_to_formula() {
        let e = random_energies(10, 7);
        let x2 = random_kernel(10, 8);
        let x1 = x2.scaled(3.0).unwrap();
        // similar: the mismatch is first order in δT
        let dts = [0.01, 0.02, 0.04, 0.08];
        let m: Vec<f64> = dts.iter().map(|d| mismatch(&e, &x1, &x2, 1.0, *d)).collect();
        let s = crate::fit::log_log_fit(&dts, &m).unwrap().slope;
        assert!((s - 1.0).abs() <= 0.3, "similar slope {s}");
        // equal: exchange symmetry T₁ <-> T₂ removes the first-order term
        let m: Vec<f64> = dts.iter().map(|d| mismatch(&e, &x2, &x2, 1.0, *d)).collect();
        let s = crate::fit::log_log_fit(&dts, &m).unwrap().slope;
        assert!((s - 2.0).abs() <= 0.3, "equal slope {s}");
    }

    #[test]
    fn dissimilar_forms_track_exact_slope() {
        let e = random_energies(12, 9);
        let (x1, x2) = (random_kernel(12, 10), random_kernel(12, 11));
        let (t0, dt) = (1.0, 0.02);
        let c = conductance_linear_response(&e, &x1, &x2, t0 - dt, t0 + dt, DEFAULT_CLASS_TOL).unwrap();
        let exact = exact_current(&e, &x1, &x2, t0 - dt, t0 + dt).unwrap().current / dt;
        assert_eq!(c.t0_used.len(), 2);
        for form in &c.diagnostics.forms {
            assert!((form - exact).abs() <= 0.05 * exact, "{form} vs {exact}");
        }
    }

    #[test]
    fn linearity_fit() {
        let d = [0.01, 0.02, 0.04, 0.08];
        let i: Vec<f64> = d.iter().map(|x| 3.0 * x).collect();
        let f = fourier_linearity_fit(&d, &i).unwrap();
        assert_relative_eq!(f.conductance, 3.0, max_relative = 1e-12);
        assert!(f.curvature.abs() < 1e-9 && f.residual < 1e-15);
        assert!(matches!(
            fourier_linearity_fit(&d[..3], &i[..3]),
            Err(Error::Parameter(_))
        ));

        let e = random_energies(10, 12);
        let x = random_kernel(10, 13);
        let currents: Vec<f64> = d
            .iter()
            .map(|dt| exact_current(&e, &x, &x, 1.0 - dt, 1.0 + dt).unwrap().current)
            .collect();
        let f = fourier_linearity_fit(&d, &currents).unwrap();
        let c = conductance_green_kubo(&e, &x, 1.0, 0.5).unwrap();
        assert!((f.conductance - c).abs() <= 0.02 * c);
    }

    #[test]
    fn rejects_reversed_temperatures() {
        let e = random_energies(4, 14);
        let x = random_kernel(4, 15);
        assert!(conductance_linear_response(&e, &x, &x, 1.2, 0.8, DEFAULT_CLASS_TOL).is_err());
        assert!(conductance_green_kubo(&e, &x, 1.0, 0.0).is_err());
    }
}
