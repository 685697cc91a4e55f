//! Surface coupling operators, coupling kernels, rate matrices and the
//! objects of the first-order expansion around a reference temperature.
//!
//! All energies are in the units of the chain parameters and `k_B = 1`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rmt_chain::{ChainEnd, ChainParams, SystemSpectrum};
use crate::rng;

/// How the site-basis operator `Q` on the surface states is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceRecipe {
    /// `amplitude * |s⟩⟨s|` on the outermost surface state `s`.
    RankOne { amplitude: f64 },
    /// Real symmetric Gaussian matrix on the `n_surf` surface states:
    /// off-diagonal variance `scale²`, diagonal variance `2 scale²`.
    RandomSymmetric { scale: f64, sub_seed: u64 },
}

impl Default for SurfaceRecipe {
    fn default() -> Self {
        SurfaceRecipe::RankOne { amplitude: 1.0 }
    }
}

/// One heat bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub temperature: f64,
    /// Coupling strength `A₀`.
    pub a0: f64,
    /// Bandwidth `Δ` of the Gaussian energy-transfer factor.
    pub delta: f64,
    pub end: ChainEnd,
    pub recipe: SurfaceRecipe,
}

impl BathSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::param(format!(
                "bath temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.a0 > 0.0 && self.a0.is_finite()) {
            return Err(Error::param(format!(
                "coupling strength A0 must be positive, got {}",
                self.a0
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::param(format!("bandwidth must be positive, got {}", self.delta)));
        }
        match self.recipe {
            SurfaceRecipe::RankOne { amplitude } if !amplitude.is_finite() => {
                Err(Error::param("surface amplitude must be finite"))
            }
            SurfaceRecipe::RandomSymmetric { scale, .. } if !(scale > 0.0) => {
                Err(Error::param("random surface operator needs a positive scale"))
            }
            _ => Ok(()),
        }
    }
}

/// Site-basis operator supported on a handful of surface sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceOperator {
    dim: usize,
    sites: Vec<usize>,
    local: DMatrix<f64>,
}

impl SurfaceOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sites carrying the operator, outermost first.
    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// The operator restricted to its sites.
    pub fn local(&self) -> &DMatrix<f64> {
        &self.local
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.dim, self.dim);
        for (a, &i) in self.sites.iter().enumerate() {
            for (b, &j) in self.sites.iter().enumerate() {
                q[(i, j)] = self.local[(a, b)];
            }
        }
        q
    }

    /// `⟨m|Q|n⟩` for all eigenstates of `spectrum`.
    pub fn eigenbasis_elements(&self, spectrum: &SystemSpectrum) -> Result<DMatrix<f64>> {
        if spectrum.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: spectrum.dim(),
                context: "surface operator vs spectrum",
            });
        }
        let u = spectrum.modes();
        // rows of U at the surface sites, then Q_mn = Σ_ab U_am q_ab U_bn
        let rows = DMatrix::from_fn(self.sites.len(), self.dim, |a, m| u[(self.sites[a], m)]);
        let left = self.local.transpose() * &rows;
        Ok(rows.transpose() * left)
    }
}

/// Builds the surface operator of a bath. It depends only on the recipe and
/// `n_surf`, never on the block count.
pub fn build_surface_operator(spec: &BathSpec, params: &ChainParams) -> Result<SurfaceOperator> {
    spec.validate()?;
    params.validate()?;
    let sites = params.surface_sites(spec.end);
    let n = sites.len();
    let local = match spec.recipe {
        SurfaceRecipe::RankOne { amplitude } => {
            let mut q = DMatrix::zeros(n, n);
            q[(0, 0)] = amplitude;
            q
        }
        SurfaceRecipe::RandomSymmetric { scale, sub_seed } => {
            let mut r = rng::stream(sub_seed, &[rng::tag("surface-operator")]);
            let mut q = DMatrix::zeros(n, n);
            for a in 0..n {
                let d: f64 = StandardNormal.sample(&mut r);
                q[(a, a)] = d * scale * std::f64::consts::SQRT_2;
                for b in (a + 1)..n {
                    let x: f64 = StandardNormal.sample(&mut r);
                    q[(a, b)] = x * scale;
                    q[(b, a)] = x * scale;
                }
            }
            q
        }
    };
    Ok(SurfaceOperator {
        dim: params.dim(),
        sites,
        local,
    })
}

/// Temperature-independent kernel `X` of one bath: symmetric, entries non-negative.
#[derive(Debug, Clone)]
pub struct CouplingKernel {
    x: DMatrix<f64>,
    spec: BathSpec,
}

impl CouplingKernel {
    /// Wraps an explicit kernel. It must be square, exactly symmetric and non-negative.
    pub fn from_matrix(x: DMatrix<f64>, spec: BathSpec) -> Result<Self> {
        if x.nrows() != x.ncols() {
            return Err(Error::param("coupling kernel must be square"));
        }
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let v = x[(i, j)];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::param(format!(
                        "kernel entry ({i}, {j}) = {v} is not a finite non-negative number"
                    )));
                }
                if v.to_bits() != x[(j, i)].to_bits() {
                    return Err(Error::param(format!("kernel not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { x, spec })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn spec(&self) -> &BathSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Kernel with every entry multiplied by `factor > 0` (a bath with `A₀` scaled).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::param("kernel scale factor must be positive"));
        }
        let mut spec = self.spec.clone();
        spec.a0 *= factor;
        Ok(Self {
            x: &self.x * factor,
            spec,
        })
    }
}

/// `X_nm = 2π A₀ |Q_mn|² exp[-(E_n - E_m)² / (2Δ²)]`.
pub fn kernel_from_elements(q: &DMatrix<f64>, spec: &BathSpec, energies: &[f64]) -> Result<CouplingKernel> {
    spec.validate()?;
    let m = energies.len();
    if q.nrows() != m || q.ncols() != m {
        return Err(Error::Dimension {
            expected: m,
            found: q.nrows(),
            context: "coupling elements vs energies",
        });
    }
    let prefactor = 2.0 * PI * spec.a0;
    let inv_two_delta_sq = 1.0 / (2.0 * spec.delta * spec.delta);
    let mut x = DMatrix::zeros(m, m);
    for n in 0..m {
        for k in n..m {
            // |Q_nk|² from the symmetrized element keeps X exactly symmetric
            let qnk = 0.5 * (q[(n, k)] + q[(k, n)]);
            let de = energies[n] - energies[k];
            let v = prefactor * qnk * qnk * (-de * de * inv_two_delta_sq).exp();
            x[(n, k)] = v;
            x[(k, n)] = v;
        }
    }
    Ok(CouplingKernel { x, spec: spec.clone() })
}

/// Kernel of a bath whose surface operator is `q`, in the eigenbasis of `spectrum`.
pub fn eigenbasis_coupling(q: &SurfaceOperator, spec: &BathSpec, spectrum: &SystemSpectrum) -> Result<CouplingKernel> {
    let elements = q.eigenbasis_elements(spectrum)?;
    kernel_from_elements(&elements, spec, spectrum.energies())
}

/// Transition rates of one bath; `w[(n, m)]` is the rate for `m -> n`.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    w: DMatrix<f64>,
    beta: f64,
}

impl RateMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }
}

/// `W_nm = X_nm exp[(β/2)(E_m - E_n)]`, `β = 1/T`.
pub fn rate_matrix(x: &CouplingKernel, temperature: f64, energies: &[f64]) -> Result<RateMatrix> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::param(format!("temperature must be positive, got {temperature}")));
    }
    check_dim(x.dim(), energies.len(), "kernel vs energies")?;
    let beta = 1.0 / temperature;
    let w = DMatrix::from_fn(x.dim(), x.dim(), |n, m| {
        x.x[(n, m)] * (0.5 * beta * (energies[m] - energies[n])).exp()
    });
    Ok(RateMatrix { w, beta })
}

/// Matrices `B` and vectors `A` of the expansion around `T₀`.
#[derive(Debug, Clone)]
pub struct PerturbationObjects {
    b: DMatrix<f64>,
    a: DVector<f64>,
    t0: f64,
}

impl PerturbationObjects {
    /// `B_mn = exp[-(β₀/2)(E_m + E_n)] X_mn`.
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// `A_m = T₀⁻² Σ_n (E_m - E_n) B_mn`; sums to zero.
    pub fn a(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }
}

pub fn perturbation_objects(x: &CouplingKernel, t0: f64, energies: &[f64]) -> Result<PerturbationObjects> {
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::param(format!(
            "reference temperature must be positive, got {t0}"
        )));
    }
    check_dim(x.dim(), energies.len(), "kernel vs energies")?;
    let m = x.dim();
    let beta0 = 1.0 / t0;
    let mut b = DMatrix::zeros(m, m);
    let mut a = DVector::zeros(m);
    for i in 0..m {
        for j in i..m {
            let v = (-0.5 * beta0 * (energies[i] + energies[j])).exp() * x.x[(i, j)];
            b[(i, j)] = v;
            b[(j, i)] = v;
            if i != j {
                // antisymmetric pair contributions keep Σ A = 0 up to rounding
                let t = (energies[i] - energies[j]) * v;
                a[i] += t;
                a[j] -= t;
            }
        }
    }
    a /= t0 * t0;
    Ok(PerturbationObjects { b, a, t0 })
}

pub(crate) fn check_dim(expected: usize, found: usize, context: &'static str) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            expected,
            found,
            context,
        });
    }
    Ok(())
}
