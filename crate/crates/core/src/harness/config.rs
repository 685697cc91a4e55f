//! Experiment configuration.
//!
//! A configuration is built in three layers: the defaults of the experiment
//! kind, an optional TOML file, and key/value overrides (the CLI flags). The
//! layers are merged as TOML tables and then deserialized, so every field of
//! the file can be overridden by the same key.

use std::path::PathBuf;

use log::warn;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::bath_coupling::{BathSpec, SurfaceRecipe};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rmt_chain::{ChainEnd, ChainParams};
use crate::steady_state::DEFAULT_CLASS_TOL;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "COHERENT_HEAT_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Scaling,
    Equilibrium,
    Linearity,
    Spectral,
    Strength,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Scaling,
        ExperimentKind::Equilibrium,
        ExperimentKind::Linearity,
        ExperimentKind::Spectral,
        ExperimentKind::Strength,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Equilibrium => "equilibrium",
            ExperimentKind::Linearity => "linearity",
            ExperimentKind::Spectral => "spectral",
            ExperimentKind::Strength => "strength",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// How the two coupling kernels relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    /// Both baths use the bath-1 kernel.
    Equal,
    /// `X¹ = ratio · X²`, with `X¹` built from bath 1.
    Similar,
    /// Each bath builds its own kernel from its own surface operator.
    Dissimilar,
}

/// Which reference temperature the equilibrium sweep compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceChoice {
    /// `T₀` from the coupling class (fixed along the sweep).
    Optimal,
    /// The arithmetic mean `(T₁ + T₂)/2`.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeKind {
    RankOne,
    RandomSymmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub temperature: f64,
    pub a0: f64,
    /// Bandwidth `Δ`; defaults to ten times the spectral range `λ'`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub end: ChainEnd,
    pub recipe: RecipeKind,
    /// Rank-one amplitude.
    pub amplitude: f64,
    /// Random-symmetric scale and seed.
    pub scale: f64,
    pub sub_seed: u64,
}

impl BathConfig {
    fn new(temperature: f64, end: ChainEnd, sub_seed: u64) -> Self {
        Self {
            temperature,
            a0: 1.0 / (2.0 * std::f64::consts::PI),
            delta: None,
            end,
            recipe: RecipeKind::RankOne,
            amplitude: 1.0,
            scale: 1.0,
            sub_seed,
        }
    }

    pub fn to_spec(&self, params: &ChainParams) -> BathSpec {
        BathSpec {
            temperature: self.temperature,
            a0: self.a0,
            delta: self.delta.unwrap_or(10.0 * params.lambda_bulk()),
            end: self.end,
            recipe: match self.recipe {
                RecipeKind::RankOne => SurfaceRecipe::RankOne {
                    amplitude: self.amplitude,
                },
                RecipeKind::RandomSymmetric => SurfaceRecipe::RandomSymmetric {
                    scale: self.scale,
                    sub_seed: self.sub_seed,
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub realizations: usize,
    pub execution: Execution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,

    pub blocks: usize,
    pub block_dim: usize,
    pub lambda: f64,
    pub w: f64,
    /// Surface coupling; defaults to `v² N = 1/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    pub e1: f64,
    pub n_surf: usize,

    pub bath1: BathConfig,
    pub bath2: BathConfig,
    pub coupling: CouplingMode,
    /// `a` in `X¹ = a X²` for similar couplings.
    pub ratio: f64,
    pub class_tol: f64,

    /// Block counts swept by `scaling`, `spectral` (density at E = 0) and `strength`.
    pub k_list: Vec<usize>,
    /// Sweep temperature scale `T₀`.
    pub t0: f64,
    /// Half-differences `δT` as fractions of `t0`.
    pub dt_list: Vec<f64>,
    pub reference: ReferenceChoice,

    /// Energy grid: `grid_points` points on `±grid_extent · λ'`.
    pub grid_points: usize,
    pub grid_extent: f64,
    /// Lorentzian smoothing width; defaults to two mean level spacings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            experiment: kind,
            seed: 1,
            realizations: 50,
            execution: Execution::default(),
            out_dir: None,
            blocks: 4,
            block_dim: 100,
            lambda: 1.0,
            w: 0.5,
            v: None,
            e1: 0.0,
            n_surf: 1,
            bath1: BathConfig::new(0.8, ChainEnd::Left, 101),
            bath2: BathConfig::new(1.2, ChainEnd::Right, 202),
            coupling: CouplingMode::Equal,
            ratio: 3.0,
            class_tol: DEFAULT_CLASS_TOL,
            k_list: vec![2, 3, 4, 6, 8],
            t0: 1.0,
            dt_list: vec![0.01, 0.02, 0.04, 0.08],
            reference: ReferenceChoice::Optimal,
            grid_points: 401,
            grid_extent: 2.5,
            eta: None,
        };
        match kind {
            ExperimentKind::Scaling => base,
            ExperimentKind::Equilibrium | ExperimentKind::Linearity => Self {
                realizations: 4,
                blocks: 2,
                block_dim: 20,
                ..base
            },
            ExperimentKind::Spectral => Self {
                realizations: 20,
                block_dim: 200,
                k_list: vec![4, 8, 16],
                ..base
            },
            ExperimentKind::Strength => Self {
                k_list: vec![2, 4, 8],
                grid_points: 1001,
                ..base
            },
        }
    }

    /// Merges `file` and then `overrides` onto the defaults of `kind`.
    ///
    /// A file naming a different experiment is a configuration error.
    pub fn build(kind: ExperimentKind, file: Option<Table>, overrides: &[(String, Value)]) -> Result<Self> {
        let defaults = Value::try_from(Self::defaults(kind)).map_err(|e| Error::Config(e.to_string()))?;
        let Value::Table(mut table) = defaults else {
            unreachable!("a struct serializes to a table")
        };
        if let Some(file) = file {
            if let Some(named) = file.get("experiment") {
                if named.as_str() != Some(kind.name()) {
                    return Err(Error::Config(format!(
                        "config file is for experiment {named}, not {}",
                        kind.name()
                    )));
                }
            }
            merge(&mut table, file, "")?;
        }
        for (path, value) in overrides {
            set_path(&mut table, path, value.clone())?;
        }
        let config: Self = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(kind: ExperimentKind, text: &str, overrides: &[(String, Value)]) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::build(kind, Some(table), overrides)
    }

    /// Chain parameters at block count `blocks`.
    pub fn chain_params(&self, blocks: usize) -> ChainParams {
        ChainParams {
            blocks,
            block_dim: self.block_dim,
            lambda: self.lambda,
            w: self.w,
            v: self.v.unwrap_or_else(|| (0.5 / self.block_dim as f64).sqrt()),
            e1: self.e1,
            n_surf: self.n_surf,
            seed: self.seed,
        }
    }

    /// Fills the derived defaults (`v`, bath bandwidths) so that a snapshot
    /// records the values actually used.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        let params = self.chain_params(self.blocks);
        out.v = Some(params.v);
        out.bath1.delta = Some(self.bath1.to_spec(&params).delta);
        out.bath2.delta = Some(self.bath2.to_spec(&params).delta);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.realizations == 0 {
            return fail("realizations must be at least 1".into());
        }
        let mut ks = vec![self.blocks];
        ks.extend(&self.k_list);
        for k in ks {
            self.chain_params(k)
                .validate()
                .map_err(|e| Error::Config(format!("chain with K = {k}: {e}")))?;
        }
        let params = self.chain_params(self.blocks);
        for (name, bath) in [("bath1", &self.bath1), ("bath2", &self.bath2)] {
            bath.to_spec(&params)
                .validate()
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        if !(self.bath1.temperature <= self.bath2.temperature) {
            return fail("bath1 must be the colder bath (bath1.temperature <= bath2.temperature)".into());
        }
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return fail(format!("ratio must be positive, got {}", self.ratio));
        }
        if !(self.class_tol > 0.0) {
            return fail("class_tol must be positive".into());
        }
        if !(self.t0 > 0.0) {
            return fail("t0 must be positive".into());
        }
        if self.dt_list.iter().any(|d| !(*d > 0.0 && *d < 0.5)) {
            return fail("dt_list entries must lie in (0, 0.5) (fractions of t0)".into());
        }
        if self.grid_points < 5 || !(self.grid_extent > 0.0 && self.grid_extent <= 3.0) {
            return fail("grid needs at least 5 points and 0 < grid_extent <= 3".into());
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return fail("eta must be positive".into());
            }
        }
        let distinct = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        match self.experiment {
            ExperimentKind::Scaling => {
                if distinct(&self.k_list) < 3 {
                    return fail("scaling needs at least 3 distinct block counts in k_list".into());
                }
                if self.coupling == CouplingMode::Dissimilar {
                    warn!("scaling with dissimilar couplings: the decomposition columns refer to the bath-1 form");
                }
            }
            ExperimentKind::Equilibrium => {
                let (lo, hi) = min_max(&self.dt_list);
                if self.dt_list.len() < 2 || hi < 8.0 * lo * (1.0 - 1e-12) {
                    return fail("equilibrium needs dt_list spanning at least a factor 8".into());
                }
            }
            ExperimentKind::Linearity => {
                if self.dt_list.len() < 4 {
                    return fail("linearity needs at least 4 dt_list entries".into());
                }
            }
            ExperimentKind::Spectral => {
                if self.realizations < 10 {
                    return fail("spectral needs at least 10 realizations".into());
                }
                if distinct(&self.k_list) < 2 {
                    return fail("spectral needs at least 2 distinct block counts in k_list".into());
                }
            }
            ExperimentKind::Strength => {
                if self.realizations < 10 {
                    return fail("strength needs at least 10 realizations".into());
                }
                if self.k_list.is_empty() {
                    return fail("strength needs a non-empty k_list".into());
                }
            }
        }
        let spacing = params.mean_spacing();
        let t_min = match self.experiment {
            ExperimentKind::Equilibrium | ExperimentKind::Linearity => self.t0 * (1.0 - 2.0 * min_max(&self.dt_list).1),
            _ => self.bath1.temperature,
        };
        if t_min < 10.0 * spacing {
            warn!("temperature {t_min} is not much larger than the mean level spacing {spacing:.3e}");
        }
        Ok(())
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(*x), hi.max(*x))
    })
}

/// Overlays `src` onto `dst`. Keys absent from `dst` are kept so that
/// deserialization reports them as unknown fields.
fn merge(dst: &mut Table, src: Table, prefix: &str) -> Result<()> {
    for (key, value) in src {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match (dst.get_mut(&key), value) {
            (Some(Value::Table(d)), Value::Table(s)) => merge(d, s, &path)?,
            (Some(existing), value) => *existing = coerce(existing, value, &path)?,
            (None, value) => {
                dst.insert(key, value);
            }
        }
    }
    Ok(())
}

/// Integers are accepted where a float is expected.
fn coerce(existing: &Value, value: Value, path: &str) -> Result<Value> {
    match (existing, value) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (Value::Table(_), v) if !v.is_table() => Err(Error::Config(format!("'{path}' must be a table"))),
        (Value::Array(a), Value::Array(items)) if a.first().is_some_and(Value::is_float) => Ok(Value::Array(
            items
                .into_iter()
                .map(|v| match v {
                    Value::Integer(i) => Value::Float(i as f64),
                    other => other,
                })
                .collect(),
        )),
        (_, v) => Ok(v),
    }
}

/// Sets a dotted key such as `bath1.temperature`.
pub fn set_path(table: &mut Table, path: &str, value: Value) -> Result<()> {
    let mut parts = path.split('.').peekable();
    let mut current = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            match current.get_mut(part) {
                Some(existing) => *existing = coerce(existing, value, path)?,
                None => {
                    current.insert(part.to_string(), value);
                }
            }
            return Ok(());
        }
        current = match current
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
        {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("'{part}' in '{path}' is not a table"))),
        };
    }
    Err(Error::Config("empty override key".into()))
}
