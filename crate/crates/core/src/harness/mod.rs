//! Reproducible ensemble experiments and their output files.
//!
//! Five experiments are available: `scaling` (conductance against chain
//! length), `equilibrium` (steady-state deviations against the temperature
//! difference), `linearity` (exact currents against linear response),
//! `spectral` (level density and strength function, Monte Carlo against the
//! Pastur solution) and `strength` (strength-function widths across lengths).
//! Each run produces a [`RunRecord`]; [`emit_outputs`] writes it as a CSV
//! table plus a TOML manifest holding the full configuration.

mod config;
mod experiments;
mod record;

pub use config::{
    set_path, BathConfig, CouplingMode, ExperimentConfig, ExperimentKind, RecipeKind, ReferenceChoice, OUT_DIR_ENV,
};
pub use experiments::{
    bath_temperatures, realization, run, run_equilibrium_experiment, run_linearity_experiment, run_scaling_experiment,
    run_spectral_experiment, run_strength_experiment, Realization, MAX_RETRIES,
};
pub use record::{emit_outputs, render_manifest, render_table, Cell, OutputPaths, RunRecord};
