//! Command-line front end for the coherent-heat experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coherent_heat::harness::{self, emit_outputs, ExperimentConfig, ExperimentKind, OUT_DIR_ENV};
use coherent_heat::Error;
use toml::Value;

const AFTER_HELP: &str = "\
Configuration is layered: built-in defaults for the experiment, then the TOML
file given with --config, then flags. Every flag overrides the config key of
the same name with dashes for underscores (--block-dim sets block_dim);
--bath1-<key> and --bath2-<key> set keys of the [bath1] and [bath2] tables.

Output directory: --out-dir, else out_dir from the config file, else the
COHERENT_HEAT_OUT_DIR environment variable, else ./results.

Exit status: 0 success, 2 configuration error, 3 numerical failure,
1 other failures (such as an unwritable output directory).";

#[derive(Parser, Debug)]
#[command(name = "coherent-heat", version, about = "Heat-transport experiments on random-matrix chains", after_help = AFTER_HELP)]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (see below for the fallback order).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Number of ensemble realizations.
    #[arg(long, global = true, value_name = "N")]
    realizations: Option<u64>,

    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Conductance against chain length, with its numerator/normalization split.
    Scaling(Overrides),
    /// Steady-state deviations from Gibbs and from first order against dT.
    Equilibrium(Overrides),
    /// Exact heat currents against the linear-response conductance.
    Linearity(Overrides),
    /// Level density and strength function, Monte Carlo against Pastur.
    Spectral(Overrides),
    /// Strength-function widths across block counts.
    Strength(Overrides),
}

macro_rules! overrides {
    ($( $field:ident : $ty:ty => $key:literal, $doc:literal; )*) => {
        #[derive(Args, Debug, Default)]
        struct Overrides {
            /// TOML configuration file.
            #[arg(long, value_name = "PATH")]
            config: Option<PathBuf>,
            $(
                #[doc = $doc]
                #[arg(long)]
                $field: Option<$ty>,
            )*
            /// Block counts to sweep, comma separated.
            #[arg(long, value_delimiter = ',', num_args = 1..)]
            k_list: Option<Vec<u64>>,
            /// Temperature half-differences as fractions of t0, comma separated.
            #[arg(long, value_delimiter = ',', num_args = 1..)]
            dt_list: Option<Vec<f64>>,
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(String, Value)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push(($key.to_string(), Value::from(v.clone())));
                    }
                )*
                if let Some(ks) = &self.k_list {
                    let ks: Vec<Value> = ks.iter().map(|k| Value::Integer(*k as i64)).collect();
                    out.push(("k_list".to_string(), Value::Array(ks)));
                }
                if let Some(ds) = &self.dt_list {
                    out.push(("dt_list".to_string(), Value::Array(ds.iter().map(|d| Value::Float(*d)).collect())));
                }
                out
            }
        }
    };
}

overrides! {
    execution: String => "execution", "parallel or sequential.";
    blocks: i64 => "blocks", "Number of blocks K.";
    block_dim: i64 => "block_dim", "Block dimension N.";
    lambda: f64 => "lambda", "Intra-block scale.";
    w: f64 => "w", "Inter-block coupling scale.";
    v: f64 => "v", "Surface coupling scale.";
    e1: f64 => "e1", "Surface-state energy.";
    n_surf: i64 => "n_surf", "Surface states per end.";
    coupling: String => "coupling", "equal, similar or dissimilar.";
    ratio: f64 => "ratio", "a in X1 = a X2 for similar couplings.";
    class_tol: f64 => "class_tol", "Tolerance for classifying couplings as proportional.";
    t0: f64 => "t0", "Reference temperature of the dT sweeps.";
    reference: String => "reference", "optimal or mean (equilibrium sweep).";
    grid_points: i64 => "grid_points", "Energy grid points.";
    grid_extent: f64 => "grid_extent", "Grid half-width in units of the bulk scale.";
    eta: f64 => "eta", "Lorentzian smoothing width.";
    bath1_temperature: f64 => "bath1.temperature", "Bath 1 (cold) temperature.";
    bath1_a0: f64 => "bath1.a0", "Bath 1 coupling strength.";
    bath1_delta: f64 => "bath1.delta", "Bath 1 bandwidth.";
    bath1_end: String => "bath1.end", "Bath 1 chain end: left or right.";
    bath1_recipe: String => "bath1.recipe", "Bath 1 surface operator: rank_one or random_symmetric.";
    bath1_amplitude: f64 => "bath1.amplitude", "Bath 1 rank-one amplitude.";
    bath1_scale: f64 => "bath1.scale", "Bath 1 random-operator scale.";
    bath1_sub_seed: i64 => "bath1.sub_seed", "Bath 1 random-operator seed.";
    bath2_temperature: f64 => "bath2.temperature", "Bath 2 (hot) temperature.";
    bath2_a0: f64 => "bath2.a0", "Bath 2 coupling strength.";
    bath2_delta: f64 => "bath2.delta", "Bath 2 bandwidth.";
    bath2_end: String => "bath2.end", "Bath 2 chain end: left or right.";
    bath2_recipe: String => "bath2.recipe", "Bath 2 surface operator: rank_one or random_symmetric.";
    bath2_amplitude: f64 => "bath2.amplitude", "Bath 2 rank-one amplitude.";
    bath2_scale: f64 => "bath2.scale", "Bath 2 random-operator scale.";
    bath2_sub_seed: i64 => "bath2.sub_seed", "Bath 2 random-operator seed.";
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => 2,
        Failure::Core(e) if e.is_configuration() => 2,
        Failure::Core(Error::Io { .. }) => 1,
        Failure::Core(_) => 3,
    }
}

fn load_file(path: &Path) -> Result<toml::Table, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    text.parse()
        .map_err(|e: toml::de::Error| Failure::Usage(format!("{}: {e}", path.display())))
}

fn to_i64(x: u64, name: &str) -> Result<i64, Failure> {
    i64::try_from(x).map_err(|_| Failure::Usage(format!("--{name} is too large")))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (kind, opts) = match &cli.command {
        Command::Scaling(o) => (ExperimentKind::Scaling, o),
        Command::Equilibrium(o) => (ExperimentKind::Equilibrium, o),
        Command::Linearity(o) => (ExperimentKind::Linearity, o),
        Command::Spectral(o) => (ExperimentKind::Spectral, o),
        Command::Strength(o) => (ExperimentKind::Strength, o),
    };
    let file = opts.config.as_deref().map(load_file).transpose()?;
    let mut overrides = opts.pairs();
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), Value::Integer(to_i64(seed, "seed")?)));
    }
    if let Some(n) = cli.realizations {
        overrides.push(("realizations".into(), Value::Integer(to_i64(n, "realizations")?)));
    }
    let config = ExperimentConfig::build(kind, file, &overrides)?;
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));

    let record = harness::run(&config, None)?;
    let paths = emit_outputs(&record, &out_dir)?;
    for event in &record.events {
        eprintln!("redrawn: {event}");
    }
    for (key, value) in &record.summary {
        println!("{key} = {value}");
    }
    println!("table: {}", paths.table.display());
    println!("manifest: {}", paths.manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("configuration error: {msg}"),
                Failure::Core(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
