//! Ensemble experiments.
//!
//! Every realization draws from its own random stream, labelled by the
//! experiment, the block count, the realization index and the retry number,
//! so results do not depend on evaluation order or thread count.

use std::time::Instant;

use log::info;

use super::config::{CouplingMode, ExperimentConfig, ExperimentKind, ReferenceChoice};
use super::record::RunRecord;
use crate::bath_coupling::{
    build_surface_operator, eigenbasis_coupling, perturbation_objects, rate_matrix, CouplingKernel,
};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fit::{log_log_fit, LineFit};
use crate::greens::{
    average_level_density, breit_wigner_half_width, pastur_solve, strength_function_analytic, surface_strength,
    trapezoid, uniform_grid, StrengthFunction,
};
use crate::rmt_chain::{
    diagonalize_chain, sample_chain_hamiltonian, smoothed_level_density, ChainEnd, ChainParams, SystemSpectrum,
};
use crate::rng;
use crate::steady_state::{
    classify_couplings, gibbs, stationary_exact, stationary_perturbative, CouplingKind, ResponseSums,
};
use crate::transport::{conductance_linear_response, exact_current, fourier_linearity_fit};

/// Redraws allowed per realization after a numerical failure.
pub const MAX_RETRIES: u64 = 3;

/// One sampled chain with both coupling kernels.
#[derive(Debug, Clone)]
pub struct Realization {
    pub spectrum: SystemSpectrum,
    pub x1: CouplingKernel,
    pub x2: CouplingKernel,
}

/// Samples a chain from the stream `(config.seed, labels)` and builds both kernels.
pub fn realization(config: &ExperimentConfig, params: &ChainParams, labels: &[u64]) -> Result<Realization> {
    let mut stream = rng::stream(config.seed, labels);
    let h = sample_chain_hamiltonian(params, &mut stream)?;
    let spectrum = diagonalize_chain(&h)?;
    let (spec1, spec2) = (config.bath1.to_spec(params), config.bath2.to_spec(params));
    let x1 = eigenbasis_coupling(&build_surface_operator(&spec1, params)?, &spec1, &spectrum)?;
    let x2 = match config.coupling {
        CouplingMode::Equal => CouplingKernel::from_matrix(x1.matrix().clone(), spec2)?,
        CouplingMode::Similar => CouplingKernel::from_matrix(x1.matrix() / config.ratio, spec2)?,
        CouplingMode::Dissimilar => eigenbasis_coupling(&build_surface_operator(&spec2, params)?, &spec2, &spectrum)?,
    };
    Ok(Realization { spectrum, x1, x2 })
}

fn spectrum_only(params: &ChainParams, seed: u64, labels: &[u64]) -> Result<SystemSpectrum> {
    let h = sample_chain_hamiltonian(params, &mut rng::stream(seed, labels))?;
    diagonalize_chain(&h)
}

type Attempt<T> = (Result<T>, Vec<String>);

/// Runs `f` with the retry number appended to `labels`, redrawing after
/// numerical failures. Configuration errors are returned immediately.
fn with_retries<T>(what: &str, labels: &[u64], f: impl Fn(&[u64]) -> Result<T>) -> Attempt<T> {
    let mut events = Vec::new();
    let mut labels = labels.to_vec();
    labels.push(0);
    for retry in 0..=MAX_RETRIES {
        *labels.last_mut().unwrap() = retry;
        match f(&labels) {
            Ok(v) => return (Ok(v), events),
            Err(e) if e.is_configuration() => return (Err(e), events),
            Err(e) => events.push(format!("{what} attempt {retry}: {e}")),
        }
    }
    let err = Error::numerical(format!("{what}: {} consecutive failures, giving up", MAX_RETRIES + 1));
    (Err(err), events)
}

fn gather<T>(results: Vec<Attempt<T>>, events: &mut Vec<String>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    let mut first_error = None;
    for (result, ev) in results {
        events.extend(ev);
        match result {
            Ok(v) => out.push(v),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_error(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

fn note_fit(record: &mut RunRecord, name: &str, fit: &LineFit) {
    record.note(format!("{name}.slope"), fit.slope);
    record.note(format!("{name}.slope_se"), fit.slope_se);
    record.note(format!("{name}.intercept"), fit.intercept);
}

/// Runs the experiment named in `config`. `exec` overrides `config.execution`.
pub fn run(config: &ExperimentConfig, exec: Option<Execution>) -> Result<RunRecord> {
    config.validate()?;
    let exec = exec.unwrap_or(config.execution);
    let start = Instant::now();
    info!("running {} with seed {}", config.experiment.name(), config.seed);
    let mut record = match config.experiment {
        ExperimentKind::Scaling => run_scaling_experiment(config, exec),
        ExperimentKind::Equilibrium => run_equilibrium_experiment(config, exec),
        ExperimentKind::Linearity => run_linearity_experiment(config, exec),
        ExperimentKind::Spectral => run_spectral_experiment(config, exec),
        ExperimentKind::Strength => run_strength_experiment(config, exec),
    }?;
    record.wall_seconds = start.elapsed().as_secs_f64();
    Ok(record)
}

/// `⟨C⟩(K)` and its decomposition into numerator and normalization.
pub fn run_scaling_experiment(config: &ExperimentConfig, exec: Execution) -> Result<RunRecord> {
    let mut record = RunRecord::new(
        config,
        vec!["K", "realization", "C", "I", "T0", "alpha", "numerator", "Z"],
    );
    let (t1, t2) = (config.bath1.temperature, config.bath2.temperature);
    let mut means = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut decomposition_defect: f64 = 0.0;
    for &k in &config.k_list {
        let params = config.chain_params(k);
        let results = map_indexed(exec, config.realizations, |r| {
            let labels = [rng::tag("scaling"), k as u64, r as u64];
            with_retries(&format!("K={k} realization={r}"), &labels, |labels| {
                let re = realization(config, &params, labels)?;
                conductance_linear_response(re.spectrum.energies(), &re.x1, &re.x2, t1, t2, config.class_tol)
            })
        });
        let results = gather(results, &mut record.events)?;
        let mut cs = Vec::with_capacity(results.len());
        let (mut nums, mut zs) = (Vec::new(), Vec::new());
        for (r, t) in results.iter().enumerate() {
            record.push(vec![
                k.into(),
                r.into(),
                t.conductance.into(),
                t.current.into(),
                t.t0_used[0].into(),
                t.alpha_used[0].into(),
                t.terms.numerator.into(),
                t.terms.z.into(),
            ]);
            if t.klass.kind != CouplingKind::Dissimilar {
                let rebuilt = t.terms.conductance(t.gamma);
                decomposition_defect = decomposition_defect.max((rebuilt - t.conductance).abs() / t.conductance);
            }
            cs.push(t.conductance);
            nums.push(t.terms.numerator);
            zs.push(t.terms.z);
        }
        record.note(format!("K={k}.C_mean"), mean(&cs));
        record.note(format!("K={k}.C_stderr"), std_error(&cs));
        record.note(format!("K={k}.numerator_mean"), mean(&nums));
        record.note(format!("K={k}.Z_mean"), mean(&zs));
        means.0.push(k as f64);
        means.1.push(mean(&cs));
        means.2.push(mean(&nums));
        means.3.push(mean(&zs));
    }
    note_fit(&mut record, "C", &log_log_fit(&means.0, &means.1)?);
    note_fit(&mut record, "numerator", &log_log_fit(&means.0, &means.2)?);
    note_fit(&mut record, "Z", &log_log_fit(&means.0, &means.3)?);
    record.note("decomposition.max_rel_defect", decomposition_defect);
    Ok(record)
}

/// Bath temperatures for half-difference `dt` around `t0`, keeping
/// `α T₁ + (1 - α) T₂ = t0`.
pub fn bath_temperatures(t0: f64, alpha: f64, dt: f64) -> (f64, f64) {
    (t0 - 2.0 * (1.0 - alpha) * dt, t0 + 2.0 * alpha * dt)
}

fn sweep_alpha(kind: CouplingKind) -> f64 {
    match kind {
        CouplingKind::Similar { a } => a / (1.0 + a),
        CouplingKind::Equal | CouplingKind::Dissimilar => 0.5,
    }
}

struct EquilibriumPoint {
    err_gibbs: f64,
    err_pert: f64,
    bracket: f64,
}

/// Deviations of the exact steady state from Gibbs and from first order.
pub fn run_equilibrium_experiment(config: &ExperimentConfig, exec: Execution) -> Result<RunRecord> {
    let mut record = RunRecord::new(config, vec!["dT", "err_exact_vs_gibbs", "err_pert_vs_exact"]);
    let params = config.chain_params(config.blocks);
    let dts: Vec<f64> = config.dt_list.iter().map(|f| f * config.t0).collect();
    let results = map_indexed(exec, config.realizations, |r| {
        let labels = [rng::tag("equilibrium"), config.blocks as u64, r as u64];
        with_retries(&format!("realization={r}"), &labels, |labels| {
            let re = realization(config, &params, labels)?;
            let e = re.spectrum.energies();
            let klass = classify_couplings(&re.x1, &re.x2, config.class_tol)?;
            let alpha = sweep_alpha(klass.kind);
            dts.iter()
                .map(|&dt| {
                    let (t1, t2) = bath_temperatures(config.t0, alpha, dt);
                    let exact = stationary_exact(&rate_matrix(&re.x1, t1, e)?, &rate_matrix(&re.x2, t2, e)?)?;
                    let pert = stationary_perturbative(e, &re.x1, &re.x2, t1, t2, config.class_tol)?;
                    let t_ref = match config.reference {
                        ReferenceChoice::Optimal => pert.t0().expect("perturbative solutions carry T0"),
                        ReferenceChoice::Mean => 0.5 * (t1 + t2),
                    };
                    let bracket = match klass.kind {
                        CouplingKind::Dissimilar => {
                            let t0 = pert.t0().expect("perturbative solutions carry T0");
                            let s = ResponseSums::new(
                                &perturbation_objects(&re.x1, t0, e)?,
                                &perturbation_objects(&re.x2, t0, e)?,
                            )?;
                            s.bath1_bracket(pert.alpha().expect("perturbative solutions carry alpha"))
                                .abs()
                                / (s.s11.abs() + s.s12.abs())
                        }
                        _ => 0.0,
                    };
                    Ok(EquilibriumPoint {
                        err_gibbs: (exact.p() - gibbs(e, t_ref)).amax(),
                        err_pert: (pert.p() - exact.p()).amax(),
                        bracket,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
    });
    let results = gather(results, &mut record.events)?;
    let (mut gibbs_err, mut pert_err) = (Vec::new(), Vec::new());
    let mut bracket: f64 = 0.0;
    for (i, dt) in dts.iter().enumerate() {
        let g: Vec<f64> = results.iter().map(|r| r[i].err_gibbs).collect();
        let p: Vec<f64> = results.iter().map(|r| r[i].err_pert).collect();
        bracket = results.iter().map(|r| r[i].bracket).fold(bracket, f64::max);
        record.push(vec![(*dt).into(), mean(&g).into(), mean(&p).into()]);
        gibbs_err.push(mean(&g));
        pert_err.push(mean(&p));
    }
    note_fit(&mut record, "err_exact_vs_gibbs", &log_log_fit(&dts, &gibbs_err)?);
    note_fit(&mut record, "err_pert_vs_exact", &log_log_fit(&dts, &pert_err)?);
    record.note("bracket.max_rel", bracket);
    Ok(record)
}

struct LinearityPoint {
    current: f64,
    conductance: f64,
    form_deviation: f64,
    form_spread: f64,
    flow_mismatch: f64,
}

/// Exact currents over a `δT` sweep against the linear-response conductance.
pub fn run_linearity_experiment(config: &ExperimentConfig, exec: Execution) -> Result<RunRecord> {
    let mut record = RunRecord::new(
        config,
        vec![
            "realization",
            "dT",
            "I_exact",
            "C_formula",
            "mismatch",
            "form_deviation",
            "flow_mismatch",
        ],
    );
    let params = config.chain_params(config.blocks);
    let dts: Vec<f64> = config.dt_list.iter().map(|f| f * config.t0).collect();
    let results = map_indexed(exec, config.realizations, |r| {
        let labels = [rng::tag("linearity"), config.blocks as u64, r as u64];
        with_retries(&format!("realization={r}"), &labels, |labels| {
            let re = realization(config, &params, labels)?;
            let e = re.spectrum.energies();
            let alpha = sweep_alpha(classify_couplings(&re.x1, &re.x2, config.class_tol)?.kind);
            dts.iter()
                .map(|&dt| {
                    let (t1, t2) = bath_temperatures(config.t0, alpha, dt);
                    let exact = exact_current(e, &re.x1, &re.x2, t1, t2)?;
                    let lr = conductance_linear_response(e, &re.x1, &re.x2, t1, t2, config.class_tol)?;
                    let slope = exact.current / dt;
                    let form_deviation = lr
                        .diagnostics
                        .forms
                        .iter()
                        .map(|f| (f - slope).abs() / slope.abs())
                        .fold(0.0, f64::max);
                    Ok(LinearityPoint {
                        current: exact.current,
                        conductance: lr.conductance,
                        form_deviation,
                        form_spread: lr.diagnostics.form_spread,
                        flow_mismatch: exact.flow_mismatch,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
    });
    let results = gather(results, &mut record.events)?;
    let (mut flow, mut spread, mut fit_dev): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut mismatch_by_dt = vec![Vec::new(); dts.len()];
    for (r, points) in results.iter().enumerate() {
        for (i, (dt, p)) in dts.iter().zip(points).enumerate() {
            let mismatch = (p.current / dt - p.conductance).abs();
            mismatch_by_dt[i].push(mismatch);
            flow = flow.max(p.flow_mismatch);
            spread = spread.max(p.form_spread);
            record.push(vec![
                r.into(),
                (*dt).into(),
                p.current.into(),
                p.conductance.into(),
                mismatch.into(),
                p.form_deviation.into(),
                p.flow_mismatch.into(),
            ]);
        }
        let currents: Vec<f64> = points.iter().map(|p| p.current).collect();
        let fit = fourier_linearity_fit(&dts, &currents)?;
        let dev = (fit.conductance - points[0].conductance).abs() / points[0].conductance;
        record.note(format!("realization={r}.fit_conductance"), fit.conductance);
        record.note(format!("realization={r}.fit_curvature"), fit.curvature);
        fit_dev = fit_dev.max(dev);
    }
    let mean_mismatch: Vec<f64> = mismatch_by_dt.iter().map(|m| mean(m)).collect();
    note_fit(&mut record, "mismatch", &log_log_fit(&dts, &mean_mismatch)?);
    record.note("flow_mismatch.max", flow);
    record.note("form_spread.max", spread);
    record.note("fit_vs_formula.max_rel", fit_dev);
    Ok(record)
}

fn both_surfaces(params: &ChainParams) -> Vec<usize> {
    let mut sites = params.surface_sites(ChainEnd::Left);
    sites.extend(params.surface_sites(ChainEnd::Right));
    sites
}

fn accumulate(total: &mut [f64], part: &[f64], n: usize) {
    for (t, p) in total.iter_mut().zip(part) {
        *t += p / n as f64;
    }
}

/// Monte-Carlo level density and strength function against the Pastur solution.
pub fn run_spectral_experiment(config: &ExperimentConfig, exec: Execution) -> Result<RunRecord> {
    let mut record = RunRecord::new(config, vec!["E", "rho_pastur", "rho_mc", "sf_analytic", "sf_mc"]);
    let params = config.chain_params(config.blocks);
    let lp = params.lambda_bulk();
    let grid = uniform_grid(-config.grid_extent * lp, config.grid_extent * lp, config.grid_points);
    let eta = config.eta.unwrap_or(params.default_eta());
    let sites = both_surfaces(&params);

    let results = map_indexed(exec, config.realizations, |r| {
        let labels = [rng::tag("spectral"), config.blocks as u64, r as u64];
        with_retries(&format!("realization={r}"), &labels, |labels| {
            let s = spectrum_only(&params, config.seed, labels)?;
            Ok((
                smoothed_level_density(s.energies(), &grid, eta)?,
                surface_strength(&s, &sites, &grid, eta)?,
            ))
        })
    });
    let results = gather(results, &mut record.events)?;
    let (mut rho_mc, mut sf_mc) = (vec![0.0; grid.len()], vec![0.0; grid.len()]);
    for (rho, sf) in &results {
        accumulate(&mut rho_mc, rho, results.len());
        accumulate(&mut sf_mc, sf, results.len());
    }

    let profile = pastur_solve(&params, &grid, eta, exec)?;
    let rho_p = average_level_density(&profile);
    let analytic = strength_function_analytic(&profile)?;
    for i in 0..grid.len() {
        record.push(vec![
            grid[i].into(),
            rho_p[i].into(),
            rho_mc[i].into(),
            analytic.values[i].into(),
            sf_mc[i].into(),
        ]);
    }

    let bulk: Vec<usize> = (0..grid.len()).filter(|&i| grid[i].abs() <= 1.5 * lp).collect();
    let l1 =
        bulk.iter().map(|&i| (rho_mc[i] - rho_p[i]).abs()).sum::<f64>() / bulk.iter().map(|&i| rho_p[i]).sum::<f64>();
    let max_dev = bulk
        .iter()
        .map(|&i| (rho_mc[i] / rho_p[i] - 1.0).abs())
        .fold(0.0, f64::max);
    record.note("density.bulk_l1_rel", l1);
    record.note("density.bulk_max_rel", max_dev);
    record.note("density.total_mc", trapezoid(&grid, &rho_mc));
    record.note("density.total_pastur", trapezoid(&grid, &rho_p));
    record.note("pastur.max_residual", profile.max_residual());
    let lam = profile.effective_lambda();
    record.note("lambda_eff.edge", lam[0]);
    record.note("lambda_eff.middle", lam[lam.len() / 2]);

    let empirical = StrengthFunction::fitted(grid.clone(), sf_mc)?;
    record.note("strength.width_analytic", analytic.width);
    record.note("strength.width_mc", empirical.width);
    record.note("strength.width_breit_wigner", breit_wigner_half_width(&profile));
    record.note("strength.center_mc", empirical.center);
    record.note("strength.weight_analytic", analytic.weight());
    record.note("strength.weight_mc", empirical.weight());

    let mut ks = Vec::new();
    let mut rho0 = Vec::new();
    for &k in &config.k_list {
        let p = config.chain_params(k);
        let r = average_level_density(&pastur_solve(&p, &[0.0], eta, Execution::Sequential)?)[0];
        record.note(format!("density0.K={k}"), r);
        ks.push(k as f64);
        rho0.push(r);
    }
    note_fit(&mut record, "density0", &log_log_fit(&ks, &rho0)?);
    Ok(record)
}

/// Strength-function widths across block counts.
pub fn run_strength_experiment(config: &ExperimentConfig, exec: Execution) -> Result<RunRecord> {
    let mut record = RunRecord::new(
        config,
        vec![
            "K",
            "width_analytic",
            "width_mc",
            "width_breit_wigner",
            "center_mc",
            "weight_mc",
        ],
    );
    let k_min = *config.k_list.iter().min().expect("validated non-empty");
    // one smoothing width for every K, two spacings of the shortest chain
    let eta = config.eta.unwrap_or(config.chain_params(k_min).default_eta());
    let (mut analytic_w, mut mc_w) = (Vec::new(), Vec::new());
    for &k in &config.k_list {
        let params = config.chain_params(k);
        let lp = params.lambda_bulk();
        let grid = uniform_grid(-config.grid_extent * lp, config.grid_extent * lp, config.grid_points);
        let profile = pastur_solve(&params, &grid, eta, exec)?;
        let analytic = strength_function_analytic(&profile)?;
        let sites = both_surfaces(&params);
        let results = map_indexed(exec, config.realizations, |r| {
            let labels = [rng::tag("strength"), k as u64, r as u64];
            with_retries(&format!("K={k} realization={r}"), &labels, |labels| {
                surface_strength(&spectrum_only(&params, config.seed, labels)?, &sites, &grid, eta)
            })
        });
        let results = gather(results, &mut record.events)?;
        let mut sf = vec![0.0; grid.len()];
        for part in &results {
            accumulate(&mut sf, part, results.len());
        }
        let empirical = StrengthFunction::fitted(grid, sf)?;
        record.push(vec![
            k.into(),
            analytic.width.into(),
            empirical.width.into(),
            breit_wigner_half_width(&profile).into(),
            empirical.center.into(),
            empirical.weight().into(),
        ]);
        analytic_w.push(analytic.width);
        mc_w.push(empirical.width);
    }
    let spread =
        |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    record.note("width_mc.spread", spread(&mc_w));
    record.note("width_analytic.spread", spread(&analytic_w));
    let dev = mc_w
        .iter()
        .zip(&analytic_w)
        .map(|(m, a)| (m / a - 1.0).abs())
        .fold(0.0, f64::max);
    record.note("mc_vs_analytic.max_rel", dev);
    record.note("eta", eta);
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::render_table;
    use toml::Value;

    fn small(kind: ExperimentKind, extra: &[(&str, Value)]) -> ExperimentConfig {
        let mut overrides = vec![
            ("block_dim".to_string(), Value::Integer(16)),
            ("realizations".to_string(), Value::Integer(10)),
        ];
        overrides.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        ExperimentConfig::build(kind, None, &overrides).unwrap()
    }

    #[test]
    fn scaling_rows_and_decomposition() {
        let c = small(
            ExperimentKind::Scaling,
            &[("k_list", Value::Array(vec![2.into(), 3.into(), 4.into()]))],
        );
        let r = run(&c, None).unwrap();
        assert_eq!(r.rows.len(), 30);
        assert_eq!(
            r.columns,
            ["K", "realization", "C", "I", "T0", "alpha", "numerator", "Z"]
        );
        assert!(r.summary_value("decomposition.max_rel_defect").unwrap() <= 1e-12);
        assert!(r.column("C").unwrap().iter().all(|c| *c > 0.0));
        for row in &r.rows {
            let (c, num, z, t0) = (row[2].as_f64(), row[6].as_f64(), row[7].as_f64(), row[4].as_f64());
            assert!((c - 0.5 / (t0 * t0) * num / z).abs() <= 1e-12 * c);
        }
    }

    #[test]
    fn parallel_and_sequential_tables_are_identical() {
        let c = small(
            ExperimentKind::Scaling,
            &[("k_list", Value::Array(vec![2.into(), 3.into(), 4.into()]))],
        );
        let a = render_table(&run(&c, Some(Execution::Sequential)).unwrap()).unwrap();
        let b = render_table(&run(&c, Some(Execution::Parallel)).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = small(
            ExperimentKind::Scaling,
            &[
                ("k_list", Value::Array(vec![2.into(), 3.into(), 4.into()])),
                ("seed", 2.into()),
            ],
        );
        assert_ne!(a, render_table(&run(&other, None).unwrap()).unwrap());
    }

    #[test]
    fn equilibrium_rows() {
        let c = small(ExperimentKind::Equilibrium, &[("realizations", 2.into())]);
        let r = run(&c, None).unwrap();
        assert_eq!(r.columns, ["dT", "err_exact_vs_gibbs", "err_pert_vs_exact"]);
        assert_eq!(r.rows.len(), 4);
        let slope = r.summary_value("err_exact_vs_gibbs.slope").unwrap();
        assert!((slope - 2.0).abs() < 0.3, "{slope}");
    }

    #[test]
    fn linearity_conserves_energy() {
        let c = small(
            ExperimentKind::Linearity,
            &[("realizations", 2.into()), ("coupling", "dissimilar".into())],
        );
        let r = run(&c, None).unwrap();
        assert_eq!(r.rows.len(), 8);
        assert!(r.summary_value("flow_mismatch.max").unwrap() <= 1e-9);
    }

    #[test]
    fn decoupled_surface_in_spectral_run() {
        let c = small(
            ExperimentKind::Spectral,
            &[
                ("v", 0.0.into()),
                ("e1", 0.25.into()),
                ("eta", 0.02.into()),
                ("k_list", Value::Array(vec![2.into(), 4.into()])),
            ],
        );
        let r = run(&c, None).unwrap();
        assert_eq!(r.columns, ["E", "rho_pastur", "rho_mc", "sf_analytic", "sf_mc"]);
        let w = r.summary_value("strength.weight_mc").unwrap();
        assert!((w - 1.0).abs() < 0.02, "{w}");
        assert!((r.summary_value("strength.center_mc").unwrap() - 0.25).abs() < 1e-6);
    }

    #[test]
    fn retries_record_events_and_give_up() {
        let (ok, events) = with_retries("x", &[1], |l| {
            if l[1] < 2 {
                Err(Error::numerical("flaky"))
            } else {
                Ok(l[1])
            }
        });
        assert_eq!(ok.unwrap(), 2);
        assert_eq!(events.len(), 2);
        let (err, events) = with_retries("x", &[1], |_| -> Result<()> { Err(Error::numerical("always")) });
        assert!(matches!(err, Err(Error::Numerical(_))));
        assert_eq!(events.len() as u64, MAX_RETRIES + 1);
        let (err, events) = with_retries("x", &[1], |_| -> Result<()> { Err(Error::param("bad")) });
        assert!(err.unwrap_err().is_configuration());
        assert!(events.is_empty());
    }

    #[test]
    fn bath_temperatures_keep_reference_fixed() {
        let (t1, t2) = bath_temperatures(1.0, 0.75, 0.04);
        assert!((0.75 * t1 + 0.25 * t2 - 1.0).abs() < 1e-15);
        assert!((0.5 * (t2 - t1) - 0.04).abs() < 1e-15);
    }
}
