//! Task dispatch behind the command-line tool: runs a [`RunConfig`] and
//! writes a JSON envelope, CSV tables and plotting scripts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, SweepAxis, Task};
use crate::entanglement::{self, CesFitOptions};
use crate::error::{Error, Result};
use crate::fock::{coherent_state, Truncation};
use crate::model::{build_reduced_liouvillian, derived_couplings, SystemParams};
use crate::spectra;
use crate::steady::{cutoff_adequacy, number_operators, steady_state_with, CutoffReport, SteadyOptions, SteadyReport};
use crate::validation;
use crate::c64;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const SCHEMA: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const CUTOFF: i32 = 4;
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => exit::SCHEMA,
        Error::Io(_) => exit::OTHER,
        _ => exit::SOLVER,
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads for sweeps and spectra; all cores when absent.
    pub workers: Option<usize>,
    /// Fail with [`exit::CUTOFF`] when the top Fock level is populated.
    pub strict_cutoff: bool,
    /// Overrides `solver.tol`.
    pub tolerance: Option<f64>,
}

#[derive(Serialize)]
pub struct ResultEnvelope {
    pub task: &'static str,
    pub config: RunConfig,
    pub outputs: Value,
    pub diagnostics: Value,
    pub wall_time_s: f64,
}

/// Files written and the overall verdict.
#[derive(Debug)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub cutoff_ok: bool,
    pub exit_code: i32,
}

struct TaskOutput {
    outputs: Value,
    diagnostics: Value,
    tables: Vec<(String, String)>,
    plot: Option<String>,
    cutoff_ok: bool,
}

pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let start = Instant::now();
    let tol = opts.tolerance.unwrap_or(cfg.solver.tol);
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let out = pool.install(|| dispatch(cfg, tol))?;
    std::fs::create_dir_all(&opts.out_dir)?;
    let stem = &cfg.output.stem;
    let mut files = Vec::new();
    let env = ResultEnvelope {
        task: cfg.task.name(),
        config: cfg.clone(),
        outputs: out.outputs,
        diagnostics: out.diagnostics,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let json_path = opts.out_dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&env).map_err(|e| Error::Numerical(e.to_string()))?)?;
    files.push(json_path);
    for (name, body) in &out.tables {
        let p = opts.out_dir.join(format!("{stem}_{name}.csv"));
        std::fs::write(&p, body)?;
        files.push(p);
    }
    if let (true, Some(script)) = (cfg.output.plot, out.plot) {
        let p = opts.out_dir.join(format!("plot_{stem}.py"));
        std::fs::write(&p, script)?;
        files.push(p);
    }
    let exit_code = if opts.strict_cutoff && !out.cutoff_ok { exit::CUTOFF } else { exit::OK };
    Ok(RunOutcome { files, cutoff_ok: out.cutoff_ok, exit_code })
}

/// Reads the config at `path`, runs it and returns the process exit code.
pub fn run_path(path: &Path, opts: &RunOptions) -> i32 {
    let cfg = match RunConfig::from_path(path) {
        Ok(c) => c,
        Err(Error::Io(e)) => {
            log::error!("cannot read {}: {e}", path.display());
            return exit::SCHEMA;
        }
        Err(e) => {
            log::error!("{e}");
            return exit::SCHEMA;
        }
    };
    match run(&cfg, opts) {
        Ok(o) => {
            if !o.cutoff_ok {
                log::warn!("Fock cutoff looks too small; see diagnostics.cutoff");
            }
            o.exit_code
        }
        Err(e) => {
            log::error!("{e}");
            exit_code(&e)
        }
    }
}

fn steady_options(cfg: &RunConfig, tol: f64) -> SteadyOptions {
    SteadyOptions { method: cfg.solver.method, tol, ..SteadyOptions::default() }
}

struct Solved {
    trunc: Truncation,
    report: SteadyReport,
    cutoff: CutoffReport,
}

fn solve(p: &SystemParams, trunc: Truncation, cfg: &RunConfig, tol: f64) -> Result<Solved> {
    let l = build_reduced_liouvillian(p, trunc, p.epsilon != 0.0)?;
    let report = steady_state_with(&l, &steady_options(cfg, tol))?;
    let cutoff = cutoff_adequacy(&report.rho, trunc, cfg.solver.cutoff_threshold)?;
    Ok(Solved { trunc, report, cutoff })
}

fn base_diagnostics(s: &Solved) -> Value {
    json!({
        "steady_residual": s.report.residual,
        "steady_method": s.report.method,
        "steady_iterations": s.report.iterations,
        "repair": {
            "hermiticity_defect": s.report.repair.hermiticity_defect,
            "trace_before": s.report.repair.trace_before,
            "min_eigenvalue": s.report.repair.min_eigenvalue,
            "clipped": s.report.repair.clipped,
        },
        "cutoff": s.cutoff,
    })
}

fn mean_numbers(s: &Solved) -> (f64, f64) {
    let (na, nb) = number_operators(s.trunc);
    (s.report.rho.expect(&na).re, s.report.rho.expect(&nb).re)
}

/// Fidelity with the coherent product `α_k = −2iΩ_k/κ_k`, the stationary state
/// without pair loss.
fn coherent_fidelity(p: &SystemParams, s: &Solved) -> Option<f64> {
    if p.kappa_a <= 0.0 || p.kappa_b <= 0.0 {
        return None;
    }
    let alpha = |w: c64, k: f64| c64::new(0.0, -2.0) * w / k;
    let psi = coherent_state(alpha(p.omega_a, p.kappa_a), s.trunc.n_a_max)
        .tensor(&coherent_state(alpha(p.omega_b, p.kappa_b), s.trunc.n_b_max));
    Some(s.report.rho.fidelity_pure(&psi))
}

fn dispatch(cfg: &RunConfig, tol: f64) -> Result<TaskOutput> {
    let p = &cfg.params;
    match cfg.task {
        Task::ChooseParams => {
            let c = cfg.choose.as_ref().ok_or_else(|| Error::Config("missing [choose]".into()))?;
            let pt = validation::choose_parameters(c.n, c.gamma, c.x)?;
            let mut q = pt.to_params(p.omega_a.norm(), p.kappa_a);
            q.omega_b = p.omega_b;
            q.kappa_b = p.kappa_b;
            let report = validation::check_conditions(&q, Truncation::symmetric(c.n), cfg.validate.margin_factor)?;
            Ok(TaskOutput {
                outputs: json!({ "feasible_point": pt }),
                diagnostics: json!({ "round_trip_error": (pt.round_trip_gamma - pt.gamma_t).abs(), "conditions": report }),
                tables: vec![],
                plot: None,
                cutoff_ok: true,
            })
        }
        Task::Sweep => sweep(cfg, tol),
        Task::Validate => {
            let trunc = cfg.truncation()?;
            let report = validation::check_conditions(p, trunc, cfg.validate.margin_factor)?;
            let mut outputs = json!({ "conditions": report, "all_pass": report.all_pass() });
            let mut diagnostics = json!({ "derived": derived_couplings(p)? });
            if cfg.validate.compare_full {
                let c = validation::compare_full_vs_reduced_report(p, trunc, cfg.validate.margin_factor)?;
                outputs["trace_distance"] = json!(c.distance);
                diagnostics["full_residual"] = json!(c.full_residual);
                diagnostics["reduced_residual"] = json!(c.reduced_residual);
            }
            Ok(TaskOutput { outputs, diagnostics, tables: vec![("conditions".into(), conditions_csv(&report))], plot: None, cutoff_ok: true })
        }
        _ => {
            let s = solve(p, cfg.truncation()?, cfg, tol)?;
            let cutoff_ok = s.cutoff.adequate;
            let mut diagnostics = base_diagnostics(&s);
            let (na, nb) = mean_numbers(&s);
            let rho = &s.report.rho;
            let trunc = s.trunc;
            let mut tables = Vec::new();
            let mut plot = None;
            let outputs = match cfg.task {
                Task::Steady => {
                    if let Some(f) = coherent_fidelity(p, &s) {
                        diagnostics["fidelity_to_coherent"] = json!(f);
                    }
                    json!({ "mean_n_a": na, "mean_n_b": nb, "mean_photon_number": na + nb, "purity": rho.purity() })
                }
                Task::Populations => {
                    let pop = entanglement::fock_populations(rho, trunc)?;
                    tables.push(("populations".into(), matrix_csv(&pop)));
                    plot = Some(populations_plot(&cfg.output.stem));
                    json!({
                        "mean_photon_number": na + nb,
                        "joint_population": entanglement::joint_population(&pop),
                        "axis_population": entanglement::axis_population(&pop),
                        "populations": pop,
                    })
                }
                Task::Negativity => json!({ "negativity": entanglement::negativity(rho, trunc)? }),
                Task::Duan => {
                    let d = match cfg.duan.phi {
                        Some(phi) => entanglement::duan_variance(rho, trunc, phi)?,
                        None => entanglement::optimize_phase(rho, trunc)?,
                    };
                    json!({ "duan": d, "unordered_total_variance": entanglement::unordered_epr_variance(rho, trunc, d.phi)? })
                }
                Task::CesFit => {
                    let fit = entanglement::fit_ces_mixture_with(rho, trunc, &CesFitOptions { measure: cfg.ces_fit.measure, ..Default::default() })?;
                    json!({ "ces_fit": fit, "abs_alpha1": fit.alpha1.norm(), "abs_alpha2": fit.alpha2.norm() })
                }
                Task::Spectrum => {
                    let l = build_reduced_liouvillian(p, trunc, p.epsilon != 0.0)?;
                    let grid = cfg.spectrum_grid()?;
                    let series = spectra::squeezing_spectra(&l, rho, p, cfg.spectrum.phi, &grid)?;
                    let center = series.at(0.0);
                    let narrow = spectra::narrowband_output_criterion(&series, cfg.spectrum.delta_omega);
                    let (lhs, rhs) = spectra::integrated_cavity_check(&series, rho, trunc)?;
                    diagnostics["imag_residual_max"] = json!(series.imag_residual_max);
                    diagnostics["parity_defect"] = json!(series.parity_defect());
                    diagnostics["max_gmres_iterations"] = json!(series.max_iterations);
                    diagnostics["max_solve_residual"] = json!(series.max_solve_residual);
                    diagnostics["integral_check"] = json!({ "lhs": lhs, "rhs": rhs });
                    tables.push(("spectrum".into(), series.to_csv()));
                    plot = Some(spectrum_plot(&cfg.output.stem));
                    json!({
                        "S_u_0": center.map(|c| c.0),
                        "S_v_0": center.map(|c| c.1),
                        "S_u_0_db": center.map(|c| spectra::to_db(c.0)),
                        "S_v_0_db": center.map(|c| spectra::to_db(c.1)),
                        "narrowband_criterion": narrow,
                        "points": series.omega_grid.len(),
                    })
                }
                _ => unreachable!("handled above"),
            };
            Ok(TaskOutput { outputs, diagnostics, tables, plot, cutoff_ok })
        }
    }
}

/// One sweep row.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: String,
    pub negativity: Option<f64>,
    pub duan_variance: Option<f64>,
    pub phi: Option<f64>,
    pub mean_photon_number: Option<f64>,
    pub joint_population: Option<f64>,
    pub residual: Option<f64>,
    pub cutoff_adequate: Option<bool>,
}

/// Parameters at one point of a sweep axis.
pub fn apply_axis(p: &SystemParams, axis: SweepAxis, value: f64) -> Result<SystemParams> {
    let mut q = p.clone();
    match axis {
        SweepAxis::Gamma => q.set_pair_loss(value)?,
        SweepAxis::Omega => {
            q.omega_a = c64::new(value, 0.0);
            q.omega_b = c64::new(value, 0.0);
        }
        SweepAxis::Kappa => {
            q.kappa_a = value;
            q.kappa_b = value;
        }
    }
    Ok(q)
}

fn sweep_row(cfg: &RunConfig, axis: SweepAxis, value: f64, phi: Option<f64>, tol: f64) -> Result<SweepRow> {
    let q = apply_axis(&cfg.params, axis, value)?;
    let s = solve(&q, cfg.truncation()?, cfg, tol)?;
    let rho = &s.report.rho;
    let d = match phi {
        Some(phi) => entanglement::duan_variance(rho, s.trunc, phi)?,
        None => entanglement::optimize_phase(rho, s.trunc)?,
    };
    let pop = entanglement::fock_populations(rho, s.trunc)?;
    let (na, nb) = mean_numbers(&s);
    Ok(SweepRow {
        value,
        status: "ok".into(),
        negativity: Some(entanglement::negativity(rho, s.trunc)?),
        duan_variance: Some(d.variance),
        phi: Some(d.phi),
        mean_photon_number: Some(na + nb),
        joint_population: Some(entanglement::joint_population(&pop)),
        residual: Some(s.report.residual),
        cutoff_adequate: Some(s.cutoff.adequate),
    })
}

/// Runs every grid point in parallel; rows keep grid order and failures are
/// recorded per row.
pub fn sweep_rows(cfg: &RunConfig, tol: f64) -> Result<Vec<SweepRow>> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| Error::Config("missing [sweep]".into()))?;
    let grid = sw.grid()?;
    Ok(grid
        .par_iter()
        .map(|&v| {
            sweep_row(cfg, sw.axis, v, sw.phi, tol).unwrap_or_else(|e| SweepRow {
                value: v,
                status: format!("failed: {e}"),
                negativity: None,
                duan_variance: None,
                phi: None,
                mean_photon_number: None,
                joint_population: None,
                residual: None,
                cutoff_adequate: None,
            })
        })
        .collect())
}

fn sweep(cfg: &RunConfig, tol: f64) -> Result<TaskOutput> {
    let rows = sweep_rows(cfg, tol)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    let cutoff_ok = rows.iter().all(|r| r.cutoff_adequate != Some(false));
    let axis = cfg.sweep.as_ref().map(|s| s.axis).unwrap_or(SweepAxis::Gamma);
    let mut csv = String::from("value,status,negativity,duan_variance,phi,mean_photon_number,joint_population,residual,cutoff_adequate\n");
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
    for r in &rows {
        let _ = writeln!(
            csv,
            "{:.12e},{},{},{},{},{},{},{},{}",
            r.value,
            if r.status == "ok" { "ok" } else { "failed" },
            opt(r.negativity),
            opt(r.duan_variance),
            opt(r.phi),
            opt(r.mean_photon_number),
            opt(r.joint_population),
            opt(r.residual),
            r.cutoff_adequate.map(|b| b.to_string()).unwrap_or_default()
        );
    }
    Ok(TaskOutput {
        outputs: json!({ "axis": axis, "rows": rows }),
        diagnostics: json!({ "failed_rows": failed, "max_residual": rows.iter().filter_map(|r| r.residual).fold(0.0f64, f64::max) }),
        tables: vec![("sweep".into(), csv)],
        plot: Some(sweep_plot(&cfg.output.stem, axis)),
        cutoff_ok,
    })
}

fn matrix_csv(m: &[Vec<f64>]) -> String {
    let mut s = String::from("n_a");
    for nb in 0..m.first().map_or(0, |r| r.len()) {
        let _ = write!(s, ",nb{nb}");
    }
    s.push('\n');
    for (na, row) in m.iter().enumerate() {
        let _ = write!(s, "{na}");
        for v in row {
            let _ = write!(s, ",{v:.12e}");
        }
        s.push('\n');
    }
    s
}

fn conditions_csv(r: &validation::ConditionReport) -> String {
    let mut s = String::from("name,lhs,rhs,margin,pass\n");
    for c in &r.checks {
        let _ = writeln!(s, "{},{:.6e},{:.6e},{:.6e},{}", c.name, c.lhs, c.rhs, c.margin, c.pass);
    }
    s
}

fn populations_plot(stem: &str) -> String {
    format!(
        r#"import numpy as np
import matplotlib.pyplot as plt

data = np.loadtxt("{stem}_populations.csv", delimiter=",", skiprows=1)[:, 1:]
fig = plt.figure()
ax = fig.add_subplot(projection="3d")
na, nb = np.meshgrid(np.arange(data.shape[0]), np.arange(data.shape[1]), indexing="ij")
ax.bar3d(na.ravel(), nb.ravel(), 0, 0.8, 0.8, data.ravel())
ax.set_xlabel("n_a")
ax.set_ylabel("n_b")
ax.set_zlabel("population")
plt.savefig("{stem}_populations.png", dpi=150)
"#
    )
}

fn spectrum_plot(stem: &str) -> String {
    format!(
        r#"import numpy as np
import matplotlib.pyplot as plt

w, su, sv = np.loadtxt("{stem}_spectrum.csv", delimiter=",", skiprows=1, unpack=True)
plt.plot(w, su, label="S_u")
plt.plot(w, sv, label="S_v")
plt.axhline(0.0, color="k", lw=0.5)
plt.xlabel("omega / gamma_42")
plt.ylabel("spectrum")
plt.legend()
plt.savefig("{stem}_spectrum.png", dpi=150)
"#
    )
}

fn sweep_plot(stem: &str, axis: SweepAxis) -> String {
    let label = match axis {
        SweepAxis::Gamma => "Gamma / gamma_42",
        SweepAxis::Omega => "Omega / gamma_42",
        SweepAxis::Kappa => "kappa / gamma_42",
    };
    format!(
        r#"import csv
import matplotlib.pyplot as plt

rows = [r for r in csv.DictReader(open("{stem}_sweep.csv")) if r["status"] == "ok"]
x = [float(r["value"]) for r in rows]
fig, (top, bottom) = plt.subplots(2, 1, sharex=True)
top.semilogx(x, [float(r["negativity"]) for r in rows], "o-")
top.set_ylabel("negativity")
bottom.semilogx(x, [float(r["duan_variance"]) for r in rows], "o-")
bottom.axhline(0.0, color="k", lw=0.5)
bottom.set_ylabel("EPR variance")
bottom.set_xlabel("{label}")
plt.savefig("{stem}_sweep.png", dpi=150)
"#
    )
}
