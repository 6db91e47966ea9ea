use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use strobomap::config::{parse_side, RunConfig};
use strobomap::error::{Error, Result};
use strobomap::integrate::{monodromy, IntegratorSettings, Trajectory};
use strobomap::lagrange::{collinear_points, energy_thresholds, linearize_collinear, routh_critical_mu, CollinearPoint};
use strobomap::models::MU_EARTH_MOON;
use strobomap::porbit::{continue_family, orbit_path, refine_fixed_point_segments, PeriodicOrbit};
use strobomap::symmap::{
    effective_hamiltonian, normal_form, symplectic_eigenbasis, verify_proposition_1, EffectiveHamiltonian,
    NormalForm,
};
use strobomap::transit::{
    boundary_set, classify_local, escape_iterates, iterate_region, local_frame, transit_cap, verify_ensemble,
    WindowConfig,
};

#[derive(Parser)]
#[command(
    name = "strobomap",
    version,
    about = "Periodic orbits and transit dynamics of periodically perturbed three-body models"
)]
struct Cli {
    /// JSON run configuration (required by every subcommand except `lagrange`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Integrator relative tolerance.
    #[arg(long, global = true, default_value_t = 1e-12)]
    rel_tol: f64,
    /// Integrator absolute tolerance.
    #[arg(long, global = true, default_value_t = 1e-12)]
    abs_tol: f64,
    /// Worker threads for ensemble verification (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lagrange points, Hill-region energy thresholds, and the L1/L2
    /// saddle-center linearization of the circular problem.
    Lagrange {
        #[arg(long, default_value_t = MU_EARTH_MOON)]
        mu: f64,
    },
    /// Refine a fixed point of the stroboscopic map into a periodic orbit.
    FindPo,
    /// Continue the periodic orbit from the circular problem up the
    /// perturbation schedule.
    Continue,
    /// Monodromy matrix of the refined orbit and its elliptic-hyperbolic
    /// normal form.
    Monodromy,
    /// Build boundary transit/non-transit samples and verify each against
    /// full nonlinear integration.
    TransitDemo,
    /// Grid the transit cap and trace its linear-map iterates.
    CapMap,
    /// lagrange + find-po + monodromy + transit-demo in one report.
    Pipeline,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        init_thread_pool(n);
    }
    let ics = IntegratorSettings::with_tols(cli.rel_tol, cli.abs_tol);
    ics.validate()?;
    let report = match cli.cmd {
        Command::Lagrange { mu } => lagrange_report(mu)?,
        Command::FindPo => {
            let cfg = load_config(&cli.config)?;
            let orbit = refine(&cfg, &ics)?;
            let mut doc = orbit.summary_json();
            doc["residual_history"] = json!(orbit.residual_history);
            if cfg.output.samples_per_period > 0 {
                doc["path"] = trajectory_json(&orbit_path(&orbit, cfg.output.samples_per_period, &ics)?);
            }
            doc
        }
        Command::Continue => {
            let cfg = load_config(&cli.config)?;
            let schedule = cfg
                .continuation
                .as_ref()
                .ok_or_else(|| Error::Validation("config has no continuation section".into()))?
                .schedule
                .clone();
            let guess = cfg.guess(&cfg.scaled_model(schedule[0])?)?;
            let family = continue_family(
                |eps| cfg.scaled_model(eps).expect("validated model"),
                &guess,
                &schedule,
                cfg.theta0,
                cfg.corrector.tol,
                &ics,
            )?;
            json!({
                "parameter": "eps",
                "samples": family
                    .samples
                    .iter()
                    .map(|(eps, o)| json!({ "eps": eps, "orbit": o.summary_json() }))
                    .collect::<Vec<_>>(),
                "failure": family.failure,
            })
        }
        Command::Monodromy => {
            let cfg = load_config(&cli.config)?;
            let orbit = refine(&cfg, &ics)?;
            let (doc, _) = monodromy_report(&orbit, &ics)?;
            doc
        }
        Command::TransitDemo => {
            let cfg = load_config(&cli.config)?;
            let orbit = refine(&cfg, &ics)?;
            let (mono_doc, analysis) = monodromy_report(&orbit, &ics)?;
            let mut doc = json!({ "orbit": orbit.summary_json(), "monodromy": mono_doc });
            doc["phases"] = json!(transit_report(&cfg, &orbit, &analysis, &ics)?);
            doc
        }
        Command::CapMap => {
            let cfg = load_config(&cli.config)?;
            let orbit = refine(&cfg, &ics)?;
            let (_, analysis) = monodromy_report(&orbit, &ics)?;
            cap_report(&cfg, &orbit, &analysis, &ics)?
        }
        Command::Pipeline => {
            let cfg = load_config(&cli.config)?;
            let model = cfg.model()?;
            let mut doc = json!({ "lagrange": lagrange_report(model.mu())? });
            let orbit = refine(&cfg, &ics)?;
            doc["orbit"] = orbit.summary_json();
            if cfg.output.samples_per_period > 0 {
                doc["path"] = trajectory_json(&orbit_path(&orbit, cfg.output.samples_per_period, &ics)?);
            }
            let (mono_doc, analysis) = monodromy_report(&orbit, &ics)?;
            doc["monodromy"] = mono_doc;
            if cfg.transit.is_some() {
                doc["phases"] = json!(transit_report(&cfg, &orbit, &analysis, &ics)?);
            }
            if cfg.cap.is_some() {
                doc["cap"] = cap_report(&cfg, &orbit, &analysis, &ics)?;
            }
            doc
        }
    };
    emit(&cli.out, &report)
}

fn init_thread_pool(n: usize) {
    #[cfg(feature = "parallel")]
    {
        // Ignore the error: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        eprintln!("note: built without the 'parallel' feature; --threads has no effect");
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    let path = path
        .as_ref()
        .ok_or_else(|| Error::Validation("this subcommand requires --config <file>".into()))?;
    RunConfig::load(path)
}

fn refine(cfg: &RunConfig, ics: &IntegratorSettings) -> Result<PeriodicOrbit> {
    let model = cfg.model()?;
    let guess = cfg.guess(&model)?;
    refine_fixed_point_segments(
        &model,
        &guess,
        cfg.theta0,
        cfg.corrector.tol,
        cfg.corrector.max_iter,
        cfg.corrector.segments,
        ics,
    )
}

struct MapAnalysis {
    mono: nalgebra::Matrix4<f64>,
    nf: NormalForm,
    eh: EffectiveHamiltonian,
}

fn monodromy_report(orbit: &PeriodicOrbit, ics: &IntegratorSettings) -> Result<(serde_json::Value, MapAnalysis)> {
    let m = monodromy(orbit, ics)?;
    let nf = normal_form(&m, orbit.period)?;
    let basis = symplectic_eigenbasis(&m, &nf)?;
    let eh = effective_hamiltonian(&nf, orbit.period)?;
    let doc = json!({
        "matrix_row_major": m.transpose().as_slice(),
        "sigma": nf.sigma,
        "psi": nf.psi,
        "orientation": basis.orientation,
        "basis_symplecticity": basis.symplecticity,
        "basis_similarity": basis.similarity,
        "lambda_tilde": eh.lambda_tilde,
        "nu_tilde": eh.nu_tilde,
        "proposition1_residual": verify_proposition_1(&eh, &nf),
    });
    Ok((doc, MapAnalysis { mono: m, nf, eh }))
}

fn transit_report(
    cfg: &RunConfig,
    orbit: &PeriodicOrbit,
    analysis: &MapAnalysis,
    ics: &IntegratorSettings,
) -> Result<Vec<serde_json::Value>> {
    let tc = cfg
        .transit
        .as_ref()
        .ok_or_else(|| Error::Validation("config has no transit section".into()))?;
    let side = parse_side(&tc.side)?;
    let model = cfg.model()?;
    let l1x = collinear_points(model.mu())?.l1;
    let window = WindowConfig {
        center_x: l1x,
        half_width: tc.window_half_width,
        max_periods: tc.max_periods,
    };
    let phases = tc.phases.clone().unwrap_or_else(|| vec![cfg.theta0]);
    let bounds = boundary_set(&analysis.eh, tc.h, tc.c, tc.n_samples, side)?;
    let mut samples = bounds.transit.clone();
    samples.extend_from_slice(&bounds.nontransit);
    let mut out = Vec::with_capacity(phases.len());
    for &phase in &phases {
        let frame = local_frame(orbit, &analysis.mono, &analysis.nf, phase, ics)?;
        let report = verify_ensemble(&frame, &samples, &window, ics)?;
        out.push(json!({
            "theta0": phase,
            "n_samples": samples.len(),
            "expected": samples.iter().map(|s| format!("{:?}", classify_local(s))).collect::<Vec<_>>(),
            "n_transit": report.n_transit,
            "n_nontransit": report.n_nontransit,
            "n_bounded": report.n_bounded,
            "n_undecided": report.n_undecided,
            "mismatches": report.mismatches,
            "agreement": 1.0 - report.mismatches.len() as f64 / samples.len() as f64,
        }));
    }
    Ok(out)
}

fn cap_report(
    cfg: &RunConfig,
    orbit: &PeriodicOrbit,
    analysis: &MapAnalysis,
    ics: &IntegratorSettings,
) -> Result<serde_json::Value> {
    let cc = cfg
        .cap
        .as_ref()
        .ok_or_else(|| Error::Validation("config has no cap section".into()))?;
    let side = parse_side(&cc.side)?;
    let frame = local_frame(orbit, &analysis.mono, &analysis.nf, cfg.theta0, ics)?;
    let grid = transit_cap(&analysis.eh, &frame, cc.h, cc.c, cc.n_saddle, cc.n_angle, side)?;
    let points: Vec<serde_json::Value> = grid
        .iter()
        .map(|(s, x)| {
            let escape = escape_iterates(s.q1.abs(), cc.c, analysis.nf.sigma);
            let iterates: Vec<serde_json::Value> = (1..=cc.max_iterates)
                .map(|k| {
                    let (it, crossed) = iterate_region(s, &analysis.nf, k, cc.c, side);
                    let lifted = frame.to_physical(&it);
                    json!({
                        "k": k,
                        "local": [it.q1, it.p1, it.q2, it.p2],
                        "physical": [lifted.x, lifted.y, lifted.px, lifted.py],
                        "crossed": crossed,
                    })
                })
                .collect();
            json!({
                "local": [s.q1, s.p1, s.q2, s.p2],
                "physical": [x.x, x.y, x.px, x.py],
                "escape_iterates": escape,
                "iterates": iterates,
            })
        })
        .collect();
    Ok(json!({
        "h": cc.h,
        "c": cc.c,
        "side": cc.side,
        "sigma": analysis.nf.sigma,
        "psi": analysis.nf.psi,
        "points": points,
    }))
}

fn lagrange_report(mu: f64) -> Result<serde_json::Value> {
    let pts = collinear_points(mu)?;
    let th = energy_thresholds(mu)?;
    let lin1 = linearize_collinear(mu, CollinearPoint::L1)?;
    let lin2 = linearize_collinear(mu, CollinearPoint::L2)?;
    Ok(json!({
        "mu": mu,
        "points": {
            "l1": pts.l1, "l2": pts.l2, "l3": pts.l3,
            "l4": [pts.l4.0, pts.l4.1], "l5": [pts.l5.0, pts.l5.1],
        },
        "energy_thresholds": { "e1": th.e1, "e2": th.e2, "e3": th.e3, "e4": th.e4 },
        "l1_linearization": { "lambda": lin1.lambda, "nu": lin1.nu },
        "l2_linearization": { "lambda": lin2.lambda, "nu": lin2.nu },
        "routh_critical_mu": routh_critical_mu(),
    }))
}

fn trajectory_json(traj: &Trajectory) -> serde_json::Value {
    json!({
        "t": traj.samples.iter().map(|(t, _)| *t).collect::<Vec<_>>(),
        "x": traj.samples.iter().map(|(_, s)| s.x).collect::<Vec<_>>(),
        "y": traj.samples.iter().map(|(_, s)| s.y).collect::<Vec<_>>(),
        "px": traj.samples.iter().map(|(_, s)| s.px).collect::<Vec<_>>(),
        "py": traj.samples.iter().map(|(_, s)| s.py).collect::<Vec<_>>(),
    })
}

fn emit(out: &Option<PathBuf>, doc: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}
