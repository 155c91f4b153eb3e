use std::f64::consts::PI;
use std::path::PathBuf;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use shuttle_core::dynamics::{
    default_dt_out, make_initial, max_mirror_asymmetry, simulate, AnalysisOptions, InitialKind,
    IntegrateOptions, IntegrationDiagnostics, SpectralWindow, SteadyStats, SyncReport,
};
use shuttle_core::model::ChainParams;
use shuttle_core::stability::{
    calibrate, disorder_sweep, phi_sweep, single_shuttle_argmax, single_shuttle_sweep, Boundary,
    CalibrationResult, CalibrationSetup, CalibrationTargets, DisorderOptions, EnsembleSummary,
    StabilityOptions, StabilityReport,
};
use shuttle_core::topology::{bloch_band_ranges, chern_numbers, spectrum_sweep};
use thiserror::Error;

use crate::config::{
    parse_config, ConfigError, Experiment, InitialSpec, RunConfig, WindowSpec,
};
use crate::output::{fmt_f, header, sha256_hex, Artifacts, RunManifest, RESOLVED_CONFIG_FILE};

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    ConfigError,
    NumericalFailure,
    PartialSweep,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::ConfigError => 2,
            ExitStatus::NumericalFailure => 3,
            ExitStatus::PartialSweep => 4,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ExitStatus::Success => "success",
            ExitStatus::ConfigError => "config_error",
            ExitStatus::NumericalFailure => "numerical_failure",
            ExitStatus::PartialSweep => "partial_sweep",
        }
    }
}

#[derive(Debug, Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerical(String),
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    fn status(&self) -> ExitStatus {
        match self {
            RunError::Config(_) => ExitStatus::ConfigError,
            _ => ExitStatus::NumericalFailure,
        }
    }
}

fn numerical<E: std::fmt::Display>(context: &str) -> impl Fn(E) -> RunError + '_ {
    move |e| RunError::Numerical(format!("{context}: {e}"))
}

/// Everything the command line supplies.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub experiment: Experiment,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub error: Option<String>,
}

/// Load, override and validate the config, and fill every value that
/// depends on others (currently the simulation output interval).
pub fn resolve_config(req: &RunRequest) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &req.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(e) = cfg.experiment {
        if e != req.experiment {
            return Err(ConfigError::Invalid {
                field: "experiment",
                reason: format!("config is for `{e}` but the `{}` subcommand was run", req.experiment),
            });
        }
    }
    cfg.experiment = Some(req.experiment);
    if let Some(seed) = req.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if req.experiment == Experiment::Simulate && cfg.simulate.dt_out == 0.0 {
        cfg.simulate.dt_out = default_dt_out(&cfg.chain_params()).map_err(|e| ConfigError::Invalid {
            field: "simulate.dt_out",
            reason: e.to_string(),
        })?;
    }
    Ok(cfg)
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Run one experiment. The manifest is written whatever happens, as long as
/// the output directory can be created.
pub fn execute(req: &RunRequest) -> RunOutcome {
    let started = now();
    let threads = req
        .threads
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let mut manifest = RunManifest {
        tool: "shuttle-sync",
        tool_version: env!("CARGO_PKG_VERSION"),
        experiment: req.experiment.to_string(),
        config_hash: None,
        seed: None,
        threads,
        started,
        finished: String::new(),
        status: String::new(),
        exit_code: 0,
        error: None,
        files: Vec::new(),
    };

    let mut artifacts = match Artifacts::create(&req.out) {
        Ok(a) => a,
        Err(e) => {
            return RunOutcome {
                status: ExitStatus::NumericalFailure,
                error: Some(format!("cannot create output directory {}: {e}", req.out.display())),
            }
        }
    };

    let result = run(req, threads, &mut artifacts, &mut manifest);
    let (status, error) = match result {
        Ok(status) => (status, None),
        Err(e) => (e.status(), Some(e.to_string())),
    };
    manifest.finished = now();
    manifest.status = status.label().to_string();
    manifest.exit_code = status.code();
    manifest.error = error.clone();
    manifest.files = artifacts.files().to_vec();
    let error = match manifest.write(artifacts.dir()) {
        Ok(()) => error,
        Err(e) => Some(format!("{}writing manifest: {e}", error.map_or(String::new(), |m| m + "; "))),
    };
    RunOutcome { status, error }
}

fn run(
    req: &RunRequest,
    threads: usize,
    art: &mut Artifacts,
    manifest: &mut RunManifest,
) -> Result<ExitStatus, RunError> {
    let cfg = resolve_config(req)?;
    let text = cfg.to_toml();
    manifest.config_hash = Some(sha256_hex(text.as_bytes()));
    manifest.seed = Some(cfg.seed);
    art.write_bytes(RESOLVED_CONFIG_FILE, text.as_bytes())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(numerical("thread pool"))?;
    pool.install(|| match req.experiment {
        Experiment::Spectrum => run_spectrum(&cfg, art),
        Experiment::Chern => run_chern(&cfg, art),
        Experiment::Simulate => run_simulate(&cfg, art),
        Experiment::Stability => run_stability(&cfg, art),
        Experiment::Disorder => run_disorder(&cfg, art),
        Experiment::Calibrate => run_calibrate(&cfg, art),
    })
}

fn linspace_pi(start: f64, end: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start * PI];
    }
    (0..points)
        .map(|i| (start + (end - start) * i as f64 / (points - 1) as f64) * PI)
        .collect()
}

fn trimer_chain(cfg: &RunConfig) -> Result<ChainParams, RunError> {
    let cp = cfg.chain_params();
    cp.validate_trimer().map_err(numerical("chain parameters"))?;
    Ok(cp)
}

fn run_spectrum(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExitStatus, RunError> {
    let cp = trimer_chain(cfg)?;
    let s = &cfg.spectrum;
    let phis = linspace_pi(s.phi_start_over_pi, s.phi_end_over_pi, s.phi_points);
    let sweep = spectrum_sweep(&cp, &phis).map_err(numerical("open-chain spectrum"))?;
    let mut rows = Vec::new();
    for (i, &phi) in sweep.phis.iter().enumerate() {
        for (m, &w) in sweep.bands[i].iter().enumerate() {
            rows.push(vec![
                fmt_f(phi),
                fmt_f(phi / PI),
                (m + 1).to_string(),
                fmt_f(w),
                fmt_f(sweep.left_weights[i][m]),
                fmt_f(sweep.right_weights[i][m]),
            ]);
        }
    }
    art.write_csv(
        "spectrum.csv",
        &header(&["phi", "phi_over_pi", "mode", "omega", "left_weight", "right_weight"]),
        rows,
    )?;

    let mut rows = Vec::new();
    for &phi in &phis {
        let ranges = bloch_band_ranges(&cp, phi, s.bloch_k_points).map_err(numerical("Bloch bands"))?;
        for (b, (lo, hi)) in ranges.iter().enumerate() {
            rows.push(vec![
                fmt_f(phi),
                fmt_f(phi / PI),
                (b + 1).to_string(),
                fmt_f(lo.max(0.0).sqrt()),
                fmt_f(hi.max(0.0).sqrt()),
            ]);
        }
    }
    art.write_csv(
        "bloch_bands.csv",
        &header(&["phi", "phi_over_pi", "band", "omega_min", "omega_max"]),
        rows,
    )?;
    Ok(ExitStatus::Success)
}

#[derive(Serialize)]
struct ChernJson {
    chern: Vec<i64>,
    raw: Vec<f64>,
    grid: (usize, usize),
    max_residual: f64,
    sum: i64,
}

fn run_chern(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExitStatus, RunError> {
    let cp = trimer_chain(cfg)?;
    let (n_k, n_phi) = (cfg.chern.n_k, cfg.chern.n_phi);
    let res = chern_numbers(&cp, n_k, n_phi).map_err(numerical("Chern numbers"))?;
    let mut rows = Vec::new();
    for (band, grid) in res.field_strength.iter().enumerate() {
        for i in 0..n_k {
            for j in 0..n_phi {
                rows.push(vec![
                    (band + 1).to_string(),
                    i.to_string(),
                    j.to_string(),
                    fmt_f(2.0 * PI * i as f64 / n_k as f64),
                    fmt_f(2.0 * PI * j as f64 / n_phi as f64),
                    fmt_f(grid[i * n_phi + j]),
                ]);
            }
        }
    }
    art.write_csv(
        "curvature.csv",
        &header(&["band", "ik", "jphi", "k", "phi", "field_strength"]),
        rows,
    )?;
    art.write_json(
        "chern.json",
        &ChernJson {
            sum: res.chern.iter().sum(),
            chern: res.chern,
            raw: res.raw,
            grid: res.grid,
            max_residual: res.max_residual,
        },
    )?;
    Ok(ExitStatus::Success)
}

#[derive(Serialize)]
struct SimulateJson<'a> {
    report: &'a SyncReport,
    stats: &'a SteadyStats,
    diagnostics: IntegrationDiagnostics,
    dt_out: f64,
    transient_cut_time: f64,
    max_mirror_asymmetry: f64,
}

fn run_simulate(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExitStatus, RunError> {
    let cp = trimer_chain(cfg)?;
    let s = &cfg.simulate;
    let kind = match s.initial {
        InitialSpec::Symmetric => InitialKind::Symmetric { amplitude: s.amplitude },
        InitialSpec::Antisymmetric => InitialKind::Antisymmetric { amplitude: s.amplitude },
        InitialSpec::Random => InitialKind::Random {
            seed: cfg.seed,
            amplitude: s.amplitude,
        },
        InitialSpec::NearFixedPoint => InitialKind::NearFixedPoint { seed: cfg.seed },
    };
    let initial = make_initial(&cp, kind).map_err(numerical("initial state"))?;
    let opts = IntegrateOptions {
        tol: s.tol,
        dt_out: Some(s.dt_out),
        transient_fraction: s.transient_fraction,
        max_steps: s.max_steps,
    };
    let analysis = AnalysisOptions {
        quiescence: s.quiescence,
        window: match s.window {
            WindowSpec::None => SpectralWindow::None,
            WindowSpec::Hann => SpectralWindow::Hann,
        },
        ..AnalysisOptions::default()
    };
    let sim = simulate(&cp, &initial, s.t_end, &opts, &analysis).map_err(numerical("simulation"))?;
    let traj = &sim.trajectory;

    let n = cp.n;
    let mut cols = vec!["t".to_string()];
    for prefix in ["x", "p", "q"] {
        cols.extend((1..=n).map(|l| format!("{prefix}_{l}")));
    }
    let last = traj.t.len() - 1;
    let rows = (0..traj.t.len())
        .filter(|&i| i % s.csv_stride == 0 || i == last)
        .map(|i| {
            let st = &traj.states[i];
            let mut row = Vec::with_capacity(3 * n + 1);
            row.push(fmt_f(traj.t[i]));
            row.extend(st.x.iter().chain(&st.p).chain(&st.q).map(|v| fmt_f(*v)));
            row
        });
    art.write_csv("trajectory.csv", &cols, rows)?;
    art.write_json(
        "sync_report.json",
        &SimulateJson {
            report: &sim.report,
            stats: &sim.stats,
            diagnostics: traj.diagnostics,
            dt_out: traj.dt_out,
            transient_cut_time: traj.t[traj.transient_cut.min(last)],
            max_mirror_asymmetry: max_mirror_asymmetry(&traj.states),
        },
    )?;
    Ok(ExitStatus::Success)
}

#[derive(Serialize)]
struct UnstableJson {
    re: f64,
    im: f64,
    tag: &'static str,
    left_weight: f64,
    right_weight: f64,
}

#[derive(Serialize)]
struct PhiJson {
    phi: f64,
    phi_over_pi: f64,
    max_real: Option<f64>,
    fixed_point_residual: Option<f64>,
    unstable_pairs: Vec<UnstableJson>,
    error: Option<String>,
}

#[derive(Serialize)]
struct StabilityJson {
    boundaries: Vec<Boundary>,
    points: Vec<PhiJson>,
    phi_failures: usize,
    single_shuttle_windows: Vec<(f64, f64)>,
    single_shuttle_argmax: Option<(f64, f64)>,
    single_shuttle_failures: usize,
}

fn unstable_json(r: &StabilityReport) -> Vec<UnstableJson> {
    r.unstable_pairs()
        .map(|m| UnstableJson {
            re: m.value.re,
            im: m.value.im,
            tag: m.tag.as_str(),
            left_weight: m.left_weight,
            right_weight: m.right_weight,
        })
        .collect()
}

/// One row per eigenvalue; unstable ones carry their localization tag.
fn eigen_rows(prefix: &[String], r: &StabilityReport) -> Vec<Vec<String>> {
    r.eigenvalues
        .values
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let tag = r
                .unstable
                .iter()
                .find(|m| m.value == *z)
                .map_or("stable", |m| m.tag.as_str());
            let mut row = prefix.to_vec();
            row.extend([(i + 1).to_string(), fmt_f(z.re), fmt_f(z.im), tag.to_string()]);
            row
        })
        .collect()
}

fn run_stability(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExitStatus, RunError> {
    let cp = trimer_chain(cfg)?;
    let st = &cfg.stability;
    let opts = StabilityOptions {
        edge_threshold: st.edge_threshold,
    };
    let phis = linspace_pi(st.phi_start_over_pi, st.phi_end_over_pi, st.phi_points);
    let sweep = phi_sweep(&cp, &phis, &opts);

    let mut rows = Vec::new();
    for p in &sweep.points {
        if let Some(r) = &p.report {
            rows.extend(eigen_rows(&[fmt_f(p.phi), fmt_f(p.phi / PI)], r));
        }
    }
    art.write_csv(
        "phi_sweep.csv",
        &header(&["phi", "phi_over_pi", "index", "re", "im", "tag"]),
        rows,
    )?;
    let rows = sweep.boundaries.iter().map(|b| {
        vec![
            fmt_f(b.phi),
            fmt_f(b.phi / PI),
            match b.kind {
                shuttle_core::stability::BoundaryKind::MaxRealSign => "max_real_sign".to_string(),
                shuttle_core::stability::BoundaryKind::UnstableCount => "unstable_count".to_string(),
            },
            b.pairs_below.to_string(),
            b.pairs_above.to_string(),
            fmt_f(b.bracket),
        ]
    });
    art.write_csv(
        "boundaries.csv",
        &header(&["phi", "phi_over_pi", "kind", "pairs_below", "pairs_above", "bracket"]),
        rows,
    )?;

    let omegas: Vec<f64> = (0..st.single_omega_points)
        .map(|i| {
            st.single_omega_min
                + (st.single_omega_max - st.single_omega_min) * i as f64 / (st.single_omega_points - 1) as f64
        })
        .collect();
    let single = single_shuttle_sweep(&cfg.shuttle_params(0.0), &omegas);
    art.write_csv(
        "single_shuttle.csv",
        &header(&["omega", "max_real"]),
        single.points.iter().map(|(w, m)| vec![fmt_f(*w), fmt_f(*m)]),
    )?;

    let points = sweep
        .points
        .iter()
        .map(|p| PhiJson {
            phi: p.phi,
            phi_over_pi: p.phi / PI,
            max_real: p.report.as_ref().map(|r| r.max_real),
            fixed_point_residual: p.report.as_ref().map(|r| r.fixed_point.residual),
            unstable_pairs: p.report.as_ref().map_or_else(Vec::new, unstable_json),
            error: p.error.clone(),
        })
        .collect();
    art.write_json(
        "stability_summary.json",
        &StabilityJson {
            boundaries: sweep.boundaries.clone(),
            points,
            phi_failures: sweep.failures,
            single_shuttle_windows: single.windows.clone(),
            single_shuttle_argmax: single.argmax,
            single_shuttle_failures: single.failures,
        },
    )?;
    if sweep.failures > 0 || single.failures > 0 {
        Ok(ExitStatus::PartialSweep)
    } else {
        Ok(ExitStatus::Success)
    }
}

#[derive(Serialize)]
struct EnsembleJson<'a> {
    r: f64,
    realizations: usize,
    summary: &'a EnsembleSummary,
    errors: Vec<(usize, &'a str)>,
    unstable_pairs: Vec<Vec<UnstableJson>>,
}

fn run_disorder(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExitStatus, RunError> {
    let cp = trimer_chain(cfg)?;
    let d = &cfg.disorder;
    let opts = DisorderOptions {
        kind: d.kind.into(),
        correlated: d.correlated,
        stability: StabilityOptions {
            edge_threshold: cfg.stability.edge_threshold,
        },
    };
    let ensembles =
        disorder_sweep(&cp, &d.r_values, d.realizations, cfg.seed, &opts).map_err(numerical("disorder sweep"))?;

    let mut eig_rows = Vec::new();
    let mut offset_rows = Vec::new();
    let mut spectrum_rows = Vec::new();
    for e in &ensembles {
        for j in 0..e.realizations {
            let prefix = [fmt_f(e.r), j.to_string()];
            if let Some(r) = &e.reports[j] {
                eig_rows.extend(eigen_rows(&prefix, r));
            }
            for (bond, dg) in e.offsets[j].iter().enumerate().filter(|(b, _)| b % 3 == 2) {
                offset_rows.push(vec![prefix[0].clone(), prefix[1].clone(), (bond + 1).to_string(), fmt_f(*dg)]);
            }
            for (m, w) in e.spectra[j].iter().enumerate() {
                spectrum_rows.push(vec![prefix[0].clone(), prefix[1].clone(), (m + 1).to_string(), fmt_f(*w)]);
            }
        }
    }
    art.write_csv(
        "disorder.csv",
        &header(&["r", "realization", "index", "re", "im", "tag"]),
        eig_rows,
    )?;
    art.write_csv("offsets.csv", &header(&["r", "realization", "bond", "dg"]), offset_rows)?;
    art.write_csv(
        "disorder_spectra.csv",
        &header(&["r", "realization", "mode", "omega"]),
        spectrum_rows,
    )?;

    let summary: Vec<EnsembleJson> = ensembles
        .iter()
        .map(|e| EnsembleJson {
            r: e.r,
            realizations: e.realizations,
            summary: &e.summary,
            errors: e
                .errors
                .iter()
                .enumerate()
                .filter_map(|(j, m)| m.as_deref().map(|m| (j, m)))
                .collect(),
            unstable_pairs: e
                .reports
                .iter()
                .map(|r| r.as_ref().map_or_else(Vec::new, unstable_json))
                .collect(),
        })
        .collect();
    art.write_json("disorder_summary.json", &summary)?;
    if ensembles.iter().any(|e| e.summary.failures > 0) {
        Ok(ExitStatus::PartialSweep)
    } else {
        Ok(ExitStatus::Success)
    }
}

#[derive(Serialize)]
struct CalibrationJson {
    result: CalibrationResult,
    /// Location and value of the largest single-shuttle max Re z.
    single_shuttle_argmax: (f64, f64),
    recommended_drive: f64,
    recommended_gamma: f64,
}

fn run_calibrate(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExitStatus, RunError> {
    let c = &cfg.calibrate;
    let setup = CalibrationSetup {
        n: cfg.chain.n,
        delta: cfg.chain.delta,
        g: cfg.chain.g,
        beta_v: cfg.shuttle.beta_v,
        alpha_lambda: cfg.shuttle.alpha_lambda,
        tunnel_ratio: cfg.shuttle.tunnel_ratio,
        initial_drive: c.initial_drive,
        initial_gamma: c.initial_gamma,
        max_iterations: c.max_iterations,
    };
    let targets = CalibrationTargets {
        window_lo: c.window_lo,
        window_hi: c.window_hi,
        right_onset: c.right_onset_over_pi,
        left_onset: c.left_onset_over_pi,
        omega_tolerance: c.omega_tolerance,
        phi_tolerance: c.phi_tolerance_over_pi,
    };
    let result = calibrate(&setup, &targets).map_err(numerical("calibration"))?;
    let argmax = single_shuttle_argmax(&setup.shuttle(result.drive, result.gamma), result.window)
        .map_err(numerical("single-shuttle argmax"))?;
    let mut calibrated = cfg.clone();
    calibrated.shuttle.drive = result.drive;
    calibrated.shuttle.gamma = result.gamma;
    calibrated.experiment = None;
    art.write_bytes("calibrated_config.toml", calibrated.to_toml().as_bytes())?;
    art.write_json(
        "calibration.json",
        &CalibrationJson {
            recommended_drive: result.drive,
            recommended_gamma: result.gamma,
            single_shuttle_argmax: argmax,
            result,
        },
    )?;
    Ok(ExitStatus::Success)
}
