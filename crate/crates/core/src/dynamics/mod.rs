//! Time integration of the chain and analysis of its steady state.

mod analysis;
mod integrate;

pub use analysis::{
    classify, dominant_frequency, phase_difference_over, steady_stats, wrap_phase, AnalysisOptions,
    OscillatorStats, SpectralWindow, SteadyStats, SyncClass, SyncReport, MIN_PERIODS,
};
pub use integrate::{
    integrate_model, IntegrateOptions, IntegrationDiagnostics, Trajectory, CHARGE_SLACK,
};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::DynamicsError;
use crate::model::{normal_modes, ChainModel, ChainParams, ChainState};
use crate::rng::{substream, uniform01};
use crate::stability::default_fixed_point;

/// Output samples per period of the fastest normal mode.
pub const SAMPLES_PER_PERIOD: f64 = 40.0;

/// Default output interval 2π / (40 Ω_top), Ω_top the largest normal-mode
/// frequency.
pub fn default_dt_out(cp: &ChainParams) -> Result<f64, DynamicsError> {
    let top = if cp.n == 1 {
        cp.shuttle.omega.abs()
    } else {
        let basis = normal_modes(cp)?;
        basis.omega2.iter().fold(0.0_f64, |m, w| m.max(*w)).sqrt()
    };
    if !(top > 0.0) {
        return Err(DynamicsError::InvalidInput("chain has no positive mode frequency".into()));
    }
    Ok(2.0 * PI / (SAMPLES_PER_PERIOD * top))
}

/// Integrate the chain from `initial` to `t_end`.
pub fn integrate(
    cp: &ChainParams,
    initial: &ChainState,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, DynamicsError> {
    initial.validate()?;
    let model = if cp.n == 1 {
        ChainModel::single(&cp.shuttle)?
    } else {
        ChainModel::new(cp)?
    };
    let dt_out = match opts.dt_out {
        Some(dt) => dt,
        None => default_dt_out(cp)?,
    };
    integrate_model(&model, &initial.to_flat(), t_end, dt_out, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialKind {
    /// Fixed point plus a mirror-symmetric displacement of both edge trimers.
    Symmetric { amplitude: f64 },
    /// Fixed point plus a mirror-antisymmetric displacement.
    Antisymmetric { amplitude: f64 },
    /// Fixed point plus uniform noise of the given amplitude on x and p.
    Random { seed: u64, amplitude: f64 },
    /// Fixed point plus 1e−6 noise.
    NearFixedPoint { seed: u64 },
}

fn mirror_symmetric(model: &ChainModel) -> bool {
    let n = model.n();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    (0..n).all(|l| close(model.omega_sq[l], model.omega_sq[n - 1 - l]))
        && (0..model.couplings.len())
            .all(|i| close(model.couplings[i], model.couplings[model.couplings.len() - 1 - i]))
}

/// Initial condition of the given kind built on the chain's fixed point.
///
/// For mirror-symmetric chains the fixed point is symmetrized by assigning
/// each right-half site the value of its mirror, so symmetric and
/// antisymmetric states are exact to the last bit.
pub fn make_initial(cp: &ChainParams, kind: InitialKind) -> Result<ChainState, DynamicsError> {
    let model = ChainModel::new(cp)?;
    let mut s = default_fixed_point(cp)?.state;
    let n = cp.n;
    if mirror_symmetric(&model) {
        for l in 0..n / 2 {
            let m = n - 1 - l;
            s.x[m] = s.x[l];
            s.p[m] = s.p[l];
            s.q[m] = s.q[l];
        }
    }
    let edge = crate::stability::EDGE_SITES.min(n / 2);
    match kind {
        InitialKind::Symmetric { amplitude } | InitialKind::Antisymmetric { amplitude } => {
            let sign = if matches!(kind, InitialKind::Symmetric { .. }) { 1.0 } else { -1.0 };
            let mut d = amplitude;
            for l in 0..edge {
                let m = n - 1 - l;
                let base = s.x[l];
                s.x[l] = base + d;
                s.x[m] = base + sign * d;
                d *= 0.5;
            }
        }
        InitialKind::Random { seed, amplitude } => perturb(&mut s, seed, amplitude),
        InitialKind::NearFixedPoint { seed } => perturb(&mut s, seed, 1e-6),
    }
    Ok(s)
}

fn perturb(s: &mut ChainState, seed: u64, amplitude: f64) {
    let mut rng = substream(seed, 0);
    for l in 0..s.len() {
        s.x[l] += amplitude * (2.0 * uniform01(&mut rng) - 1.0);
        s.p[l] += amplitude * (2.0 * uniform01(&mut rng) - 1.0);
    }
}

/// Largest |x_l − x_{N+1−l}| over a set of states.
pub fn max_mirror_asymmetry(states: &[ChainState]) -> f64 {
    states
        .iter()
        .flat_map(|s| {
            let n = s.len();
            (0..n / 2).map(move |l| (s.x[l] - s.x[n - 1 - l]).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub trajectory: Trajectory,
    pub stats: SteadyStats,
    pub report: SyncReport,
}

/// Shuttle with the largest x-variance over the analysis window.
pub fn most_active_shuttle(traj: &Trajectory) -> usize {
    let w = traj.analysis_window();
    let Some(first) = w.first() else { return 0 };
    (0..first.len())
        .map(|l| {
            let m = w.iter().map(|s| s.x[l]).sum::<f64>() / w.len() as f64;
            (l, w.iter().map(|s| (s.x[l] - m).powi(2)).sum::<f64>())
        })
        .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
        .0
}

/// Integrate, then analyse and classify the steady state. Phases are
/// referred to the most active shuttle.
pub fn simulate(
    cp: &ChainParams,
    initial: &ChainState,
    t_end: f64,
    opts: &IntegrateOptions,
    analysis: &AnalysisOptions,
) -> Result<Simulation, DynamicsError> {
    let trajectory = integrate(cp, initial, t_end, opts)?;
    let stats = steady_stats(&trajectory, most_active_shuttle(&trajectory), analysis, cp.shuttle.lambda)?;
    let report = classify(&stats, cp, analysis);
    Ok(Simulation {
        trajectory,
        stats,
        report,
    })
}
