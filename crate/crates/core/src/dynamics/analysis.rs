use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::DynamicsError;
use crate::linalg::dft_power;
use crate::model::ChainParams;

pub const MIN_PERIODS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorStats {
    pub mean_x: f64,
    pub mean_q: f64,
    /// RMS of δx = x − ⟨x⟩.
    pub amplitude_x: f64,
    /// RMS of δq = q − ⟨q⟩.
    pub amplitude_q: f64,
    /// Dominant angular frequency of δx; 0 for shuttles at rest.
    pub frequency: f64,
    /// Phase at `frequency` relative to the reference shuttle, in (−π, π].
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStats {
    pub per_shuttle: Vec<OscillatorStats>,
    /// Phase of shuttle l relative to its mirror N+1−l, at shuttle l's
    /// frequency.
    pub mirror_phase: Vec<f64>,
    pub window_length: f64,
    pub dt: f64,
    pub reference_shuttle: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralWindow {
    #[default]
    None,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// RMS displacement (in units of λ) below which a shuttle is at rest.
    pub quiescence: f64,
    /// Sites per edge.
    pub edge_sites: usize,
    /// Taper applied before the peak search.
    pub window: SpectralWindow,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            quiescence: 1e-3,
            edge_sites: 3,
            window: SpectralWindow::None,
        }
    }
}

/// Wrap an angle into (−π, π].
pub fn wrap_phase(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Σ_j s_j e^{−iω t_j}
fn fourier_at(samples: &[f64], times: &[f64], omega: f64) -> Complex64 {
    samples
        .iter()
        .zip(times)
        .map(|(s, t)| Complex64::from_polar(*s, -omega * t))
        .sum()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rms_about(v: &[f64], m: f64) -> f64 {
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Dominant angular frequency of a zero-mean series by DFT peak picking with
/// quadratic interpolation of the neighbouring bins.
pub fn dominant_frequency(samples: &[f64], dt: f64, window: SpectralWindow) -> Result<f64, DynamicsError> {
    let spec = match window {
        SpectralWindow::None => dft_power(samples, dt)?,
        SpectralWindow::Hann => {
            let n = samples.len() as f64;
            let tapered: Vec<f64> = samples
                .iter()
                .enumerate()
                .map(|(j, s)| s * (PI * j as f64 / n).sin().powi(2))
                .collect();
            dft_power(&tapered, dt)?
        }
    };
    let (k, _) = spec
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.power.total_cmp(&b.1.power))
        .ok_or_else(|| DynamicsError::InvalidInput("empty spectrum".into()))?;
    let mut shift = 0.0;
    if k + 1 < spec.len() {
        let (a, b, c) = (spec[k - 1].power, spec[k].power, spec[k + 1].power);
        let denom = a - 2.0 * b + c;
        if denom != 0.0 {
            shift = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok(2.0 * PI * (k as f64 + shift) / (samples.len() as f64 * dt))
}

/// Per-shuttle means, amplitudes, frequencies and phases over the analysis
/// window of a trajectory.
pub fn steady_stats(
    traj: &Trajectory,
    reference_shuttle: usize,
    opts: &AnalysisOptions,
    lambda: f64,
) -> Result<SteadyStats, DynamicsError> {
    let window = traj.analysis_window();
    let times = &traj.t[traj.transient_cut..];
    let len = window.len();
    if len < crate::linalg::MIN_DFT_SAMPLES {
        return Err(DynamicsError::WindowTooShort {
            periods: 0.0,
            required: MIN_PERIODS,
        });
    }
    let n = window[0].len();
    if reference_shuttle >= n {
        return Err(DynamicsError::InvalidInput(format!(
            "reference shuttle {reference_shuttle} out of range for {n} shuttles"
        )));
    }
    let dt = traj.dt_out;
    let span = len as f64 * dt;
    let threshold = opts.quiescence * lambda;

    let xs: Vec<Vec<f64>> = (0..n).map(|l| window.iter().map(|s| s.x[l]).collect()).collect();
    let qs: Vec<Vec<f64>> = (0..n).map(|l| window.iter().map(|s| s.q[l]).collect()).collect();

    let mut stats = Vec::with_capacity(n);
    let mut omegas = Vec::with_capacity(n);
    for l in 0..n {
        let m0 = mean(&xs[l]);
        let a0 = rms_about(&xs[l], m0);
        if a0 < threshold {
            let mq = mean(&qs[l]);
            stats.push(OscillatorStats {
                mean_x: m0,
                mean_q: mq,
                amplitude_x: a0,
                amplitude_q: rms_about(&qs[l], mq),
                frequency: 0.0,
                phase: 0.0,
            });
            omegas.push(0.0);
            continue;
        }
        let centered: Vec<f64> = xs[l].iter().map(|x| x - m0).collect();
        let omega = dominant_frequency(&centered, dt, opts.window)?;
        let periods = span * omega / (2.0 * PI);
        if periods < MIN_PERIODS as f64 {
            return Err(DynamicsError::WindowTooShort {
                periods,
                required: MIN_PERIODS,
            });
        }
        // average over the last whole number of periods
        let whole = periods.floor() * 2.0 * PI / omega;
        let take = ((whole / dt).round() as usize).clamp(1, len);
        let xw = &xs[l][len - take..];
        let qw = &qs[l][len - take..];
        let mx = mean(xw);
        let mq = mean(qw);
        stats.push(OscillatorStats {
            mean_x: mx,
            mean_q: mq,
            amplitude_x: rms_about(xw, mx),
            amplitude_q: rms_about(qw, mq),
            frequency: omega,
            phase: 0.0,
        });
        omegas.push(omega);
    }

    let centered: Vec<Vec<f64>> = (0..n)
        .map(|l| xs[l].iter().map(|x| x - stats[l].mean_x).collect())
        .collect();
    let mut mirror_phase = vec![0.0; n];
    for l in 0..n {
        let w = omegas[l];
        if w == 0.0 {
            continue;
        }
        let xl = fourier_at(&centered[l], times, w);
        let xr = fourier_at(&centered[reference_shuttle], times, w);
        stats[l].phase = if l == reference_shuttle { 0.0 } else { wrap_phase((xl * xr.conj()).arg()) };
        let xm = fourier_at(&centered[n - 1 - l], times, w);
        mirror_phase[l] = if n - 1 - l == l { 0.0 } else { wrap_phase((xl * xm.conj()).arg()) };
    }

    Ok(SteadyStats {
        per_shuttle: stats,
        mirror_phase,
        window_length: span,
        dt,
        reference_shuttle,
    })
}

/// Phase of shuttle `a` relative to shuttle `b` at angular frequency
/// `omega`, from samples `range` of the trajectory.
pub fn phase_difference_over(
    traj: &Trajectory,
    a: usize,
    b: usize,
    omega: f64,
    range: std::ops::Range<usize>,
) -> f64 {
    let times = &traj.t[range.clone()];
    let states = &traj.states[range];
    let xa: Vec<f64> = states.iter().map(|s| s.x[a]).collect();
    let xb: Vec<f64> = states.iter().map(|s| s.x[b]).collect();
    let (ma, mb) = (mean(&xa), mean(&xb));
    let ca: Vec<f64> = xa.iter().map(|x| x - ma).collect();
    let cb: Vec<f64> = xb.iter().map(|x| x - mb).collect();
    wrap_phase((fourier_at(&ca, times, omega) * fourier_at(&cb, times, omega).conj()).arg())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncClass {
    Quiescent,
    LeftEdgeOnly,
    RightEdgeOnly,
    BothSynchronized,
    BothTwoFrequency,
    BulkExcited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub per_shuttle: Vec<OscillatorStats>,
    pub class: SyncClass,
    /// Amplitude-weighted angular frequency of each active edge trimer.
    pub left_frequency: Option<f64>,
    pub right_frequency: Option<f64>,
    /// Amplitude-weighted circular mean of the mirror-pair phases over the
    /// left edge trimer; present when both edges oscillate.
    pub edge_phase_difference: Option<f64>,
    /// Frequency resolution 2π / window length used for comparisons.
    pub resolution: f64,
    /// Set when a decision sat within a factor of a few of its threshold.
    pub ambiguous: bool,
}

fn weighted_frequency(stats: &[OscillatorStats]) -> f64 {
    let w: f64 = stats.iter().map(|s| s.amplitude_x).sum();
    stats.iter().map(|s| s.amplitude_x * s.frequency).sum::<f64>() / w
}

/// Assign one of the dynamical scenarios to the steady state.
///
/// An edge is active when any shuttle of its outermost trimer exceeds the
/// quiescence threshold. Edge frequencies agree when they differ by less
/// than one resolution bin. Bulk shuttles above threshold that oscillate at
/// an active edge frequency are edge tails; any other bulk motion makes the
/// state BulkExcited.
pub fn classify(stats: &SteadyStats, cp: &ChainParams, opts: &AnalysisOptions) -> SyncReport {
    let per = &stats.per_shuttle;
    let n = per.len();
    let e = opts.edge_sites.min(n / 2).max(1);
    let threshold = opts.quiescence * cp.shuttle.lambda;
    let resolution = 2.0 * PI / stats.window_length;
    let left = &per[..e];
    let right = &per[n - e..];
    let active = |s: &[OscillatorStats]| s.iter().any(|o| o.amplitude_x >= threshold);
    let left_on = active(left);
    let right_on = active(right);
    let left_frequency = left_on.then(|| weighted_frequency(left));
    let right_frequency = right_on.then(|| weighted_frequency(right));

    let near = |v: f64| v > 0.3 * threshold && v < 3.0 * threshold;
    let mut ambiguous = left.iter().chain(right).any(|o| near(o.amplitude_x));

    let edge_freqs: Vec<f64> = left_frequency.iter().chain(right_frequency.iter()).copied().collect();
    let mut bulk_excited = false;
    for o in &per[e..n - e] {
        if o.amplitude_x < threshold {
            continue;
        }
        let nearest = edge_freqs
            .iter()
            .map(|f| (o.frequency - f).abs())
            .fold(f64::INFINITY, f64::min);
        if nearest > resolution {
            bulk_excited = true;
            if nearest < 2.0 * resolution {
                ambiguous = true;
            }
        }
    }

    let mut edge_phase_difference = None;
    let class = if bulk_excited {
        SyncClass::BulkExcited
    } else {
        match (left_frequency, right_frequency) {
            (None, None) => SyncClass::Quiescent,
            (Some(_), None) => SyncClass::LeftEdgeOnly,
            (None, Some(_)) => SyncClass::RightEdgeOnly,
            (Some(fl), Some(fr)) => {
                let d = (fl - fr).abs();
                if d > 0.5 * resolution && d < 2.0 * resolution {
                    ambiguous = true;
                }
                let z: Complex64 = (0..e)
                    .map(|l| Complex64::from_polar(per[l].amplitude_x, stats.mirror_phase[l]))
                    .sum();
                edge_phase_difference = Some(wrap_phase(z.arg()));
                if d < resolution {
                    SyncClass::BothSynchronized
                } else {
                    SyncClass::BothTwoFrequency
                }
            }
        }
    };

    SyncReport {
        per_shuttle: per.clone(),
        class,
        left_frequency,
        right_frequency,
        edge_phase_difference,
        resolution,
        ambiguous,
    }
}
