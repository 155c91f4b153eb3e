use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{newton_fixed_point, spectrum_at, uncoupled_guess, StabilityOptions, StabilityReport};
use crate::error::StabilityError;
use crate::linalg::eig_general;
use crate::model::{ChainModel, ChainParams, ShuttleParams};

/// Boundaries are bisected until their bracket is narrower than this.
pub const BOUNDARY_RESOLUTION: f64 = 1e-4 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiPoint {
    pub phi: f64,
    pub report: Option<StabilityReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// max Re z changes sign.
    MaxRealSign,
    /// The number of unstable pairs changes without a sign change of max Re z.
    UnstableCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub phi: f64,
    pub kind: BoundaryKind,
    pub pairs_below: usize,
    pub pairs_above: usize,
    /// Width of the final bisection bracket.
    pub bracket: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSweep {
    pub points: Vec<PhiPoint>,
    pub boundaries: Vec<Boundary>,
    pub failures: usize,
}

#[derive(Clone, Copy)]
struct Probe {
    max_real: f64,
    pairs: usize,
}

fn probe(cp: &ChainParams, phi: f64, opts: &StabilityOptions) -> Result<StabilityReport, StabilityError> {
    let c = cp.with_phi(phi);
    let model = ChainModel::new(&c)?;
    let fp = newton_fixed_point(&model, &uncoupled_guess(&model)?)?;
    spectrum_at(&model, fp, phi, opts)
}

fn quick_probe(cp: &ChainParams, phi: f64) -> Result<Probe, StabilityError> {
    let c = cp.with_phi(phi);
    let model = ChainModel::new(&c)?;
    let fp = newton_fixed_point(&model, &uncoupled_guess(&model)?)?;
    let spec = eig_general(&model.jacobian(&fp.state.to_flat()), false)?;
    Ok(Probe {
        max_real: spec.max_real(),
        pairs: spec.values.iter().filter(|z| z.re > 0.0 && z.im >= 0.0).count(),
    })
}

/// Stability reports over a φ grid, plus refined boundaries where max Re z
/// changes sign or the number of unstable pairs changes.
///
/// Failures at individual grid points are recorded and the sweep continues.
pub fn phi_sweep(cp: &ChainParams, phis: &[f64], opts: &StabilityOptions) -> PhiSweep {
    let points: Vec<PhiPoint> = phis
        .par_iter()
        .map(|&phi| match probe(cp, phi, opts) {
            Ok(r) => PhiPoint {
                phi,
                report: Some(r),
                error: None,
            },
            Err(e) => PhiPoint {
                phi,
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let failures = points.iter().filter(|p| p.report.is_none()).count();

    let mut brackets = Vec::new();
    for w in points.windows(2) {
        if let (Some(a), Some(b)) = (&w[0].report, &w[1].report) {
            let sign_change = (a.max_real > 0.0) != (b.max_real > 0.0);
            let (na, nb) = (a.unstable_pairs().count(), b.unstable_pairs().count());
            if sign_change || na != nb {
                brackets.push((w[0].phi, w[1].phi));
            }
        }
    }
    let boundaries: Vec<Vec<Boundary>> = brackets
        .par_iter()
        .map(|&(lo, hi)| refine(cp, lo, hi))
        .collect();

    PhiSweep {
        points,
        boundaries: boundaries.into_iter().flatten().collect(),
        failures,
    }
}

/// Bisect every change inside [lo, hi]; several modes may cross within one
/// grid cell, so the bracket is split recursively.
fn refine(cp: &ChainParams, lo: f64, hi: f64) -> Vec<Boundary> {
    let mut out = Vec::new();
    let Ok(p_lo) = quick_probe(cp, lo) else { return out };
    let Ok(p_hi) = quick_probe(cp, hi) else { return out };
    refine_between(cp, (lo, p_lo), (hi, p_hi), 0, &mut out);
    out
}

fn refine_between(cp: &ChainParams, a: (f64, Probe), b: (f64, Probe), depth: usize, out: &mut Vec<Boundary>) {
    let (lo, p_lo) = a;
    let (hi, p_hi) = b;
    let same = (p_lo.max_real > 0.0) == (p_hi.max_real > 0.0) && p_lo.pairs == p_hi.pairs;
    if same {
        return;
    }
    if hi - lo < BOUNDARY_RESOLUTION || depth > 60 {
        let kind = if (p_lo.max_real > 0.0) != (p_hi.max_real > 0.0) {
            BoundaryKind::MaxRealSign
        } else {
            BoundaryKind::UnstableCount
        };
        out.push(Boundary {
            phi: 0.5 * (lo + hi),
            kind,
            pairs_below: p_lo.pairs,
            pairs_above: p_hi.pairs,
            bracket: hi - lo,
        });
        return;
    }
    let mid = 0.5 * (lo + hi);
    let Ok(pm) = quick_probe(cp, mid) else { return };
    refine_between(cp, (lo, p_lo), (mid, pm), depth + 1, out);
    refine_between(cp, (mid, pm), (hi, p_hi), depth + 1, out);
}

/// Largest real part of the linearisation of a lone shuttle.
pub fn single_shuttle_max_real(s: &ShuttleParams) -> Result<f64, StabilityError> {
    let model = ChainModel::single(s)?;
    let fp = newton_fixed_point(&model, &uncoupled_guess(&model)?)?;
    Ok(eig_general(&model.jacobian(&fp.state.to_flat()), false)?.max_real())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleShuttleSweep {
    /// (ω, max Re z); NaN marks a failed point.
    pub points: Vec<(f64, f64)>,
    /// Refined unstable ω-intervals.
    pub windows: Vec<(f64, f64)>,
    /// Refined location and value of the largest max Re z.
    pub argmax: Option<(f64, f64)>,
    pub failures: usize,
}

fn at_omega(template: &ShuttleParams, omega: f64) -> Result<f64, StabilityError> {
    single_shuttle_max_real(&ShuttleParams { omega, ..*template })
}

/// Root of a sign change of `f` inside [lo, hi] by bisection.
fn bisect_sign<F: Fn(f64) -> Result<f64, StabilityError>>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64, StabilityError> {
    let lo_positive = f(lo)? > 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (f(mid)? > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section maximisation of `f` on [a, b].
pub(crate) fn golden_max<F: Fn(f64) -> Result<f64, StabilityError>>(
    f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64), StabilityError> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// max Re z of a lone shuttle as a function of its frequency.
pub fn single_shuttle_sweep(template: &ShuttleParams, omegas: &[f64]) -> SingleShuttleSweep {
    let values: Vec<Option<f64>> = omegas
        .par_iter()
        .map(|&w| at_omega(template, w).ok())
        .collect();
    let failures = values.iter().filter(|v| v.is_none()).count();
    let points: Vec<(f64, f64)> = omegas
        .iter()
        .zip(&values)
        .map(|(&w, v)| (w, v.unwrap_or(f64::NAN)))
        .collect();

    let f = |w: f64| at_omega(template, w);
    let mut crossings = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.1.is_nan() || b.1.is_nan() {
            continue;
        }
        if (a.1 > 0.0) != (b.1 > 0.0) {
            if let Ok(root) = bisect_sign(f, a.0, b.0, 1e-10) {
                crossings.push((root, b.1 > 0.0));
            }
        }
    }
    let mut windows = Vec::new();
    let mut open: Option<f64> = points.first().filter(|p| p.1 > 0.0).map(|p| p.0);
    for (root, rising) in crossings {
        if rising {
            open = Some(root);
        } else if let Some(start) = open.take() {
            windows.push((start, root));
        }
    }
    if let (Some(start), Some(last)) = (open, points.last()) {
        windows.push((start, last.0));
    }

    let argmax = points
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.1.is_nan())
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .and_then(|i| {
            let a = points[i.saturating_sub(1)].0;
            let b = points[(i + 1).min(points.len() - 1)].0;
            golden_max(f, a, b, 1e-6).ok()
        });

    SingleShuttleSweep {
        points,
        windows,
        argmax,
        failures,
    }
}
