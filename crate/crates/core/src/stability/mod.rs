//! Fixed points, linear stability and the parameter sweeps built on them.

mod calibrate;
mod disorder;
mod sweep;

pub use calibrate::{
    calibrate, edge_onset, single_shuttle_argmax, single_shuttle_window, CalibrationResult,
    CalibrationSetup, CalibrationTargets, EdgeSide,
};
pub use disorder::{
    disorder_sweep, sample_offsets, DisorderEnsemble, DisorderOptions, EnsembleSummary,
};
pub use sweep::{
    phi_sweep, single_shuttle_max_real, single_shuttle_sweep, Boundary, BoundaryKind, PhiPoint,
    PhiSweep, SingleShuttleSweep,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::StabilityError;
use crate::linalg::{eig_general, eigenvector_for, solve_linear, ComplexSpectrum, LinalgError};
use crate::model::{rates, ChainModel, ChainParams, ChainState, ShuttleParams};

pub const NEWTON_MAX_ITERATIONS: usize = 200;
pub const NEWTON_RELATIVE_TOLERANCE: f64 = 1e-12;
/// Sites per edge trimer.
pub const EDGE_SITES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub state: ChainState,
    /// max-norm of the vector field at `state`
    pub residual: f64,
    pub newton_iters: usize,
}

/// max(|αV|, γ, Γ), the scale of the residual certificate.
pub fn residual_scale(s: &ShuttleParams) -> f64 {
    s.force().abs().max(s.gamma).max(s.tunnel_rate)
}

/// Occupation the dot relaxes to at fixed position x.
pub fn stationary_occupation(x: f64, s: &ShuttleParams) -> f64 {
    let r = rates(x, s);
    r.gamma_in / (r.gamma_in + r.gamma_out)
}

/// Root of ω²x = αV q*(x) for an isolated shuttle, by bisection on
/// [0, αV/ω²] (the root is bracketed there because 0 ≤ q* ≤ 1).
pub fn scalar_fixed_point(omega_sq: f64, s: &ShuttleParams) -> Result<f64, StabilityError> {
    let force = s.force();
    if force == 0.0 {
        return Ok(0.0);
    }
    if omega_sq <= 0.0 {
        return Err(StabilityError::InvalidInput(format!(
            "scalar fixed point needs a positive squared frequency, got {omega_sq}"
        )));
    }
    let h = |x: f64| omega_sq * x - force * stationary_occupation(x, s);
    let (mut lo, mut hi) = if force > 0.0 { (0.0, force / omega_sq) } else { (force / omega_sq, 0.0) };
    let mut hlo = h(lo);
    if hlo == 0.0 {
        return Ok(lo);
    }
    if h(hi) == 0.0 {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let hm = h(mid);
        if hm == 0.0 {
            return Ok(mid);
        }
        if (hm < 0.0) == (hlo < 0.0) {
            lo = mid;
            hlo = hm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Per-site uncoupled fixed point assembled into a chain state (flat layout).
pub fn uncoupled_guess(model: &ChainModel) -> Result<Vec<f64>, StabilityError> {
    let s = &model.shuttle;
    let mut out = Vec::with_capacity(3 * model.n());
    for &w2 in &model.omega_sq {
        let x = scalar_fixed_point(w2, s)?;
        out.extend_from_slice(&[x, 0.0, stationary_occupation(x, s)]);
    }
    Ok(out)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn charges_in_range(state: &[f64]) -> bool {
    state.iter().skip(2).step_by(3).all(|q| (0.0..=1.0).contains(q))
}

/// Damped Newton iteration on the flat-layout vector field of `model`.
pub fn newton_fixed_point(model: &ChainModel, guess: &[f64]) -> Result<FixedPoint, StabilityError> {
    let dim = 3 * model.n();
    if guess.len() != dim || guess.iter().any(|v| !v.is_finite()) {
        return Err(StabilityError::InvalidInput(format!(
            "guess must hold {dim} finite values"
        )));
    }
    let tol = NEWTON_RELATIVE_TOLERANCE * residual_scale(&model.shuttle);
    let mut x = guess.to_vec();
    let mut f = vec![0.0; dim];
    let mut trial_f = vec![0.0; dim];
    model.field(&x, &mut f);
    let mut r = max_abs(&f);

    for iter in 0..=NEWTON_MAX_ITERATIONS {
        if r < tol && charges_in_range(&x) {
            return Ok(FixedPoint {
                state: ChainState::from_flat(&x),
                residual: r,
                newton_iters: iter,
            });
        }
        if iter == NEWTON_MAX_ITERATIONS {
            break;
        }
        let j = model.jacobian(&x);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = match solve_linear(&j, &rhs) {
            Ok(dx) => dx,
            Err(e @ LinalgError::Singular { .. }) => return Err(StabilityError::Singular(e)),
            Err(e) => return Err(e.into()),
        };
        let mut step = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; dim];
        while step > 1e-12 {
            for i in 0..dim {
                trial[i] = x[i] + step * dx[i];
            }
            if charges_in_range(&trial) {
                model.field(&trial, &mut trial_f);
                let tr = max_abs(&trial_f);
                if tr.is_finite() && tr < (1.0 - 1e-4 * step) * r {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut f, &mut trial_f);
        r = max_abs(&f);
    }
    Err(StabilityError::NoConvergence {
        iterations: NEWTON_MAX_ITERATIONS,
        residual: r,
        best: Box::new(ChainState::from_flat(&x)),
    })
}

/// Fixed point of the chain near `guess`.
pub fn find_fixed_point(cp: &ChainParams, guess: &ChainState) -> Result<FixedPoint, StabilityError> {
    let model = ChainModel::new(cp)?;
    if guess.len() != cp.n {
        return Err(StabilityError::InvalidInput(format!(
            "guess has {} shuttles, chain has {}",
            guess.len(),
            cp.n
        )));
    }
    newton_fixed_point(&model, &guess.to_flat())
}

/// Fixed point starting from the uncoupled per-site guess.
pub fn default_fixed_point(cp: &ChainParams) -> Result<FixedPoint, StabilityError> {
    let model = ChainModel::new(cp)?;
    newton_fixed_point(&model, &uncoupled_guess(&model)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeTag {
    LeftEdge,
    RightEdge,
    /// Edge-localized, but spread over both ends (inversion-symmetric pairs).
    BothEdges,
    Bulk,
}

impl ModeTag {
    pub fn is_edge(self) -> bool {
        self != ModeTag::Bulk
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeTag::LeftEdge => "left-edge",
            ModeTag::RightEdge => "right-edge",
            ModeTag::BothEdges => "both-edges",
            ModeTag::Bulk => "bulk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    /// Share of x-weight an edge trimer must hold for a mode to be edge-tagged.
    pub edge_threshold: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self { edge_threshold: 0.7 }
    }
}

/// Fractions of the x-component weight of a mode on the first and last
/// trimer.
pub fn edge_weights(v: &[Complex64], n: usize) -> (f64, f64) {
    let w: Vec<f64> = (0..n).map(|l| v[3 * l].norm_sqr()).collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return (0.0, 0.0);
    }
    let e = EDGE_SITES.min(n);
    let left: f64 = w[..e].iter().sum();
    let right: f64 = w[n - e..].iter().sum();
    (left / total, right / total)
}

pub fn tag_mode(left: f64, right: f64, threshold: f64) -> ModeTag {
    if left > threshold {
        ModeTag::LeftEdge
    } else if right > threshold {
        ModeTag::RightEdge
    } else if left + right > threshold {
        ModeTag::BothEdges
    } else {
        ModeTag::Bulk
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnstableMode {
    pub value: Complex64,
    pub tag: ModeTag,
    pub left_weight: f64,
    pub right_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub phi: f64,
    pub fixed_point: FixedPoint,
    pub eigenvalues: ComplexSpectrum,
    /// Every eigenvalue with Re > 0, both members of conjugate pairs.
    pub unstable: Vec<UnstableMode>,
    pub max_real: f64,
}

impl StabilityReport {
    /// Unstable modes counted once per conjugate pair (Im ≥ 0).
    pub fn unstable_pairs(&self) -> impl Iterator<Item = &UnstableMode> {
        self.unstable.iter().filter(|m| m.value.im >= 0.0)
    }

    pub fn edge_pairs(&self) -> usize {
        self.unstable_pairs().filter(|m| m.tag.is_edge()).count()
    }

    pub fn bulk_pairs(&self) -> usize {
        self.unstable_pairs().filter(|m| !m.tag.is_edge()).count()
    }
}

/// Eigenvalues of the Jacobian at a converged fixed point, with unstable
/// modes tagged by localization.
pub fn spectrum_at(
    model: &ChainModel,
    fixed_point: FixedPoint,
    phi: f64,
    opts: &StabilityOptions,
) -> Result<StabilityReport, StabilityError> {
    let j = model.jacobian(&fixed_point.state.to_flat());
    let spectrum = eig_general(&j, false)?;
    let n = model.n();
    let mut unstable = Vec::new();
    for &z in &spectrum.values {
        if z.re <= 0.0 {
            continue;
        }
        // the conjugate partner shares the weights of its +Im sibling
        let reuse = if z.im < 0.0 {
            unstable
                .iter()
                .rev()
                .find(|m: &&UnstableMode| m.value == z.conj())
                .copied()
        } else {
            None
        };
        let mode = match reuse {
            Some(m) => UnstableMode { value: z, ..m },
            None => {
                let v = eigenvector_for(&j, z)?;
                let (left, right) = edge_weights(&v, n);
                UnstableMode {
                    value: z,
                    tag: tag_mode(left, right, opts.edge_threshold),
                    left_weight: left,
                    right_weight: right,
                }
            }
        };
        unstable.push(mode);
    }
    let max_real = spectrum.max_real();
    Ok(StabilityReport {
        phi,
        fixed_point,
        eigenvalues: spectrum,
        unstable,
        max_real,
    })
}

pub fn stability_spectrum(cp: &ChainParams) -> Result<StabilityReport, StabilityError> {
    stability_spectrum_with(cp, &StabilityOptions::default())
}

pub fn stability_spectrum_with(
    cp: &ChainParams,
    opts: &StabilityOptions,
) -> Result<StabilityReport, StabilityError> {
    let model = ChainModel::new(cp)?;
    let fp = newton_fixed_point(&model, &uncoupled_guess(&model)?)?;
    spectrum_at(&model, fp, cp.phi, opts)
}
