use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::sweep::{golden_max, single_shuttle_max_real};
use super::{edge_weights, newton_fixed_point, uncoupled_guess};
use crate::error::StabilityError;
use crate::linalg::{eig_general, eigenvector_for, solve_linear, DenseMatrix};
use crate::model::{ChainModel, ChainParams, ShuttleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSide {
    Left,
    Right,
}

/// Published stability boundaries the free scales are fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub window_lo: f64,
    pub window_hi: f64,
    /// Onset of the right-edge instability, in units of π.
    pub right_onset: f64,
    /// Onset of the left-edge instability, in units of π.
    pub left_onset: f64,
    pub omega_tolerance: f64,
    /// In units of π.
    pub phi_tolerance: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            window_lo: 0.9,
            window_hi: 2.3,
            right_onset: 0.41,
            left_onset: 0.58,
            omega_tolerance: 0.1,
            phi_tolerance: 0.02,
        }
    }
}

/// Fixed ratios of the calibration plus the starting point of the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSetup {
    pub n: usize,
    pub delta: f64,
    pub g: f64,
    pub beta_v: f64,
    pub alpha_lambda: f64,
    /// Γ/γ
    pub tunnel_ratio: f64,
    pub initial_drive: f64,
    pub initial_gamma: f64,
    pub max_iterations: usize,
}

impl Default for CalibrationSetup {
    fn default() -> Self {
        Self {
            n: 24,
            delta: 1.0,
            g: 1.0,
            beta_v: 150.0,
            alpha_lambda: 0.06,
            tunnel_ratio: 1.0,
            initial_drive: 8.0,
            initial_gamma: 0.5,
            max_iterations: 30,
        }
    }
}

impl CalibrationSetup {
    pub fn shuttle(&self, drive: f64, gamma: f64) -> ShuttleParams {
        ShuttleParams::from_ratios(
            0.0,
            drive,
            gamma,
            gamma * self.tunnel_ratio,
            self.beta_v,
            self.alpha_lambda,
        )
    }

    pub fn chain(&self, drive: f64, gamma: f64) -> ChainParams {
        ChainParams::new(self.n, self.delta, self.g, 0.0, self.shuttle(drive, gamma))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// αV/(g²λ)
    pub drive: f64,
    /// γ/g
    pub gamma: f64,
    /// Γ/g
    pub tunnel_rate: f64,
    pub window: (f64, f64),
    pub right_onset: f64,
    pub left_onset: f64,
    /// Scaled residuals (value − target) / tolerance.
    pub residuals: [f64; 4],
    pub iterations: usize,
    pub targets: CalibrationTargets,
}

/// Largest Re z among oscillatory modes (Im z > `min_imag`) that keep more
/// than half of their x-weight on the given edge trimer; `None` when no such
/// mode exists (outside the gap windows).
fn edge_growth(cp: &ChainParams, side: EdgeSide, min_imag: f64) -> Result<Option<f64>, StabilityError> {
    let model = ChainModel::new(cp)?;
    let fp = newton_fixed_point(&model, &uncoupled_guess(&model)?)?;
    let j = model.jacobian(&fp.state.to_flat());
    let spec = eig_general(&j, false)?;
    for z in spec.values.iter().filter(|z| z.im > min_imag).take(12) {
        let v = eigenvector_for(&j, *z)?;
        let (l, r) = edge_weights(&v, cp.n);
        let w = match side {
            EdgeSide::Left => l,
            EdgeSide::Right => r,
        };
        if w > 0.5 {
            return Ok(Some(z.re));
        }
    }
    Ok(None)
}

/// Brent's method for a sign change of `f` on [a, b].
fn brent<F: Fn(f64) -> Result<f64, StabilityError>>(
    f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<f64, StabilityError> {
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if (fa > 0.0) == (fb > 0.0) {
        return Err(StabilityError::NoBracket(format!("[{a}, {b}]")));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(b)
}

/// φ/π at which the given edge first turns unstable when φ increases from
/// 0.2π towards 2π/3. `hint` (in units of π) narrows the initial search.
pub fn edge_onset(cp: &ChainParams, side: EdgeSide, hint: Option<f64>) -> Result<f64, StabilityError> {
    // a missing edge mode counts as damped
    let g = |u: f64| Ok(edge_growth(&cp.with_phi(u * PI), side, 1.0)?.unwrap_or(-1.0));
    let scan = |lo: f64, hi: f64, steps: usize| -> Result<Option<(f64, f64)>, StabilityError> {
        let mut prev = (lo, g(lo)?);
        for i in 1..=steps {
            let u = lo + (hi - lo) * i as f64 / steps as f64;
            let cur = (u, g(u)?);
            if prev.1 <= 0.0 && cur.1 > 0.0 {
                return Ok(Some((prev.0, cur.0)));
            }
            prev = cur;
        }
        Ok(None)
    };
    let mut bracket = None;
    if let Some(h) = hint {
        bracket = scan((h - 0.03).max(0.2), (h + 0.03).min(2.0 / 3.0), 3).ok().flatten();
    }
    if bracket.is_none() {
        bracket = scan(0.2, 2.0 / 3.0, 24)?;
    }
    let (lo, hi) = bracket.ok_or_else(|| {
        StabilityError::NoBracket(format!("{side:?} edge never turns unstable for phi in [0.2pi, 2pi/3]"))
    })?;
    brent(g, lo, hi, 1e-9)
}

/// Unstable ω-window of a lone shuttle: the first rising and the following
/// falling zero of max Re z on a 0.02g grid over [0.2g, 4g], refined by Brent.
pub fn single_shuttle_window(s: &ShuttleParams) -> Result<(f64, f64), StabilityError> {
    let f = |w: f64| single_shuttle_max_real(&ShuttleParams { omega: w, ..*s });
    let grid: Vec<f64> = (0..=190).map(|i| 0.2 + 0.02 * i as f64).collect();
    let mut lo = None;
    let mut prev = (grid[0], f(grid[0])?);
    for &w in &grid[1..] {
        let cur = (w, f(w)?);
        match lo {
            None if prev.1 <= 0.0 && cur.1 > 0.0 => lo = Some(brent(f, prev.0, cur.0, 1e-10)?),
            Some(l) if prev.1 > 0.0 && cur.1 <= 0.0 => return Ok((l, brent(f, prev.0, cur.0, 1e-10)?)),
            _ => {}
        }
        prev = cur;
    }
    Err(StabilityError::NoBracket("single-shuttle instability window not closed on [0.2g, 4g]".into()))
}

/// Location of the largest single-shuttle max Re z inside `window`.
pub fn single_shuttle_argmax(s: &ShuttleParams, window: (f64, f64)) -> Result<(f64, f64), StabilityError> {
    let f = |w: f64| single_shuttle_max_real(&ShuttleParams { omega: w, ..*s });
    let steps = 40;
    let h = (window.1 - window.0) / steps as f64;
    let mut best = (window.0, f64::NEG_INFINITY);
    for i in 1..steps {
        let w = window.0 + h * i as f64;
        let v = f(w)?;
        if v > best.1 {
            best = (w, v);
        }
    }
    golden_max(f, best.0 - h, best.0 + h, 1e-7)
}

struct Evaluation {
    window: (f64, f64),
    right: f64,
    left: f64,
    residuals: [f64; 4],
}

fn evaluate(
    setup: &CalibrationSetup,
    t: &CalibrationTargets,
    drive: f64,
    gamma: f64,
    hints: Option<(f64, f64)>,
) -> Result<Evaluation, StabilityError> {
    let window = single_shuttle_window(&setup.shuttle(drive, gamma))?;
    let cp = setup.chain(drive, gamma);
    let right = edge_onset(&cp, EdgeSide::Right, hints.map(|h| h.0))?;
    let left = edge_onset(&cp, EdgeSide::Left, hints.map(|h| h.1))?;
    Ok(Evaluation {
        window,
        right,
        left,
        residuals: [
            (window.0 - t.window_lo) / t.omega_tolerance,
            (window.1 - t.window_hi) / t.omega_tolerance,
            (right - t.right_onset) / t.phi_tolerance,
            (left - t.left_onset) / t.phi_tolerance,
        ],
    })
}

fn cost(r: &[f64; 4]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Joint least-squares fit of the drive αV/(g²λ) and γ/g (with Γ = ratio·γ)
/// to the single-shuttle instability window and the two edge onsets.
///
/// Levenberg–Marquardt on the residuals scaled by their tolerances, with a
/// forward-difference Jacobian.
pub fn calibrate(setup: &CalibrationSetup, targets: &CalibrationTargets) -> Result<CalibrationResult, StabilityError> {
    let mut p = [setup.initial_drive, setup.initial_gamma];
    let mut cur = evaluate(setup, targets, p[0], p[1], None)?;
    let mut mu = 1e-3;
    let mut iterations = 0;
    while iterations < setup.max_iterations {
        iterations += 1;
        let hints = Some((cur.right, cur.left));
        let mut jac = [[0.0; 2]; 4];
        for k in 0..2 {
            let h = 1e-5 * p[k].abs().max(1e-3);
            let mut q = p;
            q[k] += h;
            let e = evaluate(setup, targets, q[0], q[1], hints)?;
            for i in 0..4 {
                jac[i][k] = (e.residuals[i] - cur.residuals[i]) / h;
            }
        }
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for i in 0..4 {
            for a in 0..2 {
                jtr[a] += jac[i][a] * cur.residuals[i];
                for b in 0..2 {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..12 {
            let m = DenseMatrix::from_rows(&[
                vec![jtj[0][0] * (1.0 + mu), jtj[0][1]],
                vec![jtj[1][0], jtj[1][1] * (1.0 + mu)],
            ])?;
            let step = solve_linear(&m, &[-jtr[0], -jtr[1]])?;
            let q = [p[0] + step[0], p[1] + step[1]];
            if q[0] > 0.0 && q[1] > 0.0 {
                if let Ok(e) = evaluate(setup, targets, q[0], q[1], hints) {
                    if cost(&e.residuals) < cost(&cur.residuals) {
                        let rel = (step[0] / p[0]).abs().max((step[1] / p[1]).abs());
                        p = q;
                        cur = e;
                        mu = (mu * 0.3).max(1e-9);
                        improved = true;
                        if rel < 1e-8 {
                            return Ok(finish(p, &cur, iterations, setup, targets));
                        }
                        break;
                    }
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(finish(p, &cur, iterations, setup, targets))
}

fn finish(
    p: [f64; 2],
    e: &Evaluation,
    iterations: usize,
    setup: &CalibrationSetup,
    targets: &CalibrationTargets,
) -> CalibrationResult {
    CalibrationResult {
        drive: p[0],
        gamma: p[1],
        tunnel_rate: p[1] * setup.tunnel_ratio,
        window: e.window,
        right_onset: e.right,
        left_onset: e.left,
        residuals: e.residuals,
        iterations,
        targets: *targets,
    }
}
