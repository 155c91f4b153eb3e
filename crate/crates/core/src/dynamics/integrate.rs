//! Dormand–Prince 5(4) with PI step control and dense output.

use serde::{Deserialize, Serialize};

use crate::error::DynamicsError;
use crate::model::{ChainModel, ChainState};

/// q may leave [0, 1] by at most this much before it is treated as an error.
pub const CHARGE_SLACK: f64 = 1e-9;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    /// Relative and absolute local error tolerance.
    pub tol: f64,
    /// Output interval; `None` picks 2π/(40 Ω_top).
    pub dt_out: Option<f64>,
    /// Fraction of `t_end` discarded as transient by the analysis.
    pub transient_fraction: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            dt_out: None,
            transient_fraction: 0.6,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationDiagnostics {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Accepted steps whose q needed clamping back into [0, 1].
    pub clamped_charges: usize,
    pub max_charge_violation: f64,
    /// Field evaluations that hit the rate exponent clamp.
    pub clamped_rate_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<ChainState>,
    pub dt_out: f64,
    /// First sample index of the analysis window.
    pub transient_cut: usize,
    pub diagnostics: IntegrationDiagnostics,
}

impl Trajectory {
    pub fn analysis_window(&self) -> &[ChainState] {
        &self.states[self.transient_cut..]
    }
}

fn clamp_charges(y: &mut [f64], t: f64, diag: &mut IntegrationDiagnostics) -> Result<bool, DynamicsError> {
    let mut clamped = false;
    for (site, q) in y.iter_mut().skip(2).step_by(3).enumerate() {
        if !q.is_finite() {
            return Err(DynamicsError::NonFinite { t });
        }
        let excess = (*q - 1.0).max(-*q);
        if excess > 0.0 {
            if excess > CHARGE_SLACK {
                return Err(DynamicsError::ChargeBound {
                    t,
                    site: site + 1,
                    value: *q,
                });
            }
            diag.max_charge_violation = diag.max_charge_violation.max(excess);
            *q = q.clamp(0.0, 1.0);
            clamped = true;
        }
    }
    Ok(clamped)
}

/// Integrate the flat-layout field of `model` from `y0` at t = 0 to `t_end`,
/// sampling at multiples of `dt_out`.
pub fn integrate_model(
    model: &ChainModel,
    y0: &[f64],
    t_end: f64,
    dt_out: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, DynamicsError> {
    let dim = y0.len();
    if dim != 3 * model.n() {
        return Err(DynamicsError::InvalidInput(format!(
            "initial state has {} entries, chain needs {}",
            dim,
            3 * model.n()
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(DynamicsError::InvalidInput(format!("t_end must be positive, got {t_end}")));
    }
    if !(1e-12..=1e-4).contains(&opts.tol) {
        return Err(DynamicsError::InvalidInput(format!(
            "tol must lie in [1e-12, 1e-4], got {}",
            opts.tol
        )));
    }
    if !(dt_out > 0.0 && dt_out.is_finite()) {
        return Err(DynamicsError::InvalidInput(format!("dt_out must be positive, got {dt_out}")));
    }
    if !(0.0..1.0).contains(&opts.transient_fraction) {
        return Err(DynamicsError::InvalidInput("transient_fraction must lie in [0, 1)".into()));
    }

    let tol = opts.tol;
    let mut diag = IntegrationDiagnostics::default();
    let eval = |y: &[f64], out: &mut [f64], diag: &mut IntegrationDiagnostics| {
        diag.clamped_rate_evals += model.field(y, out).clamped_sites;
    };

    let n_out = (t_end / dt_out).floor() as usize + 1;
    let mut times = Vec::with_capacity(n_out);
    let mut states = Vec::with_capacity(n_out);

    let mut y = y0.to_vec();
    clamp_charges(&mut y, 0.0, &mut diag)?;
    times.push(0.0);
    states.push(ChainState::from_flat(&y));
    let mut next_out = 1usize;

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut ytmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];
    let mut err_v = vec![0.0; dim];
    let mut cont = vec![vec![0.0; dim]; 5];
    let mut dense = vec![0.0; dim];

    eval(&y, &mut k1, &mut diag);

    // initial step (Hairer–Wanner heuristic)
    let sc = |a: f64| tol + tol * a.abs();
    let d0 = (y.iter().map(|v| (v / sc(*v)).powi(2)).sum::<f64>() / dim as f64).sqrt();
    let d1 = (k1.iter().zip(&y).map(|(f, v)| (f / sc(*v)).powi(2)).sum::<f64>() / dim as f64).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(dt_out).min(t_end);

    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let safe = 0.9;
    let facc1 = 1.0 / 0.2;
    let facc2 = 1.0 / 10.0;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut t = 0.0;
    let mut steps = 0usize;

    while t < t_end {
        if steps >= opts.max_steps {
            return Err(DynamicsError::TooManySteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        steps += 1;
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(DynamicsError::StepUnderflow { t, h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        for i in 0..dim {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        eval(&ytmp, &mut k2, &mut diag);
        for i in 0..dim {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        eval(&ytmp, &mut k3, &mut diag);
        for i in 0..dim {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        eval(&ytmp, &mut k4, &mut diag);
        for i in 0..dim {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        eval(&ytmp, &mut k5, &mut diag);
        for i in 0..dim {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        eval(&ytmp, &mut k6, &mut diag);
        for i in 0..dim {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        eval(&ynew, &mut k7, &mut diag);

        let mut err = 0.0;
        for i in 0..dim {
            err_v[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let s = tol + tol * y[i].abs().max(ynew[i].abs());
            err += (err_v[i] / s).powi(2);
        }
        err = (err / dim as f64).sqrt();
        if !err.is_finite() {
            diag.rejected_steps += 1;
            h *= 0.1;
            last_rejected = true;
            continue;
        }

        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(beta) / safe).clamp(facc2, facc1);
        let mut hnew = h / fac;

        if err <= 1.0 {
            facold = err.max(1e-4);
            diag.accepted_steps += 1;

            for i in 0..dim {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k7[i] - bspl;
                cont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if last { t_end } else { t + h };
            while next_out < n_out {
                let to = next_out as f64 * dt_out;
                if to > t_new {
                    break;
                }
                let theta = (to - t) / h;
                let theta1 = 1.0 - theta;
                for i in 0..dim {
                    dense[i] = cont[0][i]
                        + theta * (cont[1][i] + theta1 * (cont[2][i] + theta * (cont[3][i] + theta1 * cont[4][i])));
                }
                clamp_charges(&mut dense, to, &mut diag)?;
                times.push(to);
                states.push(ChainState::from_flat(&dense));
                next_out += 1;
            }

            std::mem::swap(&mut y, &mut ynew);
            if clamp_charges(&mut y, t_new, &mut diag)? {
                diag.clamped_charges += 1;
                eval(&y, &mut k1, &mut diag);
            } else {
                std::mem::swap(&mut k1, &mut k7);
            }
            t = t_new;
            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;
            h = hnew;
        } else {
            hnew = h / facc1.min(fac11 / safe);
            diag.rejected_steps += 1;
            last_rejected = true;
            h = hnew;
        }
    }

    let transient_cut = times
        .iter()
        .position(|&s| s >= opts.transient_fraction * t_end)
        .unwrap_or(times.len());
    Ok(Trajectory {
        t: times,
        states,
        dt_out,
        transient_cut,
        diagnostics: diag,
    })
}
