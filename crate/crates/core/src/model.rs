//! Shuttle parameters, tunneling rates and the chain vector fields.
//!
//! State vectors are flat with one `(x, p, q)` triple per shuttle, i.e.
//! shuttle `l` (0-based) occupies indices `3l`, `3l + 1`, `3l + 2`.
//! Units: g = 1 sets frequency, λ sets length, masses are 1.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::linalg::{eig_sym_tridiagonal, DenseMatrix, SymTridiagonal};

pub const DEFAULT_EXPONENT_CLAMP: f64 = 300.0;

/// Calibrated drive αV/(g²λ); the output of `stability::calibrate` at the
/// reference ratios and recorded here so presets are reproducible.
pub const CALIBRATED_DRIVE: f64 = 8.77187718;
/// Calibrated γ/g (with Γ = γ), see [`CALIBRATED_DRIVE`].
pub const CALIBRATED_GAMMA: f64 = 0.59745861;
pub const REFERENCE_BETA_V: f64 = 150.0;
pub const REFERENCE_ALPHA_LAMBDA: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuttleParams {
    pub omega: f64,
    /// Mechanical friction γ.
    pub gamma: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Bare tunneling rate Γ.
    pub tunnel_rate: f64,
    pub beta: f64,
    pub bias: f64,
    pub epsilon: f64,
    pub exponent_clamp: f64,
}

impl ShuttleParams {
    /// Build from the dimensionless groups with g = λ = 1.
    ///
    /// `drive` is αV/(g²λ), `beta_v` is βV and `alpha_lambda` is αλ.
    pub fn from_ratios(
        omega: f64,
        drive: f64,
        gamma: f64,
        tunnel_rate: f64,
        beta_v: f64,
        alpha_lambda: f64,
    ) -> Self {
        let lambda = 1.0;
        let alpha = alpha_lambda / lambda;
        let bias = drive * lambda / alpha;
        Self {
            omega,
            gamma,
            alpha,
            lambda,
            tunnel_rate,
            beta: if bias > 0.0 { beta_v / bias } else { beta_v },
            bias,
            epsilon: 0.0,
            exponent_clamp: DEFAULT_EXPONENT_CLAMP,
        }
    }

    /// Calibrated reference shuttle at frequency `omega`.
    pub fn reference(omega: f64) -> Self {
        Self::from_ratios(
            omega,
            CALIBRATED_DRIVE,
            CALIBRATED_GAMMA,
            CALIBRATED_GAMMA,
            REFERENCE_BETA_V,
            REFERENCE_ALPHA_LAMBDA,
        )
    }

    /// αV, the force on a charged dot.
    pub fn force(&self) -> f64 {
        self.alpha * self.bias
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let checks: [(&'static str, f64, bool); 7] = [
            ("gamma", self.gamma, self.gamma > 0.0),
            ("tunnel_rate", self.tunnel_rate, self.tunnel_rate > 0.0),
            ("lambda", self.lambda, self.lambda > 0.0),
            ("beta", self.beta, self.beta > 0.0),
            ("bias", self.bias, self.bias >= 0.0),
            ("exponent_clamp", self.exponent_clamp, self.exponent_clamp > 0.0),
            ("omega", self.omega, self.omega.is_finite()),
        ];
        for (field, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(ModelError::InvalidParameter {
                    field,
                    reason: format!("value {value} out of range"),
                });
            }
        }
        if !(self.alpha.is_finite() && self.epsilon.is_finite()) {
            return Err(ModelError::InvalidParameter {
                field: "alpha",
                reason: "alpha and epsilon must be finite".into(),
            });
        }
        Ok(())
    }
}

/// How inter-trimer coupling offsets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DisorderKind {
    #[default]
    Uniform,
    TwoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub n: usize,
    pub delta: f64,
    pub g: f64,
    pub b: f64,
    pub phi: f64,
    pub shuttle: ShuttleParams,
    /// Additive offsets δg_i on bond i (between sites i and i+1, 0-based).
    pub coupling_disorder: Vec<f64>,
}

impl ChainParams {
    pub fn new(n: usize, delta: f64, g: f64, phi: f64, shuttle: ShuttleParams) -> Self {
        Self {
            n,
            delta,
            g,
            b: 1.0 / 3.0,
            phi,
            shuttle,
            coupling_disorder: vec![0.0; n.saturating_sub(1)],
        }
    }

    /// N = 24, Δ = g = 1, b = 1/3 with the calibrated reference shuttle.
    pub fn reference(phi: f64) -> Self {
        Self::new(24, 1.0, 1.0, phi, ShuttleParams::reference(0.0))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.shuttle.validate()?;
        if self.n == 0 {
            return Err(ModelError::InvalidParameter {
                field: "n",
                reason: "chain needs at least one site".into(),
            });
        }
        if self.coupling_disorder.len() != self.n - 1 {
            return Err(ModelError::InvalidParameter {
                field: "coupling_disorder",
                reason: format!(
                    "expected {} bond offsets, got {}",
                    self.n - 1,
                    self.coupling_disorder.len()
                ),
            });
        }
        for (field, v) in [("delta", self.delta), ("g", self.g), ("b", self.b), ("phi", self.phi)] {
            if !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    field,
                    reason: "must be finite".into(),
                });
            }
        }
        if self.coupling_disorder.iter().any(|d| !d.is_finite()) {
            return Err(ModelError::InvalidParameter {
                field: "coupling_disorder",
                reason: "offsets must be finite".into(),
            });
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but also requires N to be a positive
    /// multiple of three.
    pub fn validate_trimer(&self) -> Result<(), ModelError> {
        self.validate()?;
        if self.n < 3 || self.n % 3 != 0 {
            return Err(ModelError::InvalidParameter {
                field: "n",
                reason: format!("trimer chains need N >= 3 and N mod 3 = 0, got N = {}", self.n),
            });
        }
        Ok(())
    }

    /// Bond-resolved squared couplings (g + δg_i)².
    pub fn couplings(&self) -> Vec<f64> {
        self.coupling_disorder
            .iter()
            .map(|d| (self.g + d) * (self.g + d))
            .collect()
    }

    pub fn with_phi(&self, phi: f64) -> Self {
        Self { phi, ..self.clone() }
    }
}

/// Positions, momenta and dot occupations of every shuttle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl ChainState {
    pub fn zeros(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let n = flat.len() / 3;
        let mut s = Self::zeros(n);
        for l in 0..n {
            s.x[l] = flat[3 * l];
            s.p[l] = flat[3 * l + 1];
            s.q[l] = flat[3 * l + 2];
        }
        s
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.len());
        for l in 0..self.len() {
            out.extend_from_slice(&[self.x[l], self.p[l], self.q[l]]);
        }
        out
    }

    /// Chain inversion l → N+1−l.
    pub fn reversed(&self) -> Self {
        let rev = |v: &[f64]| v.iter().rev().copied().collect::<Vec<_>>();
        Self {
            x: rev(&self.x),
            p: rev(&self.p),
            q: rev(&self.q),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.x.len();
        if self.p.len() != n || self.q.len() != n {
            return Err(ModelError::InvalidState("x, p, q lengths differ".into()));
        }
        for l in 0..n {
            if !(self.x[l].is_finite() && self.p[l].is_finite() && self.q[l].is_finite()) {
                return Err(ModelError::InvalidState(format!("non-finite entry at shuttle {}", l + 1)));
            }
            if !(0.0..=1.0).contains(&self.q[l]) {
                return Err(ModelError::InvalidState(format!(
                    "occupation q_{} = {} outside [0, 1]",
                    l + 1,
                    self.q[l]
                )));
            }
        }
        Ok(())
    }
}

/// 1 / (e^u + 1) without overflow for any finite u.
pub fn fermi_of_argument(u: f64) -> f64 {
    if u > 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

/// Lead occupation f(ε̄) = 1 / (exp(β(ε̄ − μ)) + 1).
pub fn fermi(energy: f64, mu: f64, beta: f64) -> f64 {
    fermi_of_argument(beta * (energy - mu))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub gamma_in: f64,
    pub gamma_out: f64,
    /// d Γ_in / dx
    pub d_in: f64,
    /// d Γ_out / dx
    pub d_out: f64,
    /// True when |x|/λ hit the exponent clamp.
    pub clamped: bool,
}

/// Position-dependent tunneling rates onto (Γ_in) and off (Γ_out) the dot,
/// together with their x-derivatives.
pub fn rates(x: f64, s: &ShuttleParams) -> Rates {
    let u_raw = x / s.lambda;
    let clamped = u_raw.abs() > s.exponent_clamp;
    let u = u_raw.clamp(-s.exponent_clamp, s.exponent_clamp);
    let em = (-u).exp();
    let ep = u.exp();

    // β(ε̄ − μ^S) and β(ε̄ − μ^D) with ε̄ = ε − αVx, μ^{S,D} = ε ± V/2
    let eps_bar = s.epsilon - s.force() * x;
    let arg_s = s.beta * (eps_bar - (s.epsilon + 0.5 * s.bias));
    let arg_d = s.beta * (eps_bar - (s.epsilon - 0.5 * s.bias));
    let fs = fermi_of_argument(arg_s);
    let fs_bar = fermi_of_argument(-arg_s);
    let fd = fermi_of_argument(arg_d);
    let fd_bar = fermi_of_argument(-arg_d);

    let gamma_in = s.tunnel_rate * (em * fs + ep * fd);
    let gamma_out = s.tunnel_rate * (em * fs_bar + ep * fd_bar);

    // df/dx = αVβ f(1−f) for both leads
    let kb = s.force() * s.beta;
    let dfs = kb * fs * fs_bar;
    let dfd = kb * fd * fd_bar;
    let (dem, dep) = if clamped {
        (0.0, 0.0)
    } else {
        (-em / s.lambda, ep / s.lambda)
    };
    let d_in = s.tunnel_rate * (dem * fs + em * dfs + dep * fd + ep * dfd);
    let d_out = s.tunnel_rate * (dem * fs_bar - em * dfs + dep * fd_bar - ep * dfd);

    Rates {
        gamma_in,
        gamma_out,
        d_in,
        d_out,
        clamped,
    }
}

/// ω_l = Δ[2 + cos(2πlb + φ)] for l = 1..N.
pub fn site_frequencies(cp: &ChainParams) -> Vec<f64> {
    (1..=cp.n)
        .map(|l| cp.delta * (2.0 + (2.0 * PI * l as f64 * cp.b + cp.phi).cos()))
        .collect()
}

pub fn omega_matrix(cp: &ChainParams) -> Result<SymTridiagonal, ModelError> {
    let diag = site_frequencies(cp).iter().map(|w| w * w).collect();
    let off = cp.couplings().iter().map(|k| -k).collect();
    Ok(SymTridiagonal::new(diag, off)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalModeBasis {
    /// Rows are the normal-mode vectors: x̄ = O x.
    pub o: DenseMatrix,
    pub omega2: Vec<f64>,
    /// O_l = Σ_k O_lk
    pub row_sums: Vec<f64>,
}

pub fn normal_modes(cp: &ChainParams) -> Result<NormalModeBasis, ModelError> {
    let (omega2, o) = eig_sym_tridiagonal(&omega_matrix(cp)?)?;
    let row_sums = (0..o.rows()).map(|l| o.row(l).iter().sum()).collect();
    Ok(NormalModeBasis { o, omega2, row_sums })
}

/// Per-evaluation diagnostics of a vector field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FieldDiagnostics {
    pub clamped_sites: usize,
}

/// Chain parameters with the per-site quantities precomputed, so the vector
/// field can be evaluated without allocation.
#[derive(Debug, Clone)]
pub struct ChainModel {
    pub shuttle: ShuttleParams,
    pub omega_sq: Vec<f64>,
    pub couplings: Vec<f64>,
}

impl ChainModel {
    pub fn new(cp: &ChainParams) -> Result<Self, ModelError> {
        cp.validate()?;
        Ok(Self {
            shuttle: cp.shuttle,
            omega_sq: site_frequencies(cp).iter().map(|w| w * w).collect(),
            couplings: cp.couplings(),
        })
    }

    /// A lone shuttle at frequency `s.omega`.
    pub fn single(s: &ShuttleParams) -> Result<Self, ModelError> {
        s.validate()?;
        Ok(Self {
            shuttle: *s,
            omega_sq: vec![s.omega * s.omega],
            couplings: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.omega_sq.len()
    }

    /// Flat-layout vector field; `out` must have the length of `state`.
    pub fn field(&self, state: &[f64], out: &mut [f64]) -> FieldDiagnostics {
        let n = self.n();
        let s = &self.shuttle;
        let force = s.force();
        let mut diag = FieldDiagnostics::default();
        for l in 0..n {
            let x = state[3 * l];
            let p = state[3 * l + 1];
            let q = state[3 * l + 2];
            let mut coupling = 0.0;
            if l > 0 {
                coupling += self.couplings[l - 1] * state[3 * (l - 1)];
            }
            if l + 1 < n {
                coupling += self.couplings[l] * state[3 * (l + 1)];
            }
            let r = rates(x, s);
            if r.clamped {
                diag.clamped_sites += 1;
            }
            out[3 * l] = p;
            out[3 * l + 1] = -self.omega_sq[l] * x - s.gamma * p + force * q + coupling;
            out[3 * l + 2] = -r.gamma_out * q + r.gamma_in * (1.0 - q);
        }
        diag
    }

    /// Analytic Jacobian ∂f_i/∂X_j in the flat layout.
    pub fn jacobian(&self, state: &[f64]) -> DenseMatrix {
        let n = self.n();
        let s = &self.shuttle;
        let mut j = DenseMatrix::zeros(3 * n, 3 * n);
        for l in 0..n {
            let (ix, ip, iq) = (3 * l, 3 * l + 1, 3 * l + 2);
            let x = state[ix];
            let q = state[iq];
            j[(ix, ip)] = 1.0;
            j[(ip, ix)] = -self.omega_sq[l];
            j[(ip, ip)] = -s.gamma;
            j[(ip, iq)] = s.force();
            if l > 0 {
                j[(ip, ix - 3)] = self.couplings[l - 1];
            }
            if l + 1 < n {
                j[(ip, ix + 3)] = self.couplings[l];
            }
            let r = rates(x, s);
            j[(iq, ix)] = r.d_in * (1.0 - q) - r.d_out * q;
            j[(iq, iq)] = -(r.gamma_in + r.gamma_out);
        }
        j
    }
}

/// Time derivative of a chain state with open boundaries x_0 = x_{N+1} = 0.
pub fn vector_field_chain(
    state: &ChainState,
    cp: &ChainParams,
) -> Result<(ChainState, FieldDiagnostics), ModelError> {
    let model = ChainModel::new(cp)?;
    if state.len() != cp.n {
        return Err(ModelError::InvalidState(format!(
            "state has {} shuttles, chain has {}",
            state.len(),
            cp.n
        )));
    }
    let flat = state.to_flat();
    let mut out = vec![0.0; flat.len()];
    let diag = model.field(&flat, &mut out);
    Ok((ChainState::from_flat(&out), diag))
}

pub fn jacobian_chain(state: &ChainState, cp: &ChainParams) -> Result<DenseMatrix, ModelError> {
    let model = ChainModel::new(cp)?;
    if state.len() != cp.n {
        return Err(ModelError::InvalidState(format!(
            "state has {} shuttles, chain has {}",
            state.len(),
            cp.n
        )));
    }
    Ok(model.jacobian(&state.to_flat()))
}

/// Collective coordinates x̄ = O x, p̄ = O p, q̄ = O q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectiveState {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl CollectiveState {
    pub fn from_sites(s: &ChainState, basis: &NormalModeBasis) -> Self {
        Self {
            x: basis.o.mul_vec(&s.x),
            p: basis.o.mul_vec(&s.p),
            q: basis.o.mul_vec(&s.q),
        }
    }

    pub fn to_sites(&self, basis: &NormalModeBasis) -> ChainState {
        ChainState {
            x: basis.o.mul_vec_transposed(&self.x),
            p: basis.o.mul_vec_transposed(&self.p),
            q: basis.o.mul_vec_transposed(&self.q),
        }
    }
}

/// Vector field in normal-mode coordinates.
///
/// The mechanical part is diagonal, ṗ̄_l = −Ω_l² x̄_l − γ p̄_l + αV q̄_l. The
/// charge part is the exact image of the site-basis rate equation,
/// q̄̇ = O[Γ_in(x)∘(1 − q) − Γ_out(x)∘q] with x = Oᵀx̄, q = Oᵀq̄, so the modes
/// are coupled only through the position dependence of the rates. When the
/// rates are equal on all sites this reduces to a source term proportional
/// to the row sums O_l.
pub fn vector_field_collective(
    state: &CollectiveState,
    basis: &NormalModeBasis,
    cp: &ChainParams,
) -> Result<(CollectiveState, FieldDiagnostics), ModelError> {
    cp.validate()?;
    let n = basis.omega2.len();
    if state.x.len() != n || state.p.len() != n || state.q.len() != n {
        return Err(ModelError::InvalidState("collective state does not match basis".into()));
    }
    let s = &cp.shuttle;
    let sites = state.to_sites(basis);
    let mut diag = FieldDiagnostics::default();
    let qdot_sites: Vec<f64> = (0..n)
        .map(|l| {
            let r = rates(sites.x[l], s);
            if r.clamped {
                diag.clamped_sites += 1;
            }
            r.gamma_in * (1.0 - sites.q[l]) - r.gamma_out * sites.q[l]
        })
        .collect();
    let out = CollectiveState {
        x: state.p.clone(),
        p: (0..n)
            .map(|l| -basis.omega2[l] * state.x[l] - s.gamma * state.p[l] + s.force() * state.q[l])
            .collect(),
        q: basis.o.mul_vec(&qdot_sites),
    };
    Ok((out, diag))
}

/// Mechanical energy ½pᵀp + ½xᵀωx.
pub fn mechanical_energy(state: &ChainState, cp: &ChainParams) -> Result<f64, ModelError> {
    let w = omega_matrix(cp)?;
    let wx = w.mul_vec(&state.x);
    let kinetic: f64 = state.p.iter().map(|p| p * p).sum();
    let potential: f64 = state.x.iter().zip(&wx).map(|(a, b)| a * b).sum();
    Ok(0.5 * (kinetic + potential))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fermi_symmetry_point() {
        assert_eq!(fermi(0.3, 0.3, 7.0), 0.5);
    }

    #[test]
    fn fermi_far_tail_is_finite() {
        let f = fermi(150.0, 0.0, 1.0);
        assert!(f > 0.0 && f < 1e-60);
        assert_eq!(fermi(-1e4, 0.0, 1.0), 1.0);
    }

    #[test]
    fn site_frequencies_at_two_thirds_pi() {
        let cp = ChainParams::new(3, 1.0, 1.0, 2.0 * PI / 3.0, ShuttleParams::reference(0.0));
        let w = site_frequencies(&cp);
        for (a, b) in w.iter().zip([1.5, 3.0, 1.5]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn clamp_flag() {
        let s = ShuttleParams::reference(1.0);
        assert!(rates(400.0, &s).clamped);
        assert!(!rates(4.0, &s).clamped);
        assert!(rates(-1e6, &s).gamma_in.is_finite());
    }

    #[test]
    fn trimer_validation() {
        let mut cp = ChainParams::reference(0.0);
        cp.n = 25;
        cp.coupling_disorder = vec![0.0; 24];
        let err = cp.validate_trimer().unwrap_err().to_string();
        assert!(err.contains("N mod 3"), "{err}");
    }
}
