//! Run configuration: TOML with one section per experiment.
//!
//! Every key is optional in the input; missing keys take the value of the
//! selected preset. The resolved configuration written next to the outputs
//! spells out every value, so feeding it back reproduces the run.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shuttle_core::model::{
    ChainParams, DisorderKind, ShuttleParams, CALIBRATED_DRIVE, CALIBRATED_GAMMA, DEFAULT_EXPONENT_CLAMP,
    REFERENCE_ALPHA_LAMBDA, REFERENCE_BETA_V,
};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate key `{key}` at line {second} (first defined at line {first})")]
    DuplicateKey { key: String, first: usize, second: usize },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// N = 24, βV = 150, αλ = 0.06, Δ/g = 1, Γ/γ = 1 with the calibrated drive
    /// and friction.
    #[default]
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Spectrum,
    Chern,
    Simulate,
    Stability,
    Disorder,
    Calibrate,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Chern => "chern",
            Experiment::Simulate => "simulate",
            Experiment::Stability => "stability",
            Experiment::Disorder => "disorder",
            Experiment::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub n: usize,
    /// Δ/g
    pub delta: f64,
    pub g: f64,
    pub b: f64,
    pub phi_over_pi: f64,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            n: 24,
            delta: 1.0,
            g: 1.0,
            b: 1.0 / 3.0,
            phi_over_pi: 2.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShuttleSection {
    /// αV/(g²λ)
    pub drive: f64,
    /// γ/g
    pub gamma: f64,
    /// Γ/γ
    pub tunnel_ratio: f64,
    pub beta_v: f64,
    pub alpha_lambda: f64,
    pub epsilon: f64,
    pub exponent_clamp: f64,
}

impl Default for ShuttleSection {
    fn default() -> Self {
        Self {
            drive: CALIBRATED_DRIVE,
            gamma: CALIBRATED_GAMMA,
            tunnel_ratio: 1.0,
            beta_v: REFERENCE_BETA_V,
            alpha_lambda: REFERENCE_ALPHA_LAMBDA,
            epsilon: 0.0,
            exponent_clamp: DEFAULT_EXPONENT_CLAMP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub phi_start_over_pi: f64,
    pub phi_end_over_pi: f64,
    pub phi_points: usize,
    /// Momenta per Bloch band range.
    pub bloch_k_points: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            phi_start_over_pi: 0.0,
            phi_end_over_pi: 2.0,
            phi_points: 200,
            bloch_k_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChernSection {
    pub n_k: usize,
    pub n_phi: usize,
}

impl Default for ChernSection {
    fn default() -> Self {
        Self { n_k: 64, n_phi: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    Symmetric,
    Antisymmetric,
    Random,
    NearFixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSpec {
    None,
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub t_end: f64,
    pub tol: f64,
    pub transient_fraction: f64,
    /// Output interval; 0 selects 2π/(40 Ω_top) and is replaced by the
    /// computed value in the resolved config.
    pub dt_out: f64,
    pub initial: InitialSpec,
    pub amplitude: f64,
    /// Every n-th output sample is written to the trajectory CSV.
    pub csv_stride: usize,
    pub quiescence: f64,
    pub window: WindowSpec,
    pub max_steps: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            t_end: 3000.0,
            tol: 1e-8,
            transient_fraction: 0.6,
            dt_out: 0.0,
            initial: InitialSpec::Random,
            amplitude: 0.05,
            csv_stride: 10,
            quiescence: 1e-3,
            window: WindowSpec::None,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    pub phi_start_over_pi: f64,
    pub phi_end_over_pi: f64,
    pub phi_points: usize,
    pub edge_threshold: f64,
    pub single_omega_min: f64,
    pub single_omega_max: f64,
    pub single_omega_points: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            phi_start_over_pi: 0.0,
            phi_end_over_pi: 4.0 / 3.0,
            phi_points: 241,
            edge_threshold: 0.7,
            single_omega_min: 0.2,
            single_omega_max: 4.0,
            single_omega_points: 381,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderSpec {
    Uniform,
    TwoPoint,
}

impl From<DisorderSpec> for DisorderKind {
    fn from(d: DisorderSpec) -> Self {
        match d {
            DisorderSpec::Uniform => DisorderKind::Uniform,
            DisorderSpec::TwoPoint => DisorderKind::TwoPoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisorderSection {
    pub r_values: Vec<f64>,
    pub realizations: usize,
    pub kind: DisorderSpec,
    /// Reuse one draw per realization across all r (scaled by r).
    pub correlated: bool,
}

impl Default for DisorderSection {
    fn default() -> Self {
        Self {
            r_values: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            realizations: 30,
            kind: DisorderSpec::Uniform,
            correlated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    pub window_lo: f64,
    pub window_hi: f64,
    pub right_onset_over_pi: f64,
    pub left_onset_over_pi: f64,
    pub omega_tolerance: f64,
    pub phi_tolerance_over_pi: f64,
    pub initial_drive: f64,
    pub initial_gamma: f64,
    pub max_iterations: usize,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            window_lo: 0.9,
            window_hi: 2.3,
            right_onset_over_pi: 0.41,
            left_onset_over_pi: 0.58,
            omega_tolerance: 0.1,
            phi_tolerance_over_pi: 0.02,
            initial_drive: 8.0,
            initial_gamma: 0.5,
            max_iterations: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub preset: Preset,
    /// Filled in from the subcommand; a config that names a different
    /// experiment is rejected.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub chain: ChainSection,
    pub shuttle: ShuttleSection,
    pub spectrum: SpectrumSection,
    pub chern: ChernSection,
    pub simulate: SimulateSection,
    pub stability: StabilitySection,
    pub disorder: DisorderSection,
    pub calibrate: CalibrateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Reference)
    }
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Reference => Self {
                schema_version: SCHEMA_VERSION,
                preset: Preset::Reference,
                experiment: None,
                seed: 0,
                chain: ChainSection::default(),
                shuttle: ShuttleSection::default(),
                spectrum: SpectrumSection::default(),
                chern: ChernSection::default(),
                simulate: SimulateSection::default(),
                stability: StabilitySection::default(),
                disorder: DisorderSection::default(),
                calibrate: CalibrateSection::default(),
            },
        }
    }

    pub fn shuttle_params(&self, omega: f64) -> ShuttleParams {
        let s = &self.shuttle;
        let mut p = ShuttleParams::from_ratios(
            omega,
            s.drive,
            s.gamma,
            s.gamma * s.tunnel_ratio,
            s.beta_v,
            s.alpha_lambda,
        );
        p.epsilon = s.epsilon;
        p.exponent_clamp = s.exponent_clamp;
        p
    }

    pub fn chain_params(&self) -> ChainParams {
        let c = &self.chain;
        let mut cp = ChainParams::new(
            c.n,
            c.delta,
            c.g,
            c.phi_over_pi * std::f64::consts::PI,
            self.shuttle_params(0.0),
        );
        cp.b = c.b;
        cp
    }

    /// Range and type checks that serde cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must not exceed 2^63 - 1"));
        }
        let c = &self.chain;
        if c.n < 3 || c.n % 3 != 0 {
            return Err(invalid(
                "chain.n",
                format!("N mod 3 must be 0 (trimer chain) and N >= 3, got N = {}", c.n),
            ));
        }
        positive("chain.delta", c.delta)?;
        positive("chain.g", c.g)?;
        if !(c.b > 0.0 && c.b < 1.0) {
            return Err(invalid("chain.b", format!("must lie in (0, 1), got {}", c.b)));
        }
        finite("chain.phi_over_pi", c.phi_over_pi)?;

        let s = &self.shuttle;
        if !(s.drive >= 0.0 && s.drive.is_finite()) {
            return Err(invalid("shuttle.drive", format!("must be finite and >= 0, got {}", s.drive)));
        }
        positive("shuttle.gamma", s.gamma)?;
        positive("shuttle.tunnel_ratio", s.tunnel_ratio)?;
        positive("shuttle.beta_v", s.beta_v)?;
        positive("shuttle.alpha_lambda", s.alpha_lambda)?;
        finite("shuttle.epsilon", s.epsilon)?;
        positive("shuttle.exponent_clamp", s.exponent_clamp)?;

        let sp = &self.spectrum;
        finite("spectrum.phi_start_over_pi", sp.phi_start_over_pi)?;
        finite("spectrum.phi_end_over_pi", sp.phi_end_over_pi)?;
        at_least("spectrum.phi_points", sp.phi_points, 1)?;
        at_least("spectrum.bloch_k_points", sp.bloch_k_points, 2)?;

        at_least("chern.n_k", self.chern.n_k, 8)?;
        at_least("chern.n_phi", self.chern.n_phi, 8)?;

        let sim = &self.simulate;
        positive("simulate.t_end", sim.t_end)?;
        if !(1e-12..=1e-4).contains(&sim.tol) {
            return Err(invalid("simulate.tol", format!("must lie in [1e-12, 1e-4], got {}", sim.tol)));
        }
        if !(0.0..1.0).contains(&sim.transient_fraction) {
            return Err(invalid(
                "simulate.transient_fraction",
                format!("must lie in [0, 1), got {}", sim.transient_fraction),
            ));
        }
        if !(sim.dt_out >= 0.0 && sim.dt_out.is_finite()) {
            return Err(invalid("simulate.dt_out", "must be finite and >= 0 (0 selects the default)"));
        }
        if !(sim.amplitude >= 0.0 && sim.amplitude.is_finite()) {
            return Err(invalid("simulate.amplitude", "must be finite and >= 0"));
        }
        at_least("simulate.csv_stride", sim.csv_stride, 1)?;
        positive("simulate.quiescence", sim.quiescence)?;
        at_least("simulate.max_steps", sim.max_steps, 1)?;

        let st = &self.stability;
        finite("stability.phi_start_over_pi", st.phi_start_over_pi)?;
        finite("stability.phi_end_over_pi", st.phi_end_over_pi)?;
        at_least("stability.phi_points", st.phi_points, 1)?;
        if !(st.edge_threshold > 0.0 && st.edge_threshold < 1.0) {
            return Err(invalid("stability.edge_threshold", "must lie in (0, 1)"));
        }
        positive("stability.single_omega_min", st.single_omega_min)?;
        if !(st.single_omega_max > st.single_omega_min && st.single_omega_max.is_finite()) {
            return Err(invalid("stability.single_omega_max", "must exceed single_omega_min"));
        }
        at_least("stability.single_omega_points", st.single_omega_points, 2)?;

        let d = &self.disorder;
        if d.r_values.is_empty() {
            return Err(invalid("disorder.r_values", "needs at least one value"));
        }
        if let Some(r) = d.r_values.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(invalid("disorder.r_values", format!("values must be finite and >= 0, got {r}")));
        }
        at_least("disorder.realizations", d.realizations, 1)?;

        let cal = &self.calibrate;
        positive("calibrate.window_lo", cal.window_lo)?;
        if !(cal.window_hi > cal.window_lo && cal.window_hi.is_finite()) {
            return Err(invalid("calibrate.window_hi", "must exceed window_lo"));
        }
        positive("calibrate.right_onset_over_pi", cal.right_onset_over_pi)?;
        positive("calibrate.left_onset_over_pi", cal.left_onset_over_pi)?;
        positive("calibrate.omega_tolerance", cal.omega_tolerance)?;
        positive("calibrate.phi_tolerance_over_pi", cal.phi_tolerance_over_pi)?;
        positive("calibrate.initial_drive", cal.initial_drive)?;
        positive("calibrate.initial_gamma", cal.initial_gamma)?;
        at_least("calibrate.max_iterations", cal.max_iterations, 1)?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn finite(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite, got {v}")))
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn at_least(field: &'static str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(invalid(field, format!("must be at least {min}, got {v}")))
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Strip a trailing comment, ignoring `#` inside quoted strings.
fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    for (i, ch) in line.char_indices() {
        match (quote, ch) {
            (None, '"' | '\'') => quote = Some(ch),
            (Some(q), c) if c == q => quote = None,
            (None, '#') => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Report the first key (or table header) defined twice, with both line
/// numbers. Keys inside multi-line arrays are skipped.
fn check_duplicates(text: &str) -> Result<(), ConfigError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut table = String::new();
    let mut depth = 0i32;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if depth > 0 {
            depth += line.matches('[').count() as i32 - line.matches(']').count() as i32;
            continue;
        }
        if line.starts_with('[') {
            let name = line.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            let full = format!("[{name}]");
            if let Some(&first) = seen.get(&full) {
                return Err(ConfigError::DuplicateKey {
                    key: full,
                    first,
                    second: lineno,
                });
            }
            seen.insert(full, lineno);
            table = name;
            continue;
        }
        let Some((key, value)) = line.split_once('=') else { continue };
        let key = key.trim().trim_matches('"');
        let full = if table.is_empty() { key.to_string() } else { format!("{table}.{key}") };
        if let Some(&first) = seen.get(&full) {
            return Err(ConfigError::DuplicateKey {
                key: full,
                first,
                second: lineno,
            });
        }
        seen.insert(full, lineno);
        depth = value.matches('[').count() as i32 - value.matches(']').count() as i32;
    }
    Ok(())
}

/// Parse and validate config text.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    check_duplicates(text)?;
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_preset() {
        assert_eq!(parse_config_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn comments_do_not_hide_keys() {
        let err = parse_config_str("seed = 1 # first\nseed = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateKey { first: 1, second: 2, .. }));
        assert!(parse_config_str("[chain]\nn = 24 # n = 25\n").is_ok());
    }

    #[test]
    fn multiline_arrays() {
        let text = "[disorder]\nr_values = [\n  0.1,\n  0.2,\n]\nrealizations = 3\n";
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.disorder.r_values, vec![0.1, 0.2]);
    }

    #[test]
    fn parse_error_has_location() {
        match parse_config_str("[chain]\nn = \"x\"\n").unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }
}
