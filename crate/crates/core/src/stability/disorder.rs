use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stability_spectrum_with, StabilityOptions, StabilityReport};
use crate::error::StabilityError;
use crate::linalg::eig_sym_tridiagonal;
use crate::model::{omega_matrix, ChainParams, DisorderKind};
use crate::rng::{stream_id, substream, uniform01};
use crate::topology::localization_measure;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderOptions {
    pub kind: DisorderKind,
    /// Reuse one draw per (realization, bond) for every r, scaled by r.
    pub correlated: bool,
    pub stability: StabilityOptions,
}

impl Default for DisorderOptions {
    fn default() -> Self {
        Self {
            kind: DisorderKind::Uniform,
            correlated: false,
            stability: StabilityOptions::default(),
        }
    }
}

/// Bond offsets δg for one realization. Only the inter-trimer C–A bonds
/// (between sites 3j and 3j+1, 1-based) are disordered.
pub fn sample_offsets(
    n: usize,
    r: f64,
    r_index: usize,
    realization: usize,
    seed: u64,
    opts: &DisorderOptions,
) -> Vec<f64> {
    let stream = if opts.correlated {
        stream_id(0, realization as u64)
    } else {
        stream_id(r_index as u64, realization as u64)
    };
    let mut rng = substream(seed, stream);
    let mut out = vec![0.0; n.saturating_sub(1)];
    for bond in (2..out.len()).step_by(3) {
        let u = uniform01(&mut rng);
        out[bond] = match opts.kind {
            DisorderKind::Uniform => r * (2.0 * u - 1.0),
            DisorderKind::TwoPoint => {
                if u < 0.5 {
                    -r
                } else {
                    r
                }
            }
        };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    /// Mean Im z of the unstable edge pairs, per realization.
    pub edge_frequencies: Vec<Option<f64>>,
    pub edge_frequency_mean: f64,
    pub edge_frequency_std: f64,
    /// Open-chain Ω of the most edge-localized state inside the spectrum.
    pub midgap_frequencies: Vec<f64>,
    pub midgap_frequency_mean: f64,
    pub midgap_frequency_std: f64,
    pub bulk_unstable_counts: Vec<usize>,
    pub realizations_with_bulk: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderEnsemble {
    pub r: f64,
    pub realizations: usize,
    pub seed: u64,
    pub offsets: Vec<Vec<f64>>,
    pub reports: Vec<Option<StabilityReport>>,
    pub errors: Vec<Option<String>>,
    /// Ascending open-chain frequencies Ω per realization.
    pub spectra: Vec<Vec<f64>>,
    pub summary: EnsembleSummary,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn open_spectrum(cp: &ChainParams) -> Result<(Vec<f64>, f64), StabilityError> {
    let (vals, o) = eig_sym_tridiagonal(&omega_matrix(cp)?)?;
    let omegas: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut best = (0.0, f64::NAN);
    for (l, &w) in omegas.iter().enumerate() {
        let m = localization_measure(o.row(l)).map_err(|e| StabilityError::InvalidInput(e.to_string()))?;
        let weight = m.left_weight + m.right_weight;
        if weight > best.0 {
            best = (weight, w);
        }
    }
    Ok((omegas, best.1))
}

/// Stability ensembles over coupling disorder on the inter-trimer bonds.
///
/// Realization `j` at `r_values[i]` draws from substream (i, j) of `seed`
/// (or (0, j) in correlated mode); results are assembled by index and are
/// therefore independent of thread scheduling.
pub fn disorder_sweep(
    cp: &ChainParams,
    r_values: &[f64],
    realizations: usize,
    seed: u64,
    opts: &DisorderOptions,
) -> Result<Vec<DisorderEnsemble>, StabilityError> {
    if realizations == 0 {
        return Err(StabilityError::InvalidInput("realizations must be >= 1".into()));
    }
    cp.validate()?;
    let mut out = Vec::with_capacity(r_values.len());
    for (ri, &r) in r_values.iter().enumerate() {
        let runs: Vec<_> = (0..realizations)
            .into_par_iter()
            .map(|j| {
                let offsets = sample_offsets(cp.n, r, ri, j, seed, opts);
                let mut c = cp.clone();
                c.coupling_disorder = offsets.clone();
                let spectrum = open_spectrum(&c);
                let report = stability_spectrum_with(&c, &opts.stability);
                (offsets, spectrum, report)
            })
            .collect();

        let mut ens = DisorderEnsemble {
            r,
            realizations,
            seed,
            offsets: Vec::with_capacity(realizations),
            reports: Vec::with_capacity(realizations),
            errors: Vec::with_capacity(realizations),
            spectra: Vec::with_capacity(realizations),
            summary: EnsembleSummary {
                edge_frequencies: Vec::new(),
                edge_frequency_mean: f64::NAN,
                edge_frequency_std: f64::NAN,
                midgap_frequencies: Vec::new(),
                midgap_frequency_mean: f64::NAN,
                midgap_frequency_std: f64::NAN,
                bulk_unstable_counts: Vec::new(),
                realizations_with_bulk: 0,
                failures: 0,
            },
        };
        for (offsets, spectrum, report) in runs {
            ens.offsets.push(offsets);
            match spectrum {
                Ok((omegas, midgap)) => {
                    ens.spectra.push(omegas);
                    ens.summary.midgap_frequencies.push(midgap);
                }
                Err(_) => {
                    ens.spectra.push(Vec::new());
                    ens.summary.midgap_frequencies.push(f64::NAN);
                }
            }
            match report {
                Ok(rep) => {
                    let edge: Vec<f64> = rep
                        .unstable_pairs()
                        .filter(|m| m.tag.is_edge())
                        .map(|m| m.value.im)
                        .collect();
                    ens.summary
                        .edge_frequencies
                        .push((!edge.is_empty()).then(|| edge.iter().sum::<f64>() / edge.len() as f64));
                    let bulk = rep.bulk_pairs();
                    ens.summary.bulk_unstable_counts.push(bulk);
                    if bulk > 0 {
                        ens.summary.realizations_with_bulk += 1;
                    }
                    ens.reports.push(Some(rep));
                    ens.errors.push(None);
                }
                Err(e) => {
                    ens.summary.edge_frequencies.push(None);
                    ens.summary.bulk_unstable_counts.push(0);
                    ens.summary.failures += 1;
                    ens.reports.push(None);
                    ens.errors.push(Some(e.to_string()));
                }
            }
        }
        let freqs: Vec<f64> = ens.summary.edge_frequencies.iter().flatten().copied().collect();
        (ens.summary.edge_frequency_mean, ens.summary.edge_frequency_std) = mean_std(&freqs);
        let mids: Vec<f64> = ens
            .summary
            .midgap_frequencies
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        (ens.summary.midgap_frequency_mean, ens.summary.midgap_frequency_std) = mean_std(&mids);
        out.push(ens);
    }
    Ok(out)
}
