//! Bloch bands on the (k, φ) torus, Chern numbers, inversion symmetry and
//! open-chain spectra.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::TopologyError;
use crate::linalg::{eig_hermitian, eig_sym_tridiagonal};
use crate::model::{omega_matrix, ChainParams};

/// Sites per edge window used for localization weights.
pub const EDGE_WINDOW: usize = 3;

/// Unit-cell length q of the modulation ω_l, i.e. the smallest q with
/// q·b integral.
pub fn cell_size(b: f64) -> Result<usize, TopologyError> {
    (1..=64)
        .find(|&q| {
            let qb = q as f64 * b;
            (qb - qb.round()).abs() < 1e-10
        })
        .ok_or_else(|| TopologyError::InvalidInput(format!("b = {b} is not a rational with denominator <= 64")))
}

/// Hermitian Bloch matrix of one unit cell, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochMatrix {
    pub dim: usize,
    pub entries: Vec<Complex64>,
    pub k: f64,
    pub phi: f64,
}

impl BlochMatrix {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }
}

/// Bloch matrix at cell momentum `k`: diagonal ω²_{A,B,C}(φ), intra-cell
/// bonds −g², and the inter-cell C–A bond carrying the phase: row A, column C
/// holds −g² e^{ik} (the C site of the previous cell), row C, column A its
/// conjugate.
pub fn bloch_matrix(k: f64, phi: f64, cp: &ChainParams) -> Result<BlochMatrix, TopologyError> {
    let q = cell_size(cp.b)?;
    let mut cell = cp.clone();
    cell.n = q;
    cell.phi = phi;
    cell.coupling_disorder = vec![0.0; q - 1];
    let w = crate::model::site_frequencies(&cell);
    let g2 = cp.g * cp.g;
    let mut e = vec![Complex64::new(0.0, 0.0); q * q];
    for i in 0..q {
        e[i * q + i] = Complex64::new(w[i] * w[i], 0.0);
    }
    for i in 0..q.saturating_sub(1) {
        e[i * q + i + 1] = Complex64::new(-g2, 0.0);
        e[(i + 1) * q + i] = Complex64::new(-g2, 0.0);
    }
    let hop = Complex64::from_polar(-g2, k);
    if q == 1 {
        e[0] += hop + hop.conj();
    } else {
        e[q - 1] += hop;
        e[(q - 1) * q] += hop.conj();
    }
    Ok(BlochMatrix {
        dim: q,
        entries: e,
        k,
        phi,
    })
}

/// max over k of ‖P ω̃(k, φ) P⁻¹ − ω̃(−k, φ)‖_max with P the cell reversal.
pub fn inversion_check(phi: f64, cp: &ChainParams, k_samples: usize) -> Result<f64, TopologyError> {
    if k_samples < 2 {
        return Err(TopologyError::InvalidInput("inversion_check needs k_samples >= 2".into()));
    }
    let mut worst = 0.0_f64;
    for s in 0..k_samples {
        let k = 2.0 * PI * s as f64 / k_samples as f64;
        let a = bloch_matrix(k, phi, cp)?;
        let b = bloch_matrix(-k, phi, cp)?;
        let q = a.dim;
        for i in 0..q {
            for j in 0..q {
                let pap = a.get(q - 1 - i, q - 1 - j);
                worst = worst.max((pap - b.get(i, j)).norm());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChernResult {
    pub chern: Vec<i64>,
    /// Unrounded plaquette sums per band.
    pub raw: Vec<f64>,
    /// field_strength[band][ik * n_phi + jphi]: Berry phase of the plaquette
    /// with lower-left corner (k_ik, φ_jphi).
    pub field_strength: Vec<Vec<f64>>,
    pub grid: (usize, usize),
    pub max_residual: f64,
}

pub const CHERN_RESIDUAL_LIMIT: f64 = 1e-3;
pub const DEGENERACY_GAP: f64 = 1e-10;

/// Chern numbers of all Bloch bands by the Fukui–Hatsugai–Suzuki
/// link-variable method on an `n_k × n_phi` grid of the (k, φ) torus.
pub fn chern_numbers(cp: &ChainParams, n_k: usize, n_phi: usize) -> Result<ChernResult, TopologyError> {
    chern_numbers_gauged(cp, n_k, n_phi, |_, _, _| 0.0)
}

/// As [`chern_numbers`], with eigenvector `band` at grid point (ik, jphi)
/// multiplied by `exp(i gauge(band, ik, jphi))` before the link products are
/// formed. The result must not depend on `gauge`.
pub fn chern_numbers_gauged<F>(
    cp: &ChainParams,
    n_k: usize,
    n_phi: usize,
    gauge: F,
) -> Result<ChernResult, TopologyError>
where
    F: Fn(usize, usize, usize) -> f64 + Sync,
{
    if n_k < 8 || n_phi < 8 {
        return Err(TopologyError::InvalidInput(format!(
            "Chern grid must be at least 8x8, got {n_k}x{n_phi}"
        )));
    }
    let q = cell_size(cp.b)?;

    let points: Vec<(usize, usize)> = (0..n_k).flat_map(|i| (0..n_phi).map(move |j| (i, j))).collect();
    let eig: Vec<Vec<Vec<Complex64>>> = points
        .par_iter()
        .map(|&(i, j)| {
            let k = 2.0 * PI * i as f64 / n_k as f64;
            let phi = 2.0 * PI * j as f64 / n_phi as f64;
            let h = bloch_matrix(k, phi, cp)?;
            let (vals, mut vecs) = eig_hermitian(q, &h.entries)?;
            for band in 0..q.saturating_sub(1) {
                let gap = vals[band + 1] - vals[band];
                if gap < DEGENERACY_GAP {
                    return Err(TopologyError::Degenerate {
                        band: band + 1,
                        ik: i,
                        jphi: j,
                        gap,
                    });
                }
            }
            for (band, v) in vecs.iter_mut().enumerate() {
                let phase = Complex64::from_polar(1.0, gauge(band, i, j));
                for c in v.iter_mut() {
                    *c *= phase;
                }
            }
            Ok(vecs)
        })
        .collect::<Result<_, TopologyError>>()?;

    let at = |i: usize, j: usize| &eig[(i % n_k) * n_phi + (j % n_phi)];
    let link = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        let s: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
        s / s.norm()
    };

    let mut field_strength = vec![vec![0.0; n_k * n_phi]; q];
    let mut raw = vec![0.0; q];
    for band in 0..q {
        for i in 0..n_k {
            for j in 0..n_phi {
                let u00 = &at(i, j)[band];
                let u10 = &at(i + 1, j)[band];
                let u11 = &at(i + 1, j + 1)[band];
                let u01 = &at(i, j + 1)[band];
                let loop_product = link(u00, u10) * link(u10, u11) * link(u11, u01) * link(u01, u00);
                let f = loop_product.arg();
                field_strength[band][i * n_phi + j] = f;
                raw[band] += f;
            }
        }
        raw[band] /= 2.0 * PI;
    }

    let mut chern = Vec::with_capacity(q);
    let mut max_residual = 0.0_f64;
    for (band, &c) in raw.iter().enumerate() {
        let r = c.round();
        let residual = (c - r).abs();
        max_residual = max_residual.max(residual);
        if residual > CHERN_RESIDUAL_LIMIT {
            return Err(TopologyError::NonInteger {
                band: band + 1,
                value: c,
                residual,
            });
        }
        chern.push(r as i64);
    }
    Ok(ChernResult {
        chern,
        raw,
        field_strength,
        grid: (n_k, n_phi),
        max_residual,
    })
}

/// Band extrema of the closed chain, from the Bloch matrix sampled at
/// `n_k` momenta. Returns (min, max) of Ω² per band.
pub fn bloch_band_ranges(cp: &ChainParams, phi: f64, n_k: usize) -> Result<Vec<(f64, f64)>, TopologyError> {
    let q = cell_size(cp.b)?;
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); q];
    for s in 0..n_k.max(2) {
        let k = 2.0 * PI * s as f64 / n_k.max(2) as f64;
        let (vals, _) = eig_hermitian(q, &bloch_matrix(k, phi, cp)?.entries)?;
        for (r, v) in ranges.iter_mut().zip(vals) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    Ok(ranges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub left_weight: f64,
    pub right_weight: f64,
    pub participation_ratio: f64,
}

/// Squared weight on the first and last [`EDGE_WINDOW`] sites and the
/// participation ratio 1/Σv⁴ of a (re-normalised) mode vector.
pub fn localization_measure(v: &[f64]) -> Result<Localization, TopologyError> {
    let norm2: f64 = v.iter().map(|c| c * c).sum();
    if norm2 == 0.0 || !norm2.is_finite() {
        return Err(TopologyError::InvalidInput("localization of a zero or non-finite vector".into()));
    }
    let w = EDGE_WINDOW.min(v.len());
    let left: f64 = v[..w].iter().map(|c| c * c).sum::<f64>() / norm2;
    let right: f64 = v[v.len() - w..].iter().map(|c| c * c).sum::<f64>() / norm2;
    let p4: f64 = v.iter().map(|c| (c * c / norm2).powi(2)).sum();
    Ok(Localization {
        left_weight: left,
        right_weight: right,
        participation_ratio: 1.0 / p4,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSweep {
    pub phis: Vec<f64>,
    /// bands[i] = ascending Ω at phis[i]
    pub bands: Vec<Vec<f64>>,
    pub left_weights: Vec<Vec<f64>>,
    pub right_weights: Vec<Vec<f64>>,
}

/// Open-chain eigenfrequencies Ω = sqrt(eig ω) and edge weights per φ.
pub fn spectrum_sweep(cp: &ChainParams, phis: &[f64]) -> Result<SpectrumSweep, TopologyError> {
    cp.validate()?;
    let per_phi: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = phis
        .par_iter()
        .map(|&phi| {
            let (vals, o) = eig_sym_tridiagonal(&omega_matrix(&cp.with_phi(phi))?)?;
            if let Some(&bad) = vals.iter().find(|&&v| v < 0.0) {
                return Err(TopologyError::NegativeEigenvalue { phi, value: bad });
            }
            let mut left = Vec::with_capacity(vals.len());
            let mut right = Vec::with_capacity(vals.len());
            for l in 0..vals.len() {
                let m = localization_measure(o.row(l))?;
                left.push(m.left_weight);
                right.push(m.right_weight);
            }
            Ok((vals.iter().map(|v| v.sqrt()).collect(), left, right))
        })
        .collect::<Result<_, TopologyError>>()?;
    let mut sweep = SpectrumSweep {
        phis: phis.to_vec(),
        bands: Vec::with_capacity(phis.len()),
        left_weights: Vec::with_capacity(phis.len()),
        right_weights: Vec::with_capacity(phis.len()),
    };
    for (b, l, r) in per_phi {
        sweep.bands.push(b);
        sweep.left_weights.push(l);
        sweep.right_weights.push(r);
    }
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ShuttleParams;

    fn cp() -> ChainParams {
        ChainParams::new(24, 1.0, 1.0, 0.0, ShuttleParams::reference(0.0))
    }

    #[test]
    fn cell_size_of_one_third() {
        assert_eq!(cell_size(1.0 / 3.0).unwrap(), 3);
        assert_eq!(cell_size(0.25).unwrap(), 4);
        assert!(cell_size(std::f64::consts::FRAC_1_SQRT_2).is_err());
    }

    #[test]
    fn bloch_is_hermitian() {
        let h = bloch_matrix(0.7, 1.1, &cp()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((h.get(i, j) - h.get(j, i).conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn localization_uniform() {
        let v = vec![1.0 / 24f64.sqrt(); 24];
        let m = localization_measure(&v).unwrap();
        assert!((m.left_weight - 0.125).abs() < 1e-14);
        assert!((m.participation_ratio - 24.0).abs() < 1e-10);
        assert!(localization_measure(&[0.0; 4]).is_err());
    }
}
