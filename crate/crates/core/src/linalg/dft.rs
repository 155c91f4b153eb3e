use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::LinalgError;

/// One bin of a one-sided power spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    /// Cycles per unit time.
    pub frequency: f64,
    pub power: f64,
}

pub const MIN_DFT_SAMPLES: usize = 16;

/// One-sided power spectrum of uniformly sampled real data.
///
/// Bin `k` sits at `k / (n dt)` for `k = 0..=n/2`. Powers are normalised so
/// that they sum to the mean square of the samples (Parseval). No window is
/// applied.
pub fn dft_power(samples: &[f64], dt: f64) -> Result<Vec<SpectralLine>, LinalgError> {
    let n = samples.len();
    if n < MIN_DFT_SAMPLES {
        return Err(LinalgError::InvalidInput(format!(
            "dft_power needs at least {MIN_DFT_SAMPLES} samples, got {n}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LinalgError::InvalidInput(format!("sampling interval must be positive, got {dt}")));
    }
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let nf = n as f64;
    let half = n / 2;
    Ok((0..=half)
        .map(|k| {
            let mut power = buf[k].norm_sqr() / (nf * nf);
            if k != 0 && !(n % 2 == 0 && k == half) {
                power *= 2.0;
            }
            SpectralLine {
                frequency: k as f64 / (nf * dt),
                power,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_short() {
        assert!(dft_power(&[1.0; 15], 0.1).is_err());
    }

    #[test]
    fn constant_signal() {
        let s = dft_power(&[2.0; 32], 0.5).unwrap();
        assert!((s[0].power - 4.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|l| l.power < 1e-24));
        assert_eq!(s.last().unwrap().frequency, 1.0);
    }
}
