use num_complex::Complex64;

use super::LinalgError;

const MAX_SWEEPS: usize = 50;

/// Eigen-decomposition of a small complex Hermitian matrix by cyclic Jacobi
/// rotations.
///
/// `a` is row-major `n × n`. Returns ascending eigenvalues and the matching
/// unit eigenvectors (`vectors[k]` belongs to `values[k]`).
pub fn eig_hermitian(
    n: usize,
    a: &[Complex64],
) -> Result<(Vec<f64>, Vec<Vec<Complex64>>), LinalgError> {
    if a.len() != n * n {
        return Err(LinalgError::Dimension(format!(
            "{n}x{n} Hermitian matrix needs {} entries, got {}",
            n * n,
            a.len()
        )));
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..n {
            if (a[i * n + j] - a[j * n + i].conj()).norm() > 1e-12 * scale.max(1.0) {
                return Err(LinalgError::InvalidInput(format!(
                    "matrix is not Hermitian at ({i}, {j})"
                )));
            }
        }
    }

    let mut m = a.to_vec();
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
        m[i * n + i] = Complex64::new(m[i * n + i].re, 0.0);
    }

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].norm_sqr())
            .sum();
        if off.sqrt() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                // make the (p, q) entry real and positive
                let d = (apq / r).conj();
                for i in 0..n {
                    m[i * n + q] *= d;
                    v[i * n + q] *= d;
                }
                for j in 0..n {
                    m[q * n + j] *= d.conj();
                }
                let app = m[p * n + p].re;
                let aqq = m[q * n + q].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let (x, y) = (m[i * n + p], m[i * n + q]);
                    m[i * n + p] = x * c - y * s;
                    m[i * n + q] = x * s + y * c;
                    let (x, y) = (v[i * n + p], v[i * n + q]);
                    v[i * n + p] = x * c - y * s;
                    v[i * n + q] = x * s + y * c;
                }
                for j in 0..n {
                    let (x, y) = (m[p * n + j], m[q * n + j]);
                    m[p * n + j] = x * c - y * s;
                    m[q * n + j] = x * s + y * c;
                }
                m[p * n + q] = Complex64::new(0.0, 0.0);
                m[q * n + p] = Complex64::new(0.0, 0.0);
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            algorithm: "Hermitian Jacobi",
            iterations: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].re.total_cmp(&m[j * n + j].re));
    let values = order.iter().map(|&k| m[k * n + k].re).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i * n + k]).collect())
        .collect();
    Ok((values, vectors))
}
