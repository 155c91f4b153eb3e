use super::{DenseMatrix, LinalgError, SymTridiagonal};

const MAX_SWEEPS: usize = 50;

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit-shift QL.
///
/// Returns ascending eigenvalues and an orthogonal `O` whose rows are the
/// matching eigenvectors, so that `O m Oᵀ = diag(values)`.
pub fn eig_sym_tridiagonal(m: &SymTridiagonal) -> Result<(Vec<f64>, DenseMatrix), LinalgError> {
    let n = m.dim();
    let mut d = m.diag().to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(m.offdiag());
    // columns of z are eigenvectors while iterating
    let mut z = DenseMatrix::identity(n);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut mm = l;
            while mm + 1 < n {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iter += 1;
            if iter > MAX_SWEEPS {
                return Err(LinalgError::NoConvergence {
                    algorithm: "tridiagonal QL",
                    iterations: MAX_SWEEPS,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[mm] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = mm;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let zf = z[(k, i + 1)];
                    let zi = z[(k, i)];
                    z[(k, i + 1)] = s * zi + c * zf;
                    z[(k, i)] = c * zi - s * zf;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut o = DenseMatrix::zeros(n, n);
    for (row, &k) in order.iter().enumerate() {
        // fix the sign so the largest component is positive (reproducible output)
        let mut pivot = 0;
        for j in 0..n {
            if z[(j, k)].abs() > z[(pivot, k)].abs() {
                pivot = j;
            }
        }
        let sign = if z[(pivot, k)] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            o[(row, j)] = sign * z[(j, k)];
        }
    }
    Ok((values, o))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_case_is_identity() {
        let m = SymTridiagonal::new(vec![1.0, 4.0, 9.0], vec![0.0, 0.0]).unwrap();
        let (vals, o) = eig_sym_tridiagonal(&m).unwrap();
        assert_eq!(vals, vec![1.0, 4.0, 9.0]);
        assert_eq!(o, DenseMatrix::identity(3));
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = SymTridiagonal::new(vec![2.0, 2.0], vec![-1.0]).unwrap();
        let (vals, _) = eig_sym_tridiagonal(&m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn single_entry() {
        let m = SymTridiagonal::new(vec![-2.5], vec![]).unwrap();
        let (vals, o) = eig_sym_tridiagonal(&m).unwrap();
        assert_eq!(vals, vec![-2.5]);
        assert_eq!(o[(0, 0)], 1.0);
    }

    #[test]
    fn rejects_malformed() {
        assert!(SymTridiagonal::new(vec![1.0, 2.0], vec![]).is_err());
    }
}
