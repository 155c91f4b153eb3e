use num_complex::Complex64;

use super::{ComplexLu, ComplexSpectrum, DenseMatrix, LinalgError};

const MAX_ITERATIONS_PER_EIGENVALUE: usize = 100;

/// Eigenvalues (and optionally right eigenvectors) of a real square matrix.
///
/// The matrix is balanced, reduced to upper Hessenberg form by Householder
/// reflections and then iterated with the Francis double-shift QR step.
/// Eigenvectors are recovered by inverse iteration on the original matrix.
/// Values are sorted by real part descending, then imaginary part descending;
/// complex eigenvalues come out as exact conjugate pairs.
pub fn eig_general(m: &DenseMatrix, want_vectors: bool) -> Result<ComplexSpectrum, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::Dimension(format!(
            "eig_general needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(ComplexSpectrum {
            values: Vec::new(),
            vectors: want_vectors.then(Vec::new),
        });
    }

    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    balance(&mut a);
    hessenberg(&mut a);
    let mut values = hqr(a)?;

    values.sort_by(|x, y| {
        y.re.partial_cmp(&x.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y.im.partial_cmp(&x.im).unwrap_or(std::cmp::Ordering::Equal))
    });

    let vectors = if want_vectors {
        let mut vecs: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        for (i, &z) in values.iter().enumerate() {
            if z.im < 0.0 {
                // partner with +im sits directly before it after sorting
                let partner = i
                    .checked_sub(1)
                    .filter(|&j| values[j] == z.conj())
                    .map(|j| vecs[j].iter().map(|c: &Complex64| c.conj()).collect());
                match partner {
                    Some(v) => vecs.push(v),
                    None => vecs.push(eigenvector_for(m, z)?),
                }
            } else {
                vecs.push(eigenvector_for(m, z)?);
            }
        }
        Some(vecs)
    } else {
        None
    };

    Ok(ComplexSpectrum { values, vectors })
}

/// Right eigenvector of `m` for the (approximate) eigenvalue `z` by inverse
/// iteration, normalised to unit Euclidean norm with its largest component
/// real and positive.
pub fn eigenvector_for(m: &DenseMatrix, z: Complex64) -> Result<Vec<Complex64>, LinalgError> {
    let n = m.rows();
    let norm = m.norm_inf().max(f64::MIN_POSITIVE);
    let shift = z + Complex64::new(norm * 1e-13, norm * 1e-13);
    let mut shifted: Vec<Complex64> = m.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for i in 0..n {
        shifted[i * n + i] -= shift;
    }
    let lu = ComplexLu::factor(n, shifted);

    // deterministic, non-special starting vector
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + 0.37 * ((i * 7 + 3) % 11) as f64, 0.1 * (i % 5) as f64))
        .collect();
    normalize(&mut v);

    let tol = 1e-10 * norm.max(z.norm());
    for _ in 0..8 {
        let mut w = lu.solve(&v);
        if w.iter().any(|c| !c.is_finite()) {
            return Err(LinalgError::NoConvergence {
                algorithm: "inverse iteration",
                iterations: 0,
            });
        }
        normalize(&mut w);
        v = w;
        if residual(m, z, &v) < tol {
            break;
        }
    }
    fix_phase(&mut v);
    Ok(v)
}

fn residual(m: &DenseMatrix, z: Complex64, v: &[Complex64]) -> f64 {
    let n = m.rows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        let row = m.row(i);
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, c) in row.iter().zip(v) {
            acc += c * *a;
        }
        acc -= z * v[i];
        worst = worst.max(acc.norm());
    }
    worst
}

fn normalize(v: &mut [Complex64]) {
    let s = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if s > 0.0 {
        for c in v.iter_mut() {
            *c /= s;
        }
    }
}

fn fix_phase(v: &mut [Complex64]) {
    let mut best = 0;
    for (i, c) in v.iter().enumerate() {
        if c.norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let pivot = v[best];
    if pivot.norm() > 0.0 {
        let phase = pivot.conj() / pivot.norm();
        for c in v.iter_mut() {
            *c *= phase;
        }
    }
}

/// Diagonal similarity scaling by powers of two (Parlett–Reinsch).
fn balance(a: &mut [Vec<f64>]) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let n = a.len();
    loop {
        let mut done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[i][j] *= g;
                    }
                    for row in a.iter_mut() {
                        row[i] *= f;
                    }
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Householder reduction to upper Hessenberg form (entries below the
/// subdiagonal are set to zero).
fn hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let scale: f64 = (k + 1..n).map(|i| a[i][k].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut v: Vec<f64> = (k + 1..n).map(|i| a[i][k] / scale).collect();
        let h: f64 = v.iter().map(|x| x * x).sum();
        let g = if v[0] > 0.0 { -h.sqrt() } else { h.sqrt() };
        let hh = h - v[0] * g;
        v[0] -= g;
        // P = I − v vᵀ / hh
        for j in 0..n {
            let s: f64 = (0..v.len()).map(|t| v[t] * a[k + 1 + t][j]).sum::<f64>() / hh;
            for t in 0..v.len() {
                a[k + 1 + t][j] -= s * v[t];
            }
        }
        for row in a.iter_mut() {
            let s: f64 = (0..v.len()).map(|t| v[t] * row[k + 1 + t]).sum::<f64>() / hh;
            for t in 0..v.len() {
                row[k + 1 + t] -= s * v[t];
            }
        }
        a[k + 1][k] = scale * g;
        for row in a.iter_mut().skip(k + 2) {
            row[k] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (destroys `h`).
fn hqr(h: Vec<Vec<f64>>) -> Result<Vec<Complex64>, LinalgError> {
    let n = h.len();
    // 1-based working copy keeps the classic index arithmetic readable
    let mut a = vec![vec![0.0_f64; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = h[i][j];
        }
    }
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }

    let mut nn = n as isize;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() <= f64::EPSILON * s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
            } else {
                let mut y = a[nu - 1][nu - 1];
                let mut w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nu - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        wr[nu - 1] = x + z;
                        wr[nu] = x + z;
                        if z != 0.0 {
                            wr[nu] = x - w / z;
                        }
                        wi[nu - 1] = 0.0;
                        wi[nu] = 0.0;
                    } else {
                        wr[nu - 1] = x + p;
                        wr[nu] = x + p;
                        wi[nu - 1] = z;
                        wi[nu] = -z;
                    }
                    nn -= 2;
                } else {
                    if its >= MAX_ITERATIONS_PER_EIGENVALUE {
                        return Err(LinalgError::NoConvergence {
                            algorithm: "Francis QR",
                            iterations: its,
                        });
                    }
                    if its > 0 && its % 10 == 0 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nu {
                            a[i][i] -= x;
                        }
                        let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let (mut p, mut q, mut r);
                    let mut m = nu - 2;
                    loop {
                        let z = a[m][m];
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - rr - ss;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u <= f64::EPSILON * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nu {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nu - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            let z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                let mut pp = a[k][j] + q * a[k + 1][j];
                                if k != nu - 1 {
                                    pp += r * a[k + 2][j];
                                    a[k + 2][j] -= pp * z;
                                }
                                a[k + 1][j] -= pp * y;
                                a[k][j] -= pp * x;
                            }
                            let mmin = nu.min(k + 3);
                            for i in l..=mmin {
                                let mut pp = x * a[i][k] + y * a[i][k + 1];
                                if k != nu - 1 {
                                    pp += z * a[i][k + 2];
                                    a[i][k + 2] -= pp * r;
                                }
                                a[i][k + 1] -= pp * q;
                                a[i][k] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 1 || l as isize >= nn - 1 {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn rotation_generator() {
        let s = eig_general(&mat(&[vec![0.0, 1.0], vec![-1.0, 0.0]]), true).unwrap();
        assert_eq!(s.values[0], Complex64::new(0.0, 1.0));
        assert_eq!(s.values[1], Complex64::new(0.0, -1.0));
    }

    #[test]
    fn diagonal() {
        let s = eig_general(&mat(&[vec![2.0, 0.0], vec![0.0, 3.0]]), false).unwrap();
        assert_eq!(s.values, vec![Complex64::new(3.0, 0.0), Complex64::new(2.0, 0.0)]);
    }

    #[test]
    fn companion_roots() {
        // roots 1, 2, 3, 4
        let c = mat(&[
            vec![10.0, -35.0, 50.0, -24.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ]);
        let s = eig_general(&c, true).unwrap();
        for (z, want) in s.values.iter().zip([4.0, 3.0, 2.0, 1.0]) {
            assert!((z.re - want).abs() < 1e-10 && z.im == 0.0, "{z}");
        }
    }

    #[test]
    fn rejects_rectangular() {
        assert!(eig_general(&DenseMatrix::zeros(2, 3), false).is_err());
    }
}
