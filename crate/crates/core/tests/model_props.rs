use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shuttle_core::dynamics::{integrate, IntegrateOptions};
use shuttle_core::model::{
    fermi, mechanical_energy, normal_modes, omega_matrix, rates, site_frequencies, vector_field_chain,
    vector_field_collective, ChainModel, ChainParams, ChainState, CollectiveState, ShuttleParams,
};

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> ChainState {
    ChainState {
        x: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        p: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        q: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    }
}

fn chain(n: usize, phi: f64) -> ChainParams {
    ChainParams::new(n, 1.0, 1.0, phi, ShuttleParams::reference(0.0))
}

#[test]
fn fermi_closed_forms() {
    assert_eq!(fermi(1.0, 1.0, 3.0), 0.5);
    let beta = 4.0;
    let f = fermi(-10.0 / beta, 0.0, beta);
    assert!((f - 1.0 / ((-10f64).exp() + 1.0)).abs() < 1e-15);
    assert!((f - 0.9999546).abs() < 1e-7);
    // 1/(e^150 + 1) = e^-150 to double precision; 10^(-150 log10 e) is an
    // independent route to the same number
    let tail = fermi(150.0 / beta, 0.0, beta);
    let oracle = 10f64.powf(-150.0 * std::f64::consts::LOG10_E);
    assert!(tail > 0.0);
    assert!((tail - oracle).abs() < 1e-12 * oracle, "{tail} vs {oracle}");
    assert!(fermi(1e4, 0.0, 1.0) >= 0.0 && fermi(-1e4, 0.0, 1.0) <= 1.0);
}

#[test]
fn rates_at_origin_and_sum_rule() {
    let s = ShuttleParams::reference(1.0);
    let r = rates(0.0, &s);
    // f^S(0) = 1/(e^-75 + 1), f^D(0) = 1/(e^75 + 1)
    assert!((r.gamma_in - s.tunnel_rate).abs() < 1e-12);
    assert!((r.gamma_out - s.tunnel_rate).abs() < 1e-12);
    for x in [-3.0, -0.7, 0.0, 0.2, 1.5, 5.0] {
        let r = rates(x, &s);
        assert!(r.gamma_in > 0.0 && r.gamma_out > 0.0);
        let sum = 2.0 * s.tunnel_rate * (x / s.lambda).cosh();
        assert!((r.gamma_in + r.gamma_out - sum).abs() < 1e-12 * sum);
    }
    let mut v0 = ShuttleParams::reference(1.0);
    v0.bias = 0.0;
    for x in [-1.0, 0.0, 0.4] {
        let r = rates(x, &v0);
        let expect = v0.tunnel_rate * (x / v0.lambda).cosh();
        assert!((r.gamma_in - expect).abs() < 1e-12 && (r.gamma_out - expect).abs() < 1e-12);
    }
}

#[test]
fn site_frequencies_pattern() {
    let w = site_frequencies(&chain(9, 0.0));
    for (a, b) in w.iter().zip([1.5, 1.5, 3.0]) {
        assert!((a - b).abs() < 1e-14);
    }
    for l in 0..6 {
        assert!((w[l + 3] - w[l]).abs() < 1e-14);
    }
    assert!(w.iter().all(|v| (1.0..=3.0).contains(v)));
}

#[test]
fn omega_matrix_with_disorder() {
    let mut cp = chain(6, 0.3);
    cp.coupling_disorder[2] = 0.1;
    let m = omega_matrix(&cp).unwrap();
    for (i, o) in m.offdiag().iter().enumerate() {
        let expect = if i == 2 { -1.21 } else { -1.0 };
        assert!((o - expect).abs() < 1e-14);
    }
    cp.g = 0.0;
    for (i, o) in omega_matrix(&cp).unwrap().offdiag().iter().enumerate() {
        let expect = if i == 2 { -0.01 } else { 0.0 };
        assert!((o - expect).abs() < 1e-15);
    }
}

#[test]
fn normal_modes_reconstruct() {
    for phi in [0.0, 0.5, 2.0 * PI / 3.0, 4.0] {
        let cp = chain(24, phi);
        let b = normal_modes(&cp).unwrap();
        let w = omega_matrix(&cp).unwrap().to_dense();
        let n = 24;
        let scale = w.max_abs();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n)
                    .map(|k| b.o.row(i)[k] * (0..n).map(|l| w.row(k)[l] * b.o.row(j)[l]).sum::<f64>())
                    .sum();
                let expect = if i == j { b.omega2[i] } else { 0.0 };
                assert!((v - expect).abs() < 1e-10 * scale);
            }
        }
        assert!(b.omega2.windows(2).all(|p| p[0] <= p[1]));
    }
    let mut cp = chain(3, 0.0);
    cp.g = 0.0;
    let b = normal_modes(&cp).unwrap();
    let mut sq: Vec<f64> = site_frequencies(&cp).iter().map(|w| w * w).collect();
    sq.sort_by(f64::total_cmp);
    assert_eq!(b.omega2, sq);
}

#[test]
fn midgap_pair_at_two_thirds_pi() {
    let cp = chain(24, 2.0 * PI / 3.0);
    let b = normal_modes(&cp).unwrap();
    // the pair is the only state between the lower two bands; locate it by
    // its isolation rather than by index
    let gaps: Vec<f64> = b.omega2.windows(2).map(|w| w[1] - w[0]).collect();
    let k = (1..gaps.len() - 1)
        .find(|&k| gaps[k] < 1e-3 && gaps[k - 1] > 0.5 && gaps[k + 1] > 0.5)
        .expect("isolated pair");
    assert!(b.omega2[k + 1].sqrt() - b.omega2[k].sqrt() < 1e-3);
    for k in k..k + 2 {
        let v = b.o.row(k);
        let edge: f64 = v[..3].iter().chain(&v[21..]).map(|c| c * c).sum();
        assert!(edge > 0.9);
    }
}

/// The single-shuttle equations written out directly.
fn single_field(s: &ShuttleParams, x: f64, p: f64, q: f64) -> [f64; 3] {
    let eps_bar = s.epsilon - s.alpha * s.bias * x;
    let f = |mu: f64| 1.0 / ((s.beta * (eps_bar - mu)).exp() + 1.0);
    let (fs, fd) = (f(s.epsilon + s.bias / 2.0), f(s.epsilon - s.bias / 2.0));
    let em = (-x / s.lambda).exp();
    let ep = (x / s.lambda).exp();
    let gin = s.tunnel_rate * (em * fs + ep * fd);
    let gout = s.tunnel_rate * (em * (1.0 - fs) + ep * (1.0 - fd));
    [
        p,
        -s.omega * s.omega * x - s.gamma * p + s.alpha * s.bias * q,
        -gout * q + gin * (1.0 - q),
    ]
}

#[test]
fn single_shuttle_field_matches_direct_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let s = ShuttleParams::reference(rng.gen_range(0.5..3.0));
        let model = ChainModel::single(&s).unwrap();
        let y = [rng.gen_range(-0.5..0.5), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)];
        let mut out = [0.0; 3];
        model.field(&y, &mut out);
        let direct = single_field(&s, y[0], y[1], y[2]);
        for i in 0..3 {
            assert!((out[i] - direct[i]).abs() < 1e-11 * direct[i].abs().max(1.0));
        }
    }
}

#[test]
fn equilibrium_without_bias() {
    let mut cp = chain(6, 0.4);
    cp.shuttle.bias = 0.0;
    let s = ChainState {
        x: vec![0.0; 6],
        p: vec![0.0; 6],
        q: vec![0.5; 6],
    };
    let (f, _) = vector_field_chain(&s, &cp).unwrap();
    assert!(f.to_flat().iter().all(|v| *v == 0.0));
}

/// Largest entry-wise error of the analytic Jacobian against central
/// differences, relative to max(|J_ij|, 1).
fn jacobian_fd_error(model: &ChainModel, y: &[f64]) -> f64 {
    let j = model.jacobian(y);
    let dim = y.len();
    let mut worst = 0.0_f64;
    let mut fp = vec![0.0; dim];
    let mut fm = vec![0.0; dim];
    for c in 0..dim {
        let h = 1e-6 * y[c].abs().max(1.0);
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        yp[c] += h;
        ym[c] -= h;
        model.field(&yp, &mut fp);
        model.field(&ym, &mut fm);
        for r in 0..dim {
            let fd = (fp[r] - fm[r]) / (2.0 * h);
            let a = j.row(r)[c];
            worst = worst.max((a - fd).abs() / a.abs().max(1.0));
        }
    }
    worst
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let mut cp = chain(6, rng.gen_range(0.0..2.0 * PI));
        cp.coupling_disorder[2] = rng.gen_range(-0.3..0.3);
        let model = ChainModel::new(&cp).unwrap();
        let y = random_state(&mut rng, 6).to_flat();
        let err = jacobian_fd_error(&model, &y);
        assert!(err < 1e-6, "relative error {err}");
    }
}

#[test]
fn jacobian_linear_entries_are_exact() {
    let cp = chain(3, 1.0);
    let model = ChainModel::new(&cp).unwrap();
    let y = random_state(&mut ChaCha8Rng::seed_from_u64(1), 3).to_flat();
    let j = model.jacobian(&y);
    for l in 0..3 {
        assert_eq!(j.row(3 * l)[3 * l + 1], 1.0);
        assert_eq!(j.row(3 * l + 1)[3 * l + 2], cp.shuttle.force());
    }
    let mut v0 = cp.clone();
    v0.shuttle.bias = 0.0;
    let j = ChainModel::new(&v0).unwrap().jacobian(&y);
    for l in 0..3 {
        assert_eq!(j.row(3 * l + 1)[3 * l + 2], 0.0);
    }
}

#[test]
fn inversion_commutes_with_field() {
    let cp = chain(24, 2.0 * PI / 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let s = random_state(&mut rng, 24);
        let (f, _) = vector_field_chain(&s, &cp).unwrap();
        let (fr, _) = vector_field_chain(&s.reversed(), &cp).unwrap();
        let a = f.reversed().to_flat();
        let b = fr.to_flat();
        let err = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }
}

#[test]
fn site_and_collective_fields_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in [3, 6, 24] {
        let mut cp = chain(n, rng.gen_range(0.0..2.0 * PI));
        for d in cp.coupling_disorder.iter_mut().skip(2).step_by(3) {
            *d = rng.gen_range(-0.2..0.2);
        }
        let basis = normal_modes(&cp).unwrap();
        for _ in 0..10 {
            let s = random_state(&mut rng, n);
            let (f, _) = vector_field_chain(&s, &cp).unwrap();
            let expect = CollectiveState::from_sites(&f, &basis);
            let (got, _) = vector_field_collective(&CollectiveState::from_sites(&s, &basis), &basis, &cp).unwrap();
            let err = [(&got.x, &expect.x), (&got.p, &expect.p), (&got.q, &expect.q)]
                .iter()
                .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()))
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "N = {n}: {err}");
        }
    }
}

#[test]
fn decoupled_modes_reproduce_single_shuttles() {
    let mut cp = chain(3, 0.7);
    cp.g = 0.0;
    let basis = normal_modes(&cp).unwrap();
    let s = random_state(&mut ChaCha8Rng::seed_from_u64(6), 3);
    let (got, _) = vector_field_collective(&CollectiveState::from_sites(&s, &basis), &basis, &cp).unwrap();
    let sites = got.to_sites(&basis);
    let w = site_frequencies(&cp);
    for l in 0..3 {
        let single = single_field(&ShuttleParams { omega: w[l], ..cp.shuttle }, s.x[l], s.p[l], s.q[l]);
        assert!((sites.p[l] - single[1]).abs() < 1e-11);
        assert!((sites.q[l] - single[2]).abs() < 1e-11);
    }
}

#[test]
fn energy_decreases_without_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let mut cp = chain(6, rng.gen_range(0.0..2.0 * PI));
        cp.shuttle.bias = 0.0;
        let s = random_state(&mut rng, 6);
        let opts = IntegrateOptions {
            tol: 1e-10,
            dt_out: Some(0.05),
            ..IntegrateOptions::default()
        };
        let traj = integrate(&cp, &s, 40.0, &opts).unwrap();
        let e: Vec<f64> = traj.states.iter().map(|st| mechanical_energy(st, &cp).unwrap()).collect();
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + 1e-8 * e[0], "energy rose from {} to {}", w[0], w[1]);
        }
        assert!(e.last().unwrap() < &e[0]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn charges_stay_in_unit_interval(seed in any::<u64>(), phi in 0.0..(2.0 * PI)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cp = chain(6, phi);
        let s = random_state(&mut rng, 6);
        let opts = IntegrateOptions { dt_out: Some(0.1), ..IntegrateOptions::default() };
        let traj = integrate(&cp, &s, 60.0, &opts).unwrap();
        for st in &traj.states {
            prop_assert!(st.q.iter().all(|q| (0.0..=1.0).contains(q)));
        }
        prop_assert!(traj.diagnostics.max_charge_violation <= 1e-9);
    }
}
