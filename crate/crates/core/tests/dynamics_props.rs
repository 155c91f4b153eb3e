use std::f64::consts::PI;

use shuttle_core::dynamics::{
    integrate, integrate_model, make_initial, phase_difference_over, simulate, steady_stats, AnalysisOptions,
    InitialKind, IntegrateOptions, IntegrationDiagnostics, SyncClass, Trajectory,
};
use shuttle_core::model::{ChainModel, ChainParams, ChainState, ShuttleParams};

fn tight(dt_out: f64) -> IntegrateOptions {
    IntegrateOptions {
        tol: 1e-11,
        dt_out: Some(dt_out),
        ..IntegrateOptions::default()
    }
}

/// A model with tunnelling and bias switched off. Validation rejects Γ = 0,
/// so the fields are filled in directly.
fn mechanical_model(omega_sq: Vec<f64>, couplings: Vec<f64>, gamma: f64) -> ChainModel {
    let mut shuttle = ShuttleParams::reference(1.0);
    shuttle.bias = 0.0;
    shuttle.tunnel_rate = 0.0;
    shuttle.gamma = gamma;
    ChainModel {
        shuttle,
        omega_sq,
        couplings,
    }
}

#[test]
fn damped_oscillator_matches_closed_form() {
    let (w0, gamma) = (1.3_f64, 0.05);
    let model = mechanical_model(vec![w0 * w0], vec![], gamma);
    let (x0, p0) = (0.4, -0.2);
    let t_end = 50.0 * 2.0 * PI / w0;
    let traj = integrate_model(&model, &[x0, p0, 0.3], t_end, 0.1, &tight(0.1)).unwrap();
    let wd = (w0 * w0 - gamma * gamma / 4.0).sqrt();
    let b = (p0 + gamma / 2.0 * x0) / wd;
    let mut worst = 0.0_f64;
    for (t, s) in traj.t.iter().zip(&traj.states) {
        let x = (-gamma * t / 2.0).exp() * (x0 * (wd * t).cos() + b * (wd * t).sin());
        worst = worst.max((s.x[0] - x).abs());
        assert_eq!(s.q[0], 0.3);
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn coupled_pair_exchanges_energy_as_predicted() {
    let (w2, c) = (2.0, 0.3);
    let model = mechanical_model(vec![w2, w2], vec![c], 0.0);
    let (ws, wa) = ((w2 - c).sqrt(), (w2 + c).sqrt());
    let t_end = 50.0 * 2.0 * PI / ws;
    let traj = integrate_model(&model, &[1.0, 0.0, 0.5, 0.0, 0.0, 0.5], t_end, 0.25, &tight(0.25)).unwrap();
    let mut worst = 0.0_f64;
    for (t, s) in traj.t.iter().zip(&traj.states) {
        let x1 = 0.5 * ((ws * t).cos() + (wa * t).cos());
        let x2 = 0.5 * ((ws * t).cos() - (wa * t).cos());
        worst = worst.max((s.x[0] - x1).abs()).max((s.x[1] - x2).abs());
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn unbiased_chain_relaxes() {
    let mut cp = ChainParams::reference(1.0);
    cp.n = 6;
    cp.coupling_disorder = vec![0.0; 5];
    cp.shuttle.bias = 0.0;
    let s = ChainState {
        x: vec![0.3, -0.2, 0.1, 0.0, 0.5, -0.4],
        p: vec![0.1; 6],
        q: vec![0.9, 0.1, 0.5, 0.5, 0.2, 0.7],
    };
    let traj = integrate(&cp, &s, 120.0, &tight(0.5)).unwrap();
    let last = traj.states.last().unwrap();
    let pn = last.p.iter().map(|p| p * p).sum::<f64>().sqrt();
    assert!(pn < 1e-6, "{pn}");
    assert!(last.q.iter().all(|q| (q - 0.5).abs() < 1e-6));
}

#[test]
fn lone_shuttle_limit_cycle_is_stationary() {
    let mut cp = ChainParams::reference(0.0);
    cp.n = 1;
    cp.coupling_disorder.clear();
    cp.shuttle.omega = 1.5;
    let s = ChainState {
        x: vec![0.05],
        p: vec![0.0],
        q: vec![0.5],
    };
    let traj = integrate(&cp, &s, 3000.0, &IntegrateOptions::default()).unwrap();
    let w = traj.analysis_window();
    let half = w.len() / 2;
    let rms = |s: &[ChainState]| {
        let m = s.iter().map(|v| v.x[0]).sum::<f64>() / s.len() as f64;
        (s.iter().map(|v| (v.x[0] - m).powi(2)).sum::<f64>() / s.len() as f64).sqrt()
    };
    let (a, b) = (rms(&w[..half]), rms(&w[half..]));
    assert!(a > 1e-2, "no limit cycle: {a}");
    assert!((a - b).abs() < 0.01 * a, "{a} vs {b}");
}

fn synthetic(signals: &[&dyn Fn(f64) -> f64], dt: f64, len: usize) -> Trajectory {
    let t: Vec<f64> = (0..len).map(|i| i as f64 * dt).collect();
    let states = t
        .iter()
        .map(|&ti| ChainState {
            x: signals.iter().map(|f| f(ti)).collect(),
            p: vec![0.0; signals.len()],
            q: vec![0.5; signals.len()],
        })
        .collect();
    Trajectory {
        t,
        states,
        dt_out: dt,
        transient_cut: 0,
        diagnostics: IntegrationDiagnostics::default(),
    }
}

#[test]
fn steady_stats_on_synthetic_signals() {
    let w = 1.7;
    let traj = synthetic(
        &[
            &|t: f64| 0.2 + 0.1 * (w * t).sin(),
            &|t: f64| 0.1 * (w * t + PI / 3.0).sin(),
            &|_| 0.7,
        ],
        0.05,
        8000,
    );
    let st = steady_stats(&traj, 0, &AnalysisOptions::default(), 1.0).unwrap();
    let [a, b, c] = [st.per_shuttle[0], st.per_shuttle[1], st.per_shuttle[2]];
    // quadratic peak refinement on a rectangular window is good to a
    // fraction of a bin
    let bin = 2.0 * PI / st.window_length;
    assert!((a.frequency - w).abs() < 0.25 * bin, "{}", a.frequency);
    assert!((a.mean_x - 0.2).abs() < 1e-3);
    assert!((a.amplitude_x - 0.1 / 2f64.sqrt()).abs() < 1e-3);
    assert!((b.phase - PI / 3.0).abs() < 0.01, "{}", b.phase);
    assert_eq!(c.frequency, 0.0);
    assert!(c.amplitude_x < 1e-12);
    assert!((c.mean_x - 0.7).abs() < 1e-12);
    // shuttle 0 and its mirror 2: the mirror is at rest, the pair 0/1 is not mirrored
    assert!((st.mirror_phase[1]).abs() < 1e-12);
}

#[test]
fn too_short_window_is_rejected() {
    let traj = synthetic(&[&|t: f64| (0.1 * t).sin()], 0.5, 400);
    assert!(steady_stats(&traj, 0, &AnalysisOptions::default(), 1.0).is_err());
}

#[test]
fn initial_states_have_exact_mirror_structure() {
    let cp = ChainParams::reference(2.0 * PI / 3.0);
    let base = make_initial(&cp, InitialKind::Symmetric { amplitude: 0.0 }).unwrap();
    let sym = make_initial(&cp, InitialKind::Symmetric { amplitude: 0.1 }).unwrap();
    let anti = make_initial(&cp, InitialKind::Antisymmetric { amplitude: 0.1 }).unwrap();
    assert_eq!(sym.reversed(), sym);
    assert_eq!(base.reversed(), base);
    for l in 0..24 {
        let m = 23 - l;
        assert!((anti.x[l] - base.x[l] + anti.x[m] - base.x[m]).abs() < 1e-15);
    }
    for (l, d) in [0.1, 0.05, 0.025].into_iter().enumerate() {
        assert!((sym.x[l] - base.x[l] - d).abs() < 1e-15);
    }
    assert_eq!(sym.x[3], base.x[3]);
    let r1 = make_initial(&cp, InitialKind::Random { seed: 3, amplitude: 0.05 }).unwrap();
    let r2 = make_initial(&cp, InitialKind::Random { seed: 3, amplitude: 0.05 }).unwrap();
    assert_eq!(r1, r2);
    assert!(r1.x.iter().zip(&base.x).all(|(a, b)| (a - b).abs() <= 0.05));
}

#[test]
fn synchronized_edges_stay_phase_locked() {
    let cp = ChainParams::reference(2.0 * PI / 3.0);
    let init = make_initial(&cp, InitialKind::Random { seed: 7, amplitude: 0.05 }).unwrap();
    let sim = simulate(&cp, &init, 3000.0, &IntegrateOptions::default(), &AnalysisOptions::default()).unwrap();
    assert_eq!(sim.report.class, SyncClass::BothSynchronized);
    let traj = &sim.trajectory;
    let w = sim.report.left_frequency.unwrap();
    let block = (10.0 * 2.0 * PI / w / traj.dt_out).round() as usize;
    let end = traj.t.len();
    let late = phase_difference_over(traj, 0, 23, w, end - block..end);
    let earlier = phase_difference_over(traj, 0, 23, w, end - 2 * block..end - block);
    let drift = (late - earlier + PI).rem_euclid(2.0 * PI) - PI;
    assert!(drift.abs() < 0.05, "{drift}");
}

#[test]
fn idle_edge_decays_when_only_one_edge_is_unstable() {
    let cp = ChainParams::reference(0.5 * PI);
    let base = make_initial(&cp, InitialKind::Symmetric { amplitude: 0.0 }).unwrap();
    let init = make_initial(&cp, InitialKind::Symmetric { amplitude: 0.05 }).unwrap();
    let opts = IntegrateOptions {
        dt_out: Some(0.1),
        ..IntegrateOptions::default()
    };
    let traj = integrate(&cp, &init, 300.0, &opts).unwrap();
    let dev = |range: std::ops::Range<usize>| {
        traj.states[range]
            .iter()
            .map(|s| (s.x[0] - base.x[0]).abs())
            .fold(0.0, f64::max)
    };
    let early = dev(0..500);
    let late = dev(2500..3000);
    // fitted exponential rate over 250 time units
    let rate = (early / late).ln() / 250.0;
    assert!(rate > 0.0, "left edge grew: {early} -> {late}");
}
