use std::f64::consts::PI;

use shuttle_core::model::{ChainModel, ChainParams, ShuttleParams};
use shuttle_core::stability::{
    default_fixed_point, disorder_sweep, newton_fixed_point, residual_scale, sample_offsets, scalar_fixed_point,
    single_shuttle_max_real, stability_spectrum, DisorderOptions, ModeTag, StabilityReport,
};

/// Stationary occupation written from the tunnelling rates directly.
fn occupation(x: f64, s: &ShuttleParams) -> f64 {
    let eps_bar = s.epsilon - s.alpha * s.bias * x;
    let f = |mu: f64| 1.0 / ((s.beta * (eps_bar - mu)).exp() + 1.0);
    let (fs, fd) = (f(s.epsilon + s.bias / 2.0), f(s.epsilon - s.bias / 2.0));
    let (em, ep) = ((-x / s.lambda).exp(), (x / s.lambda).exp());
    let gin = em * fs + ep * fd;
    let gout = em * (1.0 - fs) + ep * (1.0 - fd);
    gin / (gin + gout)
}

fn conjugate_closed(r: &StabilityReport) {
    let vals = &r.eigenvalues.values;
    let scale = vals.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for z in vals {
        let partner = vals.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
        assert!(partner < 1e-9 * scale, "{z} has no conjugate partner");
    }
}

#[test]
fn lone_shuttle_without_bias_sits_at_half_filling() {
    let mut s = ShuttleParams::reference(1.3);
    s.bias = 0.0;
    let model = ChainModel::single(&s).unwrap();
    let fp = newton_fixed_point(&model, &[0.3, 0.1, 0.9]).unwrap();
    assert_eq!(fp.state.x.len(), 1);
    assert!(fp.state.x[0].abs() < 1e-12);
    assert!(fp.state.p[0].abs() < 1e-12);
    assert!((fp.state.q[0] - 0.5).abs() < 1e-12);
}

#[test]
fn scalar_fixed_point_against_grid_bracketing() {
    for omega in [0.5, 1.0, 1.5, 2.3, 3.5] {
        let s = ShuttleParams::reference(omega);
        let w2 = omega * omega;
        let h = |x: f64| w2 * x - s.force() * occupation(x, &s);
        // locate every sign change on a fine grid, then bisect
        let hi = s.force() / w2;
        let grid: Vec<f64> = (0..=4000).map(|i| hi * i as f64 / 4000.0).collect();
        let roots: Vec<f64> = grid
            .windows(2)
            .filter(|w| h(w[0]) * h(w[1]) <= 0.0)
            .map(|w| {
                let (mut a, mut b) = (w[0], w[1]);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if h(a) * h(m) <= 0.0 {
                        b = m
                    } else {
                        a = m
                    }
                }
                0.5 * (a + b)
            })
            .collect();
        // soft shuttles can be bistable; any of the roots is acceptable
        assert!(!roots.is_empty() && roots.len() % 2 == 1, "omega = {omega}");
        let x = scalar_fixed_point(w2, &s).unwrap();
        let nearest = roots.iter().map(|r| (x - r).abs()).fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-12 * hi.max(1.0), "{x} vs {roots:?}");
        assert!(h(x).abs() < 1e-12 * s.force());
    }
}

#[test]
fn newton_certificate_on_reference_chain() {
    for phi in [0.3, 2.0 * PI / 3.0, 1.0 * PI, 5.0] {
        let cp = ChainParams::reference(phi);
        let fp = default_fixed_point(&cp).unwrap();
        assert!(fp.residual < 1e-12 * residual_scale(&cp.shuttle));
        let model = ChainModel::new(&cp).unwrap();
        let mut f = vec![0.0; 72];
        model.field(&fp.state.to_flat(), &mut f);
        let r = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(r < 1e-12 * residual_scale(&cp.shuttle));
        assert!(fp.state.q.iter().all(|q| (0.0..=1.0).contains(q)));
        assert!(fp.state.p.iter().all(|p| *p == 0.0 || p.abs() < 1e-14));
    }
}

#[test]
fn fixed_point_is_mirror_symmetric_at_symmetric_phase() {
    let fp = default_fixed_point(&ChainParams::reference(2.0 * PI / 3.0)).unwrap();
    let m = fp.state.reversed();
    for (a, b) in fp.state.to_flat().iter().zip(m.to_flat()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn spectra_are_conjugate_closed() {
    for phi in [0.2 * PI, 0.5 * PI, 2.0 * PI / 3.0, 0.85 * PI] {
        let r = stability_spectrum(&ChainParams::reference(phi)).unwrap();
        assert_eq!(r.eigenvalues.values.len(), 72);
        conjugate_closed(&r);
        let up = r.unstable.iter().filter(|m| m.value.im > 0.0).count();
        let down = r.unstable.iter().filter(|m| m.value.im < 0.0).count();
        assert_eq!(up, down);
        assert_eq!(r.unstable.iter().filter(|m| m.value.im == 0.0).count(), 0);
    }
}

#[test]
fn mode_tags_follow_the_phase_windows() {
    let at = |phi: f64| stability_spectrum(&ChainParams::reference(phi)).unwrap();
    let r = at(0.2 * PI);
    assert!(r.max_real < 0.0 && r.unstable.is_empty());
    let r = at(0.5 * PI);
    assert_eq!(r.unstable_pairs().count(), 1);
    assert_eq!(r.unstable_pairs().next().unwrap().tag, ModeTag::RightEdge);
    let r = at(0.85 * PI);
    assert_eq!(r.unstable_pairs().count(), 1);
    assert_eq!(r.unstable_pairs().next().unwrap().tag, ModeTag::LeftEdge);
    let r = at(2.0 * PI / 3.0);
    assert_eq!(r.edge_pairs(), 2);
    assert_eq!(r.bulk_pairs(), 0);
    let ims: Vec<f64> = r.unstable_pairs().map(|m| m.value.im).collect();
    assert!((ims[0] - ims[1]).abs() < 1e-3);
}

#[test]
fn lone_shuttle_without_bias_is_stable() {
    for i in 0..40 {
        let mut s = ShuttleParams::reference(0.2 + 0.1 * i as f64);
        s.bias = 0.0;
        assert!(single_shuttle_max_real(&s).unwrap() < 0.0);
    }
}

#[test]
fn disorder_is_deterministic_and_reduces_to_clean() {
    let cp = ChainParams::reference(2.0 * PI / 3.0);
    let opts = DisorderOptions::default();
    let a = disorder_sweep(&cp, &[0.0, 0.2], 4, 11, &opts).unwrap();
    let b = disorder_sweep(&cp, &[0.0, 0.2], 4, 11, &opts).unwrap();
    assert_eq!(a, b);
    let c = disorder_sweep(&cp, &[0.0, 0.2], 4, 12, &opts).unwrap();
    assert_ne!(a[1].offsets, c[1].offsets);

    let clean = stability_spectrum(&cp).unwrap();
    for rep in &a[0].reports {
        let rep = rep.as_ref().unwrap();
        assert_eq!(rep.eigenvalues.values, clean.eigenvalues.values);
    }
    assert!(a[0].offsets.iter().flatten().all(|d| *d == 0.0));
}

#[test]
fn offsets_touch_only_inter_trimer_bonds() {
    let opts = DisorderOptions::default();
    let d = sample_offsets(24, 0.3, 1, 5, 99, &opts);
    assert_eq!(d.len(), 23);
    for (i, v) in d.iter().enumerate() {
        if i % 3 == 2 {
            assert!(v.abs() <= 0.3 && *v != 0.0);
        } else {
            assert_eq!(*v, 0.0);
        }
    }
    let corr = DisorderOptions {
        correlated: true,
        ..opts
    };
    let a = sample_offsets(24, 0.1, 0, 5, 99, &corr);
    let b = sample_offsets(24, 0.4, 3, 5, 99, &corr);
    for (x, y) in a.iter().zip(&b) {
        assert!((4.0 * x - y).abs() < 1e-15);
    }
}
