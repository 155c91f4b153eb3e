use proptest::prelude::*;
use shuttle_cli::config::{parse_config_str, ConfigError, InitialSpec, RunConfig, WindowSpec};

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

prop_compose! {
    fn configs()(
        seed in 0u64..=i64::MAX as u64,
        trimers in 1usize..20,
        phi in finite(0.0, 2.0),
        drive in finite(1.0, 20.0),
        gamma in finite(0.05, 2.0),
        beta_v in finite(10.0, 400.0),
        t_end in finite(100.0, 5000.0),
        tol in finite(1e-12, 1e-6),
        initial in prop_oneof![
            Just(InitialSpec::Symmetric),
            Just(InitialSpec::Antisymmetric),
            Just(InitialSpec::Random),
            Just(InitialSpec::NearFixedPoint),
        ],
        hann in any::<bool>(),
        r_values in prop::collection::vec(finite(0.0, 0.5), 1..6),
        realizations in 1usize..50,
    ) -> RunConfig {
        let mut c = RunConfig::default();
        c.seed = seed;
        c.chain.n = 3 * trimers;
        c.chain.phi_over_pi = phi;
        c.shuttle.drive = drive;
        c.shuttle.gamma = gamma;
        c.shuttle.beta_v = beta_v;
        c.simulate.t_end = t_end;
        c.simulate.tol = tol;
        c.simulate.initial = initial;
        c.simulate.window = if hann { WindowSpec::Hann } else { WindowSpec::None };
        c.disorder.r_values = r_values;
        c.disorder.realizations = realizations;
        c
    }
}

proptest! {
    #[test]
    fn emitted_config_parses_back(cfg in configs()) {
        let text = cfg.to_toml();
        let back = parse_config_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn default_round_trips() {
    let cfg = RunConfig::default();
    assert_eq!(parse_config_str(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn duplicate_key_names_both_lines() {
    let text = "seed = 3\n\n[chain]\nn = 24\nphi_over_pi = 0.5\n# a comment\nn = 27\n";
    match parse_config_str(text).unwrap_err() {
        ConfigError::DuplicateKey { key, first, second } => {
            assert_eq!(key, "chain.n");
            assert_eq!((first, second), (4, 7));
        }
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn unknown_key_rejected() {
    let err = parse_config_str("[chain]\nlength = 24\n").unwrap_err();
    assert!(err.to_string().contains("length"), "{err}");
    assert!(parse_config_str("[shutle]\ndrive = 3\n").is_err());
}

#[test]
fn chain_length_must_hold_whole_trimers() {
    let err = parse_config_str("[chain]\nn = 25\n").unwrap_err();
    assert!(err.to_string().contains("N mod 3"), "{err}");
    let mut cfg = RunConfig::default();
    cfg.chain.n = 25;
    assert!(cfg.validate().is_err());
}
