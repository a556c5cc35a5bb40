use loco_core::acquisition::BetaSchedule;
use loco_core::bench::Benchmark;
use loco_core::collision::Setting;
use loco_core::driver::Strategy;
use loco_exp::config::{ConfigError, ExperimentConfig, Origin, KEYS};

fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    ExperimentConfig::from_json_str(text, &[])
}

#[test]
fn minimal_config_takes_defaults() {
    let cfg = parse(r#"{"benchmark": "rastrigin", "strategy": "dw_loco"}"#).unwrap();
    assert_eq!(cfg.benchmark, Benchmark::Rastrigin { dim: 2 });
    assert_eq!(cfg.pool_size, 2000);
    assert_eq!(cfg.seeds, (0..8).collect::<Vec<_>>());
    assert_eq!(cfg.run.strategy, Strategy::DwLoco);
    assert_eq!(cfg.run.budget, 200);
    assert_eq!(cfg.run.retrain.interval, 50);
    assert_eq!(cfg.run.retrain.epochs, 100);
    assert_eq!(cfg.run.penalty.lambda, Setting::Fixed(1.0));
    assert_eq!(cfg.run.penalty.rho, Setting::Auto);
    assert_eq!(cfg.run.penalty.zeta, 1.0);
    assert_eq!(cfg.run.beta, BetaSchedule::Constant(4.0));
    assert_eq!(cfg.run.noise_sd, None);
    assert!(!cfg.timing);
}

#[test]
fn every_key_appears_in_the_effective_config() {
    for schedule in ["constant", "discrete", "continuous"] {
        let text = format!(
            r#"{{"benchmark": "sum_exp", "strategy": "loco", "beta.schedule": "{schedule}"}}"#
        );
        let eff = parse(&text).unwrap().effective();
        for key in KEYS {
            let beta_specific = key.starts_with("beta.") && *key != "beta.schedule";
            assert!(eff.contains_key(*key) || beta_specific, "{key} missing");
        }
        assert!(eff.keys().all(|k| KEYS.contains(&k.as_str())));
    }
}

#[test]
fn effective_config_reads_back_unchanged() {
    let text = r#"{
        "benchmark": "max_area",
        "strategy": "lso",
        "bench.dim": 16,
        "pool.size": 300,
        "seeds": [3, 5],
        "beta.schedule": "discrete",
        "beta.delta": 0.05,
        "penalty.lambda": "auto",
        "noise.sd": 0.5
    }"#;
    let cfg = parse(text).unwrap();
    let again = parse(&cfg.to_json().to_string()).unwrap();
    assert_eq!(cfg.effective(), again.effective());
}

#[test]
fn missing_required_keys() {
    assert_eq!(
        parse(r#"{"strategy": "loco"}"#).unwrap_err(),
        ConfigError::Missing {
            key: "benchmark".into()
        }
    );
    assert_eq!(
        parse(r#"{"benchmark": "rastrigin"}"#).unwrap_err(),
        ConfigError::Missing {
            key: "strategy".into()
        }
    );
}

#[test]
fn unknown_keys_report_their_line() {
    let text =
        "{\n  \"benchmark\": \"rastrigin\",\n  \"strategy\": \"loco\",\n  \"penalty.lamda\": 2\n}";
    let err = parse(text).unwrap_err();
    assert_eq!(
        err,
        ConfigError::UnknownKey {
            key: "penalty.lamda".into(),
            origin: Origin::Line(4)
        }
    );
    let rec = err.record();
    assert_eq!(rec["line"], 4);
    assert_eq!(rec["key"], "penalty.lamda");
}

#[test]
fn bad_values_name_key_and_line() {
    let text = "{\"benchmark\": \"rastrigin\",\n\"strategy\": \"loco\",\n\"penalty.lambda\": -1}";
    match parse(text).unwrap_err() {
        ConfigError::Invalid { key, origin, .. } => {
            assert_eq!(key, "penalty.lambda");
            assert_eq!(origin, Origin::Line(3));
        }
        e => panic!("{e:?}"),
    }
    let cases = [
        (r#""budget": "many""#, "budget"),
        (r#""budget": 0"#, "budget"),
        (r#""budget": 1999"#, "budget"),
        (r#""retrain.interval": 0"#, "retrain.interval"),
        (r#""retrain.lr": 0"#, "retrain.lr"),
        (r#""noise.sd": -0.1"#, "noise.sd"),
        (r#""penalty.rho": -3"#, "penalty.rho"),
        (r#""penalty.zeta": "high""#, "penalty.zeta"),
        (r#""beta.schedule": "linear""#, "beta.schedule"),
        (
            r#""beta.schedule": "discrete", "beta.delta": 1.5"#,
            "beta.delta",
        ),
        (r#""encoder.hidden": [8, 0]"#, "encoder.hidden"),
        (r#""encoder.latent_dim": 0"#, "encoder.latent_dim"),
        (r#""gp.noise_var": 0"#, "gp.noise_var"),
        (r#""initial.labeled": 1"#, "initial.labeled"),
        (r#""seeds": [1]"#, "seeds"),
        (r#""seeds": [1, 1]"#, "seeds"),
        (r#""pool.size": 1"#, "pool.size"),
        (r#""trace.timing": "yes""#, "trace.timing"),
    ];
    for (fragment, expected) in cases {
        let text = format!(r#"{{"benchmark": "rastrigin", "strategy": "loco", {fragment}}}"#);
        match parse(&text) {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, expected, "{fragment}"),
            other => panic!("{fragment}: {other:?}"),
        }
    }
    match parse(r#"{"benchmark": "water_converter", "strategy": "loco"}"#) {
        Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "benchmark"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_json_reports_position() {
    let err = parse("{\n  \"benchmark\": \"rastrigin\"\n  \"strategy\": \"loco\"\n}").unwrap_err();
    assert!(
        matches!(err, ConfigError::Syntax { line: 3, .. }),
        "{err:?}"
    );
    assert_eq!(parse("[1, 2]").unwrap_err(), ConfigError::NotAnObject);
}

#[test]
fn overrides_apply_after_the_file() {
    let text = r#"{"benchmark": "rastrigin", "strategy": "loco", "budget": 10}"#;
    let cfg = ExperimentConfig::from_json_str(
        text,
        &[
            "budget=25".into(),
            "strategy=gp_raw".into(),
            "penalty.rho=auto".into(),
            "encoder.hidden=[4, 2]".into(),
            "seeds=1,2,3".into(),
        ],
    )
    .unwrap();
    assert_eq!(cfg.run.budget, 25);
    assert_eq!(cfg.run.strategy, Strategy::GpRaw);
    assert_eq!(cfg.run.encoder_hidden, vec![4, 2]);
    assert_eq!(cfg.seeds, vec![1, 2, 3]);
    let err = ExperimentConfig::from_json_str(text, &["budget".into()]).unwrap_err();
    assert!(matches!(err, ConfigError::BadOverride(_)));
    let err = ExperimentConfig::from_json_str(text, &["typo=1".into()]).unwrap_err();
    assert_eq!(
        err,
        ConfigError::UnknownKey {
            key: "typo".into(),
            origin: Origin::Override
        }
    );
}

#[test]
fn beta_schedules_pick_up_pool_and_feature_sizes() {
    let cfg = parse(
        r#"{"benchmark": "sum_exp", "strategy": "gp_raw", "pool.size": 500,
            "beta.schedule": "discrete", "beta.delta": 0.05, "beta.pi_squared": true}"#,
    )
    .unwrap();
    assert_eq!(
        cfg.run.beta,
        BetaSchedule::Discrete {
            pool_size: 500,
            delta: 0.05,
            pi_squared: true
        }
    );
    let raw =
        parse(r#"{"benchmark": "sum_exp", "strategy": "gp_raw", "beta.schedule": "continuous"}"#)
            .unwrap();
    assert!(matches!(
        raw.run.beta,
        BetaSchedule::Continuous { dim: 20, .. }
    ));
    let latent = parse(
        r#"{"benchmark": "sum_exp", "strategy": "loco", "encoder.latent_dim": 3, "beta.schedule": "continuous"}"#,
    )
    .unwrap();
    assert!(matches!(
        latent.run.beta,
        BetaSchedule::Continuous { dim: 3, .. }
    ));
}

#[test]
fn load_reports_unreadable_files() {
    let err =
        ExperimentConfig::load(std::path::Path::new("/nonexistent/cfg.json"), &[]).unwrap_err();
    assert!(matches!(err, ConfigError::Io { .. }));
    assert_eq!(err.record()["error"], "config");
}
