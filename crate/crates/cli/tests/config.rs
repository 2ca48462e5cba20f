use lipschitz_cli::config::{Command, RunConfig, Settings};

fn flags(command: Command) -> Settings {
    Settings { command: Some(command), input: Some("in.csv".into()), ..Settings::default() }
}

#[test]
fn flags_win_over_the_file() {
    let file: Settings = toml::from_str("command = \"envelope\"\neps = 0.1\nlambda = 0.05\n").unwrap();
    let merged = file.overlay(Settings { eps: Some(0.2), ..Settings::default() });
    assert_eq!(merged.eps, Some(0.2));
    assert_eq!(merged.lambda, Some(0.05));
    assert_eq!(merged.command, Some(Command::Envelope));
}

#[test]
fn parameters_are_validated_before_compute() {
    let bad = [
        Settings { eps: Some(-1.0), ..flags(Command::GlobalApprox) },
        Settings { lambda: Some(0.3), mu: Some(0.4), ..flags(Command::LocalStep) },
        Settings { lambda: Some(1.0), mu: Some(0.4), ..flags(Command::LocalStep) },
        Settings { parallel: Some(0), ..flags(Command::Lip) },
        Settings { norm: Some("l3".into()), ..flags(Command::Lip) },
        Settings { input: None, ..flags(Command::Lip) },
        Settings { case: Some("l1-disc".into()), ..flags(Command::Lip) },
    ];
    for s in bad {
        assert!(RunConfig::resolve(s.clone()).is_err(), "{s:?}");
    }
    assert!(RunConfig::resolve(Settings { lambda: Some(0.5), mu: Some(0.4), ..flags(Command::LocalStep) }).is_ok());
    assert!(RunConfig::resolve(Settings { command: Some(Command::Casebook), ..Settings::default() }).is_ok());
}
