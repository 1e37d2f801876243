use lyapgen::io::{check_document, parse_document, Document};
use lyapgen::pipeline::{self, Budgets, PSpec, RunConfig, SystemRef};

fn quick_ring() -> RunConfig {
    RunConfig {
        system: Some(SystemRef::Named("ring3d".into())),
        p: Some(PSpec::Identity),
        d: Some(0.2),
        budgets: Some(Budgets {
            ft_grid: Some(11),
            multistarts: Some(3),
            doa_grid: Some(25),
            top_k: Some(4),
            contour_resolution: Some(60),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn all_ok(text: &str) -> Document {
    let doc = parse_document(text).unwrap();
    let findings = check_document(&doc).unwrap();
    assert!(findings.iter().all(|f| f.ok), "{findings:#?}");
    doc
}

#[test]
fn pipeline_outputs_reload_and_recheck() {
    let cfg = quick_ring();
    let cert = pipeline::verify(&cfg).unwrap();
    assert!(cert.passed());
    let doc = all_ok(&serde_json::to_string_pretty(&cert).unwrap());
    assert!(matches!(doc, Document::Certificate(_)));

    let w = pipeline::build(&cert, false).unwrap();
    let doc = all_ok(&serde_json::to_string(&w.to_export()).unwrap());
    assert!(matches!(doc, Document::Lyapunov(_)));

    let (est, contour) = pipeline::doa(&w, &cfg, Some(&cert)).unwrap();
    assert!(est.verdict);
    let doc = all_ok(&serde_json::to_string(&est).unwrap());
    assert!(matches!(doc, Document::Estimate(_)));

    let mut csv = Vec::new();
    contour.write_csv(&mut csv).unwrap();
    let doc = all_ok(std::str::from_utf8(&csv).unwrap());
    assert!(matches!(doc, Document::Contour(_)));

    let (sys, _) = cfg.resolve_system().unwrap();
    let traj = pipeline::trace(&sys, &[0.2, -0.1, 0.3], 5.0).unwrap();
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).unwrap();
    assert!(matches!(all_ok(std::str::from_utf8(&csv).unwrap()), Document::Trajectory(_)));
}

#[test]
fn tampered_certificate_is_flagged() {
    let cert = pipeline::verify(&quick_ring()).unwrap();
    let mut v: serde_json::Value = serde_json::to_value(&cert).unwrap();
    v["linearNorm"] = serde_json::json!(0.5);
    v["nonlinearPass"] = serde_json::json!(false);
    let doc = parse_document(&v.to_string()).unwrap();
    let bad: Vec<_> = check_document(&doc).unwrap().into_iter().filter(|f| !f.ok).map(|f| f.name).collect();
    assert_eq!(bad, vec!["linear norm", "verdict"]);
}

#[test]
fn failed_certificate_cannot_build() {
    let cfg = RunConfig {
        system: Some(SystemRef::Named("scalarLogLF".into())),
        p: Some(PSpec::Scaled { c: 0.1 }),
        d: Some(2.4),
        budgets: Some(Budgets {
            ft_grid: Some(21),
            ..Default::default()
        }),
        ..Default::default()
    };
    let cert = pipeline::verify(&cfg).unwrap();
    assert!(!cert.passed());
    let err = pipeline::build(&cert, true).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn unstable_equilibrium_has_no_horizon() {
    let cfg = RunConfig {
        system: Some(SystemRef::Named("toggleSwitch".into())),
        equilibrium: Some(pipeline::EquilibriumSel::Index(1)),
        ..Default::default()
    };
    let err = pipeline::verify(&cfg).unwrap_err();
    assert!(matches!(err, lyapgen::Error::HorizonNotFound { .. } | lyapgen::Error::NotHurwitz(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}
