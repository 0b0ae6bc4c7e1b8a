use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use wmink_cli::commands::{self, FlowOptions, ReillyOptions, RunOptions};
use wmink_cli::report::{Report, COMMAND_VERDICTS, KNOWN_VERDICTS};
use wmink_cli::spec_file::{ShapeSpec, StarSpec};
use wmink_cli::suite::{corpus_files, load_sidecar, run_suite};
use wmink_cli::DomainSpecFile;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

fn corpus_file(name: &str) -> PathBuf {
    corpus_dir().join(format!("{name}.toml"))
}

fn wmink(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_wmink"))
        .args(args)
        .env_remove("WMINK_RESOLUTION")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn read_report(path: &Path) -> Report {
    Report::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn result(report: &Report, key: &str) -> f64 {
    report.results[key].as_f64().unwrap_or_else(|| panic!("missing {key}"))
}

#[test]
fn ball_forms_prints_closed_form_integrals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h2.json");
    let (code, stdout, _) = wmink(&["ball-forms", "--space", "hyperbolic", "--n", "2", "--R", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("closed_form_deficit"));
    let r = read_report(&out);
    assert_eq!(r.command, "ball-forms");
    assert!((result(&r, "weighted_area") - 11.394118).abs() < 5e-7);
    assert!((result(&r, "weighted_volume") - 4.3388468).abs() < 5e-8);
    assert!((result(&r, "weighted_mean_curv") - 14.960879).abs() < 5e-7);
    assert!(result(&r, "normalized_deficit").abs() < 1e-12);
}

#[test]
fn euclidean_reilly_with_unit_weight() {
    let (code, stdout, _) = wmink(&[
        "check-reilly",
        corpus_file("star_e2_cos3").to_str().unwrap(),
        "--weight",
        "one",
        "--kparam",
        "0",
        "--field",
        "rsq",
    ]);
    assert_eq!(code, 0, "{stdout}");
    let spec = DomainSpecFile::load(&corpus_file("star_e2_cos3")).unwrap();
    let opts = ReillyOptions {
        field: "rsq".into(),
        weight: "one".into(),
        kparam: Some(0.0),
        seed: 1,
    };
    let r = commands::check_reilly(&spec, &opts, &RunOptions::default()).unwrap();
    assert!(r.verdict("reilly_residual").unwrap().value.unwrap() < 1e-8);
}

#[test]
fn off_center_ball_is_flagged_as_equality() {
    let spec = DomainSpecFile::load(&corpus_file("ball_h2_offcenter")).unwrap();
    let r = commands::minkowski(&spec, &RunOptions::default()).unwrap();
    assert!(r.passed());
    assert_eq!(r.results["equality_flag"], serde_json::Value::Bool(true));
    let star = DomainSpecFile::load(&corpus_file("star_h2_cos3")).unwrap();
    let r = commands::minkowski(&star, &RunOptions::default()).unwrap();
    assert_eq!(r.results["equality_flag"], serde_json::Value::Bool(false));
}

#[test]
fn exit_codes_follow_the_failure_class() {
    assert_eq!(wmink(&["minkowski", "/nonexistent.toml"]).0, 2);
    assert_eq!(wmink(&["no-such-command"]).0, 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "space = \"hyperbolic\"\nn = 2\n[shape.ball]\nd = 0.8\nR = 0.7\n").unwrap();
    let (code, _, stderr) = wmink(&["minkowski", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("base_point_inside"), "{stderr}");

    let (code, _, stderr) = wmink(&["flow", corpus_file("star_h2_nonconvex").to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(stderr.contains("initial_convexity"), "{stderr}");

    // a tolerance no solver can meet turns a verification into exit 4
    let strict = dir.path().join("strict.toml");
    std::fs::write(
        &strict,
        "space = \"hyperbolic\"\nn = 2\n[shape.star]\nfourier = [1.0, 0.0, 0.0, 0.0, 0.0, 0.05, 0.0]\n[tolerances]\ncompatibility = 0.0\nbc_residual = 0.0\n",
    )
    .unwrap();
    let (code, stdout, _) = wmink(&["solve-neumann", strict.to_str().unwrap(), "--resolution", "32"]);
    assert_eq!(code, 4, "{stdout}");
    assert!(stdout.contains("FAIL"));
}

#[test]
fn reports_are_deterministic_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = corpus_file("star_s2_cos2");
    let mut texts = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.json"));
        let (code, _, _) = wmink(&["solve-neumann", spec.to_str().unwrap(), "--resolution", "64", "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
        texts.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    let r = Report::from_json(&texts[0]).unwrap();
    assert_eq!(r.to_json(), texts[0]);
    assert_eq!(r.resolution, Some(64));
    assert!(r.timing_seconds.is_none());

    let timed = dir.path().join("t.json");
    wmink(&["minkowski", spec.to_str().unwrap(), "--timing", "--out", timed.to_str().unwrap()]);
    assert!(read_report(&timed).timing_seconds.unwrap() >= 0.0);
}

#[test]
fn flow_writes_a_csv_trace() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("trace.csv");
    let (code, _, _) = wmink(&[
        "flow",
        corpus_file("ball_h2").to_str().unwrap(),
        "--tmax",
        "0.5",
        "--steps",
        "40",
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[0], "t");
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 41);
    let t_last: f64 = rows[40][0].parse().unwrap();
    assert!((t_last - 0.5).abs() < 1e-12);
}

#[test]
fn corpus_suite_matches_every_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_suite(&corpus_dir(), &RunOptions::default(), 4, Some(dir.path())).unwrap();
    assert!(report.passed(), "{}", report.table());

    // every verdict a command can emit shows up in some corpus report
    let mut seen = BTreeSet::new();
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            for v in read_report(&path).verdicts {
                seen.insert(v.name);
            }
        }
    }
    let forms = commands::ball_forms("hemisphere", 3, 0.7).unwrap();
    seen.extend(forms.verdicts.into_iter().map(|v| v.name));
    for name in KNOWN_VERDICTS {
        assert!(seen.contains(*name), "verdict {name} never emitted by the corpus");
    }
    for (command, _) in COMMAND_VERDICTS {
        assert!(
            *command == "ball-forms"
                || corpus_files(&corpus_dir())
                    .unwrap()
                    .iter()
                    .any(|p| load_sidecar(p).unwrap().run.iter().any(|r| r.command == *command)),
            "{command}"
        );
    }
}

#[test]
fn explicit_flow_options_are_recorded() {
    let spec = DomainSpecFile::load(&corpus_file("ball_e2")).unwrap();
    let opts = FlowOptions {
        tmax: Some(0.3),
        steps: 12,
    };
    let (r, trace) = commands::flow(&spec, &opts, &RunOptions { resolution: Some(32) }).unwrap();
    assert_eq!(r.parameters["steps"], 12);
    assert_eq!(trace.times.len(), 13);
    assert!(r.passed(), "{}", r.table());
}

fn star_spec() -> impl Strategy<Value = DomainSpecFile> {
    (
        prop_oneof![Just("hyperbolic"), Just("euclidean"), Just("hemisphere")],
        0.3f64..0.9,
        prop::collection::vec(-0.03f64..0.03, 0..6),
    )
        .prop_map(|(space, a0, rest)| {
            let mut fourier = vec![a0];
            fourier.extend(rest.iter().map(|c| c * a0));
            DomainSpecFile {
                space: space.into(),
                n: 2,
                shape: ShapeSpec::Star(StarSpec {
                    fourier: Some(fourier),
                    profile: None,
                }),
                resolution: Some(32),
                tolerances: Default::default(),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn domain_files_round_trip(spec in star_spec()) {
        let back = DomainSpecFile::from_toml(&spec.to_toml()).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn ball_forms_deficit_vanishes(r in 0.1f64..1.5, n in 2usize..4, space in prop_oneof![Just("hyperbolic"), Just("euclidean"), Just("hemisphere")]) {
        let rep = commands::ball_forms(space, n, r).unwrap();
        prop_assert!(rep.passed());
        prop_assert_eq!(Report::from_json(&rep.to_json()).unwrap(), rep);
    }
}
