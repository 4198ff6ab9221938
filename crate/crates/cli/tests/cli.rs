use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use repgeo::ingest::{write_bundle, ReprBundle};
use repgeo::linalg::ReprMatrix;
use serde_json::Value;
use tempfile::TempDir;

fn repgeo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repgeo"))
        .current_dir(dir)
        .env_remove("REPGEO_JOBS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn report(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Every column a multiple of one zero-sum direction.
fn rank_one_bundle(dir: &Path) -> PathBuf {
    let v = [1.0, -2.0, 3.0, -2.0];
    let mut bundle = ReprBundle::new(v.len());
    for (k, scales) in [[1.0, 2.0, 3.0], [0.5, -1.0, 4.0], [2.0, 2.5, -0.5]]
        .iter()
        .enumerate()
    {
        let cols: Vec<Vec<f64>> = scales
            .iter()
            .map(|c| v.iter().map(|x| c * x).collect())
            .collect();
        bundle
            .push(format!("s{k}"), ReprMatrix::from_columns(&cols).unwrap())
            .unwrap();
    }
    let path = dir.join("rank1.bin");
    write_bundle(&bundle, &path).unwrap();
    path
}

#[test]
fn rank_one_bundle_has_perfect_cosines() {
    let dir = TempDir::new().unwrap();
    let bundle = rank_one_bundle(dir.path());
    for conv in ["A", "B", "C"] {
        let out = repgeo(
            dir.path(),
            &[
                "property",
                "--bundle",
                bundle.to_str().unwrap(),
                "--convention",
                conv,
                "--out",
                "p.json",
            ],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let r = report(dir.path().join("p.json"));
        let s = &r["summaries"][0];
        assert!(
            (s["average"].as_f64().unwrap() - 1.0).abs() < 1e-12,
            "{conv}: {s}"
        );
        assert!(
            (s["min"].as_f64().unwrap() - 1.0).abs() < 1e-12,
            "{conv}: {s}"
        );
        assert_eq!(s["n_tests"], 3);
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let bad_json = dir.path().join("bad.json");
    fs::write(&bad_json, "{ not json").unwrap();
    let unknown_key = dir.path().join("unknown.json");
    fs::write(&unknown_key, r#"{"n_testz": 3}"#).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["property"],
        vec!["no-such-command"],
        vec!["synth-table4", "--n-tests", "many"],
        vec!["synth-table4", "--config", bad_json.to_str().unwrap()],
        vec!["synth-table4", "--config", unknown_key.to_str().unwrap()],
        vec!["synth-table4", "--min-len", "1"],
        vec!["baseline-random", "--low", "1", "--high", "-1"],
        vec!["theory-check"],
        vec!["synth-table4", "--jobs", "0"],
    ];
    for args in cases {
        let out = repgeo(dir.path(), &args);
        assert_eq!(
            code(&out),
            1,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(code(&repgeo(dir.path(), &["--help"])), 0);
}

#[test]
fn data_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let corrupt = dir.path().join("corrupt.bin");
    fs::write(&corrupt, b"RGB1\x04\x00").unwrap();
    let truncated_text = dir.path().join("t.jsonl");
    fs::write(
        &truncated_text,
        "{\"format\":\"repgeo-bundle\",\"version\":1,\"d\":2,\"count\":1,\"metadata\":{}}\n",
    )
    .unwrap();
    for path in [
        Path::new("missing.bin"),
        corrupt.as_path(),
        truncated_text.as_path(),
    ] {
        let out = repgeo(
            dir.path(),
            &["property", "--bundle", path.to_str().unwrap()],
        );
        assert_eq!(
            code(&out),
            2,
            "{path:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!dir.path().join("property.json").exists());
    }
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"d": 16, "n_tests": 7, "seed": 42, "conventions": ["A"]}"#,
    )
    .unwrap();
    let out = repgeo(
        dir.path(),
        &[
            "baseline-random",
            "--config",
            "cfg.json",
            "--n-tests",
            "9",
            "--out",
            "b.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path().join("b.json"));
    assert_eq!(r["config"]["n_tests"], 9);
    assert_eq!(r["config"]["d"], 16);
    assert_eq!(r["seed"], 42);
    assert_eq!(r["summaries"].as_array().unwrap().len(), 1);
    let csv = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("convention,average,min,n_tests,skipped"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "A");
    assert_eq!(row[1].split('.').nth(1).map(str::len), Some(4));
}

#[test]
fn default_report_path_is_command_name() {
    let dir = TempDir::new().unwrap();
    let out = repgeo(
        dir.path(),
        &["baseline-random", "--d", "8", "--n-tests", "3"],
    );
    assert_eq!(code(&out), 0);
    let r = report(dir.path().join("baseline-random.json"));
    assert_eq!(r["schema"], 1);
    assert_eq!(r["command"], "baseline-random");
    assert!(dir.path().join("baseline-random.csv").exists());
}

#[test]
fn worker_count_does_not_change_reports() {
    let dir = TempDir::new().unwrap();
    let run = |jobs: &str, out: &str| {
        let o = repgeo(
            dir.path(),
            &[
                "synth-table4",
                "--d",
                "24",
                "--n-tests",
                "40",
                "--max-len",
                "16",
                "--jobs",
                jobs,
                "--out",
                out,
            ],
        );
        assert_eq!(code(&o), 0);
        (
            fs::read(dir.path().join(out)).unwrap(),
            fs::read(dir.path().join(out.replace(".json", ".csv"))).unwrap(),
        )
    };
    let one = run("1", "one.json");
    assert_eq!(one, run("4", "four.json"));
    assert_eq!(one, run("1", "again.json"));
}

#[test]
fn word_vectors_end_to_end() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("vec.txt"),
        "3 4\nthe 1 0 0.5 2\ncat 0.5 1 1 2\nsat 1 1 0 2.5\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("sent.txt"),
        "The cat sat\nthe dog sat cat\n",
    )
    .unwrap();
    let out = repgeo(
        dir.path(),
        &[
            "wordvec-property",
            "--vectors",
            "vec.txt",
            "--header",
            "--sentences",
            "sent.txt",
            "--lowercase",
            "--export",
            "s.jsonl",
            "--out",
            "w.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path().join("w.json"));
    assert_eq!(r["details"]["conversion"]["oov_skipped"], 1);
    assert_eq!(r["details"]["conversion"]["sentences"], 2);
    assert_eq!(r["summaries"][0]["n_tests"], 2);
    assert!(dir.path().join("s.jsonl").exists());

    let strict = repgeo(
        dir.path(),
        &[
            "wordvec-property",
            "--vectors",
            "vec.txt",
            "--header",
            "--sentences",
            "sent.txt",
            "--oov",
            "error",
        ],
    );
    assert_eq!(code(&strict), 2);
}
