use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tegra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tegra"))
        .args(args)
        .env("TEGRA_LOG", "error")
        .output()
        .expect("binary runs")
}

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.toml")
}

fn stderr_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "expected one error line, got {text:?}");
    serde_json::from_str(lines[0]).expect("error line is JSON")
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

fn write_two_doc_inputs(dir: &Path) -> PathBuf {
    std::fs::write(
        dir.join("corpus.jsonl"),
        concat!(
            r#"{"id":"a","text":"Alice visited Paris. Bob met Carol.","label":"legit"}"#,
            "\n",
            r#"{"id":"b","text":"Paris praised Bob.","label":"misinfo"}"#,
            "\n"
        ),
    )
    .unwrap();
    std::fs::write(dir.join("vectors.txt"), "2 2\nparis 1 0\nbob 0 1\n").unwrap();
    std::fs::write(dir.join("gazetteer.tsv"), "paris\turn:paris\nbob\turn:bob\n").unwrap();
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        r#"
[paths]
corpus = "corpus.jsonl"
vectors = "vectors.txt"
gazetteer = "gazetteer.tsv"
out = "out"

[linker]
min_span = 1
"#,
    )
    .unwrap();
    config
}

#[test]
fn stats_on_two_documents_writes_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_two_doc_inputs(dir.path());
    let out = tegra(&["--config", config.to_str().unwrap(), "stats"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("out/stats.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "a");
    assert_eq!(&rows[1][0], "b");
    assert!(dir.path().join("out/manifest.json").is_file());
}

#[test]
fn tegra_train_without_kgs_names_the_missing_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_two_doc_inputs(dir.path());
    let out = tegra(&["--config", config.to_str().unwrap(), "--mode", "tegra", "train"]);
    assert!(!out.status.success());
    let err = stderr_line(&out);
    assert_eq!(err["error"], "config");
    let message = err["message"].as_str().unwrap();
    assert!(message.contains("paths.kg_true"), "{message}");
    assert!(message.contains("paths.kg_misinfo"), "{message}");
}

#[test]
fn invalid_config_lists_every_field_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "folds = 0\ncap_per_key = 0\n").unwrap();
    let out = tegra(&["--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "stats"]);
    assert!(!out.status.success());
    let err = stderr_line(&out);
    assert_eq!(err["error"], "config");
    let message = err["message"].as_str().unwrap();
    for field in ["paths.corpus", "paths.vectors", "folds", "cap_per_key"] {
        assert!(message.contains(field), "{field} missing from {message}");
    }
}

#[test]
fn unknown_flag_and_command_are_usage_errors() {
    for args in [&["--bogus", "stats"][..], &["frobnicate"][..]] {
        let out = tegra(args);
        assert_eq!(out.status.code(), Some(2));
        assert_eq!(stderr_line(&out)["error"], "usage");
    }
}

#[test]
fn experiment_smoke_run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config();
    let out_dir = dir.path().join("run");
    let args = ["--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    let out = tegra(&[&args[..], &["experiment"]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&out_dir.join("results.csv"));
    assert_eq!(rows.len(), 4 * 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let step = &manifest["steps"][0];
    assert_eq!(step["command"], "experiment");
    assert_eq!(step["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(step["metrics"].as_array().unwrap().len(), 8);

    let out = tegra(&[&args[..], &["experiment", "--replay"]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(out_dir.join("results.csv")).unwrap(),
        std::fs::read(out_dir.join("replay.csv")).unwrap()
    );
}

#[test]
fn staged_commands_match_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path();
    let config = smoke_config();
    let run = |extra: &[&str]| {
        let mut args = vec!["--config", config.to_str().unwrap(), "--out", work.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = tegra(&args);
        assert!(out.status.success(), "{extra:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["experiment"]);
    run(&["extract"]);
    run(&["link"]);
    run(&["build-kg"]);
    run(&["enrich"]);
    assert!(work.join("fold-0/enriched.jsonl").is_file());

    let base = std::fs::read_to_string(&config).unwrap();
    let staged = base
        .replace(
            "[synthetic]\n",
            &format!(
                "extraction = \"imported\"\n\n[paths]\ntriples = {:?}\nlinks = {:?}\nkg_true = {:?}\nkg_misinfo = {:?}\nfolds = {:?}\n\n[synthetic]\n",
                work.join("triples.jsonl"),
                work.join("links.json"),
                work.join("fold-0/kg_true.json"),
                work.join("fold-0/kg_misinfo.json"),
                work.join("fold-0/plan.json"),
            ),
        );
    let staged_path = work.join("staged.toml");
    std::fs::write(&staged_path, staged).unwrap();
    let out = tegra(&[
        "--config",
        staged_path.to_str().unwrap(),
        "--out",
        work.join("staged").to_str().unwrap(),
        "train",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let staged_row = &csv_rows(&work.join("staged/train.csv"))[0];
    let experiment_row = csv_rows(&work.join("results.csv"))
        .into_iter()
        .find(|r| &r[0] == "tegra" && &r[1] == "0")
        .unwrap();
    assert_eq!(staged_row, &experiment_row);
}
