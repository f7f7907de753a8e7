//! End-to-end tests of the `pdn` binary: artifacts, exit codes, and
//! byte-identical reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pdn::duct::{transmission, FreqGrid, Geometry, Medium, Structure};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdn"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn pdn")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "pdn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(args: &[&str], dir: &Path, code: i32) -> String {
    let out = run(args, dir);
    assert_eq!(
        out.status.code(),
        Some(code),
        "pdn {args:?}: expected exit {code}, stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stderr).unwrap()
}

/// Tiny dataset + pdn weights most tests share; 4 pairs, 40 frequencies.
fn small_setup(dir: &Path) {
    ok(
        &["gen-data", "--values", "2", "--layers", "2", "--set", "grid.count=40", "--out", "data.pdnd"],
        dir,
    );
    ok(
        &[
            "train", "--data", "data.pdnd", "--out", "model.pdnw", "--epochs", "2",
            "--batch-size", "2", "--widths", "8x8", "--set", "train.mixture_count=3",
            "--set", "grid.count=40",
        ],
        dir,
    );
}

#[test]
fn gen_data_prints_summary_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &["gen-data", "--values", "3", "--layers", "3", "--out", "a.pdnd"],
        dir.path(),
    );
    assert!(stdout.contains("pairs: 27"), "{stdout}");
    assert!(stdout.contains("grid: 20..5000 Hz, 250 points"), "{stdout}");
    assert!(stdout.contains("fingerprint:"), "{stdout}");
    ok(&["gen-data", "--values", "3", "--layers", "3", "--out", "b.pdnd"], dir.path());
    assert_eq!(
        fs::read(dir.path().join("a.pdnd")).unwrap(),
        fs::read(dir.path().join("b.pdnd")).unwrap()
    );
    assert!(dir.path().join("a.config").is_file(), "config sidecar");

    ok(&["gen-data", "--random", "50", "--seed", "7", "--out", "r1.pdnd"], dir.path());
    ok(&["gen-data", "--random", "50", "--seed", "7", "--out", "r2.pdnd"], dir.path());
    assert_eq!(
        fs::read(dir.path().join("r1.pdnd")).unwrap(),
        fs::read(dir.path().join("r2.pdnd")).unwrap()
    );

    let one = ok(&["gen-data", "--values", "1", "--layers", "5", "--out", "one.pdnd"], dir.path());
    assert!(one.contains("pairs: 1"), "{one}");
}

#[test]
fn gen_data_capacity_guard_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let stderr = fails_with(
        &["gen-data", "--values", "30", "--layers", "5", "--out", "big.pdnd"],
        dir.path(),
        3,
    );
    assert!(stderr.contains("capacity"), "{stderr}");
}

#[test]
fn train_writes_weights_loss_log_and_config() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    let weights = fs::read(dir.path().join("model.pdnw")).unwrap();
    assert_eq!(&weights[..4], b"PDNW");
    let log = fs::read_to_string(dir.path().join("model.loss.csv")).unwrap();
    assert!(log.starts_with("epoch,loss\n"), "{log}");
    assert_eq!(log.lines().count(), 3, "header + 2 epochs: {log}");
    assert!(dir.path().join("model.config").is_file());

    let stdout = ok(
        &[
            "train", "--data", "data.pdnd", "--out", "init.pdnw", "--epochs", "0",
            "--widths", "8x8", "--set", "train.mixture_count=3",
        ],
        dir.path(),
    );
    assert!(stdout.contains("initial weights"), "{stdout}");
    assert!(dir.path().join("init.pdnw").is_file());
}

#[test]
fn training_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    ok(
        &[
            "train", "--data", "data.pdnd", "--out", "again.pdnw", "--epochs", "2",
            "--batch-size", "2", "--widths", "8x8", "--set", "train.mixture_count=3",
            "--set", "grid.count=40",
        ],
        dir.path(),
    );
    assert_eq!(
        fs::read(dir.path().join("model.pdnw")).unwrap(),
        fs::read(dir.path().join("again.pdnw")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("model.loss.csv")).unwrap(),
        fs::read(dir.path().join("again.loss.csv")).unwrap()
    );
}

#[test]
fn diverging_training_exits_5_and_keeps_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    let stderr = fails_with(
        &[
            "train", "--data", "data.pdnd", "--out", "bad.pdnw", "--epochs", "2",
            "--batch-size", "2", "--widths", "8x8", "--set", "train.mixture_count=3",
            "--set", "train.learning_rate=1e200",
        ],
        dir.path(),
        5,
    );
    assert!(stderr.contains("last completed epoch"), "{stderr}");
    assert!(dir.path().join("bad.pdnw").is_file(), "checkpoint written");
}

#[test]
fn missing_and_corrupt_inputs_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    fails_with(
        &["train", "--data", "nope.pdnd", "--out", "m.pdnw"],
        dir.path(),
        4,
    );
    fs::write(dir.path().join("junk.pdnd"), b"not a dataset").unwrap();
    let stderr = fails_with(
        &["train", "--data", "junk.pdnd", "--out", "m.pdnw"],
        dir.path(),
        4,
    );
    assert!(stderr.contains("junk.pdnd"), "{stderr}");
}

#[test]
fn design_needs_density_weights_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    ok(
        &[
            "train", "--data", "data.pdnd", "--out", "ann.pdnw", "--model", "ann",
            "--epochs", "1", "--batch-size", "2", "--widths", "8x8", "--set", "grid.count=40",
        ],
        dir.path(),
    );
    let stderr = fails_with(
        &["design", "--weights", "ann.pdnw", "--target", "peak:1000", "--out", "d.csv"],
        dir.path(),
        6,
    );
    assert!(stderr.contains("ann"), "{stderr}");
}

#[test]
fn malformed_target_csv_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    fs::write(
        dir.path().join("target.csv"),
        "frequency_hz,transmittance\n100,0.5\nbroken,0.2\n",
    )
    .unwrap();
    let stderr = fails_with(
        &["design", "--weights", "model.pdnw", "--target", "target.csv", "--out", "d.csv"],
        dir.path(),
        2,
    );
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn disjoint_target_range_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    fs::write(dir.path().join("far.csv"), "90000,1\n99000,0\n").unwrap();
    fails_with(
        &["design", "--weights", "model.pdnw", "--target", "far.csv", "--out", "d.csv"],
        dir.path(),
        6,
    );
}

#[test]
fn design_emits_ranked_designs_and_density_map() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    let args = [
        "design", "--weights", "model.pdnw", "--target", "bandgap:1000-4000",
        "--out", "designs.csv", "--pca-grid", "map.csv",
        "--set", "design.pca_samples=200", "--set", "design.pca_resolution=16",
    ];
    let stdout = ok(&args, dir.path());
    assert!(stdout.contains("candidate designs"), "{stdout}");
    let designs = fs::read_to_string(dir.path().join("designs.csv")).unwrap();
    assert!(designs.starts_with("rank,density,converged,boundary,r1_mm,r2_mm,u,v"), "{designs}");
    assert!(designs.lines().count() >= 2, "{designs}");
    let svg = fs::read_to_string(dir.path().join("map.svg")).unwrap();
    assert!(svg.starts_with("<svg"), "svg rendered");
    assert!(dir.path().join("designs.config").is_file());

    // Same command, same bytes.
    let before: Vec<Vec<u8>> = ["designs.csv", "map.csv", "map.svg"]
        .iter()
        .map(|f| fs::read(dir.path().join(f)).unwrap())
        .collect();
    ok(&args, dir.path());
    for (f, old) in ["designs.csv", "map.csv", "map.svg"].iter().zip(before) {
        assert_eq!(fs::read(dir.path().join(f)).unwrap(), old, "{f} changed between reruns");
    }
}

/// Radii in millimetres at full precision, as a designs CSV.
fn write_designs_csv(path: &Path, rows: &[&[f64]]) {
    let cols: Vec<String> = (1..=rows[0].len()).map(|i| format!("r{i}_mm")).collect();
    let mut text = format!("rank,{}\n", cols.join(","));
    for (i, radii) in rows.iter().enumerate() {
        let mm: Vec<String> = radii.iter().map(|r| format!("{:.17e}", r * 1000.0)).collect();
        text.push_str(&format!("{},{}\n", i + 1, mm.join(",")));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn verify_recovers_ground_truth_and_reversal_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let geometry = Geometry { layer_count: 3, ..Geometry::default() };
    let medium = Medium::default();
    let grid = FreqGrid::uniform(20.0, 20.0, 40).unwrap();
    let truth = vec![0.004, 0.011, 0.0063];
    let reversed: Vec<f64> = truth.iter().rev().copied().collect();
    let spectrum = transmission(
        &Structure::new(truth.clone(), &geometry).unwrap(),
        &grid,
        &geometry,
        &medium,
    )
    .unwrap();

    let mut target = String::from("frequency_hz,transmittance\n");
    for (f, t) in grid.frequencies().iter().zip(spectrum.values()) {
        target.push_str(&format!("{f},{t:.17e}\n"));
    }
    fs::write(dir.path().join("target.csv"), target).unwrap();
    write_designs_csv(&dir.path().join("designs.csv"), &[&truth, &reversed]);

    let stdout = ok(
        &[
            "verify", "--designs", "designs.csv", "--target", "target.csv",
            "--out", "check.csv", "--set", "geometry.layer_count=3", "--set", "grid.count=40",
        ],
        dir.path(),
    );
    assert!(stdout.contains("A1"), "{stdout}");
    let report = fs::read_to_string(dir.path().join("check.csv")).unwrap();
    let mut lines = report.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("rank,error,t20,t40"), "{header}");
    let errs: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(errs.len(), 2);
    assert!(errs[0] >= 0.0 && errs[0] < 1e-12, "ground truth error {}", errs[0]);
    assert!(errs[1] >= 0.0 && errs[1] < 1e-12, "reversal error {}", errs[1]);
    assert!((errs[0] - errs[1]).abs() < 1e-12, "reciprocity: {errs:?}");
}

#[test]
fn verify_layer_mismatch_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    write_designs_csv(&dir.path().join("designs.csv"), &[&[0.004, 0.011]]);
    fails_with(
        &["verify", "--designs", "designs.csv", "--target", "peak:1000", "--out", "c.csv"],
        dir.path(),
        6,
    );
}

#[test]
fn compare_rejects_unknown_models_listing_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    let stderr = fails_with(
        &["compare", "--data", "data.pdnd", "--models", "pdn,mlp", "--out", "r.csv"],
        dir.path(),
        2,
    );
    assert!(stderr.contains("mlp") && stderr.contains("pdn, ann, or tnn"), "{stderr}");
}

#[test]
fn compare_single_model_yields_one_row() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["gen-data", "--values", "3", "--layers", "2", "--set", "grid.count=40", "--out", "d.pdnd"],
        dir.path(),
    );
    ok(
        &[
            "compare", "--data", "d.pdnd", "--models", "ann", "--out", "r.csv",
            "--epochs", "2", "--set", "train.batch_size=2", "--set", "train.hidden_widths=8x8",
            "--set", "grid.count=40",
        ],
        dir.path(),
    );
    let report = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let rows: Vec<&str> = report.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "kind,train_error,test_error,time_s,variety_mean,variety_max,status");
    assert_eq!(rows.len(), 2, "{report}");
    assert!(rows[1].starts_with("ann,"), "{report}");
    assert!(rows[1].ends_with(",ok"), "{report}");
}

#[test]
fn config_precedence_is_flags_over_file_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    fs::write(dir.path().join("run.cfg"), "train.epochs = 3\ntrain.batch_size = 2\ntrain.hidden_widths = 8x8\ntrain.mixture_count = 3\n").unwrap();

    // File beats default (epochs 3, not 1000).
    ok(
        &["train", "--data", "data.pdnd", "--out", "f.pdnw", "--config", "run.cfg"],
        dir.path(),
    );
    let log = fs::read_to_string(dir.path().join("f.loss.csv")).unwrap();
    assert_eq!(log.lines().count() - 1, 3, "{log}");

    // --set beats the file.
    ok(
        &["train", "--data", "data.pdnd", "--out", "s.pdnw", "--config", "run.cfg", "--set", "train.epochs=2"],
        dir.path(),
    );
    let log = fs::read_to_string(dir.path().join("s.loss.csv")).unwrap();
    assert_eq!(log.lines().count() - 1, 2, "{log}");

    // The dedicated flag beats both.
    ok(
        &["train", "--data", "data.pdnd", "--out", "g.pdnw", "--config", "run.cfg", "--set", "train.epochs=2", "--epochs", "1"],
        dir.path(),
    );
    let log = fs::read_to_string(dir.path().join("g.loss.csv")).unwrap();
    assert_eq!(log.lines().count() - 1, 1, "{log}");

    // The sidecar records the effective value.
    let sidecar = fs::read_to_string(dir.path().join("g.config")).unwrap();
    assert!(sidecar.contains("train.epochs = 1"), "{sidecar}");
    let err = fails_with(
        &["train", "--data", "data.pdnd", "--out", "x.pdnw", "--set", "train.bogus=1"],
        dir.path(),
        2,
    );
    assert!(err.contains("train.bogus"), "{err}");
}

#[test]
fn weights_round_trip_through_every_kind() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    for kind in ["ann", "tnn"] {
        let out = format!("{kind}.pdnw");
        ok(
            &[
                "train", "--data", "data.pdnd", "--out", &out, "--model", kind,
                "--epochs", "0", "--widths", "8x8", "--set", "grid.count=40",
            ],
            dir.path(),
        );
        let bytes = fs::read(dir.path().join(&out)).unwrap();
        assert_eq!(&bytes[..4], b"PDNW", "{kind}");
    }
    // Re-saving a loaded model writes the same bytes.
    let first = fs::read(dir.path().join("model.pdnw")).unwrap();
    let model = pdn::models::PdnModel::load(&dir.path().join("model.pdnw")).unwrap();
    let copy = dir.path().join("copy.pdnw");
    model.save(&copy).unwrap();
    assert_eq!(fs::read(&copy).unwrap(), first);
}

#[test]
fn pca_grid_from_training_labels_needs_data_flag() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path());
    let stderr = fails_with(
        &[
            "design", "--weights", "model.pdnw", "--target", "peak:1000",
            "--out", "d.csv", "--pca-grid", "m.csv", "--pca-source", "labels",
        ],
        dir.path(),
        2,
    );
    assert!(stderr.contains("--data"), "{stderr}");
    ok(
        &[
            "design", "--weights", "model.pdnw", "--target", "peak:1000",
            "--out", "d.csv", "--pca-grid", "m.csv", "--pca-source", "labels",
            "--data", "data.pdnd", "--set", "design.pca_resolution=16",
        ],
        dir.path(),
    );
    assert!(dir.path().join("m.csv").is_file());
}
