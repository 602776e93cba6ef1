//! Exit-code contract and file-format behavior of the command line tool.

use std::path::Path;
use std::process::Command;

fn pgmvg(args: &[&str]) -> (Option<i32>, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pgmvg"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn make_world(dir: &Path) -> (String, String, String) {
    let spec = dir.join("spec.cfg");
    std::fs::write(
        &spec,
        "num_speakers = 6\nutts_per_speaker = 12..18\ndim = 16\nintra_noise = 0.3\n\
         model_count = 2\nmodel_rotation = true\nmodel_noise = 0.05\nseed = 11\n",
    )
    .unwrap();
    let world = dir.join("world");
    let (code, _, err) = pgmvg(&["synth", "--spec", path_str(&spec), "--out-prefix", path_str(&world)]);
    assert_eq!(code, Some(0), "synth: {err}");
    (
        world.join("model0.pgmv").to_str().unwrap().into(),
        world.join("model1.pgmv").to_str().unwrap().into(),
        world.join("utts.ids").to_str().unwrap().into(),
    )
}

#[test]
fn missing_required_flag_is_usage_error() {
    let (code, _, err) = pgmvg(&["cluster", "--emb", "whatever.pgmv", "--out", "x.tsv"]);
    assert_eq!(code, Some(1));
    assert!(err.contains("--ids"), "stderr names the missing flag: {err}");
}

#[test]
fn unknown_flag_is_usage_error() {
    let (code, _, _) = pgmvg(&["eval", "--pred", "a", "--truth", "b", "--frobnicate"]);
    assert_eq!(code, Some(1));
}

#[test]
fn help_and_version_exit_zero() {
    let (code, out, _) = pgmvg(&["--help"]);
    assert_eq!(code, Some(0));
    assert!(out.contains("cluster"));
    let (code, _, _) = pgmvg(&["--version"]);
    assert_eq!(code, Some(0));
}

#[test]
fn corrupt_embedding_file_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.pgmv");
    std::fs::write(&bad, b"XXXXgarbage that is long enough to hold a header").unwrap();
    let ids = tmp.path().join("utts.ids");
    std::fs::write(&ids, "a\nb\n").unwrap();
    let (code, _, err) = pgmvg(&[
        "cluster",
        "--emb",
        path_str(&bad),
        "--ids",
        path_str(&ids),
        "--out",
        path_str(&tmp.path().join("labels.tsv")),
    ]);
    assert_eq!(code, Some(2));
    assert!(err.contains("magic"), "stderr explains the magic: {err}");
}

#[test]
fn missing_input_file_is_data_error() {
    let (code, _, _) = pgmvg(&[
        "cluster",
        "--emb",
        "/nonexistent/path.pgmv",
        "--ids",
        "/nonexistent/utts.ids",
        "--out",
        "/tmp/never-written.tsv",
    ]);
    assert_eq!(code, Some(2));
}

#[test]
fn invalid_config_combination_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (m0, _, ids) = make_world(tmp.path());
    let (code, _, err) = pgmvg(&[
        "cluster",
        "--emb",
        &m0,
        "--ids",
        &ids,
        "--out",
        path_str(&tmp.path().join("labels.tsv")),
        "--k-init",
        "50",
        "--k-max",
        "10",
    ]);
    assert_eq!(code, Some(2), "stderr: {err}");
}

#[test]
fn unwritable_output_is_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (m0, m1, ids) = make_world(tmp.path());
    let (code, _, _) = pgmvg(&[
        "cluster",
        "--emb",
        &m0,
        "--emb",
        &m1,
        "--ids",
        &ids,
        "--out",
        "/nonexistent-dir/labels.tsv",
    ]);
    assert_eq!(code, Some(3));
}

#[test]
fn cluster_prints_classes_and_coverage() {
    let tmp = tempfile::tempdir().unwrap();
    let (m0, m1, ids) = make_world(tmp.path());
    let labels = tmp.path().join("labels.tsv");
    let (code, out, err) = pgmvg(&[
        "cluster",
        "--emb",
        &m0,
        "--emb",
        &m1,
        "--ids",
        &ids,
        "--out",
        path_str(&labels),
    ]);
    assert_eq!(code, Some(0), "stderr: {err}");
    let mut lines = out.lines();
    let classes = lines.next().unwrap();
    let coverage = lines.next().unwrap();
    assert!(classes.starts_with("classes\t"));
    assert!(coverage.starts_with("coverage\t"));
    let n: usize = classes.split('\t').nth(1).unwrap().parse().unwrap();
    assert!(n >= 1);

    // labels file covers every id in order
    let text = std::fs::read_to_string(&labels).unwrap();
    let ids_text = std::fs::read_to_string(&ids).unwrap();
    assert_eq!(text.lines().count(), ids_text.lines().count());
    for (lab, id) in text.lines().zip(ids_text.lines()) {
        assert_eq!(lab.split('\t').next().unwrap(), id);
    }
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (m0, m1, ids) = make_world(tmp.path());
    let mut files = Vec::new();
    for run in 0..2 {
        let labels = tmp.path().join(format!("labels{run}.tsv"));
        let history = tmp.path().join(format!("history{run}.tsv"));
        let (code, _, err) = pgmvg(&[
            "cluster",
            "--emb",
            &m0,
            "--emb",
            &m1,
            "--ids",
            &ids,
            "--out",
            path_str(&labels),
            "--history",
            path_str(&history),
        ]);
        assert_eq!(code, Some(0), "stderr: {err}");
        files.push((
            std::fs::read(&labels).unwrap(),
            std::fs::read(&history).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn config_file_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let (m0, m1, ids) = make_world(tmp.path());
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "k_init = 7\nk_max = 50\n").unwrap();
    let history = tmp.path().join("history.tsv");
    let (code, _, err) = pgmvg(&[
        "cluster",
        "--emb",
        &m0,
        "--emb",
        &m1,
        "--ids",
        &ids,
        "--out",
        path_str(&tmp.path().join("labels.tsv")),
        "--history",
        path_str(&history),
        "--config",
        path_str(&cfg),
        "--k-init",
        "9",
    ]);
    assert_eq!(code, Some(0), "stderr: {err}");
    let text = std::fs::read_to_string(&history).unwrap();
    // flag wins over the file; file wins over the default
    assert!(text.contains("# k_init = 9"), "header: {text}");
    assert!(text.contains("# k_max = 50"));
    let first_row = text
        .lines()
        .find(|l| !l.starts_with('#') && !l.starts_with('k'))
        .unwrap();
    assert!(first_row.starts_with("9\t"));
}

#[test]
fn eval_perfect_labels_score_one() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = tmp.path().join("truth.tsv");
    std::fs::write(&truth, "a\t0\nb\t0\nc\t1\nd\t1\n").unwrap();
    // same partition, permuted ids and class numbers
    let pred = tmp.path().join("pred.tsv");
    std::fs::write(&pred, "d\t5\nc\t5\nb\t2\na\t2\n").unwrap();
    let (code, out, err) = pgmvg(&["eval", "--pred", path_str(&pred), "--truth", path_str(&truth)]);
    assert_eq!(code, Some(0), "stderr: {err}");
    let values: Vec<&str> = out.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(values[2], "1.000000", "pairwise F");
    assert_eq!(values[3], "1.000000", "NMI");
}

#[test]
fn eval_mismatched_ids_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = tmp.path().join("truth.tsv");
    std::fs::write(&truth, "a\t0\nb\t1\n").unwrap();
    let pred = tmp.path().join("pred.tsv");
    std::fs::write(&pred, "a\t0\nz\t1\n").unwrap();
    let (code, _, err) = pgmvg(&["eval", "--pred", path_str(&pred), "--truth", path_str(&truth)]);
    assert_eq!(code, Some(2));
    assert!(err.contains('z'), "stderr names the missing id: {err}");
}

#[test]
fn convert_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let txt = tmp.path().join("emb.txt");
    std::fs::write(&txt, "1.0 0.0 0.25\n0.5 -0.5 0.125\n").unwrap();
    let bin = tmp.path().join("emb.pgmv");
    let (code, _, err) = pgmvg(&[
        "convert",
        "--to-pgmv",
        "--input",
        path_str(&txt),
        "--output",
        path_str(&bin),
    ]);
    assert_eq!(code, Some(0), "stderr: {err}");

    let back = tmp.path().join("back.txt");
    let (code, _, _) = pgmvg(&[
        "convert",
        "--to-text",
        "--input",
        path_str(&bin),
        "--output",
        path_str(&back),
    ]);
    assert_eq!(code, Some(0));
    let bin2 = tmp.path().join("emb2.pgmv");
    let (code, _, _) = pgmvg(&[
        "convert",
        "--to-pgmv",
        "--input",
        path_str(&back),
        "--output",
        path_str(&bin2),
    ]);
    assert_eq!(code, Some(0));
    // values representable in 32 bits survive the double round-trip exactly
    assert_eq!(
        std::fs::read(&bin).unwrap(),
        std::fs::read(&bin2).unwrap()
    );
}

#[test]
fn convert_needs_a_direction() {
    let tmp = tempfile::tempdir().unwrap();
    let txt = tmp.path().join("emb.txt");
    std::fs::write(&txt, "1 0\n").unwrap();
    let (code, _, _) = pgmvg(&[
        "convert",
        "--input",
        path_str(&txt),
        "--output",
        path_str(&tmp.path().join("x.pgmv")),
    ]);
    assert_eq!(code, Some(1));
}

#[test]
fn ragged_text_matrix_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let txt = tmp.path().join("emb.txt");
    std::fs::write(&txt, "1 0 0\n1 0\n").unwrap();
    let (code, _, err) = pgmvg(&[
        "convert",
        "--to-pgmv",
        "--input",
        path_str(&txt),
        "--output",
        path_str(&tmp.path().join("x.pgmv")),
    ]);
    assert_eq!(code, Some(2));
    assert!(err.contains("expected"), "stderr: {err}");
}
