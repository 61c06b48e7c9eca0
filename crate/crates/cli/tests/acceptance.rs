//! Black-box tests of the `rankscope` binary: reproducibility (the last
//! acceptance criterion), exit codes and the documented output examples.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rankscope::io::{write_bmat, write_labels, write_tokens};
use rankscope::matrix::DenseMatrix;
use rankscope::synth::{planted_task, zipfian_corpus};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rankscope"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn assert_identical(a: &Path, b: &Path) {
    let (fa, fb) = (read_dir_bytes(a), read_dir_bytes(b));
    assert_eq!(
        fa.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        fb.iter().map(|(n, _)| n).collect::<Vec<_>>()
    );
    for ((name, bytes_a), (_, bytes_b)) in fa.iter().zip(&fb) {
        assert_eq!(bytes_a, bytes_b, "output {name} differs between reruns");
    }
}

fn diag_bmat(dir: &Path, values: &[f64]) -> PathBuf {
    let n = values.len();
    let mut m = DenseMatrix::zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m.set(i, i, *v);
    }
    let path = dir.join("m.bmat");
    write_bmat(&path, &m).unwrap();
    path
}

#[test]
fn criterion_10_byte_identical_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();

    // spectrum
    let input = diag_bmat(root, &[5.0, 4.0, 3.0, 2.0, 1.0]);
    for out in ["s1", "s2"] {
        let out = root.join(out);
        assert_ok(&run(&[
            "spectrum",
            "--input",
            input.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--entropy",
            "--werror",
            "--normalized",
            "--topk",
            "3",
            "--seed",
            "42",
        ]));
    }
    assert_identical(&root.join("s1"), &root.join("s2"));

    // ngram
    let toks = root.join("corpus.toks");
    write_tokens(&toks, &zipfian_corpus(20_000, 40, 500, 3).unwrap()).unwrap();
    for out in ["n1", "n2"] {
        let out = root.join(out);
        assert_ok(&run(&[
            "ngram",
            "--tokens",
            toks.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--n",
            "3",
            "--topk",
            "20",
            "--seed",
            "7",
        ]));
    }
    assert_identical(&root.join("n1"), &root.join("n2"));

    // head-sweep
    let ds = planted_task(6, 4, 400, 100, None, 1.5, 2);
    let (f, l) = (root.join("train.bmat"), root.join("train.lbls"));
    let (ef, el) = (root.join("eval.bmat"), root.join("eval.lbls"));
    write_bmat(&f, &ds.train_features).unwrap();
    write_labels(&l, &ds.train_labels).unwrap();
    write_bmat(&ef, &ds.eval_features).unwrap();
    write_labels(&el, &ds.eval_labels).unwrap();
    for out in ["h1", "h2"] {
        let out = root.join(out);
        assert_ok(&run(&[
            "head-sweep",
            "--features",
            f.to_str().unwrap(),
            "--labels",
            l.to_str().unwrap(),
            "--eval-features",
            ef.to_str().unwrap(),
            "--eval-labels",
            el.to_str().unwrap(),
            "--ranks",
            "1,2,4",
            "--lrs",
            "0.05,0.1",
            "--seeds",
            "0",
            "--epochs",
            "3",
            "--out-dir",
            out.to_str().unwrap(),
        ]));
    }
    assert_identical(&root.join("h1"), &root.join("h2"));

    // fit-scaling
    let pts = root.join("points.csv");
    std::fs::write(
        &pts,
        "tag,N,T,L\nrun,1e7,2e9,3.4\nrun,1e8,2e10,2.6\nrun,1e9,2e11,2.1\nrun,1e10,2e12,1.9\n",
    )
    .unwrap();
    for out in ["f1", "f2"] {
        let out = root.join(out);
        assert_ok(&run(&[
            "fit-scaling",
            "--points",
            pts.to_str().unwrap(),
            "--free",
            "A,alpha",
            "--fixed",
            "B=410.7,beta=0.28,E=1.69",
            "--gap",
            "--out-dir",
            out.to_str().unwrap(),
        ]));
    }
    assert_identical(&root.join("f1"), &root.join("f2"));

    println!("criterion 10 (byte-identical reruns with fixed seed and inputs): PASS");
}

#[test]
fn spectrum_entropy_example() {
    let tmp = tempfile::tempdir().unwrap();
    let input = diag_bmat(tmp.path(), &[3.0, 1.0]);
    let out = tmp.path().join("out");
    assert_ok(&run(&[
        "spectrum",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--entropy",
    ]));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    let e = summary["singular_entropy"].as_f64().unwrap();
    assert!((e - 0.13081).abs() < 1e-5, "entropy {e}");
}

#[test]
fn spectrum_rejects_zero_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let input = diag_bmat(tmp.path(), &[0.0, 0.0]);
    let out = run(&[
        "spectrum",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("all-zero spectrum"));
}

#[test]
fn spectrum_clamps_oversized_topk_with_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let input = diag_bmat(tmp.path(), &[2.0, 1.0]);
    let out = tmp.path().join("out");
    assert_ok(&run(&[
        "spectrum",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--topk",
        "99",
    ]));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let warnings = manifest["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("clamped")));
}

#[test]
fn anisotropy_identities_via_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let same = tmp.path().join("same.bmat");
    write_bmat(
        &same,
        &DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap(),
    )
    .unwrap();
    let ortho = tmp.path().join("ortho.bmat");
    write_bmat(
        &ortho,
        &DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
    )
    .unwrap();
    let dumps = tmp.path().join("dumps.json");
    std::fs::write(
        &dumps,
        format!(
            r#"[{{"path":"{}","layer_id":"0","checkpoint_id":"ck"}},
                {{"path":"{}","layer_id":"1","checkpoint_id":"ck"}}]"#,
            same.display(),
            ortho.display()
        ),
    )
    .unwrap();
    let out = tmp.path().join("out");
    assert_ok(&run(&[
        "anisotropy",
        "--dumps",
        dumps.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(out.join("anisotropy.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "checkpoint_id,layer_id,n,anisotropy");
    let val = |row: &str| row.rsplit(',').next().unwrap().parse::<f64>().unwrap();
    assert!((val(rows[1]) - 1.0).abs() < 1e-10);
    assert!(val(rows[2]).abs() < 1e-10);
}

#[test]
fn fit_scaling_with_no_free_params_echoes_fixed() {
    let tmp = tempfile::tempdir().unwrap();
    let pts = tmp.path().join("points.csv");
    std::fs::write(&pts, "tag,N,T,L\nrun,1e8,1e10,2.5\nrun,1e9,1e11,2.0\n").unwrap();
    let out = tmp.path().join("out");
    assert_ok(&run(&[
        "fit-scaling",
        "--points",
        pts.to_str().unwrap(),
        "--fixed",
        "A=119.09,alpha=0.246,B=410.7,beta=0.28,E=1.69",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    let fit: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["params"]["a"].as_f64().unwrap(), 119.09);
    assert_eq!(fit["params"]["alpha"].as_f64().unwrap(), 0.246);
}

#[test]
fn verify_rejects_corrupted_task_json() {
    let tmp = tempfile::tempdir().unwrap();
    let task = tmp.path().join("task.json");
    std::fs::write(&task, b"{ this is not json").unwrap();
    let out = run(&[
        "verify",
        "--suite",
        "eym",
        "--task",
        task.to_str().unwrap(),
        "--out-dir",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn write_task(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

#[test]
fn verify_eym_suite_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let task = tmp.path().join("task.json");
    write_task(
        &task,
        r#"{"kind":"gaussian","vocab_size":15,"feature_dim":9,"n_train":100,
           "planted_rank":null,"seed":4}"#,
    );
    let out = tmp.path().join("out");
    assert_ok(&run(&[
        "verify",
        "--suite",
        "eym",
        "--task",
        task.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    let result: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["pass"], serde_json::Value::Bool(true));
    assert!(out.join("eym.csv").exists());
}

#[test]
fn verify_theorem1_suite_passes_on_planted_low_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let task = tmp.path().join("task.json");
    write_task(
        &task,
        r#"{"kind":"gaussian","vocab_size":12,"feature_dim":6,"n_train":800,
           "planted_rank":3,"logit_scale":2.0,"seed":5,"grad_tol":1e-6,
           "max_steps":100000}"#,
    );
    let out = tmp.path().join("out");
    assert_ok(&run(&[
        "verify",
        "--suite",
        "theorem1",
        "--task",
        task.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--epochs",
        "200",
    ]));
    let result: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["pass"], serde_json::Value::Bool(true));
}

#[test]
fn verify_lemma1_suite_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let task = tmp.path().join("task.json");
    write_task(
        &task,
        r#"{"kind":"one_hot","vocab_size":8,"feature_dim":10,"n_train":800,
           "planted_rank":null,"logit_scale":1.0,"seed":6,"grad_tol":1e-7,
           "max_steps":100000}"#,
    );
    let out = tmp.path().join("out");
    assert_ok(&run(&[
        "verify",
        "--suite",
        "lemma1",
        "--task",
        task.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(out.join("lemma1.csv")).unwrap();
    assert!(csv.lines().count() > 10);
}
