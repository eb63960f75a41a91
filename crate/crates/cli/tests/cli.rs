use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gramtex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gramtex"))
        .args(args)
        .env_remove("GRAMNET_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = gramtex(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        files.push((rel, fs::read(&entry).unwrap()));
    }
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn help_documents_defaults() {
    let top = ok(&["--help"]);
    for sub in ["synth", "glcm", "edit", "correlate", "train", "eval", "gradcheck"] {
        assert!(top.contains(sub), "{sub} missing from help");
    }
    let train = ok(&["train", "--help"]);
    assert!(train.contains("[default: 0.00001]"), "{train}");
    assert!(train.contains("[default: 64]") && train.contains("[default: 256]"));
    let eval = ok(&["eval", "--help"]);
    assert!(eval.contains("[default: 25]") && eval.contains("[default: 5]"));
    assert!(eval.contains("original,down8,jpeg,jpeg-down8,blur,noise"));
    let glcm = ok(&["glcm", "--help"]);
    assert!(glcm.contains("1,2,5,10,15,20"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(gramtex(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(gramtex(&["glcm", "/definitely/missing.png"]).status.code(), Some(1));
    assert_eq!(gramtex(&["glcm", "x.png", "--distances", "0"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("a.png");
    ok(&["synth", "--out", dir.path().join("s").to_str().unwrap(), "--count", "1", "--size", "32"]);
    fs::copy(dir.path().join("s/real/00000.png"), &input).unwrap();
    let out = dir.path().join("b.png");
    let code = gramtex(&["edit", "--op", "blur", "--kernel", "4", input.to_str().unwrap(), out.to_str().unwrap()]);
    assert_eq!(code.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn synth_is_deterministic_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["synth", "--out", out.to_str().unwrap(), "--count", "3", "--size", "32", "--seed", seed]);
        tree_bytes(&out)
    };
    let a = run("a", "4");
    assert_eq!(a.len(), 7);
    assert!(a.iter().any(|(p, _)| p == "manifest.json"));
    assert_eq!(a, run("b", "4"));
    assert_ne!(a, run("c", "5"));

    let env = dir.path().join("env");
    let status = Command::new(env!("CARGO_BIN_EXE_gramtex"))
        .args(["synth", "--out", env.to_str().unwrap(), "--count", "3", "--size", "32"])
        .env("GRAMNET_SEED", "4")
        .output()
        .unwrap();
    assert!(status.status.success());
    assert_eq!(tree_bytes(&env), a);
}

#[test]
fn glcm_of_constant_image_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("flat.pgm");
    let mut bytes = b"P5\n24 24\n255\n".to_vec();
    bytes.extend([90u8; 24 * 24]);
    fs::write(&img, bytes).unwrap();
    let csv = ok(&["glcm", img.to_str().unwrap(), "--csv", "--distances", "1,2,5"]);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4, "{csv}");
    assert!(rows[1..].iter().all(|r| r.ends_with(",0")), "{csv}");

    let json: serde_json::Value = serde_json::from_str(&ok(&["glcm", img.to_str().unwrap()])).unwrap();
    assert_eq!(json["distances"].as_array().unwrap().len(), 6);
    assert!(json["pooled"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));
}

#[test]
fn edit_folder_and_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["synth", "--out", data.to_str().unwrap(), "--count", "4", "--size", "32"]);
    let real = data.join("real");
    let small = dir.path().join("small");
    ok(&["edit", "--op", "resize", "--factor", "0.5", real.to_str().unwrap(), small.to_str().unwrap()]);
    let files = walk(&small);
    assert_eq!(files.len(), 4);
    let noisy_a = dir.path().join("na.png");
    let noisy_b = dir.path().join("nb.png");
    let one = real.join("00000.png");
    for out in [&noisy_a, &noisy_b] {
        ok(&["edit", "--op", "noise", "--seed", "3", one.to_str().unwrap(), out.to_str().unwrap()]);
    }
    assert_eq!(fs::read(&noisy_a).unwrap(), fs::read(&noisy_b).unwrap());

    let csv = ok(&["correlate", real.to_str().unwrap(), "--op", "blur", "--csv", "--distances", "1,2"]);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "distance,r");
    assert_eq!(rows.len(), 3);
    let r: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((-1.0..=1.0).contains(&r));
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["synth", "--out", data.to_str().unwrap(), "--count", "4", "--size", "32"]);
    let ckpt = dir.path().join("m.ckpt");
    let history = dir.path().join("h.json");
    let train_args = [
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--epochs",
        "1",
        "--batch-size",
        "4",
        "--resize-min",
        "32",
        "--resize-max",
        "32",
        "--stage-widths",
        "2,3",
        "--blocks-per-stage",
        "1",
        "--gram-align",
        "3",
        "--gram-refine",
        "2",
        "--lr",
        "0.01",
        "--history",
        history.to_str().unwrap(),
    ];
    ok(&train_args);
    let first = fs::read(&ckpt).unwrap();
    ok(&train_args);
    assert_eq!(first, fs::read(&ckpt).unwrap());
    let h: serde_json::Value = serde_json::from_str(&fs::read_to_string(&history).unwrap()).unwrap();
    assert_eq!(h.as_array().unwrap().len(), 1);

    let mut repeated = train_args.to_vec();
    repeated.extend(["--repeats", "2"]);
    let summary: serde_json::Value = serde_json::from_str(&ok(&repeated)).unwrap();
    assert_eq!(summary["val_accuracy"].as_array().unwrap().len(), 2);
    assert_eq!(first, fs::read(&ckpt).unwrap());
    assert_ne!(first, fs::read(dir.path().join("m.r1.ckpt")).unwrap());
    assert!(dir.path().join("h.r1.json").exists());

    let report = dir.path().join("r.json");
    let spec = format!("tiny={}", ckpt.display());
    let table = ok(&[
        "eval",
        "--checkpoint",
        &spec,
        "--data",
        data.to_str().unwrap(),
        "--base-size",
        "native",
        "--conditions",
        "original,blur",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(table.contains("tiny") && table.contains("blur"), "{table}");
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["results"].as_array().unwrap().len(), 2);

    let missing = gramtex(&["eval", "--checkpoint", "/missing.ckpt", "--data", data.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck", "--max-per-input", "8"]);
    assert_eq!(out.lines().filter(|l| l.ends_with("PASS")).count(), 14, "{out}");
}
