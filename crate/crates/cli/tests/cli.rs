use std::path::Path;
use std::process::{Command, Output};

fn tocr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tocr"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "{:?}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn bad_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tocr(&["ocr", "missing.png"], dir.path()).status.code(), Some(1));
    assert_eq!(tocr(&["frobnicate"], dir.path()).status.code(), Some(1));
    std::fs::write(dir.path().join("junk.png"), b"not a png").unwrap();
    assert_eq!(tocr(&["segment", "junk.png"], dir.path()).status.code(), Some(1));
    assert_eq!(
        tocr(&["train", "nothing.jsonl", "--arch", "CRP25-XX", "--target", "main"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(tocr(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn sheet_to_bundle_to_text() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(tocr(&["render-sheet", "sheet.png", "--size", "25", "--seed", "3"], d));
    assert!(d.join("sheet.labels").exists());
    ok(tocr(&["ingest", "sheet.png", "sheet.labels", "--out", "clean", "--size", "25"], d));
    let clean = std::fs::read_to_string(d.join("clean/manifest.jsonl")).unwrap();
    assert_eq!(clean.lines().count(), 1 + 52);
    ok(tocr(&["augment", "clean/manifest.jsonl", "aug", "--seed", "1"], d));
    for target in ["main", "modifier"] {
        ok(tocr(
            &[
                "train", "aug/manifest.jsonl", "--arch", "TCCNN-S", "--target", target, "--epochs", "1",
                "--history", &format!("{target}.history.json"),
            ],
            d,
        ));
    }
    let history: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("main.history.json")).unwrap()).unwrap();
    assert_eq!(history["epochs"].as_array().unwrap().len(), 1);
    ok(tocr(&["bundle", "--main", "main.tocr", "--modifier", "modifier.tocr", "--out", "bundle"], d));
    let eval = ok(tocr(&["eval", "aug/manifest.jsonl", "--split", "val"], d));
    assert!(eval.contains("joint"), "{eval}");
    let txt = ok(tocr(&["ocr", "sheet.png", "--format", "txt"], d));
    assert_eq!(txt.lines().count(), 4, "{txt}");
    let html = ok(tocr(&["ocr", "sheet.png"], d));
    assert!(html.starts_with("<!DOCTYPE html>"));
}
