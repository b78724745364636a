#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn pixelbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pixelbench"))
        .args(args)
        .env_remove("PIXELBENCH_TEST_KEY")
        .output()
        .expect("binary runs")
}

pub fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

/// Twenty examples over five tasks: boolq, cb, gsm8k, a table task and a
/// document task backed by a PNG with OCR text.
pub fn write_dataset(dir: &Path) -> PathBuf {
    use pixelbench_core::render::{encode_png, render_text, RenderSpec};
    let img = render_text("Invoice total: 42 dollars", &RenderSpec::default()).unwrap();
    fs::write(dir.join("invoice.png"), encode_png(&img)).unwrap();
    let mut lines = Vec::new();
    for i in 0..4 {
        lines.push(format!(
            r#"{{"id":"boolq-{i}","task":"boolq","input":"Passage {i}: the sky is blue on clear days.\nQuestion: is the sky blue?","choices":["True","False"],"references":["True"]}}"#
        ));
        lines.push(format!(
            r#"{{"id":"cb-{i}","task":"cb","input":"Premise {i}: it rained. Hypothesis: the ground is wet.","choices":["entailment","contradiction","neutral"],"references":["entailment"]}}"#
        ));
        lines.push(format!(
            r#"{{"id":"gsm-{i}","task":"gsm8k","input":"Tom has {i} apples and buys 3 more. How many apples does he have?","references":["{}"]}}"#,
            i + 3
        ));
        lines.push(format!(
            r#"{{"id":"table-{i}","task":"tablebench","input":"Which city is larger?","table":{{"columns":["City","Population"],"rows":[["Oslo","709000"],["Bergen","291000"]]}},"references":["Oslo"]}}"#
        ));
        lines.push(format!(
            r#"{{"id":"doc-{i}","task":"docvqa","input":"What is the invoice total?","image_path":"invoice.png","ocr_text":"Invoice total: 42 dollars","references":["42 dollars"]}}"#
        ));
    }
    let path = dir.join("mini.jsonl");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}
