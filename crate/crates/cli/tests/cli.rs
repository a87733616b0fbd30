use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use linecon_core::congraph::{load_graph, EdgeAttr};
use serde_json::Value;

fn linecon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linecon"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = linecon(dir, args);
    assert_eq!(
        code(&out),
        0,
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap()
}

/// Small synthetic corpus and an ss-feature line graph in `dir`.
fn prepare(dir: &Path) {
    ok(dir, &["synth", "--manifest", "m.jsonl", "--features", "f.bin", "--convs", "30"]);
    ok(
        dir,
        &["build-graph", "--manifest", "m.jsonl", "--features", "f.bin", "--out", "g.bin", "--edge-attr", "ss-feature"],
    );
}

#[test]
fn pipeline_writes_outputs_and_run_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    prepare(d);
    let stdout = ok(d, &["validate", "--manifest", "m.jsonl", "--features", "f.bin", "--report", "v.json"]);
    assert!(stdout.contains("ok"));
    assert_eq!(read_json(d.join("v.json"))["errors"].as_array().unwrap().len(), 0);

    ok(d, &["train", "--graph", "g.bin", "--out", "c.bin", "--seed", "7", "--max-epochs", "20", "--patience", "20"]);
    ok(d, &["eval", "--ckpt", "c.bin", "--graph", "g.bin", "--split", "test", "--out", "r.json"]);
    ok(d, &["predict", "--ckpt", "c.bin", "--graph", "g.bin", "--out", "p.csv"]);

    let report = read_json(d.join("r.json"));
    assert_eq!(report["split"], "test");
    let f1 = report["metrics"]["weighted_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    let csv = fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(csv.starts_with("true\\pred,class_0,class_1,class_2,class_3\n"));

    let history = read_json(d.join("c.bin.history.json"));
    assert_eq!(history["epochs"].as_array().unwrap().len(), 21);

    let preds = fs::read_to_string(d.join("p.csv")).unwrap();
    let g = load_graph(&d.join("g.bin")).unwrap();
    assert_eq!(preds.lines().count(), g.n_nodes() + 1);

    let run = read_json(d.join("c.bin.run.json"));
    assert_eq!(run["command"], "train");
    assert_eq!(run["seed"], 7);
    assert_eq!(run["config"]["model"]["kind"], "gat");
    assert_eq!(run["config"]["model"]["use_edge_attr"], true);
    assert_eq!(run["config"]["optimizer"]["lr"], 1e-3);
    assert_eq!(run["inputs"][0]["path"], "g.bin");
    assert_eq!(run["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(run["outputs"].as_array().unwrap().len(), 2);
    for name in ["m.jsonl", "g.bin", "v.json", "r.json", "p.csv"] {
        let run = read_json(d.join(format!("{name}.run.json")));
        assert_eq!(run["outputs"][0]["path"], name);
    }
}

#[test]
fn training_twice_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    prepare(d);
    let common = ["train", "--graph", "g.bin", "--model", "gat", "--seed", "7", "--max-epochs", "15", "--patience", "15"];
    ok(d, &[&common[..], &["--out", "a.bin"]].concat());
    ok(d, &[&common[..], &["--out", "b.bin"]].concat());
    assert_eq!(fs::read(d.join("a.bin")).unwrap(), fs::read(d.join("b.bin")).unwrap());
    assert_eq!(
        fs::read(d.join("a.bin.history.json")).unwrap(),
        fs::read(d.join("b.bin.history.json")).unwrap()
    );
    let digest = |p: &str| read_json(d.join(p))["outputs"][0]["sha256"].clone();
    assert_eq!(digest("a.bin.run.json"), digest("b.bin.run.json"));

    let out = Command::new(env!("CARGO_BIN_EXE_linecon"))
        .current_dir(d)
        .env("LINECON_THREADS", "1")
        .args([&common[..], &["--out", "c.bin"]].concat())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(read_json(d.join("c.bin.run.json"))["threads"], 1);
    assert_eq!(fs::read(d.join("a.bin")).unwrap(), fs::read(d.join("c.bin")).unwrap());
}

#[test]
fn line_graph_over_three_conversations() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut manifest = String::from(r#"{"format":"linecon-manifest","version":1,"emotions":["neutral","joy"]}"#);
    manifest.push('\n');
    for (c, len) in [3, 4, 2].into_iter().enumerate() {
        let utts: Vec<String> = (0..len)
            .map(|u| {
                format!(r#"{{"utt_id":"d{c}u{u}","emotion":"joy","sentiment":{},"split":"train"}}"#, u % 3)
            })
            .collect();
        manifest.push_str(&format!(r#"{{"conv_id":"d{c}","utterances":[{}]}}"#, utts.join(",")));
        manifest.push('\n');
    }
    fs::write(d.join("m.jsonl"), manifest).unwrap();
    let mut features = b"LCFEAT01".to_vec();
    features.extend_from_slice(&9u32.to_le_bytes());
    features.extend_from_slice(&1u32.to_le_bytes());
    for i in 0..9 {
        features.extend_from_slice(&(i as f32).to_le_bytes());
    }
    fs::write(d.join("f.bin"), features).unwrap();

    let stdout = ok(
        d,
        &["build-graph", "--manifest", "m.jsonl", "--features", "f.bin", "--out", "g.bin", "--topology", "line", "--edge-attr", "none"],
    );
    assert!(stdout.contains("21 directed edges"), "{stdout}");
    assert_eq!(load_graph(&d.join("g.bin")).unwrap().n_edges(), 21);

    ok(
        d,
        &[
            "build-graph", "--manifest", "m.jsonl", "--features", "f.bin", "--out", "w.bin", "--edge-attr", "ss-weight",
            "--shift", "2", "--noshift", "1", "--selfloop", "1",
        ],
    );
    let g = load_graph(&d.join("w.bin")).unwrap();
    let EdgeAttr::Weights(w) = g.attr() else { panic!("weights expected") };
    let e = g.find_edge(0, 1).unwrap();
    assert_eq!(w[e], 2.0);
    let run = read_json(d.join("w.bin.run.json"));
    assert_eq!(run["config"]["shift_weights"]["shift"], 2.0);

    ok(d, &["build-graph", "--manifest", "m.jsonl", "--features", "f.bin", "--out", "full.bin", "--topology", "full"]);
    assert_eq!(load_graph(&d.join("full.bin")).unwrap().n_edges(), 9 + 16 + 4);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    prepare(d);
    fs::write(d.join("t.toml"), "model = \"gcn\"\nhidden = 8\nmax_epochs = 4\npatience = 2\nlr = 0.01\nignore_edge_attr = true\n").unwrap();
    ok(d, &["train", "--graph", "g.bin", "--config", "t.toml", "--out", "a.bin"]);
    let cfg = read_json(d.join("a.bin.run.json"))["config"].clone();
    assert_eq!(cfg["model"]["kind"], "gcn");
    assert_eq!(cfg["model"]["hidden_dim"], 8);
    assert_eq!(cfg["model"]["use_edge_attr"], false);
    assert_eq!(cfg["max_epochs"], 4);
    assert_eq!(cfg["optimizer"]["lr"], 0.01);
    assert_eq!(cfg["optimizer"]["weight_decay"], 1e-4);

    ok(d, &["train", "--graph", "g.bin", "--config", "t.toml", "--hidden", "5", "--lr", "0.002", "--out", "b.bin"]);
    let cfg = read_json(d.join("b.bin.run.json"))["config"].clone();
    assert_eq!(cfg["model"]["hidden_dim"], 5);
    assert_eq!(cfg["optimizer"]["lr"], 0.002);
    assert_eq!(cfg["max_epochs"], 4);

    fs::write(d.join("bad.toml"), "hiden = 8\n").unwrap();
    let out = linecon(d, &["train", "--graph", "g.bin", "--config", "bad.toml", "--out", "c.bin"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn gradcheck_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let stdout = ok(d, &["gradcheck", "--model", "gcn", "--nodes", "5", "--dims", "4,3,2", "--seed", "1"]);
    assert!(stdout.contains("gcn.w0") && stdout.contains("gcn.w1"));
    let stdout = ok(d, &["gradcheck", "--model", "gat", "--edge-attr", "ss-feature", "--nodes", "5", "--dims", "4,3,2"]);
    for name in ["gat.0.we", "gat.0.a", "gat.1.we", "gat.1.a"] {
        assert!(stdout.contains(name), "{stdout}");
    }
    for dims in ["4,3", "a,b,c", "4,3,2,1"] {
        assert_eq!(code(&linecon(d, &["gradcheck", "--model", "gcn", "--dims", dims])), 2);
    }
    assert_eq!(code(&linecon(d, &["gradcheck", "--model", "gcn", "--edge-attr", "ss-feature"])), 2);
    // An absurd tolerance cannot be met.
    assert_eq!(code(&linecon(d, &["gradcheck", "--model", "gcn", "--tolerance", "0"])), 1);
}

#[test]
fn usage_and_validation_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&linecon(d, &["train", "--graph", "g.bin", "--out", "c.bin", "--bogus"])), 2);
    assert_eq!(code(&linecon(d, &["frobnicate"])), 2);
    assert_eq!(code(&linecon(d, &["--help"])), 0);

    prepare(d);
    let out = Command::new(env!("CARGO_BIN_EXE_linecon"))
        .current_dir(d)
        .env("LINECON_THREADS", "zero")
        .args(["gradcheck", "--model", "gcn"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);

    // A corrupted sentiment fails validation with the report path printed.
    let manifest = fs::read_to_string(d.join("m.jsonl")).unwrap();
    let key = "\"sentiment\":";
    let at = manifest.find(key).unwrap() + key.len();
    let mut broken = manifest.clone();
    broken.replace_range(at..at + 1, "7");
    fs::write(d.join("bad.jsonl"), broken).unwrap();
    let out = linecon(d, &["validate", "--manifest", "bad.jsonl", "--features", "f.bin", "--report", "bad.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("bad.json"));
    assert!(read_json(d.join("bad.json"))["errors"][0]["message"]
        .as_str()
        .unwrap()
        .contains("sentiment out of range"));
    let out = linecon(d, &["build-graph", "--manifest", "bad.jsonl", "--features", "f.bin", "--out", "x.bin"]);
    assert_eq!(code(&out), 1);
    assert!(!d.join("x.bin").exists());

    // A missing checkpoint is a runtime failure.
    assert_eq!(code(&linecon(d, &["eval", "--ckpt", "none.bin", "--graph", "g.bin", "--out", "r.json"])), 1);
}
