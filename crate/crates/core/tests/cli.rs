//! Command-line contracts: exit codes, precedence, determinism and
//! cross-command equivalence.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

use cornea_oct::config::DatasetConfig;
use cornea_oct::pipeline::read_sample;

const SMALL: [&str; 6] = ["--set", "width=40", "--set", "height=32", "--photons", "200"];

fn cli(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cornea-oct"))
        .args(args)
        .env_remove("CORNEA_OCT_OUTPUT")
        .current_dir(root)
        .output()
        .expect("binary runs")
}

fn with_small<'a>(cmd: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["-q"];
    v.extend_from_slice(cmd);
    v.extend_from_slice(&SMALL);
    v.extend_from_slice(extra);
    v
}

fn tree(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    out
}

#[test]
fn generate_happy_path_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    for out in [&out1, &out2] {
        let o = cli(
            &with_small(&["--json", "generate"], &["--samples", "2", "--seed-root", "7", "-o", out.to_str().unwrap()]),
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(summary["samples"], 2);
        assert_eq!(summary["failed"].as_array().unwrap().len(), 0);
    }
    assert!(out1.join("000000").is_dir() && out1.join("000001").is_dir());
    assert!(out1.join("manifest.json").is_file() && out1.join("manifest.jsonl").is_file());
    assert_eq!(tree(&out1), tree(&out2));
}

#[test]
fn malformed_config_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, "{ \"total_samples\": ").unwrap();
    let out = tmp.path().join("out");
    let o = cli(&["generate", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    // unknown fields and invalid values are configuration errors too
    fs::write(&cfg, r#"{"total_sample": 3}"#).unwrap();
    assert_eq!(cli(&["generate", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    let o = cli(&["generate", "--set", "healthy_fraction=1.5", "-o", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = cli(&["generate", "--set", "transport.nope=1", "-o", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let missing = tmp.path().join("missing.json");
    assert_eq!(cli(&["info", "-c", missing.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}

#[test]
fn preview_phenotype_determinism_and_equivalence() {
    let tmp = tempfile::tempdir().unwrap();
    let p1 = tmp.path().join("p1");
    let p2 = tmp.path().join("p2");
    for out in [&p1, &p2] {
        let o = cli(
            &with_small(&["preview"], &["--phenotype", "keratoconus", "--seed-root", "1", "-o", out.to_str().unwrap()]),
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let record = read_sample(&p1.join("000000")).unwrap();
    let band = DatasetConfig::default().geometry.ranges.bulge_height_keratoconus;
    assert!(band.contains(record.meta.geometry.bulge_height));
    for name in ["preview_image.png", "preview_overlay.png", "preview_n.png", "preview_mus.png", "preview_g.png", "preview_panel.png"] {
        let a = fs::read(p1.join("000000").join(name)).unwrap();
        assert_eq!(a, fs::read(p2.join("000000").join(name)).unwrap(), "{name}");
    }

    // sample 5 from preview equals sample 5 of a full generate
    let ds = tmp.path().join("ds");
    let pv = tmp.path().join("pv");
    let gen = cli(&with_small(&["generate"], &["--samples", "6", "-o", ds.to_str().unwrap()]), tmp.path());
    assert_eq!(gen.status.code(), Some(0));
    let prev = cli(&with_small(&["preview"], &["--samples", "6", "--sample-id", "5", "-o", pv.to_str().unwrap()]), tmp.path());
    assert_eq!(prev.status.code(), Some(0));
    let a = read_sample(&ds.join("000005")).unwrap();
    let b = read_sample(&pv.join("000005")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn validate_exit_codes_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let o = cli(&with_small(&["generate"], &["--samples", "2", "-o", ds.to_str().unwrap()]), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(cli(&["-q", "validate", ds.to_str().unwrap()], tmp.path()).status.code(), Some(0));

    let deep = cli(&["validate", "--deep", ds.to_str().unwrap()], tmp.path());
    assert_eq!(deep.status.code(), Some(0));
    let report = String::from_utf8_lossy(&deep.stderr);
    assert_eq!(report.matches("PASS  regeneration").count(), 2, "{report}");

    let single = ds.join("000001");
    assert_eq!(cli(&["-q", "validate", single.to_str().unwrap()], tmp.path()).status.code(), Some(0));

    let target = single.join("n.f32");
    let mut bytes = fs::read(&target).unwrap();
    bytes[100] ^= 0xff;
    fs::write(&target, bytes).unwrap();
    let bad = cli(&["--json", "validate", ds.to_str().unwrap()], tmp.path());
    assert_eq!(bad.status.code(), Some(1));
    let summary: Value = serde_json::from_slice(&bad.stdout).unwrap();
    let failures = summary["failures"].as_array().unwrap();
    assert!(failures.iter().any(|f| f["check"] == "checksum n.f32"));
    assert!(failures
        .iter()
        .any(|f| f["check"] == "coefficient consistency" && f["detail"].as_str().unwrap().contains("n.f32")));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("FAIL  checksum n.f32"));

    let nothing = tmp.path().join("nothing");
    assert_eq!(cli(&["validate", nothing.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    fs::create_dir(&nothing).unwrap();
    assert_eq!(cli(&["validate", nothing.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}

#[test]
fn generate_reports_partial_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    // a sample directory occupied by a plain file cannot be written
    fs::create_dir_all(&ds).unwrap();
    fs::write(ds.join("000001"), b"in the way").unwrap();
    let o = cli(&with_small(&["--json", "generate"], &["--samples", "3", "-o", ds.to_str().unwrap()]), tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["failed"], serde_json::json!([1]));
    assert_eq!(summary["samples"], 2);
}

#[test]
fn info_prints_defaults_and_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.json");
    fs::write(&empty, "").unwrap();
    let o = cli(&["--json", "info", "-c", empty.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let info: Value = serde_json::from_slice(&o.stdout).unwrap();
    let defaults = serde_json::to_value(DatasetConfig::default()).unwrap();
    assert_eq!(info["config"], defaults);
    assert_eq!(info["config_hash"], DatasetConfig::default().content_hash());

    let file = tmp.path().join("c.json");
    fs::write(&file, r#"{"transport": {"photons_per_aline": 500}, "seed_root": 3, "output_root": "from-file"}"#).unwrap();
    let run = |extra: &[&str]| -> Value {
        let mut args = vec!["--json", "info", "-c", file.to_str().unwrap()];
        args.extend_from_slice(extra);
        serde_json::from_slice(&cli(&args, tmp.path()).stdout).unwrap()
    };
    let from_file = run(&[]);
    assert_eq!(from_file["config"]["transport"]["photons_per_aline"], 500);
    assert_eq!(from_file["config"]["seed_root"], 3);
    assert_eq!(from_file["config"]["width"], 1024);
    let flagged = run(&["--photons", "1234", "--seed-root", "9", "--set", "system.eta=0.25"]);
    assert_eq!(flagged["config"]["transport"]["photons_per_aline"], 1234);
    assert_eq!(flagged["config"]["seed_root"], 9);
    assert_eq!(flagged["config"]["system"]["eta"], 0.25);
    assert_ne!(flagged["config_hash"], from_file["config_hash"]);
    // the dedicated flag wins over a --set of the same field
    let both = run(&["--set", "transport.photons_per_aline=77", "--photons", "88"]);
    assert_eq!(both["config"]["transport"]["photons_per_aline"], 88);

    // output root: flag > file > environment > default
    assert_eq!(from_file["config"]["output_root"], "from-file");
    let env_out = Command::new(env!("CARGO_BIN_EXE_cornea-oct"))
        .args(["--json", "info"])
        .env("CORNEA_OCT_OUTPUT", "from-env")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&env_out.stdout).unwrap();
    assert_eq!(v["config"]["output_root"], "from-env");
    let flag_out = Command::new(env!("CARGO_BIN_EXE_cornea-oct"))
        .args(["--json", "info", "-o", "from-flag"])
        .env("CORNEA_OCT_OUTPUT", "from-env")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&flag_out.stdout).unwrap();
    assert_eq!(v["config"]["output_root"], "from-flag");
}

fn leaves(v: &Value, prefix: String, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaves(child, p, out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                leaves(child, format!("{prefix}.{i}"), out);
            }
        }
        other => out.push((prefix, other.clone())),
    }
}

#[test]
fn hash_changes_iff_a_content_value_changes() {
    let base = DatasetConfig::default();
    let hash = base.content_hash();
    let mut fields = Vec::new();
    leaves(&base.content_value(), String::new(), &mut fields);
    assert!(fields.len() > 60);
    let mut mutated = 0;
    for (path, value) in fields {
        let changed = match &value {
            Value::Number(n) if n.is_u64() => serde_json::json!(n.as_u64().unwrap() + 1),
            Value::Number(n) => serde_json::json!(n.as_f64().unwrap() * 1.001 + 1e-9),
            Value::Bool(b) => Value::Bool(!b),
            Value::String(s) => Value::String(format!("{s}x")),
            Value::Null => continue,
            _ => continue,
        };
        // some mutations produce unrepresentable configs; those are skipped
        let Ok(cfg) = base.with_override(&path, changed) else { continue };
        assert_ne!(cfg.content_hash(), hash, "{path}");
        mutated += 1;
        assert_eq!(base.with_override(&path, value).unwrap().content_hash(), hash, "{path}");
    }
    assert!(mutated > 50, "{mutated}");
    // outside the content: output location and sweep layout
    let mut moved = base.clone();
    moved.output_root = "elsewhere".into();
    assert_eq!(moved.content_hash(), hash);
}

#[test]
fn sweep_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("sweep.json");
    fs::write(
        &file,
        r#"{"total_samples": 2, "width": 24, "height": 24,
            "sweep": {"axes": [{"path": "transport.photons_per_aline", "values": [100, 200]}]}}"#,
    )
    .unwrap();
    let out = tmp.path().join("sw");
    let o = cli(&["-q", "--json", "sweep", "-c", file.to_str().unwrap(), "-o", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["combinations"].as_array().unwrap().len(), 2);
    assert!(out.join("sweep.json").is_file());
    assert!(out.join("transport.photons_per_aline=100/000001/meta.json").is_file());
    assert_eq!(cli(&["-q", "validate", out.to_str().unwrap()], tmp.path()).status.code(), Some(0));

    fs::write(&file, r#"{"sweep": {"axes": [{"path": "transport.bogus", "values": [1]}]}}"#).unwrap();
    let bad_out = tmp.path().join("bad");
    let o = cli(&["sweep", "-c", file.to_str().unwrap(), "-o", bad_out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!bad_out.exists());
}
