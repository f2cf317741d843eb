use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pricequake::config::{read_params, read_registry};
use pricequake_core::market::sample_registry;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pricequake"))
}

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(file)
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn simulate(out: &Path, seed: u64) {
    ok(bin()
        .args(["simulate", "--days", "60", "--warmup-days", "10", "--seed", &seed.to_string()])
        .arg("--params")
        .arg(data("params.toml"))
        .arg("--exchanges")
        .arg(data("exchanges.csv"))
        .arg("--out")
        .arg(out)
        .output()
        .unwrap());
}

/// Relative path and contents of every file below `dir`, sorted.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn shipped_configuration_parses() {
    assert_eq!(read_registry(&data("exchanges.csv")).unwrap(), sample_registry());
    let p = read_params(&data("params.toml")).unwrap().model_params().unwrap();
    assert_eq!((p.threshold, p.zone_scale, p.cap_scale), (0.03, 20.0, 0.8));
    assert!((p.noise_variance() - 0.0006).abs() < 1e-15);
    pricequake::config::read_grid(&data("grid.toml")).unwrap();
}

#[test]
fn detect_then_report_matches_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, 5);
    for kind in ["sipq", "cipq"] {
        let step = tmp.path().join(kind);
        ok(bin()
            .args(["detect", "--kind", kind])
            .arg("--outcomes")
            .arg(sim.join("outcomes.jsonl"))
            .arg("--out")
            .arg(&step)
            .output()
            .unwrap());
        ok(bin()
            .arg("report")
            .arg("--records")
            .arg(step.join("records.jsonl"))
            .arg("--out")
            .arg(&step)
            .output()
            .unwrap());
        let composed = tree(&step);
        assert_eq!(composed.len(), 10);
        assert_eq!(composed, tree(&sim.join(kind)), "{kind}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    simulate(&a, 11);
    simulate(&b, 11);
    simulate(&c, 12);
    assert_eq!(tree(&a), tree(&b));
    assert_ne!(fs::read(a.join("outcomes.jsonl")).unwrap(), fs::read(c.join("outcomes.jsonl")).unwrap());
}

#[test]
fn simulated_outputs_are_populated() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), 3);
    let summary = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "kind,sign,count,mean_members,mean_duration_days");
    assert_eq!(lines.len(), 7);
    let raster = fs::read_to_string(tmp.path().join("sipq/raster.csv")).unwrap();
    let head: Vec<&str> = raster.lines().next().unwrap().split(',').collect();
    assert_eq!(head.len(), 4 + 24);
    assert!(raster.lines().skip(1).all(|l| l.split(',').skip(4).all(|c| {
        matches!(c, "." | "0" | "+I" | "+S" | "+X" | "-I" | "-S" | "-X")
    })));
    let degrees = fs::read_to_string(tmp.path().join("sipq/degrees.csv")).unwrap();
    let avg = degrees.lines().last().unwrap();
    assert!(avg.starts_with("average,"));
    // The network row is balanced exactly.
    let cols: Vec<&str> = avg.split(',').collect();
    assert_eq!((cols[3], cols[6], cols[9]), ("0", "0", "0"));
}

#[test]
fn ofc_without_coupling_topples_single_sites() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sizes.txt");
    ok(bin()
        .args(["ofc", "--side", "8", "--alpha", "0", "--avalanches", "200", "--seed", "2", "--warmup", "0", "--out"])
        .arg(&out)
        .output()
        .unwrap());
    let text = fs::read_to_string(&out).unwrap();
    let sizes: Vec<usize> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(sizes.len(), 200);
    assert!(sizes.iter().all(|&s| s == 1));
}

#[test]
fn bad_invocations_fail_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = bin().args(["simulate", "--bogus"]).output().unwrap();
    assert!(!unknown.status.success());
    let missing = bin()
        .args(["report", "--records", "/nonexistent/records.jsonl", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/records.jsonl"));

    let params = tmp.path().join("p.toml");
    fs::write(&params, "r_c = 0.03\ntau = 20.0\ngamma = 0.8\nsigma = 0.02\nsigma2 = 0.0004\n").unwrap();
    let both = bin()
        .args(["simulate", "--days", "5", "--out"])
        .arg(tmp.path())
        .arg("--params")
        .arg(&params)
        .arg("--exchanges")
        .arg(data("exchanges.csv"))
        .output()
        .unwrap();
    assert!(!both.status.success());
    assert!(String::from_utf8_lossy(&both.stderr).contains("either sigma or sigma2"));
}
