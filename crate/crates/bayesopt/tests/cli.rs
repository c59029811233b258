use std::process::{Command, Output};

use bayesopt::trace::{read_lines, TraceLine};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bayesopt"));
    for (k, _) in std::env::vars() {
        if k.starts_with("BAYESOPT_") {
            c.env_remove(k);
        }
    }
    c
}

fn json_out(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn optimize_builtin_writes_trace() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.jsonl");
    let out = bin()
        .args([
            "optimize",
            "--objective",
            "bumps1d",
            "--iterations",
            "8",
            "--repetitions",
            "2",
        ])
        .arg("--trace")
        .arg(&trace)
        .arg("--random-baseline")
        .output()
        .unwrap();
    let v = json_out(&out);
    assert_eq!(v["objective"], "bumps1d");
    assert_eq!(v["result"]["runs"].as_array().unwrap().len(), 2);
    assert!(v["random_baseline"]["mean_gap"].is_f64());
    let lines = read_lines(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(lines.len(), 2 * 2 * 8);
    assert!(lines.iter().all(|l| matches!(l, TraceLine::Scalar(_))));
}

#[test]
fn optimize_reads_environment() {
    let out = bin()
        .arg("optimize")
        .env("BAYESOPT_OBJECTIVE", "sphere2d")
        .env("BAYESOPT_ITERATIONS", "5")
        .env("BAYESOPT_ACQUISITION", "ucb")
        .output()
        .unwrap();
    let v = json_out(&out);
    assert_eq!(v["objective"], "sphere2d");
    assert_eq!(v["iterations"], 5);
    assert_eq!(v["result"]["strategy"]["acquisition"], "ucb");
}

#[cfg(unix)]
#[test]
fn optimize_external_command() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("c.jsonl");
    let out = bin()
        .args([
            "optimize",
            "--command",
            "sh -c",
            "--bounds",
            "0:1",
            "--iterations",
            "4",
        ])
        .args(["--trace"])
        .arg(&trace)
        .output()
        .unwrap();
    // `sh -c` treats the first coordinate as the script, which fails.
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("objective failed"));

    let script = dir.path().join("g.sh");
    std::fs::write(
        &script,
        "awk -v x=\"$1\" 'BEGIN { print -(x - 0.3) * (x - 0.3) }'\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "optimize",
            "--bounds",
            "0:1",
            "--iterations",
            "6",
            "--command",
        ])
        .arg(format!("sh {}", script.display()))
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    let v = json_out(&out);
    let y = v["runs"][0]["y"].as_f64().unwrap();
    assert!(y <= 0.0 && y > -0.1, "{v}");
    let lines = read_lines(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(lines.len(), 6);
    match lines.last().unwrap() {
        TraceLine::Evaluation(e) => assert_eq!(e.best_value, y),
        other => panic!("{other:?}"),
    }
}

#[test]
fn optimize_rejects_unknown_objective() {
    let out = bin()
        .args(["optimize", "--objective", "nope"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown objective"));
}

#[test]
fn pref_sim_reports_query_counts() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("p.jsonl");
    let out = bin()
        .args([
            "pref-sim",
            "--strategy",
            "random",
            "--trials",
            "2",
            "--max-queries",
            "5",
            "--latent",
            "bumps1d",
        ])
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    let v = json_out(&out);
    assert_eq!(v["strategy"], "random");
    let queries: Vec<u64> = v["queries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|q| q.as_u64().unwrap())
        .collect();
    assert_eq!(queries.len(), 2);
    assert!(queries.iter().all(|q| (1..=5).contains(q)));
    let lines = read_lines(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(lines.len() as u64, queries.iter().sum::<u64>());
}

#[test]
fn fit_reads_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("d.csv");
    let mut text = String::from("x,y\n");
    for i in 0..20 {
        let x = i as f64 / 19.0 * 4.0;
        text.push_str(&format!("{x},{}\n", x.sin()));
    }
    std::fs::write(&csv, text).unwrap();
    let out = bin()
        .arg("fit")
        .arg(&csv)
        .args(["--noise", "1e-6"])
        .output()
        .unwrap();
    let v = json_out(&out);
    assert_eq!(v["observations"], 20);
    assert_eq!(v["dim"], 1);
    assert_eq!(v["kernel"]["noise_variance"], 1e-6);
    let theta = v["kernel"]["theta"][0].as_f64().unwrap();
    assert!(theta > 0.3 && theta < 10.0, "{theta}");

    std::fs::write(&csv, "x,y\n1,a\n").unwrap();
    let out = bin().arg("fit").arg(&csv).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 1"));
}
