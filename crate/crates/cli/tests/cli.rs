use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use silo_games::config::RunConfig;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silo-games"))
        .args(args)
        .output()
        .expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn analyze_c1() {
    let o = run(&["analyze", "--config", config("c1.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("is_dilemma,true\n"));
    assert!(text.contains("nash_welfare,-0.2\n"));
    assert!(text.contains("full_participation_welfare,0.3\n"));
}

#[test]
fn bounds_c2_collapse() {
    let c2 = config("c2.json");
    let o = run(&[
        "bounds",
        "--config",
        c2.to_str().unwrap(),
        "--phi",
        "0.5",
        "--slice",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(
        row.starts_with("1,0.5,0,0.0545454545455,0.0545454545455,true,"),
        "{row}"
    );

    let agg = run(&["bounds", "--config", c2.to_str().unwrap(), "--aggregate"]);
    let agg_row = stdout(&agg).lines().nth(1).unwrap().to_string();
    assert!(agg_row.contains(",aggregate,"), "{agg_row}");
    assert_eq!(
        row.split(',').take(7).collect::<Vec<_>>(),
        agg_row.split(',').take(7).collect::<Vec<_>>()
    );
}

#[test]
fn infeasible_pinning_exits_2() {
    let c1 = config("c1.json");
    for sub in ["bounds", "synthesize"] {
        let o = run(&[sub, "--config", c1.to_str().unwrap(), "--phi", "0.5"]);
        assert_eq!(o.status.code(), Some(2), "{sub}: {}", stderr(&o));
    }
    let o = run(&[
        "synthesize",
        "--config",
        c1.to_str().unwrap(),
        "--phi",
        "0.5",
    ]);
    assert!(stderr(&o).contains("slice=0"), "{}", stderr(&o));
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(config("c2.json"))
        .unwrap()
        .replacen("\"compute_coeff\": 0.4", "\"compute_coeff\": \"cheap\"", 1);
    std::fs::write(&bad, text).unwrap();
    let o = run(&["analyze", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("game.orgs[0].compute_coeff"), "{err}");
    assert!(err.contains("line 10"), "{err}");

    let o = run(&[
        "simulate",
        "--config",
        config("c2.json").to_str().unwrap(),
        "--phi",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["simulate", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["analyze", "--config", "/nonexistent.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_c3_protocol_shape() {
    let c3 = config("c3.json");
    let o = run(&[
        "simulate",
        "--config",
        c3.to_str().unwrap(),
        "--seed",
        "7",
        "--reps",
        "100",
        "--rounds",
        "20",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("rep,round,org_1,"));
    assert!(header.ends_with(",utility_10,welfare"));
    assert_eq!(lines.count(), 2000);
}

#[test]
fn out_dir_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let c2 = config("c2.json");
    let c2 = c2.to_str().unwrap();
    for sub in [
        "simulate",
        "grid",
        "synthesize",
        "stationary",
        "analyze",
        "bounds",
    ] {
        let o = run(&[
            sub,
            "--config",
            c2,
            "--reps",
            "10",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{sub}: {}", stderr(&o));
    }
    let mut names: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "analyze.csv",
            "bounds.csv",
            "convergence.csv",
            "grid_allc.csv",
            "grid_alld.csv",
            "grid_mmzd.csv",
            "grid_rand.csv",
            "stationary.csv",
            "strategy.csv",
            "summary.csv",
            "trajectory.csv",
        ]
    );
    let strategy = std::fs::read_to_string(out.join("strategy.csv")).unwrap();
    assert!(strategy.starts_with("# silo-games pinning strategy\n# cfg_hash="));
}

#[test]
fn json_format() {
    let o = run(&[
        "synthesize",
        "--config",
        config("c2.json").to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["slice"], 0);
    let p = v["p_slice"].as_array().unwrap();
    assert_eq!(p.len(), 4);
    assert_eq!(p[1], 1.0);
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["c1.json", "c2.json", "c3.json"] {
        let a = RunConfig::load(config(name)).unwrap();
        let b = RunConfig::from_json_str(&a.to_json_string()).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn c3_uses_the_closed_form_rule() {
    let o = run(&[
        "synthesize",
        "--config",
        config("c3.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("# slice=33\n"));
    assert!(text.contains("key,value\nrule,"));
}
