use std::process::Command;

fn lbmpk(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lbmpk")).args(args).env_remove("LBMPK_WORKERS").output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn run_csv_header_and_rows() {
    let (code, out, err) = lbmpk(&[
        "run",
        "--gen",
        "2d7pt:16x16",
        "--pm",
        "3",
        "--cache",
        "8KB",
        "--workers",
        "2",
        "--min-time",
        "0",
        "--verify",
    ]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "matrix,variant,p_m,C,s_m,W,gflops,seconds,pre_seconds,pre_spmvs");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("2d7pt:16x16,baseline,3,8000.0,0,2,"));
}

#[test]
fn traffic_csv_header() {
    let (code, out, _) =
        lbmpk(&["traffic", "--gen", "3d:8:2", "--pm", "2", "--variant", "baseline,lb_lg", "--cache", "20KB"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "variant,p_m,C_model,matrix_bytes,vector_bytes,code_balance");
    assert!(lines[1].starts_with("baseline,2,20000,"));
    assert!(lines[2].starts_with("lb_lg,2,20000,"));
}

#[test]
fn cheb_json_rows() {
    let (code, out, _) =
        lbmpk(&["cheb", "--grid", "6", "--steps", "2", "--dt", "0.05", "--format", "json", "--pm", "2"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[1]["step"], 1);
    // heat decays
    assert!(v[1]["norm"].as_f64().unwrap() < v[0]["norm"].as_f64().unwrap());
    assert!(v[0]["terms"].as_u64().unwrap() >= 2);
}

#[test]
fn scan_covers_grid() {
    let (code, out, _) = lbmpk(&[
        "scan",
        "--gen",
        "2d7pt:12x12",
        "--pm-list",
        "1,2",
        "--cache-list",
        "4KB,1MB",
        "--sm-list",
        "0,1",
        "--min-time",
        "0",
    ]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn inspect_dumps_tree_and_schedule() {
    let (code, out, _) =
        lbmpk(&["inspect", "--gen", "2d7pt:8x8", "--pm", "2", "--cache", "2KB", "--sm", "1", "--schedule"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["tree"]["levels"]["level_ptr"].as_array().unwrap().len(), 16);
    assert!(v["schedule"]["order"].as_array().is_some());
}

#[test]
fn matrix_market_input() {
    let dir = std::env::temp_dir().join(format!("lbmpk-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.mtx");
    std::fs::write(&path, "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2\n2 1 -1\n2 2 2\n3 3 1\n")
        .unwrap();
    let (code, out, err) =
        lbmpk(&["run", "--matrix", path.to_str().unwrap(), "--pm", "2", "--variant", "lb", "--min-time", "0"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn workers_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_lbmpk"))
        .args(["run", "--gen", "2d7pt:8x8", "--variant", "baseline", "--min-time", "0"])
        .env("LBMPK_WORKERS", "3")
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().nth(1).unwrap().split(',').nth(5), Some("3"));
}

#[test]
fn bad_arguments_fail() {
    assert_eq!(lbmpk(&["run", "--gen", "2d7pt:8x8", "--pm", "0"]).0, 2);
    assert_eq!(lbmpk(&["run", "--gen", "2d7pt:8x8", "--variant", "fastest"]).0, 2);
    assert_eq!(lbmpk(&["run", "--gen", "2d7pt:8x8", "--f", "1.5"]).0, 2);
    assert_ne!(lbmpk(&["run"]).0, 0);
    let (code, _, err) = lbmpk(&["run", "--matrix", "/nonexistent.mtx"]);
    assert_eq!(code, 2);
    assert!(err.contains("nonexistent"));
}
