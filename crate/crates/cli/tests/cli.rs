use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_treedp"))
}

fn graph(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "graphs", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_code(o: &Output) -> String {
    let v: serde_json::Value =
        serde_json::from_slice(&o.stderr).expect("stderr carries a JSON error");
    v["error"]["code"].as_str().unwrap().to_string()
}

#[test]
fn solve_json_reports_optimum_and_one_based_witness() {
    let o = run(&[
        "solve",
        "--graph",
        &graph("petersen.gr"),
        "--formula",
        "vc",
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["satisfiable"], true);
    assert_eq!(v["value"], 6);
    let s = v["witness"]["S"].as_array().unwrap();
    assert_eq!(s.len(), 6);
    assert!(s.iter().all(|x| (1..=10).contains(&x.as_u64().unwrap())));
    assert!(v["stats"]["max_states"].as_u64().unwrap() > 0);
    assert_eq!(v["stats"]["node_counts"]["edge"], 15);
}

#[test]
fn unsatisfiable_exits_with_one() {
    let o = run(&["solve", "--graph", &graph("k4.gr"), "--formula", "3col.mso"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("satisfiable: false"));
    let o = run(&["color3", "--graph", &graph("k4.gr")]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["color3", "--graph", &graph("c5.gr")]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn oracle_agrees_with_solver() {
    for f in ["vc", "ds", "is", "fvs"] {
        let args = |cmd| {
            vec![
                cmd,
                "--graph",
                &graph("grid-3x4.gr"),
                "--formula",
                f,
                "--json",
            ]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
        };
        let a: serde_json::Value =
            serde_json::from_slice(&bin().args(args("solve")).output().unwrap().stdout).unwrap();
        let b: serde_json::Value =
            serde_json::from_slice(&bin().args(args("oracle")).output().unwrap().stdout).unwrap();
        assert_eq!(a["value"], b["value"], "{f}");
    }
}

#[test]
fn decompose_then_nicify_with_supplied_td() {
    let dir = tempfile::tempdir().unwrap();
    let td = dir.path().join("g.td");
    let out = dir.path().join("g.nice.td");
    let o = run(&[
        "decompose",
        "--graph",
        &graph("grid-3x4.gr"),
        "--out",
        td.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(&td).unwrap().starts_with("s td"));
    let o = run(&[
        "nicify",
        "--graph",
        &graph("grid-3x4.gr"),
        "--td",
        td.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains(" edge ")).count(), 17);
    assert!(text.contains("c index 12 "));
}

#[test]
fn invalid_td_is_rejected_with_code() {
    let dir = tempfile::tempdir().unwrap();
    let td = dir.path().join("bad.td");
    // One bag missing vertex 3, so edge 2-3 is uncovered.
    std::fs::write(&td, "s td 1 2 3\nb 1 1 2\n").unwrap();
    let o = run(&[
        "solve",
        "--graph",
        &graph("p3.gr"),
        "--formula",
        "vc",
        "--td",
        td.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "invalid-td");
}

#[test]
fn bad_inputs_produce_coded_errors() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.mso");
    std::fs::write(&f, "free S;\nforall x S(z);\n").unwrap();
    let o = run(&[
        "solve",
        "--graph",
        &graph("p3.gr"),
        "--formula",
        f.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "formula-parse");

    let o = run(&[
        "solve",
        "--graph",
        &graph("p3.gr"),
        "--formula",
        "no-such-formula",
    ]);
    assert_eq!(error_code(&o), "unknown-formula");

    let g = dir.path().join("bad.gr");
    std::fs::write(&g, "p tw 2 1\n1 3\n").unwrap();
    let o = run(&["solve", "--graph", g.to_str().unwrap(), "--formula", "vc"]);
    assert_eq!(error_code(&o), "graph-parse");
}

#[test]
fn weights_file_changes_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.txt");
    std::fs::write(&w, "S 2 10\n").unwrap();
    let o = run(&[
        "solve",
        "--graph",
        &graph("p3.gr"),
        "--formula",
        "vc",
        "--weights",
        w.to_str().unwrap(),
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["value"], 2);
    assert_eq!(v["witness"]["S"], serde_json::json!([1, 3]));

    std::fs::write(&w, "T 2 10\n").unwrap();
    let o = run(&[
        "solve",
        "--graph",
        &graph("p3.gr"),
        "--formula",
        "vc",
        "--weights",
        w.to_str().unwrap(),
    ]);
    assert_eq!(error_code(&o), "weights-parse");
}

#[test]
fn bench_writes_one_row_per_graph_and_formula() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let graphs: PathBuf = [env!("CARGO_MANIFEST_DIR"), "graphs"].iter().collect();
    let o = run(&[
        "bench",
        "--dir",
        graphs.to_str().unwrap(),
        "--formula",
        "vc",
        "--formula",
        "3col",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "instance,n,m,width,formula,time_ms,states_max,result,value"
    );
    assert_eq!(lines.len(), 1 + 6 * 2);
    assert!(lines
        .iter()
        .any(|l| l.starts_with("k4,4,6,3,3col,") && l.contains(",unsat,")));
}

#[test]
fn timeout_reports_partial_progress() {
    let o = run(&[
        "solve",
        "--graph",
        &graph("petersen.gr"),
        "--formula",
        "fvs",
        "--timeout",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "timeout");
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("of"), "{msg}");
}

#[test]
fn path_cover_is_the_middle_vertex() {
    let o = run(&[
        "solve",
        "--graph",
        &graph("p3.gr"),
        "--formula",
        "vc.mso",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["value"], 1);
    assert_eq!(v["witness"]["S"], serde_json::json!([2]));
}

#[test]
fn supplied_td_matches_heuristic_path() {
    let dir = tempfile::tempdir().unwrap();
    for g in ["petersen.gr", "grid-3x4.gr", "c5.gr"] {
        let td = dir.path().join(format!("{g}.td"));
        let td = td.to_str().unwrap();
        let o = run(&[
            "decompose",
            "--graph",
            &graph(g),
            "--strategy",
            "min-degree",
            "--out",
            td,
        ]);
        assert_eq!(o.status.code(), Some(0));
        for f in ["3col", "vc", "ds", "is", "fvs"] {
            let a = run(&["solve", "--graph", &graph(g), "--formula", f, "--json"]);
            let b = run(&[
                "solve",
                "--graph",
                &graph(g),
                "--formula",
                f,
                "--json",
                "--td",
                td,
            ]);
            assert_eq!(a.status.code(), b.status.code());
            let a: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
            let b: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
            assert_eq!(a["satisfiable"], b["satisfiable"], "{g} {f}");
            assert_eq!(a["value"], b["value"], "{g} {f}");
        }
    }
}
