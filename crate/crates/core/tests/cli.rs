use spanforge::cli::{self, check_suite, Cli, RunReport, BENCH_HEADER};
use spanforge::fixtures;
use spanforge::linalg::r;
use spanforge::tol::Tolerances;
use clap::Parser;
use std::path::PathBuf;

fn tmpdir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("spanforge-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn write_fixture(dir: &PathBuf, name: &str) -> PathBuf {
    let (alg, table) = fixtures::by_name(name).unwrap();
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string(&alg.to_json(Some(&table))).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> (String, bool) {
    let cli = Cli::try_parse_from(std::iter::once("spanforge").chain(args.iter().copied())).unwrap();
    cli::run(cli, &Tolerances::default()).unwrap()
}

fn failed(rep: &RunReport) -> Vec<String> {
    rep.checks.iter().filter(|c| !c.pass).map(|c| format!("{}: {}", c.name, c.detail)).collect()
}

#[test]
fn build_emits_target_space_of_expected_size_and_round_trips() {
    let dir = tmpdir("build");
    let circ = write_fixture(&dir, "read_first");
    let out = dir.join("sp.json");
    let layout = dir.join("layout.json");
    let (_, ok) = run(&["build-sp", "--circuit", circ.to_str().unwrap(), "--out", out.to_str().unwrap(), "--layout", layout.to_str().unwrap()]);
    assert!(ok);
    let (p, file) = cli::load_span_program(&out).unwrap();
    let l: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&layout).unwrap()).unwrap();
    let (t, n, w) = (l["t_len"].as_u64().unwrap() as usize, l["n"].as_u64().unwrap() as usize, l["workspace_dim"].as_u64().unwrap() as usize);
    assert_eq!(p.dim_v, (t + 1) * n * w);
    assert_eq!(l["h_index"].as_array().unwrap().len(), p.dim_h());
    let again = spanforge::span_core::SpanProgram::from_json(&p.to_json()).unwrap();
    assert_eq!(again, p);
    assert_eq!(serde_json::to_string(&p.to_json()).unwrap(), serde_json::to_string(&file.program).unwrap());
}

#[test]
fn build_rejects_consecutive_queries() {
    let dir = tmpdir("malformed");
    let circ = write_fixture(&dir, "read_first");
    let mut j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&circ).unwrap()).unwrap();
    let steps = j["steps"].as_array_mut().unwrap();
    let q = steps.iter().position(|s| s["type"] == "query").unwrap();
    steps.insert(q, serde_json::json!({"type": "query"}));
    let bad = dir.join("bad.json");
    std::fs::write(&bad, j.to_string()).unwrap();
    let err = cli::load_circuit(&bad, &Tolerances::default()).unwrap_err();
    assert!(err.to_string().contains("consecutive") || err.to_string().contains("query"), "{err}");
}

#[test]
fn check_passes_on_clean_fixture() {
    let (alg, table) = fixtures::read_first();
    let rep = check_suite(&alg, &table, None, &Tolerances::default());
    assert!(rep.all_pass(), "{:?}", failed(&rep));
    assert_eq!(rep.decisions.len(), table.rows.len());
}

#[test]
fn check_flags_error_above_one_fifth() {
    let (alg, table) = fixtures::noisy_read_first_with(0.3);
    let rep = check_suite(&alg, &table, None, &Tolerances::default());
    let c = rep.checks.iter().find(|c| c.name == "error_below_one_fifth").unwrap();
    assert!(!c.pass);
    assert!(c.detail.contains("eps < 1/5"), "{}", c.detail);
}

#[test]
fn check_reports_tampered_column_with_coordinates() {
    let tol = Tolerances::default();
    let (alg, table) = fixtures::read_first();
    let sp = cli::pipeline(&alg, &table, &tol).unwrap();
    let mut p = sp.program.clone();
    p.a[(0, 7)] += r(0.5);
    let rep = check_suite(&alg, &table, Some(&p), &tol);
    let c = rep.checks.iter().find(|c| c.name == "column_audit").unwrap();
    assert!(!c.pass);
    assert!(c.detail.contains("column 7 = (t="), "{}", c.detail);
}

#[test]
fn evaluate_span_program_file_matches_truth_table() {
    let dir = tmpdir("eval");
    let circ = write_fixture(&dir, "or_two");
    let out = dir.join("sp.json");
    run(&["build-sp", "--circuit", circ.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let (_, table) = fixtures::or_two();
    for (x, fx) in &table.rows {
        let bits = spanforge::circuit_ir::fmt_bits(x);
        let (text, ok) = run(&["evaluate", "--span-program", out.to_str().unwrap(), "--input", &bits]);
        assert!(ok);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["decisions"][0]["accepted"].as_bool().unwrap(), *fx, "{bits}");
    }
}

#[test]
fn reports_are_byte_stable() {
    let dir = tmpdir("stable");
    let circ = write_fixture(&dir, "read_first");
    let args = ["evaluate", "--circuit", circ.to_str().unwrap(), "--input", "10", "--mode", "circuit"];
    assert_eq!(run(&args).0, run(&args).0);
}

#[test]
fn bench_empty_family_is_header_only() {
    let (text, _) = run(&["bench"]);
    assert_eq!(text, format!("{BENCH_HEADER}\n"));
}

#[test]
fn bench_rows_have_header_width() {
    let (text, _) = run(&["bench", "--t-pads", "0,2"]);
    let width = BENCH_HEADER.split(',').count();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.split(',').count() == width));
}

#[test]
fn vt_search_decides_or_of_children() {
    let dir = tmpdir("vt").join("algs");
    std::fs::create_dir_all(&dir).unwrap();
    write_fixture(&dir, "read_first");
    write_fixture(&dir, "or_two");
    for (x, want) in [("0000", false), ("1000", true), ("0001", true), ("0100", true)] {
        let (text, _) = run(&["vt-search", "--algs", dir.to_str().unwrap(), "--input", x]);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["decisions"][0]["accepted"].as_bool().unwrap(), want, "{x}");
    }
}

#[test]
fn criterion_is_invocable_by_name() {
    let (text, ok) = run(&["check", "--criterion", "clean-pipeline"]);
    assert!(ok, "{text}");
    let (_, ok) = run(&["check", "--criterion", "7"]);
    assert!(ok);
}
