//! Command-line frontend: file formats, reports and the named acceptance checks.

pub mod criteria;

use crate::alg_to_sp::{build_span_program_with, column_audit, witness_checks, AlgSpan, AlgSpanLayout, WeightReport};
use crate::circuit_ir::{
    enforce_query_uniformity, fmt_bits, make_clean_with, parse_bits, verify_clean_with, Counters, QueryAlgorithm, TruthTable,
};
use crate::fixtures;
use crate::or_compose::VtSearch;
use crate::sp_compiler::{compile_alg_span, Compiled, Mode};
use crate::span_core::{positive_witness_size_with, SpanProgram, SpanProgramJson};
use crate::subroutines::{pa, sim::Ctx, subspace};
use crate::tol::Tolerances;
use crate::{Error, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "spanforge", version, about = "Query algorithms to span programs and back to evaluators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a circuit, build P_A, and write the span program with its layout.
    BuildSp {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the index table of H and V.
        #[arg(long)]
        layout: Option<PathBuf>,
    },
    /// Decide one input from a span program file or a circuit.
    Evaluate {
        #[arg(long = "span-program", visible_alias = "sp", conflicts_with = "circuit")]
        span_program: Option<PathBuf>,
        #[arg(long, required_unless_present = "span_program")]
        circuit: Option<PathBuf>,
        #[arg(long)]
        input: String,
        /// Approximation parameter for span program files without one.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum, default_value_t = Mode::Spectral)]
        mode: Mode,
    },
    /// OR-compose the span programs of several circuits.
    ComposeOr {
        #[arg(long, num_args = 1.., required = true)]
        children: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Variable-time search over every circuit JSON in a directory.
    VtSearch {
        #[arg(long)]
        algs: PathBuf,
        #[arg(long)]
        input: String,
        #[arg(long, value_enum, default_value_t = Mode::Spectral)]
        mode: Mode,
        /// Print a decision line and counter table instead of JSON.
        #[arg(long)]
        text: bool,
    },
    /// Run the invariant suite on a circuit or fixture, or one named acceptance criterion.
    Check {
        #[arg(long, conflicts_with_all = ["fixture", "criterion"])]
        circuit: Option<PathBuf>,
        /// Audit this span program against the one built from --circuit.
        #[arg(long = "span-program", visible_alias = "sp", requires = "circuit")]
        span_program: Option<PathBuf>,
        #[arg(long, conflicts_with = "criterion")]
        fixture: Option<String>,
        /// Criterion id (1-8) or name; "all" runs every one.
        #[arg(long)]
        criterion: Option<String>,
    },
    /// Counter CSV over benchmark families.
    Bench {
        /// OR family of identical read_first children, one row per size.
        #[arg(long, value_delimiter = ',')]
        or_sizes: Vec<usize>,
        /// Fixed-S family padded with this many identity steps on each side.
        #[arg(long, value_delimiter = ',')]
        t_pads: Vec<usize>,
        /// Arbitrary circuit files, one row each.
        #[arg(long, num_args = 1..)]
        circuit: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DecisionRow {
    pub input: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<bool>,
    pub accepted: bool,
    pub acceptance: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WitnessRow {
    pub input: String,
    pub value: bool,
    pub size: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckRow {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        CheckRow { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CounterRow {
    pub scope: String,
    #[serde(flatten)]
    pub counters: Counters,
}

/// Everything a command reports. Contains no timings, so identical inputs give identical bytes.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub inputs: Vec<String>,
    pub decisions: Vec<DecisionRow>,
    pub witness_sizes: Vec<WitnessRow>,
    pub counters: Vec<CounterRow>,
    pub parameters: BTreeMap<String, f64>,
    pub tolerances: Tolerances,
    pub tolerance_hash: String,
    pub checks: Vec<CheckRow>,
}

impl RunReport {
    pub fn new(command: &str, tol: &Tolerances) -> Self {
        RunReport {
            command: command.into(),
            inputs: vec![],
            decisions: vec![],
            witness_sizes: vec![],
            counters: vec![],
            parameters: BTreeMap::new(),
            tolerances: tol.clone(),
            tolerance_hash: tol.hash(),
            checks: vec![],
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Span program file: the plain program plus what evaluation needs. Readers of the
/// plain format ignore the extra fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanProgramFile {
    #[serde(flatten)]
    pub program: SpanProgramJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_table: Option<BTreeMap<String, u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_plus_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_minus_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayoutFile {
    pub t_len: usize,
    pub n: usize,
    pub workspace_dim: usize,
    pub dim_h: usize,
    pub dim_v: usize,
    pub queries: Vec<usize>,
    /// Column k of A is (t, b, i, j).
    pub h_index: Vec<[usize; 4]>,
    /// Row t * n * |W| + z of A is (t, z).
    pub v_index: Vec<[usize; 2]>,
    pub weights: WeightReport,
}

pub fn layout_file(sp: &AlgSpan) -> LayoutFile {
    let l: &AlgSpanLayout = &sp.layout;
    LayoutFile {
        t_len: l.t_len,
        n: l.n,
        workspace_dim: l.w,
        dim_h: l.dim_h(),
        dim_v: l.dim_v(),
        queries: l.queries.clone(),
        h_index: l.entries.iter().map(|&(t, b, i, j)| [t, b as usize, i, j]).collect(),
        v_index: (0..=l.t_len).flat_map(|t| (0..l.d()).map(move |z| [t, z])).collect(),
        weights: crate::alg_to_sp::weight_report(sp),
    }
}

pub fn table_to_map(t: &TruthTable) -> BTreeMap<String, u8> {
    t.rows.iter().map(|(x, f)| (fmt_bits(x), *f as u8)).collect()
}

pub fn table_from_map(n: usize, m: &BTreeMap<String, u8>) -> Result<TruthTable> {
    let mut rows = Vec::new();
    for (k, v) in m {
        rows.push((parse_bits(k)?, *v != 0));
    }
    TruthTable::new(n, rows)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// A circuit and its truth table (explicit, or induced by rounding).
pub fn load_circuit(path: &Path, tol: &Tolerances) -> Result<(QueryAlgorithm, TruthTable)> {
    let (alg, table) = QueryAlgorithm::from_json_str(&read(path)?, tol).map_err(|e| in_file(path, e))?;
    let table = match table {
        Some(t) => t,
        None => alg.induced_table()?,
    };
    Ok((alg, table))
}

pub fn load_span_program(path: &Path) -> Result<(SpanProgram, SpanProgramFile)> {
    let text = read(path)?;
    let file: SpanProgramFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column())))?;
    let p = SpanProgram::from_json(&file.program).map_err(|e| in_file(path, e))?;
    Ok((p, file))
}

/// Clean, pad and build P_A; fails when the cleaned circuit does not verify.
pub fn pipeline(alg: &QueryAlgorithm, table: &TruthTable, tol: &Tolerances) -> Result<AlgSpan> {
    let clean = enforce_query_uniformity(&make_clean_with(alg, table, tol)?);
    let rep = verify_clean_with(&clean, table, tol);
    if !rep.all_pass() {
        let failed: Vec<String> = [&rep.consistency, &rep.commutation, &rep.uniformity]
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.detail.clone())
            .collect();
        return Err(Error::NotClean(failed.join("; ")));
    }
    build_span_program_with(&clean, tol)
}

pub fn cmd_build(circuit: &Path, out: &Path, layout: Option<&Path>, tol: &Tolerances) -> Result<RunReport> {
    let (alg, table) = load_circuit(circuit, tol)?;
    let sp = pipeline(&alg, &table, tol)?;
    let (comp, route) = compile_alg_span(&sp, &table, tol)?;
    let file = SpanProgramFile {
        program: sp.program.to_json(),
        truth_table: Some(table_to_map(&table)),
        lambda: Some(comp.base_lambda),
        w_plus_bound: Some(comp.base_w_plus),
        w_minus_bound: Some(comp.base_w_minus),
        extra: BTreeMap::new(),
    };
    write(out, &serde_json::to_string(&file).expect("serializable"))?;
    if let Some(path) = layout {
        write(path, &serde_json::to_string_pretty(&layout_file(&sp)).expect("serializable"))?;
    }
    let mut rep = RunReport::new("build-sp", tol);
    rep.inputs.push(circuit.display().to_string());
    rep.parameters.insert("dim_h".into(), sp.program.dim_h() as f64);
    rep.parameters.insert("dim_v".into(), sp.program.dim_v as f64);
    rep.parameters.insert("t_len".into(), sp.layout.t_len as f64);
    rep.parameters.insert("s_len".into(), sp.layout.s_len() as f64);
    rep.parameters.insert("epsilon".into(), sp.alg.epsilon);
    rep.parameters.insert("lambda".into(), comp.base_lambda);
    rep.parameters.insert("w_plus_bound".into(), comp.base_w_plus);
    rep.parameters.insert("w_minus_bound".into(), comp.base_w_minus);
    rep.checks.push(CheckRow::new("verify_clean", true, "consistency, commutation and uniformity hold"));
    rep.checks.push(CheckRow::new("route", true, format!("{route:?}")));
    Ok(rep)
}

fn decision_row(threshold: f64, x: &[bool], expected: Option<bool>, acceptance: f64) -> DecisionRow {
    DecisionRow { input: fmt_bits(x), expected, accepted: acceptance > threshold, acceptance, threshold }
}

/// Truth table for a span program file: the stored one, or positivity by exact witness.
fn program_table(p: &SpanProgram, file: &SpanProgramFile, tol: &Tolerances) -> Result<TruthTable> {
    if let Some(m) = &file.truth_table {
        return table_from_map(p.n(), m);
    }
    let mut rows = Vec::new();
    for x in TruthTable::all_inputs(p.n()) {
        let w = positive_witness_size_with(p, &x, tol)?;
        rows.push((x, w.size.is_finite()));
    }
    TruthTable::new(p.n(), rows)
}

pub fn cmd_evaluate(
    span_program: Option<&Path>,
    circuit: Option<&Path>,
    input: &str,
    lambda: Option<f64>,
    mode: Mode,
    tol: &Tolerances,
) -> Result<RunReport> {
    let x = parse_bits(input)?;
    let mut rep = RunReport::new("evaluate", tol);
    let (comp, table, per_u) = match (span_program, circuit) {
        (Some(path), _) => {
            rep.inputs.push(path.display().to_string());
            let (p, file) = load_span_program(path)?;
            let table = program_table(&p, &file, tol)?;
            let lam = lambda.or(file.lambda).unwrap_or(0.0);
            let comp = match (file.w_plus_bound, file.w_minus_bound) {
                (Some(wp), Some(wm)) if lambda.is_none() => Compiled::new(&p, lam, wp, wm, tol)?,
                _ => Compiled::from_table(&p, &table, lam, tol)?,
            };
            // One reflection about H(x) per application of U.
            (comp, table, Counters { o_x: 1, ..Counters::default() })
        }
        (None, Some(path)) => {
            rep.inputs.push(path.display().to_string());
            let (alg, table) = load_circuit(path, tol)?;
            let sp = pipeline(&alg, &table, tol)?;
            let (comp, _) = compile_alg_span(&sp, &table, tol)?;
            let ctx = Ctx::single(subspace::child_ctx(&sp));
            let per_u = pa::span_unitary_circuit(comp.pb.beta, &pa::pa_parts(ctx.loop_len())).counters();
            (comp, table, per_u)
        }
        (None, None) => return Err(Error::Parameter("pass --span-program or --circuit".into())),
    };
    comp.pb.program.check_input(&x)?;
    rep.inputs.push(input.into());
    let cal = comp.calibrate(&table, mode)?;
    let acceptance = match cal.values.iter().find(|v| v.0 == fmt_bits(&x)) {
        Some(v) => v.2,
        None => comp.acceptance(&x, mode)?,
    };
    rep.decisions.push(decision_row(cal.threshold, &x, table.get(&x), acceptance));
    let calls = comp.params.controlled_u_calls();
    rep.counters.push(CounterRow { scope: "per_controlled_u".into(), counters: per_u });
    rep.counters.push(CounterRow { scope: "per_evaluation".into(), counters: per_u.scaled(calls) });
    rep.parameters.insert("lambda".into(), comp.base_lambda);
    rep.parameters.insert("beta".into(), comp.pb.beta);
    rep.parameters.insert("theta".into(), comp.params.theta);
    rep.parameters.insert("phase_bits".into(), comp.params.phase_bits() as f64);
    rep.parameters.insert("controlled_u_calls".into(), calls as f64);
    rep.parameters.insert("threshold".into(), cal.threshold);
    rep.checks.push(CheckRow::new(
        "calibration_separated",
        cal.separated,
        format!("min positive {:.6}, max negative {:.6}", cal.min_positive, cal.max_negative),
    ));
    Ok(rep)
}

pub fn cmd_compose_or(children: &[PathBuf], out: &Path, tol: &Tolerances) -> Result<RunReport> {
    let algs: Vec<_> = children.iter().map(|p| load_circuit(p, tol)).collect::<Result<_>>()?;
    let vt = VtSearch::new(&algs, tol)?;
    let mut extra = BTreeMap::new();
    extra.insert("alphas".into(), serde_json::to_value(&vt.comp.alphas).expect("serializable"));
    extra.insert("bins".into(), serde_json::to_value(&vt.comp.bins).expect("serializable"));
    extra.insert("children".into(), serde_json::to_value(&vt.padded).expect("serializable"));
    let file = SpanProgramFile {
        program: vt.comp.composed.to_json(),
        truth_table: Some(table_to_map(&vt.table)),
        lambda: Some(vt.comp.lambda()),
        w_plus_bound: Some(1.0),
        w_minus_bound: Some(vt.comp.w_minus_bound()),
        extra,
    };
    write(out, &serde_json::to_string(&file).expect("serializable"))?;
    let mut rep = RunReport::new("compose-or", tol);
    rep.inputs = children.iter().map(|p| p.display().to_string()).collect();
    rep.parameters.insert("children".into(), vt.comp.n() as f64);
    rep.parameters.insert("dim_h".into(), vt.comp.composed.dim_h() as f64);
    rep.parameters.insert("dim_v".into(), vt.comp.composed.dim_v as f64);
    rep.parameters.insert("lambda".into(), vt.comp.lambda());
    rep.parameters.insert("w_minus_bound".into(), vt.comp.w_minus_bound());
    rep.parameters.insert("bins".into(), (vt.comp.bins.len() - 1) as f64);
    Ok(rep)
}

/// Circuit JSON files of a directory, in name order.
pub fn circuit_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Io(format!("{}: no .json circuits", dir.display())));
    }
    Ok(files)
}

pub fn cmd_vt_search(dir: &Path, input: &str, mode: Mode, tol: &Tolerances) -> Result<RunReport> {
    let files = circuit_files(dir)?;
    let algs: Vec<_> = files.iter().map(|p| load_circuit(p, tol)).collect::<Result<_>>()?;
    let x = parse_bits(input)?;
    let mut vt = VtSearch::new(&algs, tol)?;
    vt.comp.composed.check_input(&x)?;
    let report = vt.run(mode)?;
    let mut rep = RunReport::new("vt-search", tol);
    rep.inputs = files.iter().map(|p| p.display().to_string()).collect();
    rep.inputs.push(input.into());
    let thr = report.calibration.threshold;
    let row = match report.decisions.iter().find(|d| d.input == fmt_bits(&x)) {
        Some(d) => DecisionRow { input: d.input.clone(), expected: Some(d.expected), accepted: d.accepted, acceptance: d.acceptance, threshold: thr },
        None => {
            let v = match mode {
                Mode::Spectral => vt.compiled.acceptance(&x, mode)?,
                Mode::Circuit => vt.acceptance(&x, mode)?,
            };
            DecisionRow { input: fmt_bits(&x), expected: None, accepted: v > thr, acceptance: v, threshold: thr }
        }
    };
    rep.decisions.push(row);
    rep.counters.push(CounterRow { scope: "per_controlled_u".into(), counters: report.counters_per_u });
    rep.counters.push(CounterRow { scope: "per_evaluation".into(), counters: report.counters_per_evaluation });
    rep.parameters.insert("spacing".into(), report.spacing as f64);
    rep.parameters.insert("lambda".into(), report.lambda);
    rep.parameters.insert("w_minus_bound".into(), report.w_minus_bound);
    rep.parameters.insert("complexity".into(), report.complexity);
    rep.parameters.insert("complexity_constant".into(), report.complexity_constant);
    rep.parameters.insert("phase_bits".into(), report.params.phase_bits() as f64);
    rep.parameters.insert("controlled_u_calls".into(), report.params.controlled_u_calls() as f64);
    rep.checks.push(CheckRow::new("all_joint_inputs_correct", report.all_correct, format!("{} joint inputs", report.decisions.len())));
    rep.checks.push(CheckRow::new("leakage", report.leakage <= 1e-8, format!("{:.2e}", report.leakage)));
    Ok(rep)
}

/// Decision line and counter table for terminal use.
pub fn vt_text(rep: &RunReport) -> String {
    let mut s = String::new();
    for d in &rep.decisions {
        s.push_str(&format!("input {}: OR = {} (acceptance {:.6}, threshold {:.6})\n", d.input, d.accepted as u8, d.acceptance, d.threshold));
    }
    s.push_str(&format!("{:<18} {:>14} {:>14} {:>14} {:>14}\n", "scope", "O_x", "O_A", "O_S", "gates"));
    for c in &rep.counters {
        let k = &c.counters;
        s.push_str(&format!("{:<18} {:>14} {:>14} {:>14} {:>14}\n", c.scope, k.o_x, k.o_a, k.o_s, k.gates));
    }
    s
}

/// Invariant suite on one algorithm. Never errors: failures become failed checks.
pub fn check_suite(alg: &QueryAlgorithm, table: &TruthTable, supplied: Option<&SpanProgram>, tol: &Tolerances) -> RunReport {
    let mut rep = RunReport::new("check", tol);
    let (err, worst) = match alg.max_error(table) {
        Ok(v) => v,
        Err(e) => {
            rep.checks.push(CheckRow::new("input", false, e.to_string()));
            return rep;
        }
    };
    rep.parameters.insert("max_error".into(), err);
    rep.checks.push(CheckRow::new(
        "error_below_one_fifth",
        err < 0.2,
        format!("worst error {err:.4} on input {} (need eps < 1/5)", fmt_bits(&worst)),
    ));
    if err >= 0.2 {
        return rep;
    }
    let clean = match make_clean_with(alg, table, tol) {
        Ok(c) => c,
        Err(e) => {
            rep.checks.push(CheckRow::new("make_clean", false, e.to_string()));
            return rep;
        }
    };
    rep.checks.push(CheckRow::new(
        "clean_lengths",
        clean.t_len() == 2 * alg.t_len() + 1 && clean.s_len() == 2 * alg.query_set().len(),
        format!("T' = {}, S' = {}", clean.t_len(), clean.s_len()),
    ));
    let padded = enforce_query_uniformity(&clean);
    let vc = verify_clean_with(&padded, table, tol);
    for (name, c) in [("consistency", &vc.consistency), ("commutation", &vc.commutation), ("uniformity", &vc.uniformity)] {
        rep.checks.push(CheckRow::new(name, c.pass, c.detail.clone()));
    }
    let sp = match build_span_program_with(&padded, tol) {
        Ok(sp) => sp,
        Err(e) => {
            rep.checks.push(CheckRow::new("build_span_program", false, e.to_string()));
            return rep;
        }
    };
    let mut audited = sp.clone();
    if let Some(p) = supplied {
        audited.program = p.clone();
    }
    let audit = column_audit(&audited, 1e-9);
    let detail = if audit.pass { format!("worst deviation {:.2e}", audit.worst) } else { audit.violations.join("; ") };
    rep.checks.push(CheckRow::new("column_audit", audit.pass, detail));
    if supplied.is_some() {
        let tau_ok = audited.program.tau.len() == sp.program.tau.len() && (&audited.program.tau - &sp.program.tau).norm() <= 1e-9;
        rep.checks.push(CheckRow::new("target_audit", tau_ok, "tau matches the built target"));
        if !audit.pass || !tau_ok {
            return rep;
        }
    }
    match witness_checks(&sp, table) {
        Ok(ws) => {
            let (wp, wm, cap) = (sp.w_plus_bound(), sp.w_minus_bound(), sp.negative_error_cap());
            let mut ok = true;
            for w in ws {
                ok &= if w.value { w.size <= wp + 1e-8 } else { w.size <= wm + 1e-8 && w.error <= cap + 1e-8 };
                rep.witness_sizes.push(WitnessRow { input: w.input, value: w.value, size: w.size, error: w.error });
            }
            rep.checks.push(CheckRow::new("witness_bounds", ok, format!("W+ <= {wp}, W- <= {wm}, error <= {cap:.3e}")));
        }
        Err(e) => rep.checks.push(CheckRow::new("witness_bounds", false, e.to_string())),
    }
    let mut sub_ok = true;
    let mut worst = String::new();
    for (x, fx) in &table.rows {
        match subspace::check_subroutines(&sp, x, *fx) {
            Ok(r) => {
                for c in r.checks.iter().filter(|c| !c.pass) {
                    sub_ok = false;
                    worst = format!("{} at x={}: {:.2e} > {:.2e}", c.name, fmt_bits(x), c.error, c.bound);
                }
            }
            Err(e) => {
                sub_ok = false;
                worst = e.to_string();
            }
        }
    }
    rep.checks.push(CheckRow::new("subroutines", sub_ok, if sub_ok { "all circuits match on H_x".into() } else { worst }));
    match compile_alg_span(&sp, table, tol) {
        Ok((comp, route)) => {
            rep.parameters.insert("lambda".into(), comp.base_lambda);
            for mode in [Mode::Spectral, Mode::Circuit] {
                match comp.calibrate(table, mode) {
                    Ok(cal) => {
                        let mut ok = true;
                        for (inp, fx, v) in &cal.values {
                            let accepted = *v > cal.threshold;
                            ok &= accepted == *fx;
                            if mode == Mode::Spectral {
                                rep.decisions.push(DecisionRow { input: inp.clone(), expected: Some(*fx), accepted, acceptance: *v, threshold: cal.threshold });
                            }
                        }
                        rep.checks.push(CheckRow::new(&format!("decide_{mode:?}").to_lowercase(), ok, format!("{route:?} route, threshold {:.6}", cal.threshold)));
                    }
                    Err(e) => rep.checks.push(CheckRow::new(&format!("decide_{mode:?}").to_lowercase(), false, e.to_string())),
                }
            }
        }
        Err(e) => rep.checks.push(CheckRow::new("compile", false, e.to_string())),
    }
    rep
}

pub fn cmd_check(circuit: Option<&Path>, span_program: Option<&Path>, fixture: Option<&str>, criterion: Option<&str>, tol: &Tolerances) -> Result<RunReport> {
    if let Some(c) = criterion {
        let ids: Vec<usize> = if c == "all" {
            (1..=criteria::NAMES.len()).collect()
        } else {
            vec![criteria::by_name(c).ok_or_else(|| Error::Parameter(format!("unknown criterion {c:?}; use 1-8, a name or all")))?]
        };
        let mut rep = RunReport::new("check", tol);
        for id in ids {
            rep.inputs.push(format!("criterion {id}"));
            let r = criteria::run(id, tol)?;
            rep.checks.push(CheckRow::new(&format!("{}-{}", r.id, r.name), r.pass, r.details.join("\n")));
        }
        return Ok(rep);
    }
    let (label, alg, table) = match (circuit, fixture) {
        (Some(path), _) => {
            let (a, t) = load_circuit(path, tol)?;
            (path.display().to_string(), a, t)
        }
        (None, Some(name)) => {
            let (a, t) = fixtures::by_name(name).ok_or_else(|| {
                let known: Vec<&str> = fixtures::all().into_iter().map(|f| f.0).collect();
                Error::Parameter(format!("unknown fixture {name:?}; known: {}", known.join(", ")))
            })?;
            (format!("fixture:{name}"), a, t)
        }
        (None, None) => return Err(Error::Parameter("pass --circuit, --fixture or --criterion".into())),
    };
    let supplied = match span_program {
        Some(p) => Some(load_span_program(p)?.0),
        None => None,
    };
    let mut rep = check_suite(&alg, &table, supplied.as_ref(), tol);
    rep.inputs.push(label);
    if let Some(p) = span_program {
        rep.inputs.push(p.display().to_string());
    }
    Ok(rep)
}

pub const BENCH_HEADER: &str =
    "family,name,n,t,s,sqrt_sum_t2,sqrt_sum_s2,phase_bits,controlled_u_calls,o_x_per_u,o_a_per_u,o_s_per_u,gates_per_u,o_x,o_a,o_s,gates";

fn bench_row(family: &str, name: &str, n: usize, ts: &[usize], ss: &[usize], comp: &Compiled, per_u: Counters) -> String {
    let calls = comp.params.controlled_u_calls();
    let total = per_u.scaled(calls);
    let st = ts.iter().map(|t| (t * t) as f64).sum::<f64>().sqrt();
    let ss_ = ss.iter().map(|s| (s * s) as f64).sum::<f64>().sqrt();
    format!(
        "{family},{name},{n},{},{},{st:.6},{ss_:.6},{},{calls},{},{},{},{},{},{},{},{}",
        ts.iter().max().unwrap_or(&0),
        ss.iter().max().unwrap_or(&0),
        comp.params.phase_bits(),
        per_u.o_x,
        per_u.o_a,
        per_u.o_s,
        per_u.gates,
        total.o_x,
        total.o_a,
        total.o_s,
        total.gates
    )
}

fn single_row(family: &str, name: &str, alg: &QueryAlgorithm, table: &TruthTable, tol: &Tolerances) -> Result<String> {
    let sp = pipeline(alg, table, tol)?;
    let (comp, _) = compile_alg_span(&sp, table, tol)?;
    let ctx = Ctx::single(subspace::child_ctx(&sp));
    let per_u = pa::span_unitary_circuit(comp.pb.beta, &pa::pa_parts(ctx.loop_len())).counters();
    Ok(bench_row(family, name, alg.n, &[sp.layout.t_len], &[sp.layout.s_len()], &comp, per_u))
}

pub fn cmd_bench(or_sizes: &[usize], t_pads: &[usize], circuits: &[PathBuf], tol: &Tolerances) -> Result<String> {
    let mut lines = vec![BENCH_HEADER.to_string()];
    for &n in or_sizes {
        let algs: Vec<_> = (0..n).map(|_| fixtures::read_first()).collect();
        let vt = VtSearch::new(&algs, tol)?;
        let ts: Vec<usize> = vt.spans.iter().map(|s| s.layout.t_len).collect();
        let ss: Vec<usize> = vt.spans.iter().map(|s| s.layout.s_len()).collect();
        lines.push(bench_row("or", &format!("read_first_x{n}"), vt.comp.composed.n(), &ts, &ss, &vt.compiled, vt.counters_per_u()));
    }
    for &pad in t_pads {
        let (alg, table) = fixtures::read_bit_padded(3, 0, pad, pad);
        lines.push(single_row("t", &format!("read_bit_pad{pad}"), &alg, &table, tol)?);
    }
    for path in circuits {
        let (alg, table) = load_circuit(path, tol)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        lines.push(single_row("circuit", &name, &alg, &table, tol)?);
    }
    Ok(lines.join("\n") + "\n")
}

/// Runs a parsed command, returning stdout text and whether every check passed.
pub fn run(cli: Cli, tol: &Tolerances) -> Result<(String, bool)> {
    let report = match cli.command {
        Command::BuildSp { circuit, out, layout } => cmd_build(&circuit, &out, layout.as_deref(), tol)?,
        Command::Evaluate { span_program, circuit, input, lambda, mode } => {
            cmd_evaluate(span_program.as_deref(), circuit.as_deref(), &input, lambda, mode, tol)?
        }
        Command::ComposeOr { children, out } => cmd_compose_or(&children, &out, tol)?,
        Command::VtSearch { algs, input, mode, text } => {
            let rep = cmd_vt_search(&algs, &input, mode, tol)?;
            if text {
                return Ok((vt_text(&rep), rep.all_pass()));
            }
            rep
        }
        Command::Check { circuit, span_program, fixture, criterion } => {
            cmd_check(circuit.as_deref(), span_program.as_deref(), fixture.as_deref(), criterion.as_deref(), tol)?
        }
        Command::Bench { or_sizes, t_pads, circuit } => return Ok((cmd_bench(&or_sizes, &t_pads, &circuit, tol)?, true)),
    };
    let ok = report.all_pass();
    Ok((report.to_json() + "\n", ok))
}
