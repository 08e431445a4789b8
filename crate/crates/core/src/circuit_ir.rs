//! Query algorithm IR, exact simulation, cleaning and query-uniformity transforms.
//!
//! The state space is C^{[n] x W} with basis index `z = i * workspace_dim + w`.
//! Step positions are 1-based: step `t` maps `Psi_{t-1}` to `Psi_t`.

use crate::linalg::{self, r, CMat, CVec, C64, ONE, ZERO};
use crate::tol::Tolerances;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Bits = Vec<bool>;

pub fn parse_bits(s: &str) -> Result<Bits> {
    s.chars()
        .map(|ch| match ch {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Error::Parse(format!("bitstring {s:?} contains {ch:?}"))),
        })
        .collect()
}

pub fn fmt_bits(x: &[bool]) -> String {
    x.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Explicit truth table over a (possibly partial) domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub n: usize,
    pub rows: Vec<(Bits, bool)>,
}

impl TruthTable {
    pub fn new(n: usize, rows: Vec<(Bits, bool)>) -> Result<Self> {
        for (x, _) in &rows {
            if x.len() != n {
                return Err(Error::Dimension(format!("input {} has length {}, expected {n}", fmt_bits(x), x.len())));
            }
        }
        Ok(TruthTable { n, rows })
    }

    pub fn from_fn(n: usize, domain: impl IntoIterator<Item = Bits>, f: impl Fn(&[bool]) -> bool) -> Self {
        let rows = domain.into_iter().map(|x| {
            let v = f(&x);
            (x, v)
        });
        TruthTable { n, rows: rows.collect() }
    }

    pub fn all_inputs(n: usize) -> Vec<Bits> {
        (0..1usize << n).map(|m| (0..n).map(|i| (m >> (n - 1 - i)) & 1 == 1).collect()).collect()
    }

    pub fn get(&self, x: &[bool]) -> Option<bool> {
        self.rows.iter().find(|(y, _)| y.as_slice() == x).map(|(_, v)| *v)
    }

    pub fn positives(&self) -> impl Iterator<Item = &Bits> {
        self.rows.iter().filter(|(_, v)| *v).map(|(x, _)| x)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &Bits> {
        self.rows.iter().filter(|(_, v)| !*v).map(|(x, _)| x)
    }
}

/// Per-oracle call tallies. Monotone: only ever incremented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub o_x: u64,
    pub o_a: u64,
    pub o_s: u64,
    pub gates: u64,
}

impl Counters {
    pub fn add(&mut self, other: &Counters) {
        self.o_x += other.o_x;
        self.o_a += other.o_a;
        self.o_s += other.o_s;
        self.gates += other.gates;
    }

    pub fn scaled(&self, k: u64) -> Counters {
        Counters { o_x: self.o_x * k, o_a: self.o_a * k, o_s: self.o_s * k, gates: self.gates * k }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Unitary(CMat),
    Query,
}

impl Step {
    pub fn is_query(&self) -> bool {
        matches!(self, Step::Query)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAlgorithm {
    pub n: usize,
    pub workspace_dim: usize,
    pub answer_qubit: usize,
    pub steps: Vec<Step>,
    /// Basis index of the initial state.
    pub initial_index: usize,
    pub epsilon: f64,
}

impl QueryAlgorithm {
    pub fn new(
        n: usize,
        workspace_dim: usize,
        answer_qubit: usize,
        steps: Vec<Step>,
        initial_index: usize,
        epsilon: f64,
    ) -> Result<Self> {
        Self::with_tolerance(n, workspace_dim, answer_qubit, steps, initial_index, epsilon, &Tolerances::default())
    }

    pub fn with_tolerance(
        n: usize,
        workspace_dim: usize,
        answer_qubit: usize,
        steps: Vec<Step>,
        initial_index: usize,
        epsilon: f64,
        tol: &Tolerances,
    ) -> Result<Self> {
        let dim = n * workspace_dim;
        if n == 0 || workspace_dim == 0 {
            return Err(Error::Dimension("empty state space".into()));
        }
        if answer_qubit >= 32 || workspace_dim % (1 << (answer_qubit + 1)) != 0 {
            return Err(Error::Malformed(format!(
                "answer qubit {answer_qubit} does not fit a workspace of size {workspace_dim}"
            )));
        }
        if initial_index >= dim {
            return Err(Error::Dimension(format!("initial index {initial_index} outside dimension {dim}")));
        }
        for (k, s) in steps.iter().enumerate() {
            if let Step::Unitary(m) = s {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(Error::Dimension(format!(
                        "step {} is {}x{}, state space has dimension {dim}",
                        k + 1,
                        m.nrows(),
                        m.ncols()
                    )));
                }
                let defect = linalg::unitarity_defect(m);
                if defect > tol.unitarity {
                    return Err(Error::NotUnitary { step: k + 1, defect });
                }
            }
        }
        check_query_placement(&steps)?;
        Ok(QueryAlgorithm { n, workspace_dim, answer_qubit, steps, initial_index, epsilon })
    }

    pub fn dim(&self) -> usize {
        self.n * self.workspace_dim
    }

    pub fn t_len(&self) -> usize {
        self.steps.len()
    }

    /// 1-based positions of query steps.
    pub fn query_set(&self) -> Vec<usize> {
        self.steps.iter().enumerate().filter(|(_, s)| s.is_query()).map(|(k, _)| k + 1).collect()
    }

    pub fn initial_state(&self) -> CVec {
        linalg::basis(self.dim(), self.initial_index)
    }

    pub fn answer_bit(&self, z: usize) -> bool {
        (z % self.workspace_dim) >> self.answer_qubit & 1 == 1
    }

    /// Basis index with the answer bit flipped.
    pub fn flip_index(&self, z: usize) -> usize {
        z ^ (1 << self.answer_qubit)
    }

    /// (I (x) X) on the answer register.
    pub fn flip_answer(&self, v: &CVec) -> CVec {
        let mut out = CVec::zeros(v.len());
        for z in 0..v.len() {
            out[self.flip_index(z)] = v[z];
        }
        out
    }

    pub fn flip_matrix(&self) -> CMat {
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for z in 0..d {
            m[(self.flip_index(z), z)] = ONE;
        }
        m
    }

    /// Phase oracle O_x: |i,j> -> (-1)^{x_i} |i,j>.
    pub fn ox_matrix(&self, x: &[bool]) -> CMat {
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for z in 0..d {
            m[(z, z)] = if x[z / self.workspace_dim] { r(-1.0) } else { ONE };
        }
        m
    }

    pub fn apply_ox(&self, x: &[bool], v: &mut CVec) {
        for z in 0..v.len() {
            if x[z / self.workspace_dim] {
                v[z] = -v[z];
            }
        }
    }

    /// Matrix of step `t` (1-based). Query steps are O_x when `x` is given and the identity otherwise.
    pub fn step_matrix(&self, t: usize, x: Option<&[bool]>) -> CMat {
        match (&self.steps[t - 1], x) {
            (Step::Unitary(m), _) => m.clone(),
            (Step::Query, Some(x)) => self.ox_matrix(x),
            (Step::Query, None) => linalg::identity(self.dim()),
        }
    }

    pub fn check_input(&self, x: &[bool]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("input length {} but algorithm reads {} bits", x.len(), self.n)));
        }
        Ok(())
    }

    pub fn simulate(&self, x: &[bool]) -> Result<Vec<CVec>> {
        let mut counters = Counters::default();
        self.simulate_counted(x, &mut counters)
    }

    /// Trajectory Psi_0(x) .. Psi_T(x), charging one O_x call per query step.
    pub fn simulate_counted(&self, x: &[bool], counters: &mut Counters) -> Result<Vec<CVec>> {
        self.check_input(x)?;
        let mut psi = self.initial_state();
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        out.push(psi.clone());
        for s in &self.steps {
            match s {
                Step::Unitary(m) => psi = m * &psi,
                Step::Query => {
                    counters.o_x += 1;
                    self.apply_ox(x, &mut psi);
                }
            }
            out.push(psi.clone());
        }
        Ok(out)
    }

    pub fn output_probabilities(&self, x: &[bool]) -> Result<(f64, f64)> {
        let traj = self.simulate(x)?;
        let last = traj.last().expect("nonempty trajectory");
        let mut p = [0.0, 0.0];
        for z in 0..last.len() {
            p[self.answer_bit(z) as usize] += last[z].norm_sqr();
        }
        Ok((p[0], p[1]))
    }

    /// Largest probability of the wrong answer over the table.
    pub fn max_error(&self, table: &TruthTable) -> Result<(f64, Bits)> {
        let mut worst = (0.0, Vec::new());
        for (x, fx) in &table.rows {
            let (p0, p1) = self.output_probabilities(x)?;
            let e = if *fx { p0 } else { p1 };
            if e >= worst.0 {
                worst = (e, x.clone());
            }
        }
        Ok(worst)
    }
}

fn check_query_placement(steps: &[Step]) -> Result<()> {
    if steps.is_empty() {
        return Err(Error::Malformed("algorithm has no steps".into()));
    }
    if steps[0].is_query() {
        return Err(Error::Malformed("first step is a query".into()));
    }
    if steps[steps.len() - 1].is_query() {
        return Err(Error::Malformed("last step is a query".into()));
    }
    for k in 1..steps.len() {
        if steps[k].is_query() && steps[k - 1].is_query() {
            return Err(Error::Malformed(format!("steps {} and {} are consecutive queries", k, k + 1)));
        }
    }
    Ok(())
}

/// A query algorithm together with its query set, declared error and accepting final state.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanAlgorithm {
    pub base: QueryAlgorithm,
    pub query_set: Vec<usize>,
    pub epsilon: f64,
    /// Basis index of |Psi_T> = |psi_0>|1>.
    pub final_index: usize,
}

impl CleanAlgorithm {
    /// Wrap an algorithm whose answer register already satisfies the clean conditions.
    /// The accepting state is the initial state with the answer bit flipped.
    pub fn assume_clean(base: QueryAlgorithm, epsilon_floor: f64) -> Self {
        let query_set = base.query_set();
        let epsilon = base.epsilon.max(epsilon_floor);
        let final_index = base.flip_index(base.initial_index);
        CleanAlgorithm { base, query_set, epsilon, final_index }
    }

    pub fn t_len(&self) -> usize {
        self.base.t_len()
    }

    pub fn s_len(&self) -> usize {
        self.query_set.len()
    }

    pub fn n(&self) -> usize {
        self.base.n
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn workspace_dim(&self) -> usize {
        self.base.workspace_dim
    }

    pub fn final_state(&self) -> CVec {
        linalg::basis(self.dim(), self.final_index)
    }

    pub fn is_query_step(&self, t: usize) -> bool {
        self.query_set.binary_search(&t).is_ok()
    }

    /// floor(3T/S); the allowed query spacing.
    pub fn gap_bound(&self) -> usize {
        let s = self.s_len().max(1);
        3 * self.t_len() / s
    }

    /// Query positions padded with q_0 = 0 and q_{S+1} = T + 1.
    pub fn padded_queries(&self) -> Vec<usize> {
        let mut q = vec![0];
        q.extend(&self.query_set);
        q.push(self.t_len() + 1);
        q
    }

    pub fn max_gap(&self) -> usize {
        self.padded_queries().windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// |Psi~_t(x)> = U_{t+1}^dag ... U_T^dag |Psi_T> for t = 0..T, with queries as O_x.
    pub fn backward_states(&self, x: &[bool]) -> Vec<CVec> {
        let t_len = self.t_len();
        let mut out = vec![CVec::zeros(0); t_len + 1];
        let mut psi = self.final_state();
        out[t_len] = psi.clone();
        for t in (1..=t_len).rev() {
            psi = self.base.step_matrix(t, Some(x)).adjoint() * psi;
            out[t - 1] = psi.clone();
        }
        out
    }

    pub fn x_independent_backward(&self) -> Vec<CVec> {
        let t_len = self.t_len();
        let mut out = vec![CVec::zeros(0); t_len + 1];
        let mut psi = self.final_state();
        out[t_len] = psi.clone();
        for t in (1..=t_len).rev() {
            psi = self.base.step_matrix(t, None).adjoint() * psi;
            out[t - 1] = psi.clone();
        }
        out
    }
}

/// Cleaning transform: run the algorithm, copy the answer into a fresh qubit, run it backwards.
/// The fresh qubit becomes the least significant workspace bit and the new answer register.
pub fn make_clean(alg: &QueryAlgorithm, table: &TruthTable) -> Result<CleanAlgorithm> {
    make_clean_with(alg, table, &Tolerances::default())
}

pub fn make_clean_with(alg: &QueryAlgorithm, table: &TruthTable, tol: &Tolerances) -> Result<CleanAlgorithm> {
    let (err, worst) = alg.max_error(table)?;
    if err >= 0.2 {
        return Err(Error::ErrorTooLarge { input: fmt_bits(&worst), error: err });
    }
    let w2 = alg.workspace_dim * 2;
    let d2 = alg.n * w2;
    let i2 = linalg::identity(2);
    let lift = |m: &CMat| linalg::kron(m, &i2);
    let mut steps = Vec::with_capacity(2 * alg.t_len() + 1);
    for s in &alg.steps {
        steps.push(match s {
            Step::Unitary(m) => Step::Unitary(lift(m)),
            Step::Query => Step::Query,
        });
    }
    let mut cnot = CMat::zeros(d2, d2);
    for z in 0..d2 {
        let old = z >> 1;
        let target = if alg.answer_bit(old) { z ^ 1 } else { z };
        cnot[(target, z)] = ONE;
    }
    steps.push(Step::Unitary(cnot));
    for s in alg.steps.iter().rev() {
        steps.push(match s {
            Step::Unitary(m) => Step::Unitary(lift(&m.adjoint())),
            Step::Query => Step::Query,
        });
    }
    let initial_index = alg.initial_index * 2;
    let eps = alg.epsilon.max(err).max(tol.epsilon_floor);
    let base = QueryAlgorithm::with_tolerance(alg.n, w2, 0, steps, initial_index, eps, tol)?;
    let query_set = base.query_set();
    Ok(CleanAlgorithm { base, query_set, epsilon: eps, final_index: initial_index ^ 1 })
}

/// Insert I, O_x, I, O_x, I after original step ceil(kT/S) for k = 1..S-1 when S >= 3.
pub fn enforce_query_uniformity(alg: &CleanAlgorithm) -> CleanAlgorithm {
    let s = alg.s_len();
    if s <= 2 {
        return alg.clone();
    }
    let t_len = alg.t_len();
    let cuts: Vec<usize> = (1..s).map(|k| (k * t_len).div_ceil(s)).collect();
    let id = linalg::identity(alg.dim());
    let mut steps = Vec::new();
    for (pos, st) in alg.base.steps.iter().enumerate() {
        steps.push(st.clone());
        for _ in cuts.iter().filter(|&&c_| c_ == pos + 1) {
            steps.push(Step::Unitary(id.clone()));
            steps.push(Step::Query);
            steps.push(Step::Unitary(id.clone()));
            steps.push(Step::Query);
            steps.push(Step::Unitary(id.clone()));
        }
    }
    let mut base = alg.base.clone();
    base.steps = steps;
    let query_set = base.query_set();
    CleanAlgorithm { base, query_set, epsilon: alg.epsilon, final_index: alg.final_index }
}

/// Original step positions in the padded algorithm, used to compare trajectories.
pub fn padded_checkpoints(original: &CleanAlgorithm) -> Vec<usize> {
    let s = original.s_len();
    let t_len = original.t_len();
    if s <= 2 {
        return (0..=t_len).collect();
    }
    let cuts: Vec<usize> = (1..s).map(|k| (k * t_len).div_ceil(s)).collect();
    let mut out = vec![0];
    let mut shift = 0;
    for t in 1..=t_len {
        out.push(t + shift);
        shift += 5 * cuts.iter().filter(|&&c_| c_ == t).count();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub pass: bool,
    pub violation: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CleanReport {
    pub consistency: ConditionResult,
    pub commutation: ConditionResult,
    pub uniformity: ConditionResult,
}

impl CleanReport {
    pub fn all_pass(&self) -> bool {
        self.consistency.pass && self.commutation.pass && self.uniformity.pass
    }
}

pub fn verify_clean(alg: &CleanAlgorithm, table: &TruthTable) -> CleanReport {
    verify_clean_with(alg, table, &Tolerances::default())
}

pub fn verify_clean_with(alg: &CleanAlgorithm, table: &TruthTable, tol: &Tolerances) -> CleanReport {
    let psi_t = alg.final_state();
    let flipped = alg.base.flip_answer(&psi_t);
    let mut worst = 0.0f64;
    let mut worst_x = String::new();
    for (x, _) in &table.rows {
        let Ok(traj) = alg.base.simulate(x) else {
            worst = f64::INFINITY;
            worst_x = fmt_bits(x);
            continue;
        };
        let last = traj.last().expect("nonempty");
        let (p0, p1) = alg.base.output_probabilities(x).unwrap_or((f64::NAN, f64::NAN));
        let d1 = (psi_t.dotc(last) - r(p1)).norm();
        let d0 = (flipped.dotc(last) - r(p0)).norm();
        let d = d1.max(d0);
        if !(d <= worst) {
            worst = d;
            worst_x = fmt_bits(x);
        }
    }
    let consistency = ConditionResult {
        pass: worst <= tol.clean_check,
        violation: worst,
        detail: format!("largest overlap mismatch {worst:.3e} at x = {worst_x}"),
    };

    let xm = alg.base.flip_matrix();
    let mut comm = 0.0f64;
    let mut comm_step = 0;
    for (k, s) in alg.base.steps.iter().enumerate() {
        if let Step::Unitary(m) = s {
            let d = linalg::op_norm(&(m * &xm - &xm * m));
            if d > comm {
                comm = d;
                comm_step = k + 1;
            }
        }
    }
    let commutation = ConditionResult {
        pass: comm <= tol.unitarity,
        violation: comm,
        detail: format!("largest commutator norm {comm:.3e} at step {comm_step}"),
    };

    let bound = alg.gap_bound();
    let gap = alg.max_gap();
    let uniformity = if alg.s_len() == 0 {
        ConditionResult { pass: true, violation: 0.0, detail: "no queries".into() }
    } else {
        ConditionResult {
            pass: gap <= bound,
            violation: gap as f64,
            detail: format!("largest query gap {gap}, allowed floor(3T/S) = {bound}"),
        }
    };
    CleanReport { consistency, commutation, uniformity }
}

/// Oracle access to an algorithm and an input, with call counters.
pub struct OracleSuite<'a> {
    pub alg: &'a CleanAlgorithm,
    pub x: Bits,
    pub counters: Counters,
}

impl<'a> OracleSuite<'a> {
    pub fn new(alg: &'a CleanAlgorithm, x: Bits) -> Self {
        OracleSuite { alg, x, counters: Counters::default() }
    }

    pub fn o_x(&mut self, i: usize) -> C64 {
        self.counters.o_x += 1;
        if self.x[i] {
            r(-1.0)
        } else {
            ONE
        }
    }

    /// U_t for t in 1..=T; identity on query steps and outside the range.
    pub fn o_alg(&mut self, t: i64, dagger: bool) -> Option<CMat> {
        self.counters.o_a += 1;
        if t < 1 || t as usize > self.alg.t_len() {
            return None;
        }
        match &self.alg.base.steps[t as usize - 1] {
            Step::Unitary(m) => Some(if dagger { m.adjoint() } else { m.clone() }),
            Step::Query => None,
        }
    }

    pub fn o_s(&mut self, t: i64) -> C64 {
        self.counters.o_s += 1;
        if t >= 1 && self.alg.is_query_step(t as usize) {
            r(-1.0)
        } else {
            ONE
        }
    }
}

// ---------------------------------------------------------------------------
// JSON format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StepJson {
    Unitary { matrix: Vec<Vec<[f64; 2]>> },
    Query,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircuitJson {
    pub n: usize,
    pub workspace_dim: usize,
    pub answer_qubit: usize,
    pub steps: Vec<StepJson>,
    pub epsilon: f64,
    #[serde(default)]
    pub initial_index: usize,
    /// Optional explicit truth table: input bitstring to output bit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_table: Option<std::collections::BTreeMap<String, u8>>,
}

pub fn matrix_to_json(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_json(rows: &[Vec<[f64; 2]>], what: &str) -> Result<CMat> {
    let nr = rows.len();
    let nc = rows.first().map(|r_| r_.len()).unwrap_or(0);
    let mut m = CMat::from_element(nr, nc, ZERO);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != nc {
            return Err(Error::Parse(format!("{what}: row {i} has {} entries, expected {nc}", row.len())));
        }
        for (j, z) in row.iter().enumerate() {
            m[(i, j)] = C64::new(z[0], z[1]);
        }
    }
    Ok(m)
}

impl QueryAlgorithm {
    pub fn to_json(&self, table: Option<&TruthTable>) -> CircuitJson {
        CircuitJson {
            n: self.n,
            workspace_dim: self.workspace_dim,
            answer_qubit: self.answer_qubit,
            steps: self
                .steps
                .iter()
                .map(|s| match s {
                    Step::Unitary(m) => StepJson::Unitary { matrix: matrix_to_json(m) },
                    Step::Query => StepJson::Query,
                })
                .collect(),
            epsilon: self.epsilon,
            initial_index: self.initial_index,
            truth_table: table.map(|t| t.rows.iter().map(|(x, v)| (fmt_bits(x), *v as u8)).collect()),
        }
    }

    pub fn from_json(cj: &CircuitJson, tol: &Tolerances) -> Result<(Self, Option<TruthTable>)> {
        let mut steps = Vec::with_capacity(cj.steps.len());
        for (k, s) in cj.steps.iter().enumerate() {
            steps.push(match s {
                StepJson::Unitary { matrix } => Step::Unitary(matrix_from_json(matrix, &format!("steps[{k}].matrix"))?),
                StepJson::Query => Step::Query,
            });
        }
        let alg = QueryAlgorithm::with_tolerance(cj.n, cj.workspace_dim, cj.answer_qubit, steps, cj.initial_index, cj.epsilon, tol)?;
        let table = match &cj.truth_table {
            None => None,
            Some(map) => {
                let mut rows = Vec::new();
                for (k, v) in map {
                    rows.push((parse_bits(k)?, *v != 0));
                }
                Some(TruthTable::new(cj.n, rows)?)
            }
        };
        Ok((alg, table))
    }

    pub fn from_json_str(text: &str, tol: &Tolerances) -> Result<(Self, Option<TruthTable>)> {
        let cj: CircuitJson = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        Self::from_json(&cj, tol)
    }

    /// Table from rounding p1 on every input, used when a circuit file carries no truth table.
    pub fn induced_table(&self) -> Result<TruthTable> {
        let mut rows = Vec::new();
        for x in TruthTable::all_inputs(self.n) {
            let (_, p1) = self.output_probabilities(&x)?;
            rows.push((x, p1 >= 0.5));
        }
        TruthTable::new(self.n, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn hadamard_ws() -> QueryAlgorithm {
        let h = 1.0 / 2f64.sqrt();
        let hm = CMat::from_row_slice(2, 2, &[r(h), r(h), r(h), r(-h)]);
        QueryAlgorithm::new(1, 2, 0, vec![Step::Unitary(hm.clone()), Step::Query, Step::Unitary(hm)], 0, 0.0).unwrap()
    }

    #[test]
    fn identity_trajectory() {
        let alg = QueryAlgorithm::new(1, 2, 0, vec![Step::Unitary(linalg::identity(2))], 0, 0.0).unwrap();
        let traj = alg.simulate(&[true]).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj[0], traj[1]);
    }

    #[test]
    fn hadamard_query_hadamard_gives_minus_initial() {
        let alg = hadamard_ws();
        let last = alg.simulate(&[true]).unwrap().pop().unwrap();
        let want = -alg.initial_state();
        assert!((last - want).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_query_placement() {
        let id = linalg::identity(2);
        let e = QueryAlgorithm::new(1, 2, 0, vec![Step::Query, Step::Unitary(id.clone())], 0, 0.0);
        assert!(matches!(e, Err(Error::Malformed(_))));
        let e = QueryAlgorithm::new(
            1,
            2,
            0,
            vec![Step::Unitary(id.clone()), Step::Query, Step::Query, Step::Unitary(id)],
            0,
            0.0,
        );
        assert!(matches!(e, Err(Error::Malformed(_))));
    }

    #[test]
    fn rejects_non_unitary_and_mismatch() {
        let m = CMat::from_element(2, 2, ONE);
        assert!(matches!(
            QueryAlgorithm::new(1, 2, 0, vec![Step::Unitary(m)], 0, 0.0),
            Err(Error::NotUnitary { .. })
        ));
        let id3 = linalg::identity(3);
        assert!(matches!(QueryAlgorithm::new(1, 2, 0, vec![Step::Unitary(id3)], 0, 0.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn no_queries_means_input_independent() {
        let h = 1.0 / 2f64.sqrt();
        let hm = CMat::from_row_slice(2, 2, &[r(h), r(h), r(h), r(-h)]);
        let alg = QueryAlgorithm::new(1, 2, 0, vec![Step::Unitary(hm)], 0, 0.0).unwrap();
        assert_eq!(alg.simulate(&[false]).unwrap(), alg.simulate(&[true]).unwrap());
        let (p0, p1) = alg.output_probabilities(&[true]).unwrap();
        assert!((p0 - 0.5).abs() < 1e-12 && (p1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deterministic_accept_fixture() {
        let (alg, _) = fixtures::read_first();
        let (p0, p1) = alg.output_probabilities(&[true, false]).unwrap();
        assert!(p0.abs() < 1e-12 && (p1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cleaning_shapes_and_probabilities() {
        for (name, alg, table) in fixtures::all() {
            let clean = make_clean(&alg, &table).unwrap();
            assert_eq!(clean.t_len(), 2 * alg.t_len() + 1, "{name}");
            assert_eq!(clean.s_len(), 2 * alg.query_set().len(), "{name}");
            for (x, _) in &table.rows {
                let before = alg.output_probabilities(x).unwrap();
                let after = clean.base.output_probabilities(x).unwrap();
                assert!((before.1 - after.1).abs() < 1e-10, "{name}");
            }
            assert!(verify_clean(&clean, &table).consistency.pass, "{name}");
            assert!(verify_clean(&clean, &table).commutation.pass, "{name}");
        }
    }

    #[test]
    fn oracle_counter_counts_queries() {
        let (alg, table) = fixtures::parity();
        let mut c = Counters::default();
        alg.simulate_counted(&table.rows[0].0, &mut c).unwrap();
        assert_eq!(c.o_x, 2);
    }

    #[test]
    fn z_on_answer_breaks_commutation() {
        let (alg, table) = fixtures::read_first();
        let mut clean = make_clean(&alg, &table).unwrap();
        let d = clean.dim();
        let mut z = linalg::identity(d);
        for k in 0..d {
            if k & 1 == 1 {
                z[(k, k)] = r(-1.0);
            }
        }
        clean.base.steps[0] = Step::Unitary(z);
        assert!(!verify_clean(&clean, &table).commutation.pass);
    }

    #[test]
    fn error_too_large_is_reported() {
        let (alg, table) = fixtures::read_first();
        let bad = TruthTable::new(2, table.rows.iter().map(|(x, v)| (x.clone(), !v)).collect()).unwrap();
        assert!(matches!(make_clean(&alg, &bad), Err(Error::ErrorTooLarge { .. })));
    }

    #[test]
    fn json_round_trip() {
        let (alg, table) = fixtures::or_two();
        let j = serde_json::to_string(&alg.to_json(Some(&table))).unwrap();
        let (back, t2) = QueryAlgorithm::from_json_str(&j, &Tolerances::default()).unwrap();
        assert_eq!(back, alg);
        assert_eq!(t2.unwrap().rows.len(), table.rows.len());
    }
}
