//! The span program P_A of a clean query algorithm and its analytic structure.

use crate::circuit_ir::{fmt_bits, verify_clean_with, CleanAlgorithm, TruthTable};
use crate::linalg::{self, r, CMat, CVec, C64, ONE};
use crate::span_core::{BlockLayout, Label, SpanProgram};
use crate::tol::Tolerances;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Index table of H. Rows are time steps t = 0..T; query rows (t+1 in S) carry a tag b.
/// Basis order is lexicographic in (t, b, i, j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgSpanLayout {
    pub t_len: usize,
    pub n: usize,
    pub w: usize,
    /// 1-based query positions.
    pub queries: Vec<usize>,
    /// (t, b, i, j) for each basis position of H.
    pub entries: Vec<(usize, u8, usize, usize)>,
    #[serde(skip)]
    row_offset: Vec<usize>,
}

impl AlgSpanLayout {
    pub fn new(t_len: usize, n: usize, w: usize, queries: Vec<usize>) -> Self {
        let d = n * w;
        let mut row_offset = Vec::with_capacity(t_len + 2);
        let mut entries = Vec::new();
        let mut off = 0;
        for t in 0..=t_len {
            row_offset.push(off);
            let tags = if queries.contains(&(t + 1)) { 2 } else { 1 };
            for b in 0..tags {
                for z in 0..d {
                    entries.push((t, b as u8, z / w, z % w));
                }
            }
            off += tags * d;
        }
        row_offset.push(off);
        AlgSpanLayout { t_len, n, w, queries, entries, row_offset }
    }

    /// Rebuild the lookup table after deserialization.
    pub fn rebuilt(&self) -> Self {
        Self::new(self.t_len, self.n, self.w, self.queries.clone())
    }

    pub fn d(&self) -> usize {
        self.n * self.w
    }

    pub fn dim_h(&self) -> usize {
        self.entries.len()
    }

    pub fn dim_v(&self) -> usize {
        (self.t_len + 1) * self.d()
    }

    pub fn s_len(&self) -> usize {
        self.queries.len()
    }

    /// Does row t carry a tag, i.e. is t+1 a query?
    pub fn tagged(&self, t: usize) -> bool {
        self.queries.binary_search(&(t + 1)).is_ok()
    }

    pub fn index(&self, t: usize, b: usize, z: usize) -> Option<usize> {
        if t > self.t_len || z >= self.d() || (b == 1 && !self.tagged(t)) || b > 1 {
            return None;
        }
        Some(self.row_offset[t] + b * self.d() + z)
    }

    pub fn v_index(&self, t: usize, z: usize) -> usize {
        t * self.d() + z
    }

    /// q_0 = 0, q_1..q_S, q_{S+1} = T+1.
    pub fn padded_queries(&self) -> Vec<usize> {
        let mut q = vec![0];
        q.extend(&self.queries);
        q.push(self.t_len + 1);
        q
    }

    /// |B_l| = q_l - q_{l-1} - 1 for l = 1..S+1.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.padded_queries().windows(2).map(|w| w[1] - w[0] - 1).collect()
    }

    pub fn label(&self, k: usize) -> Label {
        let (t, b, i, _) = self.entries[k];
        if self.tagged(t) {
            Label::Input { i, b: b == 1 }
        } else {
            Label::True
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightParams {
    pub a: f64,
    pub m: f64,
    /// C = (T - q_S)/M^2 + 1/2.
    pub c: f64,
}

impl WeightParams {
    pub fn new(layout: &AlgSpanLayout, epsilon: f64) -> Self {
        let s = layout.s_len();
        let a = (epsilon / (2 * s + 1) as f64).sqrt();
        let m = layout.block_sizes().into_iter().max().unwrap_or(0).max(1) as f64;
        let m = m.sqrt();
        let q_s = *layout.padded_queries().iter().rev().nth(1).expect("padded");
        let c = (layout.t_len - q_s) as f64 / (m * m) + 0.5;
        WeightParams { a, m, c }
    }
}

/// P_A together with the algorithm it was built from.
#[derive(Debug, Clone)]
pub struct AlgSpan {
    pub alg: CleanAlgorithm,
    pub layout: AlgSpanLayout,
    pub weights: WeightParams,
    pub program: SpanProgram,
}

pub fn w_plus_bound(s: usize) -> f64 {
    3.0 * (2 * s + 1) as f64
}

pub fn w_minus_bound(s: usize) -> f64 {
    2.0 * (4 * s + 1) as f64
}

/// 5 eps / (3 (2S+1)).
pub fn negative_error_cap(s: usize, epsilon: f64) -> f64 {
    5.0 * epsilon / w_plus_bound(s)
}

pub fn build_span_program(alg: &CleanAlgorithm) -> Result<AlgSpan> {
    build_span_program_with(alg, &Tolerances::default())
}

/// Structural clean conditions (commutation, query spacing) are checked here;
/// consistency needs a truth table and is checked by callers that have one.
pub fn build_span_program_with(alg: &CleanAlgorithm, tol: &Tolerances) -> Result<AlgSpan> {
    if alg.s_len() == 0 {
        return Err(Error::NotClean("algorithm makes no queries".into()));
    }
    let empty = TruthTable { n: alg.n(), rows: vec![] };
    let rep = verify_clean_with(alg, &empty, tol);
    if !rep.commutation.pass {
        return Err(Error::NotClean(rep.commutation.detail));
    }
    if !rep.uniformity.pass {
        return Err(Error::NotClean(rep.uniformity.detail));
    }
    let layout = AlgSpanLayout::new(alg.t_len(), alg.n(), alg.workspace_dim(), alg.query_set.clone());
    let weights = WeightParams::new(&layout, alg.epsilon);
    let a = operator(alg, &layout, &weights);
    let d = layout.d();
    let t_len = layout.t_len;
    let mut tau = CVec::zeros(layout.dim_v());
    tau[layout.v_index(0, alg.base.initial_index)] += ONE;
    tau[layout.v_index(t_len, alg.final_index)] -= ONE;
    let labels = (0..layout.dim_h()).map(|k| layout.label(k)).collect();
    let program = SpanProgram::new(BlockLayout { n: alg.n(), labels }, a, tau)?;
    debug_assert_eq!(program.dim_v, (t_len + 1) * d);
    Ok(AlgSpan { alg: alg.clone(), layout, weights, program })
}

fn operator(alg: &CleanAlgorithm, layout: &AlgSpanLayout, wp: &WeightParams) -> CMat {
    let d = layout.d();
    let mut a = CMat::zeros(layout.dim_v(), layout.dim_h());
    for (k, &(t, b, i, j)) in layout.entries.iter().enumerate() {
        let z = i * layout.w + j;
        if t == layout.t_len {
            a[(layout.v_index(t, z), k)] = r(wp.a);
        } else if layout.tagged(t) {
            a[(layout.v_index(t, z), k)] = ONE;
            a[(layout.v_index(t + 1, z), k)] = if b == 1 { ONE } else { r(-1.0) };
        } else {
            a[(layout.v_index(t, z), k)] = r(wp.m);
            let u = alg.base.step_matrix(t + 1, None);
            for y in 0..d {
                a[(layout.v_index(t + 1, y), k)] -= u[(y, z)] * wp.m;
            }
        }
    }
    a
}

/// Result of checking every column of A against its expected case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnAudit {
    pub pass: bool,
    pub worst: f64,
    pub violations: Vec<String>,
}

pub fn column_audit(sp: &AlgSpan, tol: f64) -> ColumnAudit {
    let want = operator(&sp.alg, &sp.layout, &sp.weights);
    let mut violations = Vec::new();
    let mut worst = 0.0f64;
    if want.shape() != sp.program.a.shape() {
        return ColumnAudit { pass: false, worst: f64::INFINITY, violations: vec!["shape mismatch".into()] };
    }
    for (k, &(t, b, i, j)) in sp.layout.entries.iter().enumerate() {
        let dev = (want.column(k) - sp.program.a.column(k)).norm();
        worst = worst.max(dev);
        if dev > tol {
            let case = if t == sp.layout.t_len {
                "final"
            } else if sp.layout.tagged(t) {
                "query"
            } else {
                "non-query"
            };
            violations.push(format!("column {k} = (t={t}, b={b}, i={i}, j={j}), {case} case, deviation {dev:.3e}"));
        }
    }
    ColumnAudit { pass: violations.is_empty(), worst, violations }
}

impl AlgSpan {
    fn put(&self, h: &mut CVec, t: usize, b: usize, psi: &CVec, coef: C64) {
        for z in 0..psi.len() {
            let k = self.layout.index(t, b, z).expect("valid row");
            h[k] += psi[z] * coef;
        }
    }

    /// |+> and |-> tags on a query row, scaled.
    fn put_pm(&self, h: &mut CVec, t: usize, sign: f64, psi: &CVec, coef: f64) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        self.put(h, t, 0, psi, r(coef * s));
        self.put(h, t, 1, psi, r(coef * s * sign));
    }

    pub fn forward_states(&self, x: &[bool]) -> Result<Vec<CVec>> {
        self.alg.base.simulate(x)
    }

    /// U_t ... U_{from+1} psi for t >= from, queries skipped (identity).
    fn propagate(&self, psi: &CVec, from: usize, to: usize) -> CVec {
        let mut v = psi.clone();
        for s in from + 1..=to {
            v = self.alg.base.step_matrix(s, None) * v;
        }
        v
    }

    /// ||Psi_T(x) - Psi_T||^2.
    pub fn final_state_defect(&self, x: &[bool]) -> Result<f64> {
        let traj = self.forward_states(x)?;
        Ok((traj.last().expect("nonempty") - self.alg.final_state()).norm_squared())
    }

    pub fn w_plus_bound(&self) -> f64 {
        w_plus_bound(self.layout.s_len())
    }

    pub fn w_minus_bound(&self) -> f64 {
        w_minus_bound(self.layout.s_len())
    }

    pub fn negative_error_cap(&self) -> f64 {
        negative_error_cap(self.layout.s_len(), self.alg.epsilon)
    }

    /// Psi~_t(x) from the backward recursion; queries act as O_x.
    pub fn backward_states(&self, x: &[bool]) -> Vec<CVec> {
        self.alg.backward_states(x)
    }
}

/// |w_x> = sum_t |t>|Psi^_t(x)> + (1/a)|T,0>(Psi_T(x) - Psi_T).
pub fn construct_positive_witness(sp: &AlgSpan, x: &[bool]) -> Result<CVec> {
    let traj = sp.forward_states(x)?;
    let t_len = sp.layout.t_len;
    let psi_t = sp.alg.final_state();
    let defect = (&traj[t_len] - &psi_t).norm_squared();
    if defect > 2.0 * sp.alg.epsilon + 1e-9 {
        return Err(Error::NotPositive(defect));
    }
    let WeightParams { a, m, .. } = sp.weights;
    let mut w = CVec::zeros(sp.layout.dim_h());
    for t in 0..t_len {
        if sp.layout.tagged(t) {
            for z in 0..sp.layout.d() {
                let b = x[z / sp.layout.w] as usize;
                let k = sp.layout.index(t, b, z).expect("query row");
                w[k] += traj[t][z];
            }
        } else {
            sp.put(&mut w, t, 0, &traj[t], r(1.0 / m));
        }
    }
    sp.put(&mut w, t_len, 0, &(&traj[t_len] - &psi_t), r(1.0 / a));
    Ok(w)
}

/// Column vector omega with <omega~_x| = omega^dagger.
pub fn construct_negative_witness(sp: &AlgSpan, x: &[bool]) -> Result<CVec> {
    let traj = sp.forward_states(x)?;
    let t_len = sp.layout.t_len;
    let den = ONE - traj[t_len].dotc(&sp.alg.final_state());
    if den.norm() < 1e-9 {
        return Err(Error::Degenerate(den.norm()));
    }
    // <omega| = (1/den) sum <t|<Psi_t|, so |omega> = (1/conj(den)) sum |t>|Psi_t>.
    let scale = ONE / den.conj();
    let mut v = CVec::zeros(sp.layout.dim_v());
    for (t, psi) in traj.iter().enumerate() {
        for z in 0..psi.len() {
            v[sp.layout.v_index(t, z)] = psi[z] * scale;
        }
    }
    Ok(v)
}

/// Phi_l for l = 2..S+1 as dim_H x d matrices with their Gram constants.
#[derive(Debug, Clone)]
pub struct KernelMap {
    pub ell: usize,
    pub gram: f64,
    pub matrix: CMat,
}

pub fn kernel_basis_maps(sp: &AlgSpan) -> Vec<KernelMap> {
    let q = sp.layout.padded_queries();
    let s = sp.layout.s_len();
    let d = sp.layout.d();
    let t_len = sp.layout.t_len;
    let WeightParams { a, m, .. } = sp.weights;
    let mut out = Vec::new();
    for ell in 2..=s + 1 {
        let (q_prev, q_cur) = (q[ell - 1], q[ell]);
        let mut mat = CMat::zeros(sp.layout.dim_h(), d);
        for z in 0..d {
            let psi = linalg::basis(d, z);
            let mut col = CVec::zeros(sp.layout.dim_h());
            sp.put_pm(&mut col, q_prev - 1, -1.0, &psi, std::f64::consts::FRAC_1_SQRT_2);
            let last = if ell <= s { q_cur - 2 } else { t_len - 1 };
            for t in q_prev..=last {
                sp.put(&mut col, t, 0, &sp.propagate(&psi, q_prev, t), r(1.0 / m));
            }
            if ell <= s {
                let v = sp.propagate(&psi, q_prev, q_cur - 1);
                sp.put_pm(&mut col, q_cur - 1, 1.0, &v, std::f64::consts::FRAC_1_SQRT_2);
            } else {
                sp.put(&mut col, t_len, 0, &sp.propagate(&psi, q_prev, t_len), r(1.0 / a));
            }
            mat.set_column(z, &col);
        }
        let gram = if ell <= s {
            1.0 + (q_cur - q_prev - 1) as f64 / (m * m)
        } else {
            0.5 + (t_len - q_prev) as f64 / (m * m) + 1.0 / (a * a)
        };
        out.push(KernelMap { ell, gram, matrix: mat });
    }
    out
}

/// sum_l Phi_l Phi_l^dagger / c_l.
pub fn kernel_projector(sp: &AlgSpan) -> CMat {
    let dh = sp.layout.dim_h();
    let mut p = CMat::zeros(dh, dh);
    for km in kernel_basis_maps(sp) {
        p += &km.matrix * km.matrix.adjoint() * r(1.0 / km.gram);
    }
    p
}

/// The three orthogonal pieces of w0: psi (first block), chi (last block), phi (final row).
#[derive(Debug, Clone)]
pub struct W0Parts {
    pub psi: CVec,
    pub chi: CVec,
    pub phi: CVec,
}

impl W0Parts {
    pub fn total(&self) -> CVec {
        &self.psi + &self.chi + &self.phi
    }
}

pub fn w0_parts(sp: &AlgSpan) -> W0Parts {
    let q = sp.layout.padded_queries();
    let s = sp.layout.s_len();
    let t_len = sp.layout.t_len;
    let (q1, qs) = (q[1], q[s]);
    let WeightParams { a, m, c } = sp.weights;
    let dh = sp.layout.dim_h();
    let psi0 = sp.alg.base.initial_state();
    let back = sp.alg.x_independent_backward();
    let k = 1.0 / (c * a * a + 1.0);

    let mut psi = CVec::zeros(dh);
    for t in 0..=q1 - 2 {
        sp.put(&mut psi, t, 0, &sp.propagate(&psi0, 0, t), r(1.0 / m));
    }
    sp.put_pm(&mut psi, q1 - 1, 1.0, &sp.propagate(&psi0, 0, q1 - 1), std::f64::consts::FRAC_1_SQRT_2);

    let mut chi = CVec::zeros(dh);
    sp.put_pm(&mut chi, qs - 1, -1.0, &back[qs], k * std::f64::consts::FRAC_1_SQRT_2);
    for t in qs..t_len {
        sp.put(&mut chi, t, 0, &back[t], r(k / m));
    }

    let mut phi = CVec::zeros(dh);
    sp.put(&mut phi, t_len, 0, &sp.alg.final_state(), r(-c * a * k));
    W0Parts { psi, chi, phi }
}

/// Closed-form minimal witness and N = (q_1-1)/M^2 + 1/2 + C/(Ca^2+1).
pub fn analytic_w0(sp: &AlgSpan) -> (CVec, f64) {
    let q1 = sp.layout.padded_queries()[1];
    let WeightParams { a, m, c } = sp.weights;
    let n = (q1 - 1) as f64 / (m * m) + 0.5 + c / (c * a * a + 1.0);
    (w0_parts(sp).total(), n)
}

/// Closed-form norms: ||psi||^2, ||chi||^2, ||phi||^2.
pub fn w0_part_norms(sp: &AlgSpan) -> (f64, f64, f64) {
    let q1 = sp.layout.padded_queries()[1];
    let WeightParams { a, m, c } = sp.weights;
    let k = c * a * a + 1.0;
    ((q1 - 1) as f64 / (m * m) + 0.5, c / (k * k), (c * a / k).powi(2))
}

/// Per-input witness certificate quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessCheck {
    pub input: String,
    pub value: bool,
    /// ||w_x||^2 for positive inputs, ||<omega|A||^2 for negative ones.
    pub size: f64,
    /// ||<omega|A Pi_H(x)||^2 for negative inputs; ||A w_x - tau|| for positive ones.
    pub error: f64,
}

pub fn witness_checks(sp: &AlgSpan, table: &TruthTable) -> Result<Vec<WitnessCheck>> {
    let mut out = Vec::new();
    for (x, fx) in &table.rows {
        let mask = sp.program.layout.mask(x);
        if *fx {
            let w = construct_positive_witness(sp, x)?;
            let resid = (&sp.program.a * &w - &sp.program.tau).norm();
            out.push(WitnessCheck { input: fmt_bits(x), value: true, size: w.norm_squared(), error: resid });
        } else {
            let v = construct_negative_witness(sp, x)?;
            let (cost, err) = crate::span_core::negative_costs(&sp.program, &v, &mask);
            out.push(WitnessCheck { input: fmt_bits(x), value: false, size: cost, error: err });
        }
    }
    Ok(out)
}

/// The approximation parameter certified by the constructed negative witnesses against
/// the positive bound 3(2S+1): max_x err(x) * 3(2S+1). It never exceeds 5 eps.
pub fn certified_lambda(sp: &AlgSpan, table: &TruthTable) -> Result<f64> {
    let wp = sp.w_plus_bound();
    let mut lam = 0.0f64;
    for c in witness_checks(sp, table)? {
        if !c.value {
            lam = lam.max(c.error * wp);
        }
    }
    Ok(lam)
}

/// Serializable view of P_A for the build command.
#[derive(Debug, Clone, Serialize)]
pub struct WeightReport {
    pub weights: WeightParams,
    pub w_plus_bound: f64,
    pub w_minus_bound: f64,
    pub negative_error_cap: f64,
    pub n_closed_form: f64,
}

pub fn weight_report(sp: &AlgSpan) -> WeightReport {
    WeightReport {
        weights: sp.weights,
        w_plus_bound: sp.w_plus_bound(),
        w_minus_bound: sp.w_minus_bound(),
        negative_error_cap: sp.negative_error_cap(),
        n_closed_form: analytic_w0(sp).1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit_ir::{enforce_query_uniformity, make_clean};
    use crate::fixtures;
    use crate::span_core::minimal_witness;

    fn built(name: &str) -> (AlgSpan, TruthTable) {
        let (alg, table) = fixtures::by_name(name).unwrap();
        let clean = enforce_query_uniformity(&make_clean(&alg, &table).unwrap());
        (build_span_program(&clean).unwrap(), table)
    }

    #[test]
    fn dimensions() {
        let (sp, _) = built("read_first");
        // cleaned: T = 9, S = 2, n = 2, |W| = 4
        assert_eq!(sp.layout.dim_h(), (9 + 2 + 1) * 8);
        assert_eq!(sp.program.dim_v, 10 * 8);
        assert_eq!(sp.layout.block_sizes(), vec![1, 5, 1]);
    }

    #[test]
    fn columns_match_cases() {
        let (sp, _) = built("or_two");
        let audit = column_audit(&sp, 1e-12);
        assert!(audit.pass, "{:?}", audit.violations);
        let q = sp.layout.queries[0];
        let k = sp.layout.index(q - 1, 1, 3).unwrap();
        let col = sp.program.a.column(k);
        assert_eq!(col[sp.layout.v_index(q - 1, 3)], ONE);
        assert_eq!(col[sp.layout.v_index(q, 3)], ONE);
        let k = sp.layout.index(sp.layout.t_len, 0, 2).unwrap();
        assert!((sp.program.a[(sp.layout.v_index(sp.layout.t_len, 2), k)].re - sp.weights.a).abs() < 1e-15);
    }

    #[test]
    fn tampered_column_is_reported() {
        let (mut sp, _) = built("read_first");
        sp.program.a[(0, 5)] += r(0.5);
        let audit = column_audit(&sp, 1e-9);
        assert!(!audit.pass);
        assert!(audit.violations[0].contains("column 5"));
    }

    #[test]
    fn minimal_witness_closed_form() {
        for name in ["read_first", "or_two", "parity", "noisy"] {
            let (sp, _) = built(name);
            let (w0, n) = analytic_w0(&sp);
            assert!((w0.norm_squared() - n).abs() < 1e-8, "{name}");
            let (num, nn) = minimal_witness(&sp.program).unwrap();
            assert!((nn - n).abs() < 1e-8, "{name}: {nn} vs {n}");
            assert!((num - &w0).norm() < 1e-8, "{name}");
            let (p, c, f) = w0_part_norms(&sp);
            let parts = w0_parts(&sp);
            assert!((parts.psi.norm_squared() - p).abs() < 1e-10);
            assert!((parts.chi.norm_squared() - c).abs() < 1e-10);
            assert!((parts.phi.norm_squared() - f).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_maps_span_null_space() {
        for name in ["read_first", "parity"] {
            let (sp, _) = built(name);
            let maps = kernel_basis_maps(&sp);
            let d = sp.layout.d();
            assert_eq!(maps.len(), sp.layout.s_len());
            for km in &maps {
                assert!((&sp.program.a * &km.matrix).norm() < 1e-8);
                let g = km.matrix.adjoint() * &km.matrix;
                assert!((g - CMat::identity(d, d) * r(km.gram)).norm() < 1e-9);
            }
            let nul = linalg::nullity(&sp.program.a, 1e-10);
            assert_eq!(nul, sp.layout.s_len() * d);
            let p = kernel_projector(&sp);
            assert!((&p * &p - &p).norm() < 1e-9);
            let (w0, _) = analytic_w0(&sp);
            assert!((&p * w0).norm() < 1e-9);
        }
    }

    #[test]
    fn constructed_witnesses_meet_bounds() {
        for name in ["read_first", "or_two", "parity", "noisy"] {
            let (sp, table) = built(name);
            for c in witness_checks(&sp, &table).unwrap() {
                if c.value {
                    assert!(c.error < 1e-8);
                    assert!(c.size <= sp.w_plus_bound() + 1e-8);
                } else {
                    assert!(c.error <= sp.negative_error_cap() + 1e-8, "{name} {}", c.input);
                    assert!(c.size <= sp.w_minus_bound() + 1e-8);
                }
            }
            let lam = certified_lambda(&sp, &table).unwrap();
            assert!(lam <= 5.0 * sp.alg.epsilon + 1e-12);
        }
    }

    #[test]
    fn negative_witness_vanishes_on_query_columns() {
        let (sp, table) = built("parity");
        let x = table.negatives().next().unwrap().clone();
        let v = construct_negative_witness(&sp, &x).unwrap();
        assert!((v.dotc(&sp.program.tau) - ONE).norm() < 1e-12);
        let row = sp.program.a.adjoint() * &v;
        for (k, &(t, b, i, _)) in sp.layout.entries.iter().enumerate() {
            if sp.layout.tagged(t) && (b == 1) == x[i] {
                assert!(row[k].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn final_state_defect_matches_probability() {
        let (sp, table) = built("noisy");
        for x in table.positives() {
            let (_, p1) = sp.alg.base.output_probabilities(x).unwrap();
            assert!((sp.final_state_defect(x).unwrap() - 2.0 * (1.0 - p1)).abs() < 1e-9);
        }
    }

    #[test]
    fn layout_round_trip() {
        let (sp, _) = built("read_first");
        let s = serde_json::to_string(&sp.layout).unwrap();
        let back: AlgSpanLayout = serde_json::from_str(&s).unwrap();
        assert_eq!(back.rebuilt(), sp.layout);
    }
}
