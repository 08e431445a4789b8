//! The implementing subspace H_x and checks of the register circuits against the matrices of P_A.

use super::pa;
use super::sim::{self, aux_clear, extract_matrix, ChildCtx, Circuit, Ctx, Key, State, HAT};
use crate::alg_to_sp::{analytic_w0, kernel_projector, w0_part_norms, AlgSpan};
use crate::circuit_ir::{fmt_bits, Counters};
use crate::linalg::{self, r, CMat, CVec, ONE};
use crate::span_core::projector_hx;
use crate::Result;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;

pub fn child_ctx(sp: &AlgSpan) -> ChildCtx {
    ChildCtx::new(&sp.alg, sp.weights.m, sp.weights.a, w0_part_norms(sp))
}

pub fn context(sp: &AlgSpan, x: &[bool]) -> Ctx {
    let mut ctx = Ctx::single(child_ctx(sp));
    ctx.set_input(vec![x.to_vec()]);
    ctx
}

/// Register keys of the basis of H, in the index order of P_A.
pub fn h_keys(sp: &AlgSpan) -> Vec<Key> {
    let w = sp.layout.w;
    sp.layout.entries.iter().map(|&(t, b, i, j)| sim::key(t as i64, b as i64, (i * w + j) as i64)).collect()
}

/// Basis of H^beta: H, then |0^>, then |1^>.
pub fn hbeta_keys(sp: &AlgSpan) -> Vec<Key> {
    let mut keys = h_keys(sp);
    for h in 0..2 {
        let mut k = sim::key(0, 0, sp.alg.base.initial_index as i64);
        k[HAT] = h;
        keys.push(k);
    }
    keys
}

fn row_vectors(sp: &AlgSpan, states: &[CVec]) -> Vec<CVec> {
    let lay = &sp.layout;
    let mut out = Vec::new();
    for t in 0..=lay.t_len {
        if lay.tagged(t) {
            for (sign, v) in [(1.0, &states[t]), (-1.0, &states[t + 1])] {
                let mut h = CVec::zeros(lay.dim_h());
                for z in 0..lay.d() {
                    h[lay.index(t, 0, z).expect("row")] += v[z] * r(FRAC_1_SQRT_2);
                    h[lay.index(t, 1, z).expect("row")] += v[z] * r(sign * FRAC_1_SQRT_2);
                }
                out.push(h);
            }
        } else {
            let mut h = CVec::zeros(lay.dim_h());
            for z in 0..lay.d() {
                h[lay.index(t, 0, z).expect("row")] = states[t][z];
            }
            out.push(h);
        }
    }
    out
}

/// Orthonormal basis of H_x: rows |t>|Psi_t(x)> (tags |+>Psi_t, |->Psi_{t+1} on query rows),
/// plus the same built from the backward states Psi~_t(x) when f(x) = 0.
pub fn implementing_subspace(sp: &AlgSpan, x: &[bool], fx: bool) -> Result<CMat> {
    let mut cols = row_vectors(sp, &sp.forward_states(x)?);
    if !fx {
        cols.extend(row_vectors(sp, &sp.backward_states(x)));
    }
    let m = CMat::from_columns(&cols);
    Ok(linalg::orth(&m, 1e-10))
}

fn leak(p: &CMat, q: &CMat) -> f64 {
    let outside = linalg::identity(q.nrows()) - q * q.adjoint();
    linalg::op_norm(&(outside * p * q))
}

/// How far H_x is from being invariant under Pi_ker and Pi_H(x), and how far w0 lies from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceReport {
    pub input: String,
    pub value: bool,
    pub dim: usize,
    pub kernel_leak: f64,
    pub hx_leak: f64,
    pub w0_distance: f64,
    pub contains_zero_state: bool,
}

pub fn subspace_report(sp: &AlgSpan, x: &[bool], fx: bool) -> Result<SubspaceReport> {
    let q = implementing_subspace(sp, x, fx)?;
    let (w0, n) = analytic_w0(sp);
    let outside = linalg::identity(q.nrows()) - &q * q.adjoint();
    let zero = linalg::basis(sp.layout.dim_h(), sp.layout.index(0, 0, sp.alg.base.initial_index).expect("zero"));
    Ok(SubspaceReport {
        input: fmt_bits(x),
        value: fx,
        dim: q.ncols(),
        kernel_leak: leak(&kernel_projector(sp), &q),
        hx_leak: leak(&projector_hx(&sp.program, x)?, &q),
        w0_distance: (&outside * &w0).norm() / n.sqrt(),
        contains_zero_state: (&outside * zero).norm() < 1e-9,
    })
}

/// One circuit compared with its matrix target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircuitCheck {
    pub name: String,
    pub error: f64,
    pub bound: f64,
    pub pass: bool,
    /// Largest norm left in nonzero auxiliary registers over basis inputs.
    pub aux_residual: f64,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubroutineReport {
    pub input: String,
    pub loop_len: usize,
    pub checks: Vec<CircuitCheck>,
}

impl SubroutineReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn aux_residual(m: &CMat, basis_len: usize, extra: &[Key]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        let mass: f64 = extra.iter().enumerate().filter(|(_, k)| !aux_clear(k)).map(|(e, _)| m[(basis_len + e, j)].norm_sqr()).sum();
        worst = worst.max(mass.sqrt());
    }
    worst
}

fn padded(target: &CMat, rows: usize) -> CMat {
    let mut t = CMat::zeros(rows, target.ncols());
    t.view_mut((0, 0), (target.nrows(), target.ncols())).copy_from(target);
    t
}

fn check(name: &str, c: &Circuit, ctx: &Ctx, basis: &[Key], target: &CMat, q: &CMat, bound: f64) -> CircuitCheck {
    let (m, extra) = extract_matrix(c, ctx, basis);
    let diff = &m - padded(target, m.nrows());
    let error = linalg::op_norm(&(diff * q));
    let aux = aux_residual(&m, basis.len(), &extra);
    CircuitCheck { name: name.into(), error, bound, pass: error <= bound && aux <= 1e-9, aux_residual: aux, counters: c.counters() }
}

/// Circuit matrices of R_ker, R_H(x), C_w0, G and R_w0 against their numeric targets.
/// R_ker and R_H are compared on all of H, the others on H_x.
pub fn check_subroutines(sp: &AlgSpan, x: &[bool], fx: bool) -> Result<SubroutineReport> {
    let ctx = context(sp, x);
    let k_len = ctx.loop_len();
    let basis = h_keys(sp);
    let dh = basis.len();
    let full = linalg::identity(dh);
    let q = implementing_subspace(sp, x, fx)?;
    let eps = sp.alg.epsilon;
    let mut checks = Vec::new();

    let rk = linalg::reflection(&kernel_projector(sp));
    checks.push(check("R_ker", &pa::refl_kernel(k_len), &ctx, &basis, &rk, &full, 1e-6));
    let rh = linalg::reflection(&projector_hx(&sp.program, x)?);
    checks.push(check("R_H", &pa::refl_hx(), &ctx, &basis, &rh, &full, 1e-12));

    let zero = sp.layout.index(0, 0, sp.alg.base.initial_index).expect("zero index");
    let (w0, n) = analytic_w0(sp);
    let prep = pa::prepare_w0(k_len);
    let out = prep.apply(&ctx, &State::basis(basis[zero]));
    let index: HashMap<Key, usize> = basis.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let mut got = CVec::zeros(dh);
    let (mut stray, mut aux) = (0.0, 0.0);
    for (k, v) in &out.amps {
        match index.get(k) {
            Some(&i) => got[i] = *v,
            None if aux_clear(k) => stray += v.norm_sqr(),
            None => aux += v.norm_sqr(),
        }
    }
    let aux: f64 = f64::sqrt(aux);
    let err = ((got - &w0 / r(n.sqrt())).norm_squared() + stray).sqrt();
    let bound = 2.0 * (2.0 * eps).sqrt();
    checks.push(CircuitCheck {
        name: "C_w0".into(),
        error: err,
        bound,
        pass: err <= bound && aux <= 1e-9,
        aux_residual: aux,
        counters: prep.counters(),
    });

    let mut g = -linalg::identity(dh);
    g[(zero, zero)] = ONE;
    checks.push(check("G", &pa::refl_zero(), &ctx, &basis, &g, &q, 4.0 * (2.0 * eps).sqrt()));
    let rw = &w0 * w0.adjoint() * r(2.0 / n) - &full;
    checks.push(check("R_w0", &pa::refl_w0(k_len), &ctx, &basis, &rw, &q, 4.0 * (2.0 * eps).sqrt()));

    Ok(SubroutineReport { input: fmt_bits(x), loop_len: k_len, checks })
}

/// The circuit-built span unitary on H^beta, its leakage out of the basis, and its counters.
#[derive(Debug, Clone)]
pub struct CircuitUnitary {
    pub matrix: CMat,
    pub leakage: f64,
    pub aux_residual: f64,
    pub counters: Counters,
}

/// Builds span unitaries from circuits. The input-independent factor is simulated once;
/// only R_H^beta(x) is simulated per input.
pub struct CircuitEvaluator {
    pub ctx: Ctx,
    pub basis: Vec<Key>,
    static_matrix: CMat,
    pub leakage: f64,
    pub aux_residual: f64,
    hx: Circuit,
    pub counters: Counters,
}

impl CircuitEvaluator {
    pub fn new(ctx: Ctx, parts: &pa::LiftParts, beta: f64, basis: Vec<Key>) -> Self {
        let st = pa::static_factor(beta, parts);
        let hx = pa::refl_hx_beta(parts);
        let (m, extra) = extract_matrix(&st, &ctx, &basis);
        let nb = basis.len();
        let mut leakage = 0.0f64;
        for j in 0..nb {
            let mass: f64 = (nb..m.nrows()).map(|i| m[(i, j)].norm_sqr()).sum();
            leakage = leakage.max(mass.sqrt());
        }
        let aux = aux_residual(&m, nb, &extra);
        let mut counters = st.counters();
        counters.add(&hx.counters());
        CircuitEvaluator { ctx, basis, static_matrix: m.view((0, 0), (nb, nb)).into_owned(), leakage, aux_residual: aux, hx, counters }
    }

    /// U for the per-child inputs `xs`.
    pub fn unitary(&mut self, xs: Vec<Vec<bool>>) -> CircuitUnitary {
        self.ctx.set_input(xs);
        let (h, _) = extract_matrix(&self.hx, &self.ctx, &self.basis);
        let nb = self.basis.len();
        let h = h.view((0, 0), (nb, nb)).into_owned();
        CircuitUnitary { matrix: h * &self.static_matrix, leakage: self.leakage, aux_residual: self.aux_residual, counters: self.counters.clone() }
    }
}

pub fn evaluator(sp: &AlgSpan, beta: f64) -> CircuitEvaluator {
    let ctx = Ctx::single(child_ctx(sp));
    let parts = pa::pa_parts(ctx.loop_len());
    CircuitEvaluator::new(ctx, &parts, beta, hbeta_keys(sp))
}

pub fn circuit_unitary(sp: &AlgSpan, beta: f64, x: &[bool]) -> Result<CircuitUnitary> {
    Ok(evaluator(sp, beta).unitary(vec![x.to_vec()]))
}

/// Orthonormal basis of H_x + |0^> + |1^> inside H^beta.
pub fn implementing_subspace_beta(sp: &AlgSpan, x: &[bool], fx: bool) -> Result<CMat> {
    let q = implementing_subspace(sp, x, fx)?;
    let dh = q.nrows();
    let mut out = CMat::zeros(dh + 2, q.ncols() + 2);
    out.view_mut((0, 0), (dh, q.ncols())).copy_from(&q);
    out[(dh, q.ncols())] = ONE;
    out[(dh + 1, q.ncols() + 1)] = ONE;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit_ir::{enforce_query_uniformity, make_clean};
    use crate::fixtures;
    use crate::sp_compiler::{compile_alg_span, Mode};

    fn read_first_span() -> (AlgSpan, crate::circuit_ir::TruthTable) {
        let (alg, table) = fixtures::read_first();
        let clean = enforce_query_uniformity(&make_clean(&alg, &table).unwrap());
        (crate::alg_to_sp::build_span_program(&clean).unwrap(), table)
    }

    #[test]
    fn circuit_unitary_is_unitary_without_leakage() {
        let (sp, table) = read_first_span();
        let beta = sp.w_plus_bound().sqrt();
        let mut ev = evaluator(&sp, beta);
        for (x, _) in &table.rows {
            let u = ev.unitary(vec![x.clone()]);
            assert!(u.leakage < 1e-10 && u.aux_residual < 1e-10, "{} {}", u.leakage, u.aux_residual);
            assert!(linalg::unitarity_defect(&u.matrix) < 1e-9);
        }
    }

    #[test]
    fn circuit_and_numeric_unitaries_decide_alike() {
        let tol = crate::tol::Tolerances::default();
        let (sp, table) = read_first_span();
        let (comp, _) = compile_alg_span(&sp, &table, &tol).unwrap();
        let mut ev = evaluator(&sp, comp.pb.beta);
        for (x, fx) in &table.rows {
            let u = ev.unitary(vec![x.clone()]);
            let a = comp.acceptance_of(&u.matrix, Mode::Spectral).unwrap();
            let b = comp.acceptance(x, Mode::Spectral).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            assert_eq!(a > 0.4, *fx);
        }
    }

    #[test]
    fn per_u_counters_make_one_input_query() {
        let (sp, _) = read_first_span();
        let ev = evaluator(&sp, sp.w_plus_bound().sqrt());
        assert_eq!(ev.counters.o_x, 1);
        assert!(ev.counters.o_a > 0 && ev.counters.o_s > 0);
    }
}
