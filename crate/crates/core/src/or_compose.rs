//! OR-composition of span programs, weight binning, the C_alpha weight-state circuit,
//! concurrent dispatch of child circuits and end-to-end variable-time search.

use crate::alg_to_sp::{build_span_program_with, certified_lambda, w_minus_bound, w_plus_bound, AlgSpan};
use crate::circuit_ir::{
    enforce_query_uniformity, fmt_bits, make_clean_with, Bits, CleanAlgorithm, Counters, QueryAlgorithm, Step, TruthTable,
};
use crate::linalg::{self, r, CMat, CVec, ONE};
use crate::sp_compiler::{calibrate_values, Calibration, Compiled, EvaluatorParams, Mode};
use crate::span_core::{
    approx_negative_witness_with, minimal_witness_with, negative_costs, positive_witness_size_with, projector_hx, BlockLayout,
    Label, SpanProgram,
};
use crate::subroutines::pa::{self, LiftParts};
use crate::subroutines::sim::{self, *};
use crate::subroutines::subspace::{child_ctx, h_keys, implementing_subspace, CircuitEvaluator, CircuitUnitary};
use crate::tol::Tolerances;
use crate::{Error, Result};
use serde::Serialize;
use std::collections::HashMap;
use std::rc::Rc;

/// A child program with the per-child parameters the composition uses.
#[derive(Debug, Clone)]
pub struct OrChild {
    pub program: SpanProgram,
    /// The weight W+^(j) the child is scaled by (an upper bound on its positive complexity).
    pub w_plus: f64,
    /// Upper bound on the negative complexity at error lambda / W+^(j).
    pub w_minus: f64,
    pub w0_norm: f64,
    pub lambda: f64,
}

impl OrChild {
    /// C_j^2 = W+^(j) W-^(j).
    pub fn c_sq(&self) -> f64 {
        self.w_plus * self.w_minus
    }
}

#[derive(Debug, Clone)]
pub struct OrComposition {
    pub children: Vec<OrChild>,
    pub composed: SpanProgram,
    /// alpha_j = sqrt(W+^(j)) / ||w0^(j)||.
    pub alphas: Vec<f64>,
    /// Boundaries j_0 = 0 < ... < j_k = n over children sorted by alpha.
    pub bins: Vec<usize>,
    /// order[p] is the child at sorted position p.
    pub order: Vec<usize>,
    /// Query spacing used to pad the children, when built by variable-time search.
    pub spacing: Option<usize>,
    /// Column offset of each child block in the composed H (column 0 is |0,0>).
    pub h_offsets: Vec<usize>,
    /// Row offset of each child's non-target rows in the composed V.
    pub v_offsets: Vec<usize>,
    pub input_offsets: Vec<usize>,
    /// Orthogonal maps taking each child's tau to ||tau|| e_0.
    pub rotations: Vec<CMat>,
    pub tau_norms: Vec<f64>,
}

/// Basis change making tau proportional to e_0: A' = Q A / ||tau||, tau' = e_0.
pub fn normalize_target(p: &SpanProgram) -> Result<(SpanProgram, CMat, f64)> {
    let nt = p.tau.norm();
    if !(nt > 0.0) {
        return Err(Error::Children("child target vector is zero".into()));
    }
    let q = linalg::rotation_to_e0(&p.tau);
    let a = &q * &p.a / r(nt);
    let tau = linalg::basis(p.dim_v, 0);
    Ok((SpanProgram::new(p.layout.clone(), a, tau)?, q, nt))
}

struct Assembled {
    program: SpanProgram,
    h_offsets: Vec<usize>,
    v_offsets: Vec<usize>,
    input_offsets: Vec<usize>,
    rotations: Vec<CMat>,
    tau_norms: Vec<f64>,
}

fn assemble(children: &[SpanProgram], w_plus: &[f64]) -> Result<Assembled> {
    if children.is_empty() {
        return Err(Error::Children("no children".into()));
    }
    if children.len() != w_plus.len() {
        return Err(Error::Children(format!("{} children but {} weights", children.len(), w_plus.len())));
    }
    if let Some(w) = w_plus.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::Parameter(format!("weight W+ = {w} must be positive")));
    }
    let mut normalized = Vec::new();
    let mut rotations = Vec::new();
    let mut tau_norms = Vec::new();
    for c in children {
        let (p, q, nt) = normalize_target(c)?;
        if (&p.a * minimal_witness_with(&p, &Tolerances::default())?.0 - &p.tau).norm() > 1e-6 {
            return Err(Error::Children("child target is not spanned after normalization".into()));
        }
        normalized.push(p);
        rotations.push(q);
        tau_norms.push(nt);
    }
    let dim_h = 1 + normalized.iter().map(|p| p.dim_h()).sum::<usize>();
    let dim_v = 1 + normalized.iter().map(|p| p.dim_v - 1).sum::<usize>();
    let n_inputs: usize = normalized.iter().map(|p| p.n()).sum();
    let mut a = CMat::zeros(dim_v, dim_h);
    let mut labels = vec![Label::False];
    let (mut h_off, mut v_off, mut in_off) = (1, 1, 0);
    let (mut h_offsets, mut v_offsets, mut input_offsets) = (Vec::new(), Vec::new(), Vec::new());
    for (p, &w) in normalized.iter().zip(w_plus) {
        let s = r(w.sqrt());
        for col in 0..p.dim_h() {
            a[(0, h_off + col)] = p.a[(0, col)] * s;
            for row in 1..p.dim_v {
                a[(v_off + row - 1, h_off + col)] = p.a[(row, col)] * s;
            }
        }
        labels.extend(p.layout.labels.iter().map(|l| match *l {
            Label::Input { i, b } => Label::Input { i: i + in_off, b },
            other => other,
        }));
        h_offsets.push(h_off);
        v_offsets.push(v_off);
        input_offsets.push(in_off);
        h_off += p.dim_h();
        v_off += p.dim_v - 1;
        in_off += p.n();
    }
    let program = SpanProgram::new(BlockLayout { n: n_inputs, labels }, a, linalg::basis(dim_v, 0))?;
    Ok(Assembled { program, h_offsets, v_offsets, input_offsets, rotations, tau_norms })
}

/// A = sum_j sqrt(W+^(j)) <j| (x) A'^(j) after normalizing every child's target to e_0,
/// with an extra unavailable column |0,0> that A sends to zero.
pub fn or_span(children: &[SpanProgram], w_plus: &[f64]) -> Result<SpanProgram> {
    Ok(assemble(children, w_plus)?.program)
}

impl OrComposition {
    pub fn new(children: Vec<OrChild>) -> Result<Self> {
        let programs: Vec<SpanProgram> = children.iter().map(|c| c.program.clone()).collect();
        let weights: Vec<f64> = children.iter().map(|c| c.w_plus).collect();
        let asm = assemble(&programs, &weights)?;
        let alphas: Vec<f64> = children.iter().map(|c| c.w_plus.sqrt() / c.w0_norm).collect();
        let mut order: Vec<usize> = (0..children.len()).collect();
        order.sort_by(|&i, &j| alphas[i].total_cmp(&alphas[j]));
        let sorted: Vec<f64> = order.iter().map(|&i| alphas[i]).collect();
        let bins = bin_gammas(&sorted)?;
        Ok(OrComposition {
            children,
            composed: asm.program,
            alphas,
            bins,
            order,
            spacing: None,
            h_offsets: asm.h_offsets,
            v_offsets: asm.v_offsets,
            input_offsets: asm.input_offsets,
            rotations: asm.rotations,
            tau_norms: asm.tau_norms,
        })
    }

    pub fn n(&self) -> usize {
        self.children.len()
    }

    /// The composition is n max_j lambda_j approximating.
    pub fn lambda(&self) -> f64 {
        self.n() as f64 * self.children.iter().map(|c| c.lambda).fold(0.0, f64::max)
    }

    /// sum_j C_j^2, the bound on the negative complexity of the composition.
    pub fn w_minus_bound(&self) -> f64 {
        self.children.iter().map(OrChild::c_sq).sum()
    }

    pub fn split_input(&self, x: &[bool]) -> Vec<Bits> {
        self.children
            .iter()
            .zip(&self.input_offsets)
            .map(|(c, &o)| x[o..o + c.program.n()].to_vec())
            .collect()
    }

    /// Embed a child vector over H^(j) into the composed H.
    pub fn embed_h(&self, j: usize, v: &CVec) -> CVec {
        let mut out = CVec::zeros(self.composed.dim_h());
        out.rows_mut(self.h_offsets[j], v.len()).copy_from(v);
        out
    }
}

/// Joint truth table over the product of the children's domains, valued by OR.
pub fn joint_table(tables: &[TruthTable]) -> TruthTable {
    let mut rows: Vec<(Bits, bool)> = vec![(Vec::new(), false)];
    for t in tables {
        let mut next = Vec::new();
        for (x, v) in &rows {
            for (y, w) in &t.rows {
                let mut z = x.clone();
                z.extend(y);
                next.push((z, *v || *w));
            }
        }
        rows = next;
    }
    let n = tables.iter().map(|t| t.n).sum();
    TruthTable { n, rows }
}

/// (1/||alpha||^2) sum_j alpha_j |j> w0^(j)/||w0^(j)|| and N = 1/||alpha||^2.
pub fn or_minimal_witness(comp: &OrComposition) -> Result<(CVec, f64)> {
    let tol = Tolerances::default();
    let a2: f64 = comp.alphas.iter().map(|a| a * a).sum();
    let mut w = CVec::zeros(comp.composed.dim_h());
    for (j, c) in comp.children.iter().enumerate() {
        let (w0, n) = minimal_witness_with(&c.program, &tol)?;
        let scale = comp.alphas[j] / (a2 * n.sqrt());
        w += comp.embed_h(j, &(w0 * r(scale)));
    }
    Ok((w, 1.0 / a2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrKernelReport {
    pub nullity: usize,
    pub expected: usize,
    pub zero_column_residual: f64,
    pub k_basis_residual: f64,
    pub child_kernel_residual: f64,
    pub pass: bool,
}

/// ker A = |0,0> + K + sum_j |j> ker A^(j), with K the part of span{|j>w0^(j)} orthogonal to w0.
pub fn or_kernel_check(comp: &OrComposition) -> Result<OrKernelReport> {
    let tol = Tolerances::default();
    let a = &comp.composed.a;
    let scale = linalg::op_norm(a).max(1.0);
    let nullity = linalg::nullity(a, tol.pinv_rel_cutoff);
    let zero_column_residual = a.column(0).norm();

    let n = comp.n();
    let mut units = Vec::new();
    let mut child_nullity = 0;
    let mut child_kernel_residual = 0.0f64;
    for (j, c) in comp.children.iter().enumerate() {
        let (w0, nn) = minimal_witness_with(&c.program, &tol)?;
        units.push(comp.embed_h(j, &(w0 / r(nn.sqrt()))));
        let ker = linalg::null_space(&c.program.a, tol.pinv_rel_cutoff);
        child_nullity += ker.ncols();
        for col in 0..ker.ncols() {
            let v = comp.embed_h(j, &ker.column(col).into_owned());
            child_kernel_residual = child_kernel_residual.max((a * v).norm() / scale);
        }
    }
    let norm_a = comp.alphas.iter().map(|a| a * a).sum::<f64>().sqrt();
    let alpha_hat = CVec::from_iterator(n, comp.alphas.iter().map(|&a| r(a / norm_a)));
    let house = linalg::rotation_to_e0(&alpha_hat).adjoint();
    let mut k_basis_residual = 0.0f64;
    for col in 1..n {
        let mut v = CVec::zeros(a.ncols());
        for j in 0..n {
            v += &units[j] * house[(j, col)];
        }
        k_basis_residual = k_basis_residual.max((a * v).norm() / scale);
    }
    let expected = 1 + (n - 1) + child_nullity;
    let pass = nullity == expected && zero_column_residual <= 1e-8 && k_basis_residual <= 1e-8 && child_kernel_residual <= 1e-8;
    Ok(OrKernelReport { nullity, expected, zero_column_residual, k_basis_residual, child_kernel_residual, pass })
}

/// |w> = (1/sqrt(W+^(j))) |j> w^(j) from the cheapest positive child; returns the vector and its size.
pub fn or_positive_witness(comp: &OrComposition, x: &[bool]) -> Result<Option<(CVec, f64)>> {
    let tol = Tolerances::default();
    let mut best: Option<(CVec, f64)> = None;
    for (j, (c, xj)) in comp.children.iter().zip(comp.split_input(x)).enumerate() {
        let pw = positive_witness_size_with(&c.program, &xj, &tol)?;
        if let Some(v) = pw.vec {
            let w = comp.embed_h(j, &(v / r(c.w_plus.sqrt())));
            let size = w.norm_squared();
            if best.as_ref().is_none_or(|b| size < b.1) {
                best = Some((w, size));
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StitchedNegative {
    pub cost: f64,
    pub error: f64,
    pub cost_bound: f64,
    pub error_bound: f64,
}

/// <w| = <0| + sum_j <w-bar^(j)|, stitched from child approximate negative witnesses with
/// error at most lambda_j / W+^(j). None when some child is positive.
pub fn or_negative_witness(comp: &OrComposition, x: &[bool]) -> Result<Option<(CVec, StitchedNegative)>> {
    let tol = Tolerances::default();
    let mut v = CVec::zeros(comp.composed.dim_v);
    v[0] = ONE;
    for (j, (c, xj)) in comp.children.iter().zip(comp.split_input(x)).enumerate() {
        let nw = approx_negative_witness_with(&c.program, &xj, c.lambda, c.w_plus, &tol)?;
        let Some(w) = nw.vec else { return Ok(None) };
        // Covector w^dag in the normalized basis: ||tau|| w^dag Q^dag, i.e. column ||tau|| Q w.
        let wn = &comp.rotations[j] * w * r(comp.tau_norms[j]);
        for row in 1..c.program.dim_v {
            v[comp.v_offsets[j] + row - 1] = wn[row];
        }
    }
    let mask = comp.composed.layout.mask(x);
    let (cost, error) = negative_costs(&comp.composed, &v, &mask);
    let st = StitchedNegative { cost, error, cost_bound: comp.w_minus_bound(), error_bound: comp.lambda() };
    Ok(Some((v, st)))
}

// ---------------------------------------------------------------------------
// Binning

/// Split sorted positive values into consecutive blocks of power-of-2 length such that every
/// value in a block lies within a factor 2 below the block maximum. Returns j_0 = 0 < ... < j_k = n.
pub fn bin_gammas(gammas: &[f64]) -> Result<Vec<usize>> {
    if gammas.is_empty() {
        return Err(Error::Parameter("no values to bin".into()));
    }
    if gammas.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(Error::Parameter("values to bin must be positive and finite".into()));
    }
    if gammas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter("values to bin must be sorted ascending".into()));
    }
    let g_min = gammas[0];
    let top = magnitude_classes(gammas[gammas.len() - 1] / g_min);
    // Class m >= 1 holds [g_min 2^(m-1), g_min 2^m); the top value is clamped into class `top`.
    let class = |g: f64| -> usize { (((g / g_min).log2().floor() as usize) + 1).min(top) };
    let mut bounds = vec![0];
    let mut start = 0;
    while start < gammas.len() {
        let m = class(gammas[start]);
        let mut end = start;
        while end < gammas.len() && class(gammas[end]) == m {
            end += 1;
        }
        let mut len = end - start;
        let mut pos = start;
        while len > 0 {
            let block = 1usize << (usize::BITS - 1 - len.leading_zeros());
            pos += block;
            bounds.push(pos);
            len -= block;
        }
        start = end;
    }
    Ok(bounds)
}

/// max(1, ceil(log2 ratio)).
pub fn magnitude_classes(ratio: f64) -> usize {
    (ratio.log2() - 1e-12).ceil().max(1.0) as usize
}

/// The bound on the number of bins: max(1, ceil(log2 ratio)) max(1, ceil(log2 n)).
pub fn bin_count_bound(ratio: f64, n: usize) -> usize {
    magnitude_classes(ratio) * (n.next_power_of_two().trailing_zeros() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WPlusChoice {
    pub w_plus: Vec<f64>,
    /// gamma_j = sqrt(3(2 S_j + 1)) / ||w0^(j)||.
    pub gammas: Vec<f64>,
    pub order: Vec<usize>,
    pub bins: Vec<usize>,
}

/// W+^(j) = gamma_{j_l}^2 ||w0^(j)||^2 with gamma_{j_l} the largest gamma in the child's bin,
/// so alpha_j is constant within a bin and 3(2S_j+1) <= W+^(j) <= 12(2S_j+1).
pub fn choose_w_plus(w0_norms: &[f64], s_lens: &[usize]) -> Result<WPlusChoice> {
    if w0_norms.len() != s_lens.len() {
        return Err(Error::Children("mismatched child parameter lists".into()));
    }
    let gammas: Vec<f64> = w0_norms.iter().zip(s_lens).map(|(&w, &s)| w_plus_bound(s).sqrt() / w).collect();
    let mut order: Vec<usize> = (0..gammas.len()).collect();
    order.sort_by(|&i, &j| gammas[i].total_cmp(&gammas[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| gammas[i]).collect();
    let bins = bin_gammas(&sorted)?;
    let mut w_plus = vec![0.0; gammas.len()];
    for l in 1..bins.len() {
        let top = sorted[bins[l] - 1];
        for &child in &order[bins[l - 1]..bins[l]] {
            w_plus[child] = top * top * w0_norms[child] * w0_norms[child];
        }
    }
    Ok(WPlusChoice { w_plus, gammas, order, bins })
}

// ---------------------------------------------------------------------------
// Circuits

/// C_alpha on the label register: |0> -> (1/||alpha||) sum_j alpha_j |1 + j>, via a
/// Householder on BIN, uniform spreaders on the low bits of OFF, and an involutive relabelling.
/// Every op is controlled by `ctrl`.
pub fn c_alpha(alphas: &[f64], order: &[usize], bins: &[usize], ctrl: Pred) -> Result<Circuit> {
    let n = alphas.len();
    if order.len() != n || bins.first() != Some(&0) || bins.last() != Some(&n) {
        return Err(Error::Parameter("bins and order must cover every child".into()));
    }
    let norm = alphas.iter().map(|a| a * a).sum::<f64>().sqrt();
    let k = bins.len() - 1;
    let mut col = Vec::with_capacity(k);
    let mut log_sizes = Vec::with_capacity(k);
    for l in 0..k {
        let size = bins[l + 1] - bins[l];
        if !size.is_power_of_two() {
            return Err(Error::Parameter(format!("bin {l} has length {size}, not a power of 2")));
        }
        let a0 = alphas[order[bins[l]]];
        if order[bins[l]..bins[l + 1]].iter().any(|&j| (alphas[j] - a0).abs() > 1e-9 * a0) {
            return Err(Error::Parameter(format!("alpha is not constant in bin {l}")));
        }
        col.push(a0 * (size as f64).sqrt() / norm);
        log_sizes.push(size.trailing_zeros());
    }
    let mut c = Circuit::new("C_alpha");
    let at_label0 = and(Some(ctrl.clone()), pred(|_, k| k[LBL] == 0));
    c.push(state_prep("bin", BIN, col, Some(and(Some(at_label0.clone()), pred(|_, k| k[OFF] == 0)))));
    for (l, &p) in log_sizes.iter().enumerate() {
        for bit in 0..p {
            let in_bin = and(Some(at_label0.clone()), pred(move |_, k| k[BIN] == l as i64));
            c.push(hadamard_bit("spread", OFF, bit, Some(in_bin)));
        }
    }
    let bins_v = bins.to_vec();
    let order_v = order.to_vec();
    let mut position = vec![0usize; n];
    for (p, &j) in order.iter().enumerate() {
        position[j] = p;
    }
    let swap: KeyFn = Rc::new(move |_, k| {
        let mut out = *k;
        if k[LBL] == 0 && k[BIN] >= 0 && (k[BIN] as usize) + 1 < bins_v.len() {
            let l = k[BIN] as usize;
            let o = k[OFF];
            if o >= 0 && (o as usize) < bins_v[l + 1] - bins_v[l] {
                out[LBL] = 1 + order_v[bins_v[l] + o as usize] as i64;
                out[BIN] = 0;
                out[OFF] = 0;
            }
        } else if k[LBL] >= 1 && (k[LBL] as usize) <= position.len() && k[BIN] == 0 && k[OFF] == 0 {
            let p = position[k[LBL] as usize - 1];
            let l = bins_v.partition_point(|&b| b <= p) - 1;
            out[LBL] = 0;
            out[BIN] = l as i64;
            out[OFF] = (p - bins_v[l]) as i64;
        }
        out
    });
    c.push(Op { name: "relabel".into(), kind: Kind::Perm { fwd: swap.clone(), inv: swap }, ctrl: Some(ctrl) });
    Ok(c)
}

/// Children dispatched by the label register; label 0 carries the |0,0> direction.
pub fn concurrent_ctx(spans: &[AlgSpan]) -> Result<Ctx> {
    let children: Vec<ChildCtx> = spans.iter().map(child_ctx).collect();
    let first = children.first().ok_or_else(|| Error::Children("no children".into()))?;
    if children.iter().any(|c| c.answer_qubit != first.answer_qubit || c.init != first.init) {
        return Err(Error::Children("children must share the answer qubit and initial index; align them first".into()));
    }
    Ok(Ctx { children, label_base: 1 })
}

/// The register circuits of the composition.
pub struct OrCircuits {
    pub ctx: Ctx,
    pub z0: i64,
    pub k_len: usize,
    pub parts: LiftParts,
    pub c_alpha: Circuit,
}

fn composite_zero(z0: i64) -> Pred {
    pred(move |_, k| k[LBL] == 0 && k[T_REG] == 0 && k[B_REG] == 0 && k[Z_REG] == z0 && k[BIN] == 0 && k[OFF] == 0)
}

/// Builds R_ker, R_H(x) and C_w0 of the composition from the children's P_A circuits.
pub fn or_circuits(comp: &OrComposition, spans: &[AlgSpan]) -> Result<OrCircuits> {
    let ctx = concurrent_ctx(spans)?;
    let z0 = ctx.children[0].init;
    let k_len = ctx.loop_len();
    let (_, n_norm) = or_minimal_witness(comp)?;
    let data_zero = move |_: &Ctx, k: &Key| k[T_REG] == 0 && k[B_REG] == 0 && k[Z_REG] == z0;
    let calpha = c_alpha(&comp.alphas, &comp.order, &comp.bins, pred(|_, k| k[FL3] == 1))?;

    let child_prep = pa::prepare_w0(k_len);
    let mut prep = Circuit::new("C_w0^or");
    prep.push(xor_to("flag", FL3, data_zero, None));
    prep.then(&calpha);
    prep.push(xor_to("flag", FL3, data_zero, None));
    prep.then(&child_prep);

    let zero = composite_zero(z0);
    let z2 = zero.clone();
    let mut refl_zero = Circuit::new("R_0");
    refl_zero.push(sim::phase("R_0", move |cx, k| if z2(cx, k) { ONE } else { r(-1.0) }, None));

    // R_ker = (I - 2|0,0><0,0|) R_w0 (C G C^dag) R_A, the concurrent factors acting as +1 on label 0.
    let mut refl_ker = Circuit::new("R_ker^or");
    refl_ker.then(&pa::refl_kernel(k_len));
    refl_ker.then(&pa::refl_w0(k_len));
    refl_ker.then(&prep.adjoint());
    refl_ker.then(&refl_zero);
    refl_ker.then(&prep);
    let z3 = zero.clone();
    refl_ker.push(sim::phase("-I_00", move |cx, k| if z3(cx, k) { r(-1.0) } else { ONE }, None));

    let mut refl_hx = pa::refl_hx();
    refl_hx.name = "R_H^or".into();
    refl_hx.push(sim::phase("-I_0", |_, _| r(-1.0), Some(pred(|_, k| k[LBL] == 0))));

    let parts = LiftParts { prep, zero, norm: Rc::new(move |_, _| Some(n_norm)), refl_ker, refl_hx };
    Ok(OrCircuits { ctx, z0, k_len, parts, c_alpha: calpha })
}

/// Register keys of the composed H in column order.
pub fn or_h_keys(spans: &[AlgSpan], z0: i64) -> Vec<Key> {
    let mut keys = vec![sim::key(0, 0, z0)];
    keys[0][LBL] = 0;
    for (j, sp) in spans.iter().enumerate() {
        keys.extend(h_keys(sp).into_iter().map(|mut k| {
            k[LBL] = 1 + j as i64;
            k
        }));
    }
    keys
}

pub fn or_hbeta_keys(spans: &[AlgSpan], z0: i64) -> Vec<Key> {
    let mut keys = or_h_keys(spans, z0);
    for h in 0..2 {
        let mut k = keys[0];
        k[HAT] = h;
        keys.push(k);
    }
    keys
}

/// Direct sum of |0,0> and the children's implementing subspaces.
pub fn or_implementing_subspace(comp: &OrComposition, spans: &[AlgSpan], x: &[bool]) -> Result<CMat> {
    let mut cols = vec![linalg::basis(comp.composed.dim_h(), 0)];
    for (j, (sp, xj)) in spans.iter().zip(comp.split_input(x)).enumerate() {
        let fx = sp.final_state_defect(&xj)? < 1.0;
        let q = implementing_subspace(sp, &xj, fx)?;
        for c in 0..q.ncols() {
            cols.push(comp.embed_h(j, &q.column(c).into_owned()));
        }
    }
    Ok(CMat::from_columns(&cols))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrCircuitCheck {
    pub name: String,
    pub error: f64,
    pub bound: f64,
    pub pass: bool,
    pub counters: Counters,
}

fn apply_to_vector(c: &Circuit, ctx: &Ctx, keys: &[Key], v: &CVec) -> (CVec, f64) {
    let mut s = State::default();
    for (i, k) in keys.iter().enumerate() {
        if v[i].norm_sqr() > 0.0 {
            s.add(*k, v[i]);
        }
    }
    let out = c.apply(ctx, &s);
    let index: HashMap<Key, usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let mut got = CVec::zeros(keys.len());
    let mut stray = 0.0;
    for (k, a) in &out.amps {
        match index.get(k) {
            Some(&i) => got[i] = *a,
            None => stray += a.norm_sqr(),
        }
    }
    (got, stray.sqrt())
}

/// The composite circuits against numeric targets: C_alpha and C_w0 on the zero state, R_H(x)
/// on all of H, and R_ker on the implementing subspace.
pub fn or_circuit_checks(comp: &OrComposition, spans: &[AlgSpan], x: &[bool]) -> Result<Vec<OrCircuitCheck>> {
    let circ = or_circuits(comp, spans)?;
    let mut ctx = circ.ctx.clone();
    ctx.set_input(comp.split_input(x));
    let keys = or_h_keys(spans, circ.z0);
    let dh = keys.len();
    let eps = spans.iter().map(|s| s.alg.epsilon).fold(0.0, f64::max);
    let mut out = Vec::new();

    let norm_a = comp.alphas.iter().map(|a| a * a).sum::<f64>().sqrt();
    let label_keys: Vec<Key> = (0..=comp.n())
        .map(|l| {
            let mut k = keys[0];
            k[LBL] = l as i64;
            k[FL3] = 1;
            k
        })
        .collect();
    let mut start = CVec::zeros(label_keys.len());
    start[0] = ONE;
    let (got, stray) = apply_to_vector(&circ.c_alpha, &ctx, &label_keys, &start);
    let mut want = CVec::zeros(label_keys.len());
    for (j, a) in comp.alphas.iter().enumerate() {
        want[j + 1] = r(a / norm_a);
    }
    let err = ((got - want).norm_squared() + stray * stray).sqrt();
    out.push(OrCircuitCheck { name: "C_alpha".into(), error: err, bound: 1e-8, pass: err <= 1e-8, counters: circ.c_alpha.counters() });

    let (w0, n) = or_minimal_witness(comp)?;
    let (got, stray) = apply_to_vector(&circ.parts.prep, &ctx, &keys, &linalg::basis(dh, 0));
    let err = ((got - &w0 / r(n.sqrt())).norm_squared() + stray * stray).sqrt();
    let bound = 2.0 * (2.0 * eps).sqrt();
    out.push(OrCircuitCheck { name: "C_w0".into(), error: err, bound, pass: err <= bound, counters: circ.parts.prep.counters() });

    let (m, _) = extract_matrix(&circ.parts.refl_hx, &ctx, &keys);
    let rh = linalg::reflection(&projector_hx(&comp.composed, x)?);
    let err = linalg::op_norm(&(m.view((0, 0), (dh, dh)) - rh));
    out.push(OrCircuitCheck { name: "R_H".into(), error: err, bound: 1e-12, pass: err <= 1e-12, counters: circ.parts.refl_hx.counters() });

    let q = linalg::orth(&or_implementing_subspace(comp, spans, x)?, 1e-10);
    let (m, _) = extract_matrix(&circ.parts.refl_ker, &ctx, &keys);
    let ker = linalg::null_space(&comp.composed.a, Tolerances::default().pinv_rel_cutoff);
    let rk = linalg::reflection(&(&ker * ker.adjoint()));
    let diff = m.rows(0, dh).into_owned() - rk;
    let err = linalg::op_norm(&(diff * &q));
    let bound = 1e-6 + 8.0 * (2.0 * eps).sqrt();
    out.push(OrCircuitCheck { name: "R_ker".into(), error: err, bound, pass: err <= bound, counters: circ.parts.refl_ker.counters() });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Variable-time search

/// B = ceil(sqrt(sum T_j^2 / sum S_j^2)).
pub fn spacing_parameter(ts: &[usize], ss: &[usize]) -> usize {
    let t2: f64 = ts.iter().map(|&t| (t * t) as f64).sum();
    let s2: f64 = ss.iter().map(|&s| (s * s) as f64).sum();
    ((t2 / s2.max(1.0)).sqrt().ceil() as usize).max(1)
}

/// Insert O_x, I, O_x after every B-th step where both neighbours are unitaries.
pub fn pad_queries(alg: &QueryAlgorithm, b: usize) -> Result<QueryAlgorithm> {
    let id = linalg::identity(alg.dim());
    let t = alg.steps.len();
    let mut steps = Vec::with_capacity(t + 3 * (t / b.max(1)));
    let mut next = b.max(1);
    for (pos, st) in alg.steps.iter().enumerate() {
        steps.push(st.clone());
        let done = pos + 1;
        if done >= next && done < t && !st.is_query() && !alg.steps[done].is_query() {
            steps.extend([Step::Query, Step::Unitary(id.clone()), Step::Query]);
            next = done + b.max(1);
        }
    }
    QueryAlgorithm::new(alg.n, alg.workspace_dim, alg.answer_qubit, steps, alg.initial_index, alg.epsilon)
}

/// Move each child's answer bit to workspace qubit `target` by a qubit swap; children must share
/// the initial index afterwards.
pub fn align_children(algs: &[CleanAlgorithm], target: usize) -> Result<Vec<CleanAlgorithm>> {
    let mut out = Vec::new();
    for alg in algs {
        let aq = alg.base.answer_qubit;
        if aq == target {
            out.push(alg.clone());
            continue;
        }
        let w = alg.workspace_dim();
        if (1 << target) >= w {
            return Err(Error::Children(format!("workspace of dimension {w} has no qubit {target}")));
        }
        let swap = move |z: usize| {
            let (i, j) = (z / w, z % w);
            let (ba, bt) = ((j >> aq) & 1, (j >> target) & 1);
            let j2 = (j & !(1 << aq) & !(1 << target)) | (ba << target) | (bt << aq);
            i * w + j2
        };
        let d = alg.dim();
        let mut p = CMat::zeros(d, d);
        for z in 0..d {
            p[(swap(z), z)] = ONE;
        }
        let steps = alg
            .base
            .steps
            .iter()
            .map(|s| match s {
                Step::Unitary(u) => Step::Unitary(&p * u * p.transpose()),
                Step::Query => Step::Query,
            })
            .collect();
        let base = QueryAlgorithm::new(alg.n(), w, target, steps, swap(alg.base.initial_index), alg.epsilon)?;
        let query_set = base.query_set();
        out.push(CleanAlgorithm { base, query_set, epsilon: alg.epsilon, final_index: swap(alg.final_index) });
    }
    if let Some(first) = out.first() {
        let init = first.base.initial_index;
        if out.iter().any(|a| a.base.initial_index != init) {
            return Err(Error::Children("children start from different initial basis states".into()));
        }
    }
    Ok(out)
}

/// Repetitions of a majority vote that bring error eps below `target`.
pub fn boost_repetitions(eps: f64, target: f64) -> Option<usize> {
    if eps >= 0.5 {
        return None;
    }
    (1..200).step_by(2).find(|&r| majority_error(eps, r) < target)
}

fn majority_error(eps: f64, r: usize) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0f64;
    for k in 0..=r {
        if k > 0 {
            binom = binom * (r - k + 1) as f64 / k as f64;
        }
        if 2 * k > r {
            total += binom * eps.powi(k as i32) * (1.0 - eps).powi((r - k) as i32);
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaddedChild {
    pub t: usize,
    pub s: usize,
    pub padded_t: usize,
    pub padded_s: usize,
    /// (T-bar / S-bar) / B.
    pub spacing_ratio: f64,
    pub epsilon: f64,
    pub w_plus: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VtDecision {
    pub input: String,
    pub expected: bool,
    pub accepted: bool,
    pub acceptance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VtSearchReport {
    pub spacing: usize,
    pub children: Vec<PaddedChild>,
    pub alphas: Vec<f64>,
    pub bins: Vec<usize>,
    pub lambda: f64,
    pub w_minus_bound: f64,
    /// C(P) = sqrt(W+ W-) of the composition and C(P) / sqrt(sum S_j^2).
    pub complexity: f64,
    pub complexity_constant: f64,
    pub params: EvaluatorParams,
    pub calibration: Calibration,
    pub decisions: Vec<VtDecision>,
    pub counters_per_u: Counters,
    pub counters_per_evaluation: Counters,
    pub leakage: f64,
    pub aux_residual: f64,
    pub all_correct: bool,
}

/// The prepared search: padded, cleaned children, their P_A and the composition.
pub struct VtSearch {
    pub spans: Vec<AlgSpan>,
    pub comp: OrComposition,
    pub compiled: Compiled,
    pub table: TruthTable,
    pub padded: Vec<PaddedChild>,
    circuits: OrCircuits,
    evaluator: Option<CircuitEvaluator>,
}

impl VtSearch {
    pub fn new(algs: &[(QueryAlgorithm, TruthTable)], tol: &Tolerances) -> Result<Self> {
        if algs.is_empty() {
            return Err(Error::Children("no children".into()));
        }
        let n = algs.len();
        let ts: Vec<usize> = algs.iter().map(|(a, _)| a.t_len()).collect();
        let ss: Vec<usize> = algs.iter().map(|(a, _)| a.query_set().len()).collect();
        let b = spacing_parameter(&ts, &ss);
        let mut cleaned = Vec::new();
        let mut padded = Vec::new();
        for ((alg, table), (&t, &s)) in algs.iter().zip(ts.iter().zip(&ss)) {
            let p = pad_queries(alg, b)?;
            let (pt, ps) = (p.t_len(), p.query_set().len());
            let clean = enforce_query_uniformity(&make_clean_with(&p, table, tol)?);
            let cap = 1.0 / (80.0 * n as f64);
            if clean.epsilon >= cap {
                let reps = boost_repetitions(clean.epsilon, cap);
                return Err(Error::Budget(format!(
                    "child error {:.4} needs majority-vote boosting below {cap:.5} ({} repetitions); the boosted state space exceeds the simulation budget",
                    clean.epsilon,
                    reps.map_or("unbounded".into(), |r| r.to_string())
                )));
            }
            cleaned.push(clean);
            padded.push(PaddedChild {
                t,
                s,
                padded_t: pt,
                padded_s: ps,
                spacing_ratio: pt as f64 / ps.max(1) as f64 / b as f64,
                epsilon: 0.0,
                w_plus: 0.0,
                lambda: 0.0,
            });
        }
        let cleaned = align_children(&cleaned, 0)?;
        let mut spans = Vec::new();
        for c in &cleaned {
            spans.push(build_span_program_with(c, tol)?);
        }
        let norms: Vec<f64> = spans.iter().map(|sp| minimal_witness_with(&sp.program, tol).map(|w| w.1.sqrt())).collect::<Result<_>>()?;
        let s_lens: Vec<usize> = spans.iter().map(|sp| sp.layout.s_len()).collect();
        let choice = choose_w_plus(&norms, &s_lens)?;
        let mut children = Vec::new();
        for (j, sp) in spans.iter().enumerate() {
            let wp0 = sp.w_plus_bound();
            let lam = certified_lambda(sp, &algs[j].1)? * choice.w_plus[j] / wp0;
            if lam >= 1.0 / (2.0 * n as f64) {
                return Err(Error::Parameter(format!("child {j} is only {lam:.4}-approximating; need < 1/(2n)")));
            }
            padded[j].epsilon = sp.alg.epsilon;
            padded[j].w_plus = choice.w_plus[j];
            padded[j].lambda = lam;
            children.push(OrChild {
                program: sp.program.clone(),
                w_plus: choice.w_plus[j],
                w_minus: w_minus_bound(s_lens[j]),
                w0_norm: norms[j],
                lambda: lam,
            });
        }
        let mut comp = OrComposition::new(children)?;
        comp.spacing = Some(b);
        let compiled = Compiled::new(&comp.composed, comp.lambda(), 1.0, comp.w_minus_bound(), tol)?;
        let circuits = or_circuits(&comp, &spans)?;
        let tables: Vec<TruthTable> = algs.iter().map(|(_, t)| t.clone()).collect();
        Ok(VtSearch { spans, comp, compiled, table: joint_table(&tables), padded, circuits, evaluator: None })
    }

    fn evaluator(&mut self) -> &mut CircuitEvaluator {
        if self.evaluator.is_none() {
            let basis = or_hbeta_keys(&self.spans, self.circuits.z0);
            let ev = CircuitEvaluator::new(self.circuits.ctx.clone(), &self.circuits.parts, self.compiled.pb.beta, basis);
            self.evaluator = Some(ev);
        }
        self.evaluator.as_mut().expect("just built")
    }

    /// The circuit-built span unitary on H^beta for a joint input.
    pub fn unitary(&mut self, x: &[bool]) -> CircuitUnitary {
        let xs = self.comp.split_input(x);
        self.evaluator().unitary(xs)
    }

    /// Acceptance value of a joint input from the circuit-built span unitary.
    pub fn acceptance(&mut self, x: &[bool], mode: Mode) -> Result<f64> {
        let u = self.unitary(x);
        self.compiled.acceptance_of(&u.matrix, mode)
    }

    /// Oracle and gate counts of one controlled application of U.
    pub fn counters_per_u(&self) -> Counters {
        pa::span_unitary_circuit(self.compiled.pb.beta, &self.circuits.parts).counters()
    }

    pub fn counters_per_evaluation(&self) -> Counters {
        self.counters_per_u().scaled(self.compiled.params.controlled_u_calls())
    }

    /// Calibrate over every joint input and decide each.
    pub fn run(&mut self, mode: Mode) -> Result<VtSearchReport> {
        let rows = self.table.rows.clone();
        let mut values = Vec::new();
        for (x, fx) in &rows {
            values.push((fmt_bits(x), *fx, self.acceptance(x, mode)?));
        }
        let cal = calibrate_values(mode, values, self.compiled.params.default_threshold());
        Ok(self.report(cal))
    }

    fn report(&mut self, cal: Calibration) -> VtSearchReport {
        let decisions: Vec<VtDecision> = cal
            .values
            .iter()
            .map(|(input, fx, v)| VtDecision { input: input.clone(), expected: *fx, accepted: *v > cal.threshold, acceptance: *v })
            .collect();
        let all_correct = decisions.iter().all(|d| d.accepted == d.expected);
        let per_u = self.counters_per_u();
        let calls = self.compiled.params.controlled_u_calls();
        let s2: f64 = self.spans.iter().map(|sp| (sp.layout.s_len() as f64).powi(2)).sum();
        let complexity = self.comp.w_minus_bound().sqrt();
        VtSearchReport {
            spacing: self.comp.spacing.unwrap_or(1),
            children: self.padded.clone(),
            alphas: self.comp.alphas.clone(),
            bins: self.comp.bins.clone(),
            lambda: self.comp.lambda(),
            w_minus_bound: self.comp.w_minus_bound(),
            complexity,
            complexity_constant: complexity / s2.sqrt(),
            params: self.compiled.params,
            calibration: cal,
            decisions,
            counters_per_evaluation: per_u.scaled(calls),
            counters_per_u: per_u,
            leakage: self.evaluator().leakage,
            aux_residual: self.evaluator().aux_residual,
            all_correct,
        }
    }
}

/// Pad, clean and compose the children, then decide OR on every joint input.
pub fn variable_time_search(algs: &[(QueryAlgorithm, TruthTable)], mode: Mode, tol: &Tolerances) -> Result<VtSearchReport> {
    VtSearch::new(algs, tol)?.run(mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn toy(scale: f64) -> SpanProgram {
        // f(x) = x_0 OR x_1 with tau = (scale, 0).
        let layout = BlockLayout { n: 2, labels: vec![Label::Input { i: 0, b: true }, Label::Input { i: 1, b: true }] };
        let a = CMat::from_row_slice(2, 2, &[r(1.0), r(1.0), r(0.5), r(-0.5)]);
        let mut tau = CVec::zeros(2);
        tau[0] = r(scale);
        tau[1] = r(0.3);
        SpanProgram::new(layout, a, tau).unwrap()
    }

    fn toy_child(scale: f64, w_plus: f64) -> OrChild {
        let p = toy(scale);
        let (_, n) = minimal_witness_with(&p, &Tolerances::default()).unwrap();
        OrChild { program: p, w_plus, w_minus: 4.0, w0_norm: n.sqrt(), lambda: 0.0 }
    }

    #[test]
    fn normalized_target_keeps_witnesses() {
        let p = toy(0.7);
        let (q, _, nt) = normalize_target(&p).unwrap();
        let (w, _) = minimal_witness_with(&p, &Tolerances::default()).unwrap();
        assert!((&q.a * &w - &q.tau).norm() < 1e-12);
        assert!((nt - p.tau.norm()).abs() < 1e-15);
    }

    #[test]
    fn single_child_degenerates_to_scaled_child() {
        let comp = OrComposition::new(vec![toy_child(1.0, 2.0)]).unwrap();
        assert_eq!(comp.composed.dim_h(), 3);
        assert_eq!(comp.composed.layout.labels[0], Label::False);
        assert!(comp.composed.a.column(0).norm() == 0.0);
    }

    #[test]
    fn minimal_witness_matches_pseudoinverse() {
        let comp = OrComposition::new(vec![toy_child(1.0, 2.0), toy_child(0.4, 5.0), toy_child(2.0, 1.0)]).unwrap();
        let (w, n) = or_minimal_witness(&comp).unwrap();
        let (w_ref, n_ref) = minimal_witness_with(&comp.composed, &Tolerances::default()).unwrap();
        assert!((w - w_ref).norm() < 1e-8);
        assert!((n - n_ref).abs() < 1e-8);
    }

    #[test]
    fn kernel_formula_on_toys() {
        let comp = OrComposition::new(vec![toy_child(1.0, 2.0), toy_child(0.4, 5.0), toy_child(2.0, 1.0)]).unwrap();
        let rep = or_kernel_check(&comp).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn binning_examples() {
        assert_eq!(bin_gammas(&[1.0; 8]).unwrap(), vec![0, 8]);
        assert_eq!(bin_gammas(&[1.0; 5]).unwrap(), vec![0, 4, 5]);
        assert_eq!(bin_gammas(&[1.0, 1.5, 3.0]).unwrap(), vec![0, 2, 3]);
        assert!(bin_gammas(&[]).is_err());
        assert!(bin_gammas(&[2.0, 1.0]).is_err());
    }

    #[test]
    fn c_alpha_two_bins() {
        // Bins of sizes 2 and 1 with alpha ratio 1:2 give amplitudes (1, 1, 2)/sqrt(6)
        // at labels order[0..3].
        let alphas = [1.0, 1.0, 2.0];
        let c = c_alpha(&alphas, &[0, 1, 2], &[0, 2, 3], pred(|_, _| true)).unwrap();
        let ctx = Ctx { children: vec![], label_base: 1 };
        let out = c.apply(&ctx, &State::basis(sim::key(0, 0, 0)));
        for (j, a) in alphas.iter().enumerate() {
            let mut k = sim::key(0, 0, 0);
            k[LBL] = 1 + j as i64;
            assert!((out.get(&k) - r(a / 6f64.sqrt())).norm() < 1e-12);
        }
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn c_alpha_rejects_non_power_of_two() {
        assert!(c_alpha(&[1.0; 3], &[0, 1, 2], &[0, 3], pred(|_, _| true)).is_err());
    }

    #[test]
    fn padding_preserves_function() {
        let (alg, table) = fixtures::read_bit_padded(3, 0, 4, 4);
        let p = pad_queries(&alg, 3).unwrap();
        assert!(p.query_set().len() > alg.query_set().len());
        for (x, fx) in &table.rows {
            let (p0, p1) = p.output_probabilities(x).unwrap();
            assert!(if *fx { p1 > 1.0 - 1e-9 } else { p0 > 1.0 - 1e-9 });
        }
    }

    #[test]
    fn boosting_repetitions() {
        assert_eq!(boost_repetitions(0.0, 0.01), Some(1));
        assert_eq!(boost_repetitions(0.1, 1.0 / 160.0), Some(7));
        assert_eq!(boost_repetitions(0.6, 0.1), None);
    }

    #[test]
    fn joint_table_is_or() {
        let (_, a) = fixtures::read_first();
        let (_, b) = fixtures::or_two();
        let t = joint_table(&[a.clone(), b.clone()]);
        assert_eq!(t.rows.len(), a.rows.len() * b.rows.len());
        for (x, v) in &t.rows {
            assert_eq!(*v, a.get(&x[..2]).unwrap() || b.get(&x[2..]).unwrap());
        }
    }
}
