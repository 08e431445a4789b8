//! Compile a rescaled span program into a decision procedure: the span unitary, phase
//! estimation on |w0^beta>, and an exact-probability readout.

use crate::circuit_ir::{fmt_bits, TruthTable};
use crate::linalg::{self, r, CMat, CVec, C64};
use crate::alg_to_sp::{certified_lambda, AlgSpan};
use crate::span_core::{complexity_report_with, minimal_negative_error, rescale_with, RescaledSpanProgram, Size, SpanProgram};
use crate::tol::Tolerances;
use crate::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvaluatorParams {
    pub theta: f64,
    pub eps_pe: f64,
    pub theta_prime: f64,
    /// Approximation parameter of the program being evaluated (P^beta).
    pub lambda: f64,
    pub w_plus_bound: f64,
    pub w_minus_bound: f64,
}

impl EvaluatorParams {
    pub fn new(lambda: f64, w_plus_bound: f64, w_minus_bound: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&lambda) {
            return Err(Error::Parameter(format!("lambda = {lambda} must lie in [0, 1/2)")));
        }
        if !(w_plus_bound > 0.0 && w_minus_bound > 0.0) || !w_plus_bound.is_finite() || !w_minus_bound.is_finite() {
            return Err(Error::Parameter(format!("complexity bounds {w_plus_bound}, {w_minus_bound} must be positive and finite")));
        }
        let gap = 1.0 - 2.0 * lambda;
        let theta = (gap / (w_plus_bound * w_minus_bound)).sqrt().min(0.999);
        let eps_pe = gap / (4.0 * w_plus_bound);
        let theta_prime = gap / (4.0 * w_plus_bound.sqrt());
        Ok(EvaluatorParams { theta, eps_pe, theta_prime, lambda, w_plus_bound, w_minus_bound })
    }

    /// ceil(log2(1/Theta)) + ceil(log2(2 + 1/(2 eps))).
    pub fn phase_bits(&self) -> usize {
        let a = (1.0 / self.theta).log2().ceil().max(0.0) as usize;
        let b = (2.0 + 1.0 / (2.0 * self.eps_pe)).log2().ceil() as usize;
        a + b
    }

    /// Rounds amplitude estimation would spend: ceil(1/Theta').
    pub fn ae_rounds(&self) -> u64 {
        (1.0 / self.theta_prime).ceil() as u64
    }

    pub fn controlled_u_calls(&self) -> u64 {
        ((1u64 << self.phase_bits()) - 1) * self.ae_rounds()
    }

    /// Threshold for uncalibrated use: (1 - 2 lambda) / (2 W+).
    pub fn default_threshold(&self) -> f64 {
        0.5 * (1.0 - 2.0 * self.lambda) / self.w_plus_bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationTrace {
    pub accepted: bool,
    pub amplitude_estimate: f64,
    pub controlled_u_calls: u64,
    pub phase_register_bits: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Spectral,
    Circuit,
}

/// Projector onto ker A^beta + span{w0^beta}.
pub fn kernel_plus_w0_projector(pb: &RescaledSpanProgram, tol: &Tolerances) -> CMat {
    let k = linalg::null_space(&pb.program.a, tol.pinv_rel_cutoff);
    let pk = &k * k.adjoint();
    let w = &pb.w0_beta;
    pk + w * w.adjoint()
}

/// U = (2 Pi_H(x) - I)(2 (Pi_ker + |w0><w0|) - I).
pub fn span_unitary(pb: &RescaledSpanProgram, x: &[bool]) -> Result<CMat> {
    span_unitary_with(pb, x, &Tolerances::default())
}

pub fn span_unitary_with(pb: &RescaledSpanProgram, x: &[bool], tol: &Tolerances) -> Result<CMat> {
    let rh = linalg::reflection(&crate::span_core::projector_hx(&pb.program, x)?);
    let rk = linalg::reflection(&kernel_plus_w0_projector(pb, tol));
    Ok(rh * rk)
}

/// -(2 Pi_H(x) - I)(2 Pi_ker - I)(2|w0><w0| - I).
pub fn span_unitary_three_factor(pb: &RescaledSpanProgram, x: &[bool], tol: &Tolerances) -> Result<CMat> {
    let rh = linalg::reflection(&crate::span_core::projector_hx(&pb.program, x)?);
    let k = linalg::null_space(&pb.program.a, tol.pinv_rel_cutoff);
    let rk = linalg::reflection(&(&k * k.adjoint()));
    let w = &pb.w0_beta;
    let rw = linalg::reflection(&(w * w.adjoint()));
    Ok(-(rh * rk * rw))
}

/// Weight of `v` on eigenvectors of the unitary `u` with |phase| <= theta.
pub fn small_phase_weight(u: &CMat, v: &CVec, theta: f64) -> Result<f64> {
    let herm = (u + u.adjoint()) * r(0.5);
    let eig = herm.symmetric_eigen();
    if eig.eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let cut = theta.cos() - 1e-12;
    let mut acc = 0.0;
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        if e >= cut {
            acc += eig.eigenvectors.column(k).dotc(v).norm_sqr();
        }
    }
    Ok(acc)
}

pub fn evaluate_spectral(pb: &RescaledSpanProgram, x: &[bool], params: &EvaluatorParams) -> Result<f64> {
    let u = span_unitary(pb, x)?;
    small_phase_weight(&u, &pb.w0_beta, params.theta)
}

/// Probability of reading 0 from an m-bit phase register: ||2^-m sum_k U^k v||^2.
/// `apply` performs one application of U.
pub fn phase_zero_probability(v: &CVec, bits: usize, mut apply: impl FnMut(&CVec) -> CVec) -> f64 {
    let steps = 1usize << bits;
    let mut cur = v.clone();
    let mut acc = CVec::zeros(v.len());
    for k in 0..steps {
        acc += &cur;
        if k + 1 < steps {
            cur = apply(&cur);
        }
    }
    (acc / C64::new(steps as f64, 0.0)).norm_squared()
}

pub fn check_budget(dim: usize, params: &EvaluatorParams, tol: &Tolerances) -> Result<()> {
    let bits = params.phase_bits();
    let need = dim.saturating_mul(1usize.checked_shl(bits as u32).unwrap_or(usize::MAX));
    if bits >= 40 || need > tol.circuit_mode_budget {
        return Err(Error::Budget(format!("{bits} phase bits on dimension {dim}")));
    }
    Ok(())
}

pub fn evaluate_circuit(
    pb: &RescaledSpanProgram,
    x: &[bool],
    params: &EvaluatorParams,
    threshold: f64,
    tol: &Tolerances,
) -> Result<EvaluationTrace> {
    check_budget(pb.program.dim_h(), params, tol)?;
    let u = span_unitary_with(pb, x, tol)?;
    let p0 = phase_zero_probability(&pb.w0_beta, params.phase_bits(), |v| &u * v);
    Ok(EvaluationTrace {
        accepted: p0 > threshold,
        amplitude_estimate: p0,
        controlled_u_calls: params.controlled_u_calls(),
        phase_register_bits: params.phase_bits(),
        threshold,
    })
}

/// Midpoint threshold from the worst positive and negative acceptance values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub mode: Mode,
    pub threshold: f64,
    pub min_positive: f64,
    pub max_negative: f64,
    pub separated: bool,
    pub values: Vec<(String, bool, f64)>,
}

pub fn calibrate_values(mode: Mode, values: Vec<(String, bool, f64)>, fallback: f64) -> Calibration {
    let min_pos = values.iter().filter(|v| v.1).map(|v| v.2).fold(f64::INFINITY, f64::min);
    let max_neg = values.iter().filter(|v| !v.1).map(|v| v.2).fold(f64::NEG_INFINITY, f64::max);
    let separated = min_pos > max_neg;
    let threshold = match (min_pos.is_finite(), max_neg.is_finite()) {
        (true, true) if separated => 0.5 * (min_pos + max_neg),
        (true, false) => 0.5 * min_pos.min(2.0 * fallback),
        (false, true) => max_neg + 0.5 * (1.0 - max_neg).min(fallback),
        _ => fallback,
    };
    Calibration { mode, threshold, min_positive: min_pos, max_negative: max_neg, separated, values }
}

/// A span program prepared for evaluation: P^beta plus evaluator parameters.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub pb: RescaledSpanProgram,
    pub params: EvaluatorParams,
    /// Bounds on the base program used to choose beta.
    pub base_w_plus: f64,
    pub base_w_minus: f64,
    pub base_lambda: f64,
    tol: Tolerances,
    kernel_reflection: CMat,
}

impl Compiled {
    /// beta = sqrt(W+), lambda' = 2 lambda, W+(P^beta) <= 2, W-(P^beta) <= beta^2 W- + 2.
    pub fn new(p: &SpanProgram, lambda: f64, w_plus: f64, w_minus: f64, tol: &Tolerances) -> Result<Self> {
        let beta = w_plus.sqrt();
        let pb = rescale_with(p, beta, tol)?;
        let params = EvaluatorParams::new(2.0 * lambda, 2.0, beta * beta * w_minus + 2.0)?;
        let kernel_reflection = linalg::reflection(&kernel_plus_w0_projector(&pb, tol));
        Ok(Compiled { pb, params, base_w_plus: w_plus, base_w_minus: w_minus, base_lambda: lambda, tol: tol.clone(), kernel_reflection })
    }

    /// Bounds from the witness-size solver.
    pub fn from_table(p: &SpanProgram, table: &TruthTable, lambda: f64, tol: &Tolerances) -> Result<Self> {
        let rep = complexity_report_with(p, table, lambda, None, tol)?;
        let wp = match rep.w_plus {
            Size::Finite(v) if v > 0.0 => v,
            _ => return Err(Error::Parameter(format!("positive complexity is {} ({:?})", rep.w_plus, rep.missing_positive))),
        };
        let wm = match rep.w_minus {
            Size::Finite(v) => v.max(1e-9),
            Size::Infinite => {
                return Err(Error::Parameter(format!(
                    "no negative witness within error lambda/W+ for {:?}",
                    rep.missing_negative
                )))
            }
        };
        Self::new(p, lambda, wp, wm, tol)
    }

    pub fn unitary(&self, x: &[bool]) -> Result<CMat> {
        let rh = linalg::reflection(&crate::span_core::projector_hx(&self.pb.program, x)?);
        Ok(rh * &self.kernel_reflection)
    }

    pub fn acceptance(&self, x: &[bool], mode: Mode) -> Result<f64> {
        self.acceptance_of(&self.unitary(x)?, mode)
    }

    /// Acceptance value computed from a supplied span unitary on H^beta (e.g. one built from circuits).
    pub fn acceptance_of(&self, u: &CMat, mode: Mode) -> Result<f64> {
        match mode {
            Mode::Spectral => small_phase_weight(u, &self.pb.w0_beta, self.params.theta),
            Mode::Circuit => {
                check_budget(u.nrows(), &self.params, &self.tol)?;
                Ok(phase_zero_probability(&self.pb.w0_beta, self.params.phase_bits(), |v| u * v))
            }
        }
    }

    pub fn calibrate(&self, table: &TruthTable, mode: Mode) -> Result<Calibration> {
        let mut vals = Vec::new();
        for (x, fx) in &table.rows {
            vals.push((fmt_bits(x), *fx, self.acceptance(x, mode)?));
        }
        Ok(calibrate_values(mode, vals, self.params.default_threshold()))
    }

    pub fn evaluate(&self, x: &[bool], mode: Mode, threshold: f64) -> Result<EvaluationTrace> {
        let p = self.acceptance(x, mode)?;
        Ok(EvaluationTrace {
            accepted: p > threshold,
            amplitude_estimate: p,
            controlled_u_calls: self.params.controlled_u_calls(),
            phase_register_bits: self.params.phase_bits(),
            threshold,
        })
    }
}

/// How the parameters of a compiled P_A were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Closed-form bounds 3(2S+1), 2(4S+1) and the lambda certified by the constructed witnesses.
    Analytic,
    /// Certified lambda too large for P^beta; lambda from the smallest achievable error,
    /// negative complexity from the solver.
    Solver,
}

/// Largest lambda for which P^beta (a 2 lambda-approximation) still has a spectral gap margin.
pub const LAMBDA_LIMIT: f64 = 0.24;

pub fn compile_alg_span(sp: &AlgSpan, table: &TruthTable, tol: &Tolerances) -> Result<(Compiled, Route)> {
    let wp = sp.w_plus_bound();
    let lam = certified_lambda(sp, table)?;
    if lam < LAMBDA_LIMIT {
        return Ok((Compiled::new(&sp.program, lam, wp, sp.w_minus_bound(), tol)?, Route::Analytic));
    }
    let mut floor = 0.0f64;
    for x in table.negatives() {
        floor = floor.max(minimal_negative_error(&sp.program, x, tol)? * wp);
    }
    let lam = (floor * 1.25).max(floor + 1e-6);
    if lam >= LAMBDA_LIMIT {
        return Err(Error::Parameter(format!("smallest achievable lambda {floor:.4} leaves no gap for P^beta")));
    }
    let rep = complexity_report_with(&sp.program, table, lam, Some(wp), tol)?;
    let wm = rep.w_minus.finite().ok_or_else(|| Error::Parameter(format!("no negative witness for {:?}", rep.missing_negative)))?;
    Ok((Compiled::new(&sp.program, lam, wp, wm, tol)?, Route::Solver))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub input: String,
    pub accepted: bool,
    pub trace: EvaluationTrace,
}

/// Compile with solver bounds, calibrate over the table, and decide every input.
pub fn decide_all(p: &SpanProgram, table: &TruthTable, lambda: f64, mode: Mode, tol: &Tolerances) -> Result<(Compiled, Calibration, Vec<Decision>)> {
    let comp = Compiled::from_table(p, table, lambda, tol)?;
    let cal = comp.calibrate(table, mode)?;
    let mut out = Vec::new();
    for (input, _, v) in &cal.values {
        let trace = EvaluationTrace {
            accepted: *v > cal.threshold,
            amplitude_estimate: *v,
            controlled_u_calls: comp.params.controlled_u_calls(),
            phase_register_bits: comp.params.phase_bits(),
            threshold: cal.threshold,
        };
        out.push(Decision { input: input.clone(), accepted: trace.accepted, trace });
    }
    Ok((comp, cal, out))
}

pub fn decide(p: &SpanProgram, table: &TruthTable, lambda: f64, x: &[bool], mode: Mode) -> Result<bool> {
    let tol = Tolerances::default();
    let comp = Compiled::from_table(p, table, lambda, &tol)?;
    let cal = comp.calibrate(table, mode)?;
    Ok(comp.acceptance(x, mode)? > cal.threshold)
}

/// Identity check helper for tests: does U act as the identity?
pub fn is_identity(u: &CMat, tol: f64) -> bool {
    (u - CMat::identity(u.nrows(), u.ncols())).norm() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::span_core::{BlockLayout, Label};

    fn identity_program() -> (SpanProgram, TruthTable) {
        // f(x) = x_0 with one input vector labelled (0, 1).
        let layout = BlockLayout { n: 1, labels: vec![Label::Input { i: 0, b: true }] };
        let p = SpanProgram::new(layout, CMat::identity(1, 1), CVec::from_element(1, ONE)).unwrap();
        let table = TruthTable::from_fn(1, TruthTable::all_inputs(1), |x| x[0]);
        (p, table)
    }

    #[test]
    fn params_formulas() {
        let p = EvaluatorParams::new(0.1, 2.0, 50.0).unwrap();
        assert!((p.theta - (0.8f64 / 100.0).sqrt()).abs() < 1e-15);
        assert!((p.eps_pe - 0.1).abs() < 1e-15);
        assert!((p.theta_prime - 0.8 / (4.0 * 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(p.phase_bits(), 4 + 3);
        assert!(EvaluatorParams::new(0.5, 2.0, 1.0).is_err());
    }

    #[test]
    fn single_bit_identity_is_decided() {
        let (p, table) = identity_program();
        let tol = Tolerances::default();
        for mode in [Mode::Spectral, Mode::Circuit] {
            let (_, cal, ds) = decide_all(&p, &table, 0.0, mode, &tol).unwrap();
            assert!(cal.separated);
            for (d, (_, fx)) in ds.iter().zip(&table.rows) {
                assert_eq!(d.accepted, *fx);
            }
        }
    }

    #[test]
    fn unitary_forms_agree() {
        let (p, _) = identity_program();
        let pb = rescale_with(&p, 1.0, &Tolerances::default()).unwrap();
        for x in [[false], [true]] {
            let u = span_unitary(&pb, &x).unwrap();
            let u3 = span_unitary_three_factor(&pb, &x, &Tolerances::default()).unwrap();
            assert!(linalg::is_unitary(&u, 1e-9));
            assert!((u - u3).norm() < 1e-9);
        }
    }

    #[test]
    fn trivial_spectra() {
        let v = CVec::from_vec(vec![ONE, ONE]) / C64::new(2f64.sqrt(), 0.0);
        let id = CMat::identity(2, 2);
        assert!((small_phase_weight(&id, &v, 0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!(small_phase_weight(&(-id.clone()), &v, 0.1).unwrap() < 1e-12);
        assert!((phase_zero_probability(&v, 3, |w| &id * w) - 1.0).abs() < 1e-12);
        assert!(phase_zero_probability(&v, 3, |w| -w.clone()) < 1e-12);
    }
}
