//! Span programs, witness-size solvers, complexity reports and rescaling.

use crate::circuit_ir::{fmt_bits, matrix_from_json, matrix_to_json, TruthTable};
use crate::linalg::{self, r, CMat, CVec, C64, ONE};
use crate::tol::Tolerances;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Input { i: usize, b: bool },
    True,
    False,
}

impl Label {
    pub fn available(&self, x: &[bool]) -> bool {
        match *self {
            Label::True => true,
            Label::False => false,
            Label::Input { i, b } => x[i] == b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    pub n: usize,
    pub labels: Vec<Label>,
}

impl BlockLayout {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn mask(&self, x: &[bool]) -> Vec<bool> {
        self.labels.iter().map(|l| l.available(x)).collect()
    }
}

/// Witness sizes are either finite or explicitly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Size {
    Finite(f64),
    Infinite,
}

impl Size {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Size::Finite(v) => Some(*v),
            Size::Infinite => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Size::Finite(_))
    }

    pub fn max(self, other: Size) -> Size {
        match (self, other) {
            (Size::Finite(a), Size::Finite(b)) => Size::Finite(a.max(b)),
            _ => Size::Infinite,
        }
    }
}

impl std::fmt::Display for Size {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Size::Finite(v) => write!(f, "{v:.6}"),
            Size::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanProgram {
    pub layout: BlockLayout,
    pub dim_v: usize,
    pub a: CMat,
    pub tau: CVec,
}

impl SpanProgram {
    pub fn new(layout: BlockLayout, a: CMat, tau: CVec) -> Result<Self> {
        if a.ncols() != layout.dim() {
            return Err(Error::Dimension(format!("A has {} columns but H has dimension {}", a.ncols(), layout.dim())));
        }
        if a.nrows() != tau.len() {
            return Err(Error::Dimension(format!("A has {} rows but tau has length {}", a.nrows(), tau.len())));
        }
        for l in &layout.labels {
            if let Label::Input { i, .. } = l {
                if *i >= layout.n {
                    return Err(Error::Dimension(format!("label refers to bit {i} of {}", layout.n)));
                }
            }
        }
        Ok(SpanProgram { dim_v: a.nrows(), layout, a, tau })
    }

    pub fn dim_h(&self) -> usize {
        self.layout.dim()
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn check_input(&self, x: &[bool]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!("input length {} but span program has {} bits", x.len(), self.n())));
        }
        Ok(())
    }
}

/// Diagonal 0/1 projector onto H(x).
pub fn projector_hx(p: &SpanProgram, x: &[bool]) -> Result<CMat> {
    p.check_input(x)?;
    Ok(linalg::diag_projector(&p.layout.mask(x)))
}

pub fn minimal_witness(p: &SpanProgram) -> Result<(CVec, f64)> {
    minimal_witness_with(p, &Tolerances::default())
}

pub fn minimal_witness_with(p: &SpanProgram, tol: &Tolerances) -> Result<(CVec, f64)> {
    let w0 = linalg::pinv(&p.a, tol.pinv_rel_cutoff) * &p.tau;
    let resid = (&p.a * &w0 - &p.tau).norm();
    if resid > tol.feasibility_rel * p.tau.norm().max(1e-300) {
        return Err(Error::NoPositiveInput);
    }
    let n = w0.norm_squared();
    Ok((w0, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositiveWitness {
    pub size: Size,
    pub vec: Option<CVec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeWitness {
    pub size: Size,
    /// Column vector v with the covector being v^dagger.
    pub vec: Option<CVec>,
    /// Error achieved by the returned covector, or the smallest error reachable when infeasible.
    pub achieved_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessReport {
    pub positive: PositiveWitness,
    pub negative: Option<NegativeWitness>,
}

fn columns(m: &CMat, idx: &[usize]) -> CMat {
    let mut out = CMat::zeros(m.nrows(), idx.len());
    for (k, &j) in idx.iter().enumerate() {
        out.set_column(k, &m.column(j));
    }
    out
}

pub fn positive_witness_size(p: &SpanProgram, x: &[bool]) -> Result<PositiveWitness> {
    positive_witness_size_with(p, x, &Tolerances::default())
}

/// Least-norm solution of A w = tau with w supported on H(x).
pub fn positive_witness_size_with(p: &SpanProgram, x: &[bool], tol: &Tolerances) -> Result<PositiveWitness> {
    p.check_input(x)?;
    let idx: Vec<usize> = p.layout.mask(x).iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k).collect();
    let sub = columns(&p.a, &idx);
    let ws = linalg::pinv(&sub, tol.pinv_rel_cutoff) * &p.tau;
    let resid = (&sub * &ws - &p.tau).norm();
    if resid > tol.feasibility_rel * p.tau.norm().max(1e-300) {
        return Ok(PositiveWitness { size: Size::Infinite, vec: None });
    }
    let mut w = CVec::zeros(p.dim_h());
    for (k, &j) in idx.iter().enumerate() {
        w[j] = ws[k];
    }
    Ok(PositiveWitness { size: Size::Finite(w.norm_squared()), vec: Some(w) })
}

/// Cost ||v^dag A||^2 and error ||v^dag A Pi||^2 of a covector.
pub fn negative_costs(p: &SpanProgram, v: &CVec, mask: &[bool]) -> (f64, f64) {
    let row = v.adjoint() * &p.a;
    let cost = row.norm_squared();
    let err = row.iter().zip(mask).filter(|(_, &m)| m).map(|(z, _)| z.norm_sqr()).sum();
    (cost, err)
}

/// Minimizer of v^dag Q v subject to tau^dag v = 1.
fn bordered_solve(q: &CMat, tau: &CVec, tol: &Tolerances) -> Option<CVec> {
    let d = q.nrows();
    let mut m = CMat::zeros(d + 1, d + 1);
    m.view_mut((0, 0), (d, d)).copy_from(q);
    for k in 0..d {
        m[(k, d)] = tau[k];
        m[(d, k)] = tau[k].conj();
    }
    let mut rhs = CVec::zeros(d + 1);
    rhs[d] = ONE;
    let sol = linalg::pinv(&m, tol.pinv_rel_cutoff * 1e-2) * rhs;
    let v = sol.rows(0, d).into_owned();
    let overlap = tau.dotc(&v);
    if (overlap - ONE).norm() > 1e-6 {
        return None;
    }
    Some(v / overlap)
}

pub fn approx_negative_witness(p: &SpanProgram, x: &[bool], lambda: f64, w_plus_bound: f64) -> Result<NegativeWitness> {
    approx_negative_witness_with(p, x, lambda, w_plus_bound, &Tolerances::default())
}

/// Minimize ||<w|A||^2 subject to <w|tau> = 1 and ||<w|A Pi_H(x)||^2 <= lambda / W+,
/// by bisection on the multiplier of the penalized objective ||wA||^2 + mu ||wA Pi||^2.
pub fn approx_negative_witness_with(
    p: &SpanProgram,
    x: &[bool],
    lambda: f64,
    w_plus_bound: f64,
    tol: &Tolerances,
) -> Result<NegativeWitness> {
    p.check_input(x)?;
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda = {lambda} outside [0, 1)")));
    }
    if !(w_plus_bound > 0.0) {
        return Err(Error::Parameter(format!("W+ bound = {w_plus_bound} must be positive")));
    }
    let mask = p.layout.mask(x);
    let pi = linalg::diag_projector(&mask);
    let aa = &p.a * p.a.adjoint();
    let apa = &p.a * &pi * p.a.adjoint();
    if lambda == 0.0 {
        return exact_negative_witness(p, &mask, &aa, &apa, tol);
    }
    let cap = lambda / w_plus_bound;
    let Some(fam) = PenaltyFamily::new(p, &mask, tol) else {
        return Ok(NegativeWitness { size: Size::Infinite, vec: None, achieved_error: f64::INFINITY });
    };
    let done = |mu: f64| {
        let v = fam.covector(mu);
        let (cost, err) = negative_costs(p, &v, &mask);
        Ok(NegativeWitness { size: Size::Finite(cost), vec: Some(v), achieved_error: err })
    };
    if fam.costs(0.0).1 <= cap {
        return done(0.0);
    }
    if fam.floor() > cap {
        return Ok(NegativeWitness { size: Size::Infinite, vec: None, achieved_error: fam.floor() });
    }
    // The error is nonincreasing in mu and the cost nondecreasing, so the smallest feasible mu wins.
    let mut lo = 0.0;
    let mut hi = 1.0;
    while fam.costs(hi).1 > cap {
        lo = hi;
        hi *= 4.0;
        if hi > 1e300 {
            return Ok(NegativeWitness { size: Size::Infinite, vec: None, achieved_error: fam.floor() });
        }
    }
    for _ in 0..400 {
        let err = fam.costs(hi).1;
        if cap - err <= tol.bisection_slack * cap || hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if fam.costs(mid).1 <= cap {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    done(hi)
}

/// Minimizers of ||<w|A||^2 + mu ||<w|A Pi||^2 subject to <w|tau> = 1, for every mu at once.
/// In the singular basis A = U S W^dag the row <w|A> is z^dag W^dag with c^dag z = 1, c = S^-1 U^dag tau,
/// and the objective is z^dag (I + mu M) z with M = W^dag Pi W diagonalised as E diag(m) E^dag.
struct PenaltyFamily {
    u: CMat,
    s: Vec<f64>,
    e: CMat,
    m: Vec<f64>,
    d: Vec<C64>,
    zero_cost: Option<CVec>,
}

impl PenaltyFamily {
    fn new(p: &SpanProgram, mask: &[bool], tol: &Tolerances) -> Option<Self> {
        let (u, s, w) = linalg::ranked_svd(&p.a, tol.pinv_rel_cutoff);
        let t = u.adjoint() * &p.tau;
        let outside = &p.tau - &u * &t;
        if p.tau.norm() == 0.0 {
            return None;
        }
        let zero_cost = (outside.norm() > tol.feasibility_rel * p.tau.norm()).then(|| &outside / r(outside.norm_squared()));
        let c = CVec::from_iterator(s.len(), t.iter().zip(&s).map(|(t, s)| t / r(*s)));
        let mut pw = w.clone();
        for (row, &m) in mask.iter().enumerate() {
            if !m {
                pw.row_mut(row).fill(C64::new(0.0, 0.0));
            }
        }
        let mm = pw.adjoint() * &pw;
        let eig = mm.symmetric_eigen();
        let m: Vec<f64> = eig.eigenvalues.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let d = (eig.eigenvectors.adjoint() * c).iter().cloned().collect();
        Some(PenaltyFamily { u, s, e: eig.eigenvectors, m, d, zero_cost })
    }

    fn weights(&self, mu: f64) -> (Vec<f64>, f64) {
        let g: Vec<f64> = self.m.iter().map(|m| 1.0 / (1.0 + mu * m)).collect();
        let den = self.d.iter().zip(&g).map(|(d, g)| d.norm_sqr() * g).sum();
        (g, den)
    }

    /// (cost, error) of the mu-minimizer in closed form.
    fn costs(&self, mu: f64) -> (f64, f64) {
        if self.zero_cost.is_some() {
            return (0.0, 0.0);
        }
        let (g, den) = self.weights(mu);
        let mut cost = 0.0;
        let mut err = 0.0;
        for ((d, g), m) in self.d.iter().zip(&g).zip(&self.m) {
            let q = d.norm_sqr() * g * g;
            cost += q;
            err += q * m;
        }
        (cost / (den * den), err / (den * den))
    }

    /// Infimum of the error as mu grows without bound.
    fn floor(&self) -> f64 {
        if self.zero_cost.is_some() {
            return 0.0;
        }
        let free: f64 = self.d.iter().zip(&self.m).filter(|(_, m)| **m <= 1e-13).map(|(d, _)| d.norm_sqr()).sum();
        if free > 1e-24 {
            return 0.0;
        }
        let num: f64 = self.d.iter().zip(&self.m).filter(|(_, m)| **m > 1e-13).map(|(d, m)| d.norm_sqr() / m).sum();
        1.0 / num
    }

    fn covector(&self, mu: f64) -> CVec {
        if let Some(v) = &self.zero_cost {
            return v.clone();
        }
        let (g, den) = self.weights(mu);
        let y = CVec::from_iterator(g.len(), self.d.iter().zip(&g).map(|(d, g)| d * r(g / den)));
        let z = &self.e * y;
        let zs = CVec::from_iterator(z.len(), z.iter().zip(&self.s).map(|(z, s)| z / r(*s)));
        &self.u * zs
    }
}

/// Exact negative witness: v in the null space of (A Pi)^dag.
fn exact_negative_witness(p: &SpanProgram, mask: &[bool], aa: &CMat, apa: &CMat, tol: &Tolerances) -> Result<NegativeWitness> {
    let ns = linalg::null_space(apa, tol.pinv_rel_cutoff);
    let t = ns.adjoint() * &p.tau;
    if t.norm() <= tol.feasibility_rel * p.tau.norm() {
        let err = bordered_solve(&(aa + apa * r(1e8)), &p.tau, tol)
            .map(|v| negative_costs(p, &v, mask).1)
            .unwrap_or(f64::INFINITY);
        return Ok(NegativeWitness { size: Size::Infinite, vec: None, achieved_error: err });
    }
    let q = ns.adjoint() * aa * &ns;
    let y = bordered_solve(&q, &t, tol).ok_or_else(|| Error::Eigen("bordered system failed".into()))?;
    let v = &ns * y;
    let (cost, err) = negative_costs(p, &v, mask);
    Ok(NegativeWitness { size: Size::Finite(cost), vec: Some(v), achieved_error: err })
}

/// Smallest error ||<w|A Pi_H(x)||^2 over covectors with <w|tau> = 1, ignoring size.
pub fn minimal_negative_error(p: &SpanProgram, x: &[bool], tol: &Tolerances) -> Result<f64> {
    p.check_input(x)?;
    let mask = p.layout.mask(x);
    let fam = PenaltyFamily::new(p, &mask, tol).ok_or_else(|| Error::Parameter("tau is zero".into()))?;
    Ok(fam.floor())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub w_plus: Size,
    pub w_minus: Size,
    pub complexity: Size,
    pub lambda: f64,
    pub missing_positive: Vec<String>,
    pub missing_negative: Vec<String>,
}

pub fn complexity_report(p: &SpanProgram, table: &TruthTable, lambda: f64) -> Result<ComplexityReport> {
    complexity_report_with(p, table, lambda, None, &Tolerances::default())
}

/// Maxima of per-input witness sizes. The negative error cap uses `w_plus_bound` when given,
/// and the measured W+ otherwise.
pub fn complexity_report_with(
    p: &SpanProgram,
    table: &TruthTable,
    lambda: f64,
    w_plus_bound: Option<f64>,
    tol: &Tolerances,
) -> Result<ComplexityReport> {
    let mut w_plus = Size::Finite(0.0);
    let mut missing_positive = Vec::new();
    for x in table.positives() {
        let w = positive_witness_size_with(p, x, tol)?;
        if !w.size.is_finite() {
            missing_positive.push(fmt_bits(x));
        }
        w_plus = w_plus.max(w.size);
    }
    let bound = w_plus_bound.or(w_plus.finite()).filter(|b| *b > 0.0).unwrap_or(1.0);
    let mut w_minus = Size::Finite(0.0);
    let mut missing_negative = Vec::new();
    for x in table.negatives() {
        let w = approx_negative_witness_with(p, x, lambda, bound, tol)?;
        if !w.size.is_finite() {
            missing_negative.push(fmt_bits(x));
        }
        w_minus = w_minus.max(w.size);
    }
    let complexity = match (w_plus, w_minus) {
        (Size::Finite(a), Size::Finite(b)) => Size::Finite((a * b).sqrt()),
        _ => Size::Infinite,
    };
    Ok(ComplexityReport { w_plus, w_minus, complexity, lambda, missing_positive, missing_negative })
}

/// P^beta with two appended directions: |0^> (false) and |1^> (true), plus |1^> in V.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledSpanProgram {
    pub base: SpanProgram,
    pub beta: f64,
    pub n_norm: f64,
    pub w0: CVec,
    pub program: SpanProgram,
    pub hat0_index: usize,
    pub hat1_index: usize,
    pub w0_beta: CVec,
}

pub fn rescale(p: &SpanProgram, beta: f64) -> Result<RescaledSpanProgram> {
    rescale_with(p, beta, &Tolerances::default())
}

pub fn rescale_with(p: &SpanProgram, beta: f64, tol: &Tolerances) -> Result<RescaledSpanProgram> {
    if !(beta > 0.0) {
        return Err(Error::Parameter(format!("beta = {beta} must be positive")));
    }
    let (w0, n_norm) = minimal_witness_with(p, tol)?;
    let dh = p.dim_h();
    let dv = p.dim_v;
    let hat0 = dh;
    let hat1 = dh + 1;
    let mut a = CMat::zeros(dv + 1, dh + 2);
    a.view_mut((0, 0), (dv, dh)).copy_from(&(&p.a * r(beta)));
    for k in 0..dv {
        a[(k, hat0)] = p.tau[k];
    }
    a[(dv, hat1)] = r((beta * beta + n_norm).sqrt() / beta);
    let mut tau = CVec::zeros(dv + 1);
    tau.rows_mut(0, dv).copy_from(&p.tau);
    tau[dv] = ONE;
    let mut labels = p.layout.labels.clone();
    labels.push(Label::False);
    labels.push(Label::True);
    let program = SpanProgram::new(BlockLayout { n: p.n(), labels }, a, tau)?;
    let den = beta * beta + n_norm;
    let mut w0b = CVec::zeros(dh + 2);
    w0b.rows_mut(0, dh).copy_from(&(&w0 * r(beta / den)));
    w0b[hat0] = r(n_norm / den);
    w0b[hat1] = r(beta / den.sqrt());
    Ok(RescaledSpanProgram { base: p.clone(), beta, n_norm, w0, program, hat0_index: hat0, hat1_index: hat1, w0_beta: w0b })
}

impl RescaledSpanProgram {
    /// |w0> - beta |0^>, which spans the extra kernel direction of A^beta.
    pub fn kernel_extra(&self) -> CVec {
        let mut v = CVec::zeros(self.program.dim_h());
        v.rows_mut(0, self.base.dim_h()).copy_from(&self.w0);
        v[self.hat0_index] = r(-self.beta);
        v
    }

    /// Lift of an approximate negative witness of the base program (as in the rescaling proof).
    pub fn lift_negative_witness(&self, v: &CVec, lambda: f64) -> CVec {
        let b2 = self.beta * self.beta;
        let den = b2 * lambda + b2 + self.n_norm;
        let mut out = CVec::zeros(self.program.dim_v);
        out.rows_mut(0, self.base.dim_v).copy_from(&(v * r((b2 + self.n_norm) / den)));
        out[self.base.dim_v] = r(b2 * lambda / den);
        out
    }

    /// Embed a vector of H into H^beta.
    pub fn embed(&self, h: &CVec) -> CVec {
        let mut v = CVec::zeros(self.program.dim_h());
        v.rows_mut(0, h.len()).copy_from(h);
        v
    }
}

// ---------------------------------------------------------------------------
// JSON format

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelJson {
    Named(String),
    Input([usize; 2]),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanProgramJson {
    pub n: usize,
    pub labels: Vec<LabelJson>,
    pub dim_v: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<[f64; 2]>>,
    pub tau: Vec<[f64; 2]>,
}

impl SpanProgram {
    pub fn to_json(&self) -> SpanProgramJson {
        SpanProgramJson {
            n: self.n(),
            labels: self
                .layout
                .labels
                .iter()
                .map(|l| match l {
                    Label::True => LabelJson::Named("true".into()),
                    Label::False => LabelJson::Named("false".into()),
                    Label::Input { i, b } => LabelJson::Input([*i, *b as usize]),
                })
                .collect(),
            dim_v: self.dim_v,
            a: matrix_to_json(&self.a),
            tau: self.tau.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn from_json(j: &SpanProgramJson) -> Result<Self> {
        let mut labels = Vec::with_capacity(j.labels.len());
        for (k, l) in j.labels.iter().enumerate() {
            labels.push(match l {
                LabelJson::Named(s) if s == "true" => Label::True,
                LabelJson::Named(s) if s == "false" => Label::False,
                LabelJson::Named(s) => return Err(Error::Parse(format!("labels[{k}]: unknown label {s:?}"))),
                LabelJson::Input([i, b]) if *b <= 1 => Label::Input { i: *i, b: *b == 1 },
                LabelJson::Input(_) => return Err(Error::Parse(format!("labels[{k}]: bit value must be 0 or 1"))),
            });
        }
        let a = if j.a.is_empty() {
            CMat::zeros(j.dim_v, labels.len())
        } else {
            matrix_from_json(&j.a, "A")?
        };
        if a.nrows() != j.dim_v {
            return Err(Error::Parse(format!("A has {} rows but dim_V = {}", a.nrows(), j.dim_v)));
        }
        let tau = CVec::from_iterator(j.tau.len(), j.tau.iter().map(|z| C64::new(z[0], z[1])));
        SpanProgram::new(BlockLayout { n: j.n, labels }, a, tau)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let j: SpanProgramJson = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        Self::from_json(&j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;

    fn sp(labels: Vec<Label>, n: usize, a: CMat, tau: CVec) -> SpanProgram {
        SpanProgram::new(BlockLayout { n, labels }, a, tau).unwrap()
    }

    #[test]
    fn projector_cases() {
        let a = CMat::identity(2, 2);
        let tau = CVec::from_vec(vec![ONE, ZERO]);
        let p = sp(vec![Label::True, Label::True], 1, a.clone(), tau.clone());
        assert_eq!(projector_hx(&p, &[true]).unwrap(), CMat::identity(2, 2));
        let p = sp(vec![Label::False, Label::False], 1, a.clone(), tau.clone());
        assert_eq!(projector_hx(&p, &[true]).unwrap(), CMat::zeros(2, 2));
        let labels = vec![
            Label::Input { i: 0, b: true },
            Label::Input { i: 1, b: false },
            Label::True,
            Label::False,
        ];
        let p = sp(labels, 2, CMat::identity(4, 4), CVec::from_vec(vec![ONE, ZERO, ZERO, ZERO]));
        let m = projector_hx(&p, &[true, true]).unwrap();
        let diag: Vec<f64> = (0..4).map(|k| m[(k, k)].re).collect();
        assert_eq!(diag, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn minimal_witness_examples() {
        let tau = CVec::from_vec(vec![r(0.3), r(-1.0)]);
        let p = sp(vec![Label::True, Label::True], 1, CMat::identity(2, 2), tau.clone());
        let (w0, n) = minimal_witness(&p).unwrap();
        assert!((w0 - &tau).norm() < 1e-12);
        assert!((n - tau.norm_squared()).abs() < 1e-12);

        let p = sp(vec![Label::True, Label::True], 1, CMat::from_row_slice(1, 2, &[ONE, ONE]), CVec::from_vec(vec![ONE]));
        let (w0, n) = minimal_witness(&p).unwrap();
        assert!((w0[0] - r(0.5)).norm() < 1e-12 && (w0[1] - r(0.5)).norm() < 1e-12);
        assert!((n - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_positive_input() {
        let p = sp(vec![Label::True], 1, CMat::from_row_slice(2, 1, &[ONE, ZERO]), CVec::from_vec(vec![ZERO, ONE]));
        assert_eq!(minimal_witness(&p), Err(Error::NoPositiveInput));
    }

    #[test]
    fn full_hx_gives_n() {
        let a = CMat::from_row_slice(1, 3, &[ONE, r(2.0), r(-1.0)]);
        let p = sp(vec![Label::True; 3], 1, a, CVec::from_vec(vec![ONE]));
        let (_, n) = minimal_witness(&p).unwrap();
        let w = positive_witness_size(&p, &[false]).unwrap();
        assert!((w.size.finite().unwrap() - n).abs() < 1e-12);
    }

    #[test]
    fn exact_negative_when_hx_trivial() {
        let a = CMat::identity(2, 2);
        let p = sp(vec![Label::Input { i: 0, b: true }, Label::Input { i: 0, b: true }], 1, a, CVec::from_vec(vec![ONE, ZERO]));
        let w = approx_negative_witness(&p, &[false], 0.1, 1.0).unwrap();
        assert_eq!(w.achieved_error, 0.0);
        assert!((w.size.finite().unwrap() - 1.0).abs() < 1e-9);
        let w = approx_negative_witness(&p, &[false], 0.0, 1.0).unwrap();
        assert!(w.size.is_finite());
    }

    #[test]
    fn positive_input_has_no_exact_negative_witness() {
        let a = CMat::identity(2, 2);
        let p = sp(vec![Label::Input { i: 0, b: true }, Label::True], 1, a, CVec::from_vec(vec![ONE, ZERO]));
        assert!(positive_witness_size(&p, &[true]).unwrap().size.is_finite());
        let w = approx_negative_witness(&p, &[true], 0.0, 1.0).unwrap();
        assert_eq!(w.size, Size::Infinite);
    }

    #[test]
    fn rescale_small_case() {
        let p = sp(vec![Label::True], 1, CMat::from_row_slice(1, 1, &[ONE]), CVec::from_vec(vec![ONE]));
        let rs = rescale(&p, 1.0).unwrap();
        assert!((rs.n_norm - 1.0).abs() < 1e-12);
        let want = [0.5, 0.5, 1.0 / 2f64.sqrt()];
        for (k, w) in want.iter().enumerate() {
            assert!((rs.w0_beta[k] - r(*w)).norm() < 1e-12);
        }
        assert!((rs.w0_beta.norm() - 1.0).abs() < 1e-12);
        assert!(rescale(&p, 0.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let labels = vec![Label::Input { i: 1, b: true }, Label::True, Label::False];
        let a = CMat::from_row_slice(2, 3, &[ONE, linalg::c(0.5, -0.25), ZERO, ZERO, ONE, r(3.0)]);
        let p = sp(labels, 2, a, CVec::from_vec(vec![ONE, linalg::c(0.0, 1.0)]));
        let text = serde_json::to_string(&p.to_json()).unwrap();
        assert_eq!(SpanProgram::from_json_str(&text).unwrap(), p);
    }
}
