//! Register circuits for the reflections of P_A, built from O_A, O_S and O_x.

use super::sim::*;
use crate::linalg::{r, C64, ONE};
use std::f64::consts::FRAC_1_SQRT_2;
use std::rc::Rc;

pub type TsFn = Rc<dyn Fn(&Ctx, &Key) -> Option<i64>>;
pub type AlphaFn = Rc<dyn Fn(&Ctx, &Key) -> f64>;

fn has_child() -> Pred {
    pred(|c, k| c.child(k).is_some())
}

fn minus_one() -> C64 {
    r(-1.0)
}

/// t = 0, b = 0 and the answer register agrees with the initial state.
pub fn zero_data(c: &Ctx, k: &Key) -> bool {
    c.child(k).is_some_and(|ch| k[T_REG] == 0 && k[B_REG] == 0 && ch.ans(k[Z_REG]) == ch.ans0)
}

/// t = 0, b = 0 and the data register is exactly the initial basis state.
pub fn zero_exact(c: &Ctx, k: &Key) -> bool {
    c.child(k).is_some_and(|ch| k[T_REG] == 0 && k[B_REG] == 0 && k[Z_REG] == ch.init)
}

pub fn hat_is(h: i64) -> Pred {
    pred(move |_, k| k[HAT] == h)
}

/// S_{t,alpha}: |t>|v> -> alpha |t>|v> + sqrt(1 - alpha^2) |t+1>|U_{t+1} v>, where the row-t
/// state carries tag |-> when t+1 is a query and the row-(t+1) state carries |+> when t+2 is.
/// `ts` gives t (None: identity); both `ts` and `alpha` must only read untouched registers.
pub fn splitting_map(name: &str, ts: TsFn, alpha: AlphaFn, dagger: bool) -> Circuit {
    let mut c = Circuit::new(name);
    let t1 = ts.clone();
    let flag_a = oracle_s(move |cx, k| t1(cx, k).map(|t| t + 1), FL1, None);
    let t2 = ts.clone();
    let flag_b = oracle_s(move |cx, k| t2(cx, k).map(|t| t + 2), FL2, None);
    let t3 = ts.clone();
    let at_next = pred(move |cx, k| t3(cx, k) == Some(k[T_REG] - 1));
    let t4 = ts.clone();
    let tag_ctrl = pred(move |cx, k| match t4(cx, k) {
        Some(t) => (k[FL1] == 1 && k[T_REG] == t) || (k[FL2] == 1 && k[T_REG] == t + 1),
        None => false,
    });
    let t5 = ts.clone();
    let rot = rotation(
        "rot",
        move |cx, k| {
            let t = t5(cx, k)?;
            let b_lo = k[FL1];
            let is_lo = k[T_REG] == t && k[B_REG] == b_lo;
            let is_hi = k[T_REG] == t + 1 && k[B_REG] == 0;
            if !(is_lo || is_hi) {
                return None;
            }
            let mut lo = *k;
            lo[T_REG] = t;
            lo[B_REG] = b_lo;
            let mut hi = *k;
            hi[T_REG] = t + 1;
            hi[B_REG] = 0;
            Some((lo, hi, alpha(cx, k)))
        },
        None,
    );
    c.push(flag_a.clone());
    c.push(flag_b.clone());
    c.push(oracle_a(true, at_next.clone()));
    c.push(hadamard("H_b", B_REG, Some(tag_ctrl.clone())));
    c.push(if dagger { rot.adjoint() } else { rot });
    c.push(hadamard("H_b", B_REG, Some(tag_ctrl)));
    c.push(oracle_a(false, at_next));
    c.push(flag_b);
    c.push(flag_a);
    c
}

/// O_L (right = false) adds the left block boundary L to L_REG, O_R adds R to R_REG.
/// A row-t state tagged |-> (resp. |+>) is itself the boundary; otherwise the boundary is found
/// by scanning for t' with t'+1 in S (or the ends -1 and T) over `k_len` iterations.
pub fn block_oracle(right: bool, k_len: usize) -> Circuit {
    let mut c = Circuit::new(if right { "O_R" } else { "O_L" });
    let direct_b = if right { 0 } else { 1 };
    let direct = pred(move |cx, k| cx.child(k).is_some() && k[FL1] == 1 && k[B_REG] == direct_b);
    let d2 = direct.clone();
    let search = pred(move |cx, k| cx.child(k).is_some() && !d2(cx, k));
    let edge = move |cx: &Ctx, k: &Key| {
        let end = if right { cx.child(k).map_or(i64::MIN, |ch| ch.t_len) } else { -1 };
        k[SCR] == end
    };
    let step = if right { 1 } else { -1 };

    let mut scan = Circuit::new("scan");
    scan.push(add_to(
        "scr_init",
        SCR,
        move |_, k| if right { k[T_REG] + k[FL1] } else { k[T_REG] - 1 },
        Some(search.clone()),
    ));
    for _ in 0..k_len {
        let s = search.clone();
        scan.push(oracle_s(|_, k| Some(k[SCR] + 1), FL2, Some(s.clone())));
        scan.push(xor_to("edge", FL2, edge, Some(s.clone())));
        scan.push(add_to("cnt", CNT, |_, _| 1, Some(and(Some(s.clone()), pred(|_, k| k[FL2] == 1)))));
        scan.push(xor_to("edge", FL2, edge, Some(s.clone())));
        scan.push(oracle_s(|_, k| Some(k[SCR] + 1), FL2, Some(s.clone())));
        scan.push(add_to("move", SCR, move |_, _| step, Some(and(Some(s), pred(|_, k| k[CNT] == 0)))));
    }

    let target = if right { R_REG } else { L_REG };
    let flag_ctrl = and(Some(has_child()), pred(|_, k| k[FL1] == 1));
    c.push(oracle_s(|_, k| Some(k[T_REG] + 1), FL1, None));
    c.push(hadamard("H_b", B_REG, Some(flag_ctrl.clone())));
    c.then(&scan);
    c.push(add_to("copy", target, |_, k| k[SCR], Some(search)));
    c.push(add_to("copy", target, |_, k| k[T_REG], Some(direct)));
    c.then(&scan.adjoint());
    c.push(hadamard("H_b", B_REG, Some(flag_ctrl)));
    c.push(oracle_s(|_, k| Some(k[T_REG] + 1), FL1, None));
    c
}

/// Rotation schedule of the kernel generator inside block (L, R), step i.
pub fn kernel_alpha(ch: &ChildCtx, l: i64, rr: i64, i: usize) -> f64 {
    let m2 = ch.m * ch.m;
    let g = (rr - l) as f64;
    let i = i as f64;
    if rr == ch.t_len {
        let tail = 1.0 / (ch.a * ch.a);
        if i == 0.0 {
            FRAC_1_SQRT_2 / (0.5 + (g - 1.0) / m2 + tail).sqrt()
        } else {
            (1.0 / ch.m) / ((g - i) / m2 + tail).sqrt()
        }
    } else if i == 0.0 {
        FRAC_1_SQRT_2 / (1.0 + (g - 1.0) / m2).sqrt()
    } else {
        (1.0 / ch.m) / (0.5 + (g - i) / m2).sqrt()
    }
}

/// Kernel generator: maps |q_{l-1}-1, ->|v> to the normalized kernel vector Phi_l(v) for
/// l >= 2 and is the identity on the first block.
pub fn kernel_generator(k_len: usize) -> Circuit {
    let mut c = Circuit::new("C_ker");
    let ol = block_oracle(false, k_len);
    let or = block_oracle(true, k_len);
    c.then(&ol);
    c.then(&or);
    for i in 0..k_len {
        let ts: TsFn = Rc::new(move |cx, k| {
            cx.child(k)?;
            let (l, rr) = (k[L_REG], k[R_REG]);
            (l >= 0 && l + (i as i64) < rr).then_some(l + i as i64)
        });
        let alpha: AlphaFn =
            Rc::new(move |cx, k| cx.child(k).map_or(1.0, |ch| kernel_alpha(ch, k[L_REG], k[R_REG], i)));
        c.then(&splitting_map("S", ts, alpha, false));
    }
    c.then(&or.adjoint());
    c.then(&ol.adjoint());
    c
}

/// 2 Pi_X - I with X = span of |->-tagged query rows: a bit flip on b from O_S, then -1.
pub fn refl_x() -> Circuit {
    let mut c = Circuit::new("R_X");
    c.push(oracle_s(|_, k| Some(k[T_REG] + 1), B_REG, None));
    c.push(phase("-I", |_, _| minus_one(), Some(has_child())));
    c
}

pub fn refl_kernel(k_len: usize) -> Circuit {
    let g = kernel_generator(k_len);
    let mut c = Circuit::new("R_ker");
    c.then(&g.adjoint());
    c.then(&refl_x());
    c.then(&g);
    c
}

/// 2 Pi_H(x) - I: on query rows the phase (-1)^{x_i + b}; identity elsewhere.
pub fn refl_hx() -> Circuit {
    let mut c = Circuit::new("R_H");
    let flag = pred(|_, k| k[FL1] == 1);
    c.push(oracle_s(|_, k| Some(k[T_REG] + 1), FL1, None));
    c.push(oracle_x(Some(flag.clone())));
    c.push(phase("Z_b", |_, k| if k[B_REG] == 1 { minus_one() } else { ONE }, Some(flag)));
    c.push(oracle_s(|_, k| Some(k[T_REG] + 1), FL1, None));
    c
}

/// Reflection about the all-zeros state, checked on t, b and the answer bit only.
pub fn refl_zero() -> Circuit {
    let mut c = Circuit::new("G");
    c.push(phase("G", |cx, k| if zero_data(cx, k) { ONE } else { minus_one() }, Some(has_child())));
    c
}

fn flip_answer_at_end() -> Op {
    let f: KeyFn = Rc::new(|cx, k| {
        let mut k2 = *k;
        if let Some(ch) = cx.child(k) {
            if k[T_REG] == ch.t_len {
                k2[Z_REG] ^= ch.ans_mask;
            }
        }
        k2
    });
    Op::new("X_ans", Kind::Perm { fwd: f.clone(), inv: f })
}

/// Prepares |w0>/||w0|| from |0, 0, Psi_0>: C_psi C_chi S_{T-1,alpha'} C_1^dag.
pub fn prepare_w0(k_len: usize) -> Circuit {
    let mut c = Circuit::new("C_w0");
    let c1 = rotation(
        "C_1",
        |cx, k| {
            let ch = cx.child(k)?;
            if k[B_REG] != 0 || (k[T_REG] != 0 && k[T_REG] != ch.t_len) {
                return None;
            }
            let mut lo = *k;
            lo[T_REG] = 0;
            let mut hi = *k;
            hi[T_REG] = ch.t_len;
            Some((lo, hi, ch.norms.0 / ch.n_norm.sqrt()))
        },
        None,
    );
    c.push(flip_answer_at_end());
    c.push(c1.adjoint());
    c.push(flip_answer_at_end());

    let last: TsFn = Rc::new(|cx, k| cx.child(k).map(|ch| ch.t_len - 1));
    let alpha_last: AlphaFn = Rc::new(|cx, k| {
        cx.child(k).map_or(1.0, |ch| {
            let (_, chi, phi) = ch.norms;
            phi / (chi * chi + phi * phi).sqrt()
        })
    });
    c.then(&splitting_map("S_T-1", last, alpha_last, false));

    for i in 0..k_len {
        let ts: TsFn = Rc::new(move |cx, k| {
            let ch = cx.child(k)?;
            let t = ch.t_len - 2 - i as i64;
            (t >= ch.qs - 1).then_some(t)
        });
        let alpha: AlphaFn = Rc::new(move |cx, k| {
            cx.child(k).map_or(1.0, |ch| {
                let rest = 0.5 + (ch.t_len - ch.qs - i as i64) as f64 / (ch.m * ch.m);
                (1.0 / ch.m) / rest.sqrt()
            })
        });
        c.then(&splitting_map("S_chi", ts, alpha, true));
    }
    for i in 0..k_len {
        let ts: TsFn = Rc::new(move |cx, k| {
            let ch = cx.child(k)?;
            ((i as i64) <= ch.q1 - 2).then_some(i as i64)
        });
        let alpha: AlphaFn = Rc::new(move |cx, k| {
            cx.child(k).map_or(1.0, |ch| {
                let rest = 0.5 + (ch.q1 - 1 - i as i64) as f64 / (ch.m * ch.m);
                (1.0 / ch.m) / rest.sqrt()
            })
        });
        c.then(&splitting_map("S_psi", ts, alpha, false));
    }
    c
}

pub fn refl_w0(k_len: usize) -> Circuit {
    let p = prepare_w0(k_len);
    let mut c = Circuit::new("R_w0");
    c.then(&p.adjoint());
    c.then(&refl_zero());
    c.then(&p);
    c
}

// ---------------------------------------------------------------------------
// Lifts to H^beta = H + |0^> + |1^>; HAT = 2 marks H.

/// Coefficients of |w0^beta> on (|0^>, |1^>, |w0>/||w0||).
pub fn w0_beta_coefficients(n: f64, beta: f64) -> [f64; 3] {
    let den = beta * beta + n;
    [n / den, beta / den.sqrt(), beta * n.sqrt() / den]
}

/// Coefficients of (|w0> - beta|0^>)/norm.
pub fn kernel_extra_coefficients(n: f64, beta: f64) -> [f64; 3] {
    let den = (n + beta * beta).sqrt();
    [-beta / den, 0.0, n.sqrt() / den]
}

pub type NormFn = Rc<dyn Fn(&Ctx, &Key) -> Option<f64>>;

/// What the beta-lift of a span program's evaluation unitary is assembled from.
#[derive(Clone)]
pub struct LiftParts {
    /// Maps the zero state of H to |w0>/||w0||.
    pub prep: Circuit,
    /// Marks the zero state; must not read HAT.
    pub zero: Pred,
    /// N = ||w0||^2 as seen from a key.
    pub norm: NormFn,
    pub refl_ker: Circuit,
    pub refl_hx: Circuit,
}

/// The pieces for P_A.
pub fn pa_parts(k_len: usize) -> LiftParts {
    LiftParts {
        prep: prepare_w0(k_len),
        zero: pred(zero_exact),
        norm: Rc::new(|cx, k| cx.child(k).map(|ch| ch.n_norm)),
        refl_ker: refl_kernel(k_len),
        refl_hx: refl_hx(),
    }
}

/// Prepares a0|0^> + a1|1^> + a2|w0>/||w0|| from the zero state of H^beta.
pub fn prepare_lifted(name: &str, coefficients: fn(f64, f64) -> [f64; 3], beta: f64, parts: &LiftParts) -> Circuit {
    let mut c = Circuit::new(name);
    let norm = parts.norm.clone();
    c.push(three_level("hat", HAT, move |cx, k| norm(cx, k).map(|n| coefficients(n, beta)), Some(parts.zero.clone())));
    c.then(&parts.prep.controlled(hat_is(2)));
    c
}

fn refl_zero_lifted(zero: &Pred) -> Circuit {
    let mut c = Circuit::new("G^beta");
    let zero = zero.clone();
    c.push(phase("G", move |cx, k| if k[HAT] == 2 && zero(cx, k) { ONE } else { minus_one() }, None));
    c
}

fn reflect_prepared(name: &str, prep: &Circuit, zero: &Pred) -> Circuit {
    let mut c = Circuit::new(name);
    c.then(&prep.adjoint());
    c.then(&refl_zero_lifted(zero));
    c.then(prep);
    c
}

pub fn refl_w0_beta(beta: f64, parts: &LiftParts) -> Circuit {
    reflect_prepared("R_w0beta", &prepare_lifted("C_w0beta", w0_beta_coefficients, beta, parts), &parts.zero)
}

/// Reflection about ker A^beta = ker A + span{w0 - beta 0^}.
pub fn refl_kernel_beta(beta: f64, parts: &LiftParts) -> Circuit {
    let mut c = Circuit::new("R_ker^beta");
    c.then(&reflect_prepared("R_extra", &prepare_lifted("C_extra", kernel_extra_coefficients, beta, parts), &parts.zero));
    c.then(&parts.refl_ker.controlled(hat_is(2)));
    c.push(phase("-I_hat", |_, _| minus_one(), Some(pred(|_, k| k[HAT] != 2))));
    c.push(phase("-I", |_, _| minus_one(), None));
    c
}

pub fn refl_hx_beta(parts: &LiftParts) -> Circuit {
    let mut c = Circuit::new("R_H^beta");
    c.then(&parts.refl_hx.controlled(hat_is(2)));
    c.push(phase("-I_0^", |_, _| minus_one(), Some(hat_is(0))));
    c
}

/// The input-independent factor -R_ker^beta R_w0^beta of the span unitary.
pub fn static_factor(beta: f64, parts: &LiftParts) -> Circuit {
    let mut c = Circuit::new("-R_ker R_w0");
    c.then(&refl_w0_beta(beta, parts));
    c.then(&refl_kernel_beta(beta, parts));
    c.push(phase("-I", |_, _| minus_one(), None));
    c
}

/// U = -R_H^beta R_ker^beta R_w0^beta.
pub fn span_unitary_circuit(beta: f64, parts: &LiftParts) -> Circuit {
    let mut c = static_factor(beta, parts);
    c.name = "U".into();
    c.then(&refl_hx_beta(parts));
    c
}
