//! Sparse register-level simulator. A basis state is an array of integer registers;
//! circuits are ordered lists of primitive ops with optional classical controls.

use crate::circuit_ir::{Bits, CleanAlgorithm, Counters, Step};
use crate::linalg::{r, CMat, CVec, C64, ONE, ZERO};
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

pub const NREG: usize = 14;
pub type Key = [i64; NREG];

/// Time step t (may range over -1..T+1 transiently).
pub const T_REG: usize = 0;
/// Tag b on query rows.
pub const B_REG: usize = 1;
/// Algorithm basis index z = i |W| + j.
pub const Z_REG: usize = 2;
/// 0 and 1 select |0^> and |1^>; 2 selects H.
pub const HAT: usize = 3;
/// Child label for concurrent access.
pub const LBL: usize = 4;
pub const FL1: usize = 5;
pub const FL2: usize = 6;
pub const L_REG: usize = 7;
pub const R_REG: usize = 8;
pub const SCR: usize = 9;
pub const CNT: usize = 10;
pub const FL3: usize = 11;
/// Bin index and in-bin offset used while preparing the OR weight state.
pub const BIN: usize = 12;
pub const OFF: usize = 13;
pub const AUX: [usize; 9] = [FL1, FL2, L_REG, R_REG, SCR, CNT, FL3, BIN, OFF];

pub fn key(t: i64, b: i64, z: i64) -> Key {
    let mut k = [0; NREG];
    k[T_REG] = t;
    k[B_REG] = b;
    k[Z_REG] = z;
    k[HAT] = 2;
    k
}

pub fn aux_clear(k: &Key) -> bool {
    AUX.iter().all(|&i| k[i] == 0)
}

/// Classical data about one algorithm that the oracles and rotation schedules read.
#[derive(Debug, Clone)]
pub struct ChildCtx {
    pub t_len: i64,
    pub queries: Vec<usize>,
    pub steps: Vec<Option<CMat>>,
    pub w: usize,
    pub dim: usize,
    pub ans_mask: i64,
    pub answer_qubit: usize,
    pub ans0: i64,
    pub init: i64,
    pub m: f64,
    pub a: f64,
    pub q1: i64,
    pub qs: i64,
    /// ||psi||, ||chi||, ||phi|| of the minimal witness decomposition and N.
    pub norms: (f64, f64, f64),
    pub n_norm: f64,
    pub x: Option<Bits>,
}

impl ChildCtx {
    pub fn new(alg: &CleanAlgorithm, m: f64, a: f64, norms_sq: (f64, f64, f64)) -> Self {
        let steps = alg
            .base
            .steps
            .iter()
            .map(|s| match s {
                Step::Unitary(u) => Some(u.clone()),
                Step::Query => None,
            })
            .collect();
        let q = &alg.query_set;
        ChildCtx {
            t_len: alg.t_len() as i64,
            queries: q.clone(),
            steps,
            w: alg.workspace_dim(),
            dim: alg.dim(),
            ans_mask: 1 << alg.base.answer_qubit,
            answer_qubit: alg.base.answer_qubit,
            ans0: alg.base.answer_bit(alg.base.initial_index) as i64,
            init: alg.base.initial_index as i64,
            m,
            a,
            q1: q[0] as i64,
            qs: *q.last().expect("at least one query") as i64,
            norms: (norms_sq.0.sqrt(), norms_sq.1.sqrt(), norms_sq.2.sqrt()),
            n_norm: norms_sq.0 + norms_sq.1 + norms_sq.2,
            x: None,
        }
    }

    pub fn is_query(&self, t: i64) -> bool {
        t >= 1 && self.queries.binary_search(&(t as usize)).is_ok()
    }

    pub fn ans(&self, z: i64) -> i64 {
        (((z as usize % self.w) >> self.answer_qubit) & 1) as i64
    }

    /// floor(3T/S) + 1 iterations cover every block.
    pub fn loop_len(&self) -> usize {
        (3 * self.t_len as usize) / self.queries.len() + 1
    }
}

/// Evaluation context: children indexed by the label register minus `label_base`.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub children: Vec<ChildCtx>,
    pub label_base: i64,
}

impl Ctx {
    pub fn single(child: ChildCtx) -> Self {
        Ctx { children: vec![child], label_base: 0 }
    }

    pub fn child(&self, k: &Key) -> Option<&ChildCtx> {
        let idx = k[LBL] - self.label_base;
        if idx < 0 {
            return None;
        }
        self.children.get(idx as usize)
    }

    pub fn loop_len(&self) -> usize {
        self.children.iter().map(|c| c.loop_len()).max().unwrap_or(1)
    }

    pub fn set_input(&mut self, xs: Vec<Bits>) {
        for (c, x) in self.children.iter_mut().zip(xs) {
            c.x = Some(x);
        }
    }
}

pub type Pred = Rc<dyn Fn(&Ctx, &Key) -> bool>;
pub type KeyFn = Rc<dyn Fn(&Ctx, &Key) -> Key>;
pub type ArgFn = Rc<dyn Fn(&Ctx, &Key) -> Option<i64>>;
pub type PhaseFn = Rc<dyn Fn(&Ctx, &Key) -> C64>;
pub type GroupFn = Rc<dyn Fn(&Ctx, &Key) -> Option<(Vec<Key>, Rc<CMat>)>>;

#[derive(Clone)]
pub enum Kind {
    /// U_t on the Z register with t read from the time register; identity on queries.
    OracleA { dagger: bool },
    /// Flip register `target` when arg is a query position.
    OracleS { arg: ArgFn, target: usize },
    /// (-1)^{x_i} with i = z / |W|.
    OracleX,
    Phase(PhaseFn),
    Perm { fwd: KeyFn, inv: KeyFn },
    /// A small unitary acting on a group of basis states.
    Local { group: GroupFn, dagger: bool },
}

#[derive(Clone)]
pub struct Op {
    pub name: String,
    pub kind: Kind,
    pub ctrl: Option<Pred>,
}

impl Op {
    pub fn new(name: impl Into<String>, kind: Kind) -> Self {
        Op { name: name.into(), kind, ctrl: None }
    }

    pub fn adjoint(&self) -> Op {
        let kind = match &self.kind {
            Kind::OracleA { dagger } => Kind::OracleA { dagger: !dagger },
            Kind::OracleS { .. } | Kind::OracleX => self.kind.clone(),
            Kind::Phase(f) => {
                let f = f.clone();
                Kind::Phase(Rc::new(move |c, k| f(c, k).conj()))
            }
            Kind::Perm { fwd, inv } => Kind::Perm { fwd: inv.clone(), inv: fwd.clone() },
            Kind::Local { group, dagger } => Kind::Local { group: group.clone(), dagger: !dagger },
        };
        Op { name: self.name.clone(), kind, ctrl: self.ctrl.clone() }
    }

    fn active(&self, ctx: &Ctx, k: &Key) -> bool {
        self.ctrl.as_ref().is_none_or(|p| p(ctx, k))
    }
}

pub fn and(a: Option<Pred>, b: Pred) -> Pred {
    match a {
        None => b,
        Some(a) => Rc::new(move |c, k| a(c, k) && b(c, k)),
    }
}

#[derive(Clone, Default)]
pub struct Circuit {
    pub name: String,
    pub ops: Vec<Op>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub name: String,
    pub ops: Vec<String>,
    pub counters: Counters,
}

impl Circuit {
    pub fn new(name: impl Into<String>) -> Self {
        Circuit { name: name.into(), ops: Vec::new() }
    }

    pub fn push(&mut self, op: Op) {
        self.ops.push(op);
    }

    pub fn then(&mut self, other: &Circuit) {
        self.ops.extend(other.ops.iter().cloned());
    }

    pub fn adjoint(&self) -> Circuit {
        Circuit { name: format!("{}^dag", self.name), ops: self.ops.iter().rev().map(Op::adjoint).collect() }
    }

    pub fn controlled(&self, p: Pred) -> Circuit {
        let ops = self
            .ops
            .iter()
            .map(|op| Op { name: op.name.clone(), kind: op.kind.clone(), ctrl: Some(and(op.ctrl.clone(), p.clone())) })
            .collect();
        Circuit { name: self.name.clone(), ops }
    }

    /// Oracle and gate counts of one application (a controlled call counts once).
    pub fn counters(&self) -> Counters {
        let mut c = Counters::default();
        for op in &self.ops {
            match op.kind {
                Kind::OracleA { .. } => c.o_a += 1,
                Kind::OracleS { .. } => c.o_s += 1,
                Kind::OracleX => c.o_x += 1,
                _ => c.gates += 1,
            }
        }
        c
    }

    pub fn trace(&self) -> Trace {
        Trace { name: self.name.clone(), ops: self.ops.iter().map(|o| o.name.clone()).collect(), counters: self.counters() }
    }

    pub fn apply(&self, ctx: &Ctx, state: &State) -> State {
        let mut s = state.clone();
        for op in &self.ops {
            s = apply_op(op, ctx, &s);
        }
        s
    }
}

/// Sparse state vector over register keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct State {
    pub amps: HashMap<Key, C64>,
}

impl State {
    pub fn basis(k: Key) -> Self {
        let mut amps = HashMap::new();
        amps.insert(k, ONE);
        State { amps }
    }

    pub fn add(&mut self, k: Key, v: C64) {
        *self.amps.entry(k).or_insert(ZERO) += v;
    }

    pub fn get(&self, k: &Key) -> C64 {
        self.amps.get(k).copied().unwrap_or(ZERO)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|v| v.norm_sqr()).sum()
    }

    pub fn prune(&mut self) {
        self.amps.retain(|_, v| v.norm_sqr() > 1e-30);
    }
}

fn apply_op(op: &Op, ctx: &Ctx, s: &State) -> State {
    let mut out = State { amps: HashMap::with_capacity(s.amps.len()) };
    match &op.kind {
        Kind::OracleA { dagger } => {
            for (k, &v) in &s.amps {
                let u = if op.active(ctx, k) {
                    ctx.child(k).and_then(|c| {
                        let t = k[T_REG];
                        if t >= 1 && t <= c.t_len && (k[Z_REG] as usize) < c.dim {
                            c.steps[t as usize - 1].as_ref()
                        } else {
                            None
                        }
                    })
                } else {
                    None
                };
                match u {
                    None => out.add(*k, v),
                    Some(u) => {
                        let z = k[Z_REG] as usize;
                        for y in 0..u.nrows() {
                            let m = if *dagger { u[(z, y)].conj() } else { u[(y, z)] };
                            if m != ZERO {
                                let mut k2 = *k;
                                k2[Z_REG] = y as i64;
                                out.add(k2, m * v);
                            }
                        }
                    }
                }
            }
        }
        Kind::OracleS { arg, target } => {
            for (k, &v) in &s.amps {
                let mut k2 = *k;
                if op.active(ctx, k) {
                    if let (Some(c), Some(t)) = (ctx.child(k), arg(ctx, k)) {
                        if c.is_query(t) {
                            k2[*target] ^= 1;
                        }
                    }
                }
                out.add(k2, v);
            }
        }
        Kind::OracleX => {
            for (k, &v) in &s.amps {
                let mut v = v;
                if op.active(ctx, k) {
                    if let Some(c) = ctx.child(k) {
                        if let Some(x) = &c.x {
                            let i = (k[Z_REG] as usize) / c.w;
                            if i < x.len() && x[i] {
                                v = -v;
                            }
                        }
                    }
                }
                out.add(*k, v);
            }
        }
        Kind::Phase(f) => {
            for (k, &v) in &s.amps {
                let p = if op.active(ctx, k) { f(ctx, k) } else { ONE };
                out.add(*k, p * v);
            }
        }
        Kind::Perm { fwd, .. } => {
            for (k, &v) in &s.amps {
                let k2 = if op.active(ctx, k) { fwd(ctx, k) } else { *k };
                out.add(k2, v);
            }
        }
        Kind::Local { group, dagger } => {
            let mut done: HashSet<Key> = HashSet::new();
            for (k, &v) in &s.amps {
                let g = if op.active(ctx, k) { group(ctx, k) } else { None };
                match g {
                    None => out.add(*k, v),
                    Some((keys, m)) => {
                        if !done.insert(keys[0]) {
                            continue;
                        }
                        let inp: Vec<C64> = keys.iter().map(|kk| s.get(kk)).collect();
                        for (row, kk) in keys.iter().enumerate() {
                            let mut acc = ZERO;
                            for (col, a) in inp.iter().enumerate() {
                                let e = if *dagger { m[(col, row)].conj() } else { m[(row, col)] };
                                acc += e * a;
                            }
                            out.add(*kk, acc);
                        }
                    }
                }
            }
        }
    }
    out.prune();
    out
}

// ---------------------------------------------------------------------------
// Primitive builders

pub fn pred(f: impl Fn(&Ctx, &Key) -> bool + 'static) -> Pred {
    Rc::new(f)
}

pub fn oracle_a(dagger: bool, ctrl: Pred) -> Op {
    Op { name: if dagger { "O_A^dag".into() } else { "O_A".into() }, kind: Kind::OracleA { dagger }, ctrl: Some(ctrl) }
}

pub fn oracle_s(arg: impl Fn(&Ctx, &Key) -> Option<i64> + 'static, target: usize, ctrl: Option<Pred>) -> Op {
    Op { name: "O_S".into(), kind: Kind::OracleS { arg: Rc::new(arg), target }, ctrl }
}

pub fn oracle_x(ctrl: Option<Pred>) -> Op {
    Op { name: "O_x".into(), kind: Kind::OracleX, ctrl }
}

pub fn phase(name: &str, f: impl Fn(&Ctx, &Key) -> C64 + 'static, ctrl: Option<Pred>) -> Op {
    Op { name: name.into(), kind: Kind::Phase(Rc::new(f)), ctrl }
}

/// Register arithmetic reg += delta(key), where delta does not read reg.
pub fn add_to(name: &str, reg: usize, delta: impl Fn(&Ctx, &Key) -> i64 + 'static, ctrl: Option<Pred>) -> Op {
    let d = Rc::new(delta);
    let d2 = d.clone();
    let fwd: KeyFn = Rc::new(move |c, k| {
        let mut k2 = *k;
        k2[reg] += d(c, k);
        k2
    });
    let inv: KeyFn = Rc::new(move |c, k| {
        let mut k2 = *k;
        k2[reg] -= d2(c, k);
        k2
    });
    Op { name: name.into(), kind: Kind::Perm { fwd, inv }, ctrl }
}

/// reg ^= bit(key), where bit does not read reg.
pub fn xor_to(name: &str, reg: usize, bit: impl Fn(&Ctx, &Key) -> bool + 'static, ctrl: Option<Pred>) -> Op {
    let f: KeyFn = Rc::new(move |c, k| {
        let mut k2 = *k;
        if bit(c, k) {
            k2[reg] ^= 1;
        }
        k2
    });
    Op { name: name.into(), kind: Kind::Perm { fwd: f.clone(), inv: f }, ctrl }
}

/// Hadamard on a binary register.
pub fn hadamard(name: &str, reg: usize, ctrl: Option<Pred>) -> Op {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let m = Rc::new(CMat::from_row_slice(2, 2, &[r(h), r(h), r(h), r(-h)]));
    let group: GroupFn = Rc::new(move |_, k| {
        if k[reg] != 0 && k[reg] != 1 {
            return None;
        }
        let mut k0 = *k;
        k0[reg] = 0;
        let mut k1 = *k;
        k1[reg] = 1;
        Some((vec![k0, k1], m.clone()))
    });
    Op { name: name.into(), kind: Kind::Local { group, dagger: false }, ctrl }
}

/// Two-level rotation |lo> -> a|lo> + s|hi>, |hi> -> -s|lo> + a|hi>.
/// `pair` returns (lo, hi, a) for members of a pair.
pub fn rotation(name: &str, pair: impl Fn(&Ctx, &Key) -> Option<(Key, Key, f64)> + 'static, ctrl: Option<Pred>) -> Op {
    let group: GroupFn = Rc::new(move |c, k| {
        let (lo, hi, a) = pair(c, k)?;
        let a = a.clamp(-1.0, 1.0);
        let s = (1.0 - a * a).max(0.0).sqrt();
        Some((vec![lo, hi], Rc::new(CMat::from_row_slice(2, 2, &[r(a), r(-s), r(s), r(a)]))))
    });
    Op { name: name.into(), kind: Kind::Local { group, dagger: false }, ctrl }
}

/// Real unitary on a 3-level register mapping |2> to `col(key)` (a unit vector): the
/// Householder reflection exchanging e_2 and col.
pub fn three_level(name: &str, reg: usize, col: impl Fn(&Ctx, &Key) -> Option<[f64; 3]> + 'static, ctrl: Option<Pred>) -> Op {
    let group: GroupFn = Rc::new(move |c, k| {
        if !(0..=2).contains(&k[reg]) {
            return None;
        }
        let a = CVec::from_vec(col(c, k)?.iter().map(|&v| r(v)).collect());
        let mut u = -a;
        u[2] += ONE;
        let m = if u.norm() < 1e-14 {
            CMat::identity(3, 3)
        } else {
            CMat::identity(3, 3) - &u * u.adjoint() * r(2.0 / u.norm_squared())
        };
        let ks = (0..3)
            .map(|v| {
                let mut kk = *k;
                kk[reg] = v;
                kk
            })
            .collect();
        Some((ks, Rc::new(m)))
    });
    Op { name: name.into(), kind: Kind::Local { group, dagger: false }, ctrl }
}

/// Hadamard on bit `bit` of an integer register.
pub fn hadamard_bit(name: &str, reg: usize, bit: u32, ctrl: Option<Pred>) -> Op {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let m = Rc::new(CMat::from_row_slice(2, 2, &[r(h), r(h), r(h), r(-h)]));
    let group: GroupFn = Rc::new(move |_, k| {
        let mut k0 = *k;
        k0[reg] &= !(1 << bit);
        let mut k1 = k0;
        k1[reg] |= 1 << bit;
        Some((vec![k0, k1], m.clone()))
    });
    Op { name: name.into(), kind: Kind::Local { group, dagger: false }, ctrl }
}

/// Real Householder reflection on register values 0..col.len() exchanging |0> and `col`.
pub fn state_prep(name: &str, reg: usize, col: Vec<f64>, ctrl: Option<Pred>) -> Op {
    let len = col.len();
    let a = CVec::from_vec(col.iter().map(|&v| r(v)).collect());
    let mut u = -a;
    u[0] += ONE;
    let m = Rc::new(if u.norm() < 1e-14 {
        CMat::identity(len, len)
    } else {
        CMat::identity(len, len) - &u * u.adjoint() * r(2.0 / u.norm_squared())
    });
    let group: GroupFn = Rc::new(move |_, k| {
        if !(0..len as i64).contains(&k[reg]) {
            return None;
        }
        let ks = (0..len as i64)
            .map(|v| {
                let mut kk = *k;
                kk[reg] = v;
                kk
            })
            .collect();
        Some((ks, m.clone()))
    });
    Op { name: name.into(), kind: Kind::Local { group, dagger: false }, ctrl }
}

/// Matrix of a circuit on the span of `basis`. Columns follow `basis`; rows follow `basis`
/// then any other keys reached (leakage), which are listed in the second return value.
pub fn extract_matrix(c: &Circuit, ctx: &Ctx, basis: &[Key]) -> (CMat, Vec<Key>) {
    let index: HashMap<Key, usize> = basis.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let mut extra: Vec<Key> = Vec::new();
    let mut extra_idx: HashMap<Key, usize> = HashMap::new();
    let mut cols: Vec<Vec<(usize, C64)>> = Vec::with_capacity(basis.len());
    for k in basis {
        let out = c.apply(ctx, &State::basis(*k));
        let mut col = Vec::new();
        for (kk, v) in out.amps {
            let row = match index.get(&kk) {
                Some(&i) => i,
                None => {
                    let n = extra_idx.len();
                    let e = *extra_idx.entry(kk).or_insert_with(|| {
                        extra.push(kk);
                        n
                    });
                    basis.len() + e
                }
            };
            col.push((row, v));
        }
        cols.push(col);
    }
    let mut m = CMat::zeros(basis.len() + extra.len(), basis.len());
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col {
            m[(i, j)] += v;
        }
    }
    (m, extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_ctx() -> Ctx {
        Ctx { children: vec![], label_base: 0 }
    }

    #[test]
    fn adjoint_inverts() {
        let mut c = Circuit::new("t");
        c.push(hadamard("h", B_REG, None));
        c.push(rotation(
            "rot",
            |_, k| {
                let lo = key(0, k[B_REG], k[Z_REG]);
                let hi = key(1, k[B_REG], k[Z_REG]);
                (k[T_REG] <= 1).then_some((lo, hi, 0.3))
            },
            None,
        ));
        c.push(add_to("inc", SCR, |_, k| k[T_REG] + 1, None));
        c.push(three_level("hat", HAT, |_, _| Some([0.6, 0.0, 0.8]), None));
        let ctx = empty_ctx();
        let basis: Vec<Key> = (0..2).flat_map(|t| (0..2).map(move |b| key(t, b, 0))).collect();
        let mut full = c.clone();
        full.then(&c.adjoint());
        let (m, extra) = extract_matrix(&full, &ctx, &basis);
        assert!(extra.is_empty());
        let dev = (&m - CMat::identity(4, 4)).norm();
        assert!(dev < 1e-12, "{dev} {m}");
    }

    #[test]
    fn three_level_column() {
        let mut c = Circuit::new("t");
        c.push(three_level("hat", HAT, |_, _| Some([0.6, 0.0, 0.8]), None));
        let out = c.apply(&empty_ctx(), &State::basis(key(0, 0, 0)));
        let mut k0 = key(0, 0, 0);
        k0[HAT] = 0;
        assert!((out.get(&k0) - r(0.6)).norm() < 1e-12);
        assert!((out.get(&key(0, 0, 0)) - r(0.8)).norm() < 1e-12);
    }

    #[test]
    fn counters_count_controlled_calls_once() {
        let mut c = Circuit::new("t");
        c.push(oracle_a(false, pred(|_, k| k[T_REG] == 1)));
        c.push(oracle_s(|_, k| Some(k[T_REG]), FL1, None));
        c.push(oracle_x(None));
        c.push(phase("z", |_, _| r(-1.0), None));
        let k = c.controlled(pred(|_, _| true)).counters();
        assert_eq!((k.o_a, k.o_s, k.o_x, k.gates), (1, 1, 1, 1));
    }
}
