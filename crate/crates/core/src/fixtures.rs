//! Shipped fixture algorithms.
//!
//! Each fixture reads a phase oracle through an index register. A phase oracle applied to a
//! uniform index superposition only reveals relative signs, so every fixture pins one
//! reference bit to 0 and restricts its domain accordingly. All initial states sit at
//! basis index 0 (index 0, answer 0).

use crate::circuit_ir::{QueryAlgorithm, Step, TruthTable};
use crate::linalg::{self, r, CMat, ONE};

const W: usize = 2;

/// (index operator) tensor I_W.
fn on_index(m: &CMat) -> CMat {
    linalg::kron(m, &linalg::identity(W))
}

fn hadamard_pair(n: usize, a: usize, b: usize) -> CMat {
    let h = 1.0 / 2f64.sqrt();
    let mut m = linalg::identity(n);
    m[(a, a)] = r(h);
    m[(a, b)] = r(h);
    m[(b, a)] = r(h);
    m[(b, b)] = r(-h);
    m
}

fn permutation(dim: usize, f: impl Fn(usize) -> usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    for z in 0..dim {
        m[(f(z), z)] = ONE;
    }
    m
}

/// Flip the answer bit when the index equals `i`.
fn cnot_index(n: usize, i: usize) -> CMat {
    permutation(n * W, |z| if z / W == i { z ^ 1 } else { z })
}

fn domain_with_reference(n: usize, reference: usize) -> Vec<Vec<bool>> {
    TruthTable::all_inputs(n).into_iter().filter(|x| !x[reference]).collect()
}

/// read_first: f(x) = x_1 with reference bit x_2 = 0. T = 4, S = 1.
pub fn read_first() -> (QueryAlgorithm, TruthTable) {
    let h = on_index(&hadamard_pair(2, 0, 1));
    let steps = vec![Step::Unitary(h.clone()), Step::Query, Step::Unitary(h), Step::Unitary(cnot_index(2, 1))];
    let alg = QueryAlgorithm::new(2, W, 0, steps, 0, 0.0).expect("valid fixture");
    let table = TruthTable::from_fn(2, domain_with_reference(2, 1), |x| x[0]);
    (alg, table)
}

/// or_two: OR of two bits under the promise that at most one is set, via one Grover iteration.
/// T = 5, S = 1.
pub fn or_two() -> (QueryAlgorithm, TruthTable) {
    let h = on_index(&hadamard_pair(2, 0, 1));
    let half = r(0.5);
    let plus = CMat::from_element(2, 2, half);
    let diffusion = on_index(&(plus * r(2.0) - linalg::identity(2)));
    let steps = vec![
        Step::Unitary(h.clone()),
        Step::Query,
        Step::Unitary(diffusion),
        Step::Unitary(h),
        Step::Unitary(cnot_index(2, 1)),
    ];
    let alg = QueryAlgorithm::new(2, W, 0, steps, 0, 0.0).expect("valid fixture");
    let domain = vec![vec![false, false], vec![false, true], vec![true, false]];
    let table = TruthTable::from_fn(2, domain, |x| x[0] || x[1]);
    (alg, table)
}

/// parity: f(x) = x_2 xor x_3 with reference bit x_1 = 0, two queries. T = 9, S = 2.
pub fn parity() -> (QueryAlgorithm, TruthTable) {
    let n = 3;
    let h01 = on_index(&hadamard_pair(n, 0, 1));
    let h02 = on_index(&hadamard_pair(n, 0, 2));
    // Controlled on answer = 1, swap index 0 and 1: returns the index to the reference.
    let reset = permutation(n * W, |z| {
        let (i, a) = (z / W, z % W);
        if a == 1 && i < 2 {
            (1 - i) * W + a
        } else {
            z
        }
    });
    let steps = vec![
        Step::Unitary(h01.clone()),
        Step::Query,
        Step::Unitary(h01),
        Step::Unitary(cnot_index(n, 1)),
        Step::Unitary(reset),
        Step::Unitary(h02.clone()),
        Step::Query,
        Step::Unitary(h02),
        Step::Unitary(cnot_index(n, 2)),
    ];
    let alg = QueryAlgorithm::new(n, W, 0, steps, 0, 0.0).expect("valid fixture");
    let table = TruthTable::from_fn(n, domain_with_reference(n, 0), |x| x[1] ^ x[2]);
    (alg, table)
}

/// noisy: read_first followed by an answer rotation with flip probability 0.1. T = 5, S = 1.
pub fn noisy_read_first() -> (QueryAlgorithm, TruthTable) {
    noisy_read_first_with(0.1)
}

/// read_first followed by an answer rotation flipping the output with probability `eps`.
pub fn noisy_read_first_with(eps: f64) -> (QueryAlgorithm, TruthTable) {
    let (base, table) = read_first();
    let s = eps.sqrt();
    let cth = (1.0 - eps).sqrt();
    let ry = CMat::from_row_slice(2, 2, &[r(cth), r(-s), r(s), r(cth)]);
    let rot = linalg::kron(&linalg::identity(2), &ry);
    let mut steps = base.steps.clone();
    steps.push(Step::Unitary(rot));
    let alg = QueryAlgorithm::new(2, W, 0, steps, 0, eps).expect("valid fixture");
    (alg, table)
}

/// All four fixtures with short names.
pub fn all() -> Vec<(&'static str, QueryAlgorithm, TruthTable)> {
    let (a, ta) = read_first();
    let (b, tb) = or_two();
    let (c, tc) = parity();
    let (d, td) = noisy_read_first();
    vec![("read_first", a, ta), ("or_two", b, tb), ("parity", c, tc), ("noisy", d, td)]
}

/// Fixture by short name.
pub fn by_name(name: &str) -> Option<(QueryAlgorithm, TruthTable)> {
    all().into_iter().find(|(n, _, _)| *n == name).map(|(_, a, t)| (a, t))
}

/// A 1-query "read bit k" algorithm with `t_pad` identity steps around the query,
/// used for time-scaling families. Reference bit is the last one.
pub fn read_bit_padded(n: usize, k: usize, pad_before: usize, pad_after: usize) -> (QueryAlgorithm, TruthTable) {
    assert!(k + 1 < n, "reference bit must differ from the read bit");
    let refi = n - 1;
    let id = linalg::identity(n * W);
    let h = on_index(&hadamard_pair(n, refi, k));
    let mut steps = Vec::new();
    for _ in 0..pad_before {
        steps.push(Step::Unitary(id.clone()));
    }
    steps.push(Step::Unitary(swap_index(n, 0, refi)));
    steps.push(Step::Unitary(h.clone()));
    steps.push(Step::Query);
    steps.push(Step::Unitary(h));
    steps.push(Step::Unitary(swap_index(n, 0, refi)));
    for _ in 0..pad_after {
        steps.push(Step::Unitary(id.clone()));
    }
    // After the query block the index holds 0 (bit clear) or k mapped through the swap.
    let marked = if k == 0 { refi } else { k };
    steps.push(Step::Unitary(cnot_index(n, marked)));
    let alg = QueryAlgorithm::new(n, W, 0, steps, 0, 0.0).expect("valid fixture");
    let domain = domain_with_reference(n, refi);
    let table = TruthTable::from_fn(n, domain, move |x| x[k]);
    (alg, table)
}

fn swap_index(n: usize, a: usize, b: usize) -> CMat {
    permutation(n * W, |z| {
        let (i, w) = (z / W, z % W);
        let j = if i == a {
            b
        } else if i == b {
            a
        } else {
            i
        };
        j * W + w
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_compute_their_tables() {
        for (name, alg, table) in all() {
            let (err, _) = alg.max_error(&table).unwrap();
            let want = if name == "noisy" { 0.1 } else { 0.0 };
            assert!((err - want).abs() < 1e-12, "{name}: error {err}");
        }
    }

    #[test]
    fn shapes() {
        let (a, _) = read_first();
        assert_eq!((a.t_len(), a.query_set()), (4, vec![2]));
        let (b, _) = or_two();
        assert_eq!((b.t_len(), b.query_set()), (5, vec![2]));
        let (c, tc) = parity();
        assert_eq!((c.t_len(), c.query_set()), (9, vec![2, 7]));
        assert_eq!(tc.rows.len(), 4);
        let (d, _) = noisy_read_first();
        assert_eq!(d.t_len(), 5);
    }

    #[test]
    fn padded_reader_is_exact() {
        for k in 0..2 {
            let (alg, table) = read_bit_padded(3, k, 2, 3);
            let (err, _) = alg.max_error(&table).unwrap();
            assert!(err < 1e-12, "k = {k}");
        }
    }
}
