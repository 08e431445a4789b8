use proptest::prelude::*;
use spanforge::circuit_ir::{enforce_query_uniformity, make_clean, verify_clean, Counters, QueryAlgorithm, Step, TruthTable};
use spanforge::fixtures;
use spanforge::linalg::{self, c, CMat, CVec};
use spanforge::or_compose::{bin_count_bound, bin_gammas, boost_repetitions, pad_queries};
use spanforge::span_core::{
    approx_negative_witness, minimal_witness, positive_witness_size, rescale, BlockLayout, Label, Size, SpanProgram,
};

fn cmat(rows: usize, cols: usize, vals: &[(f64, f64)]) -> CMat {
    CMat::from_iterator(rows, cols, vals.iter().map(|&(a, b)| c(a, b)))
}

fn unitary(dim: usize, vals: &[(f64, f64)]) -> CMat {
    let m = cmat(dim, dim, vals) + CMat::identity(dim, dim) * c(1e-3, 0.0);
    m.qr().q()
}

fn entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
}

/// A random program whose target lies in the column span.
fn program() -> impl Strategy<Value = (SpanProgram, usize)> {
    (1usize..=3, 2usize..=5, 1usize..=2).prop_flat_map(|(n, dv, per)| {
        let dh = 2 * n * per + 1;
        (entries(dv * dh), entries(dh), Just((n, dv, per)))
    })
    .prop_map(|(a, w, (n, dv, per))| {
        let mut labels = vec![Label::True];
        for i in 0..n {
            for b in [false, true] {
                labels.extend(std::iter::repeat(Label::Input { i, b }).take(per));
            }
        }
        let a = cmat(dv, labels.len(), &a);
        let w = CVec::from_iterator(labels.len(), w.iter().map(|&(x, y)| c(x, y)));
        let tau = &a * w;
        (SpanProgram::new(BlockLayout { n, labels }, a, tau).unwrap(), n)
    })
    .prop_filter("nonzero target", |(p, _)| p.tau.norm() > 1e-3)
}

fn inputs(n: usize) -> Vec<Vec<bool>> {
    TruthTable::all_inputs(n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn circuit_json_round_trips(u1 in entries(16), u2 in entries(16), eps in 0.0..0.19f64) {
        let steps = vec![Step::Unitary(unitary(4, &u1)), Step::Query, Step::Unitary(unitary(4, &u2))];
        let alg = QueryAlgorithm::new(2, 2, 0, steps, 0, eps).unwrap();
        let again = QueryAlgorithm::from_json(&alg.to_json(None), &Default::default()).unwrap().0;
        prop_assert_eq!(&again.steps.len(), &alg.steps.len());
        for x in inputs(2) {
            let (a, b) = (alg.output_probabilities(&x).unwrap(), again.output_probabilities(&x).unwrap());
            prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.0 + a.1 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn clean_pipeline_lengths_and_verification(n in 3usize..=4, k in 0usize..2, pre in 0usize..5, post in 0usize..5) {
        let (alg, table) = fixtures::read_bit_padded(n, k, pre, post);
        let clean = make_clean(&alg, &table).unwrap();
        prop_assert_eq!(clean.t_len(), 2 * alg.t_len() + 1);
        prop_assert_eq!(clean.s_len(), 2 * alg.query_set().len());
        let rep = verify_clean(&enforce_query_uniformity(&clean), &table);
        prop_assert!(rep.all_pass(), "{:?}", rep);
    }

    #[test]
    fn padding_keeps_the_function(pre in 0usize..4, post in 0usize..4, b in 1usize..4) {
        let (alg, table) = fixtures::read_bit_padded(3, 0, pre, post);
        let padded = pad_queries(&alg, b).unwrap();
        for (x, fx) in &table.rows {
            let p1 = padded.output_probabilities(x).unwrap().1;
            prop_assert!((p1 - *fx as u8 as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn minimal_witness_is_pinv_solution((p, _) in program()) {
        let (w, nn) = minimal_witness(&p).unwrap();
        prop_assert!((&p.a * &w - &p.tau).norm() < 1e-8);
        prop_assert!((w.norm_squared() - nn).abs() < 1e-8);
        let ker = linalg::null_space(&p.a, 1e-10);
        prop_assert!((ker.adjoint() * &w).norm() < 1e-8);
    }

    #[test]
    fn positive_witnesses_dominate_the_minimal_one((p, n) in program()) {
        let (_, nn) = minimal_witness(&p).unwrap();
        for x in inputs(n) {
            let w = positive_witness_size(&p, &x).unwrap();
            if let (Size::Finite(s), Some(v)) = (w.size, w.vec) {
                prop_assert!(s + 1e-8 >= nn);
                prop_assert!((&p.a * &v - &p.tau).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn negative_witnesses_obey_cauchy_schwarz((p, n) in program(), lam in 0.01..0.4f64) {
        let (_, nn) = minimal_witness(&p).unwrap();
        for x in inputs(n) {
            let loose = approx_negative_witness(&p, &x, lam, 1.0).unwrap();
            let tight = approx_negative_witness(&p, &x, lam / 2.0, 1.0).unwrap();
            if let (Size::Finite(s), Some(v)) = (&loose.size, &loose.vec) {
                prop_assert!((p.tau.dotc(v) - c(1.0, 0.0)).norm() < 1e-6);
                prop_assert!(s * nn >= 1.0 - 1e-6);
                prop_assert!(loose.achieved_error <= lam * (1.0 + 1e-6));
            }
            if let (Size::Finite(a), Size::Finite(b)) = (loose.size, tight.size) {
                prop_assert!(a <= b * (1.0 + 1e-6) + 1e-9, "loosening the cap raised the cost: {} > {}", a, b);
            }
        }
    }

    #[test]
    fn rescaled_w0_is_unit((p, _) in program(), beta in 0.2..6.0f64) {
        let pb = rescale(&p, beta).unwrap();
        prop_assert!((pb.w0_beta.norm() - 1.0).abs() < 1e-9);
        prop_assert!((&pb.program.a * &pb.w0_beta - &pb.program.tau).norm() < 1e-8);
    }

    #[test]
    fn binning_invariants(mut g in prop::collection::vec(1e-3..1e3f64, 1..=128)) {
        g.sort_by(f64::total_cmp);
        let bins = bin_gammas(&g).unwrap();
        prop_assert_eq!(bins[0], 0);
        prop_assert_eq!(*bins.last().unwrap(), g.len());
        for w in bins.windows(2) {
            let size = w[1] - w[0];
            prop_assert!(size.is_power_of_two());
            let top = g[w[1] - 1];
            prop_assert!(g[w[0]..w[1]].iter().all(|&v| v * 2.0 >= top));
        }
        prop_assert!(bins.len() - 1 <= bin_count_bound(g[g.len() - 1] / g[0], g.len()));
    }

    #[test]
    fn counters_scale_linearly(a in 0u64..1000, b in 0u64..1000, k in 0u64..50) {
        let x = Counters { o_x: a, o_a: b, o_s: a + b, gates: 2 * a };
        let mut sum = Counters::default();
        for _ in 0..k {
            sum.add(&x);
        }
        prop_assert_eq!(sum, x.scaled(k));
    }

    #[test]
    fn boosting_is_monotone(eps in 0.001..0.3f64, t in 1e-4..0.1f64) {
        let r = boost_repetitions(eps, t).unwrap();
        prop_assert!(r % 2 == 1);
        if let Some(r2) = boost_repetitions(eps, t / 2.0) {
            prop_assert!(r2 >= r);
        }
    }
}
