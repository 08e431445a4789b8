"""Smoke test for the spanforge Python bindings."""

import json

import spanforge_py as sf


def main():
    names = sf.QueryAlgorithm.fixture_names()
    assert "read_first" in names, names

    alg = sf.QueryAlgorithm.fixture("read_first")
    again = sf.QueryAlgorithm.from_json(alg.to_json())
    assert again.truth_table() == alg.truth_table()

    report = alg.check()
    failed = [c for c in report["checks"] if not c["pass"]]
    assert not failed, failed

    sp = alg.span_program()
    program = sp.program
    assert abs(sp.analytic_witness_size() - program.minimal_witness_size()) < 1e-8
    assert sf.SpanProgram.from_json(program.to_json()).dim_h == program.dim_h

    compiled = sp.compile()
    for mode in ("spectral", "circuit"):
        assert compiled.decide_all(mode) == alg.truth_table(), mode

    assert sf.bin_gammas([1.0, 1.5, 3.0]) == [0, 2, 3]

    vt = sf.vt_search([alg, sf.QueryAlgorithm.fixture("or_two")])
    assert vt["all_correct"], vt["decisions"]

    csv = sf.bench()
    assert csv.count("\n") == 1 and csv.startswith("family,")

    result = sf.run_criterion("binning-calpha")
    assert result["pass"], result["details"]

    tol, digest = sf.tolerances()
    assert len(digest) == 16 and tol["unitarity"] > 0

    print(json.dumps({"fixtures": names, "vt_decisions": len(vt["decisions"]), "ok": True}))


if __name__ == "__main__":
    main()
