from kamkit.lemmas import run_all


def test_quick_suite_passes():
    rep = run_all(seed=3, quick=True)
    assert rep["pass"] and rep["rng"] == "Philox"
    names = {r["name"] for r in rep["suites"]}
    assert {"weight_chain", "series_bounds", "operator_norms"} <= names
    for r in rep["suites"]:
        assert r["checked"] > 0 and r["violations"] == 0 and r["worst_ratio"] <= 1 + 1e-12


def test_quick_suite_deterministic():
    a, b = run_all(seed=5, quick=True), run_all(seed=5, quick=True)
    strip = [(r["name"], r["checked"], r["worst_ratio"]) for r in a["suites"]]
    assert strip == [(r["name"], r["checked"], r["worst_ratio"]) for r in b["suites"]]
