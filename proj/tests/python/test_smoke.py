import math

import pytest

import marginbv


def logistic(v):
    return math.log1p(math.exp(-v))


def test_catalogue():
    assert set(marginbv.loss_names()) >= {"squared", "logistic", "exponential"}
    assert marginbv.loss_value("logistic", 0.0) == pytest.approx(math.log(2))
    assert marginbv.gradient_symmetry("squared") == pytest.approx(-4)
    assert marginbv.gradient_symmetry("exponential") is None
    assert marginbv.loss_info("logistic")["c"] == pytest.approx(-1)


def test_probability_side():
    assert marginbv.link("logistic", 0.8) == pytest.approx(math.log(4))
    assert marginbv.min_risk("logistic", 0.5) == pytest.approx(math.log(2))
    assert marginbv.conjugate("logistic", 0.0) == pytest.approx(math.log(2), abs=1e-9)
    assert marginbv.divergence("exponential", 1, 0) == pytest.approx(math.exp(-1))
    assert marginbv.centroid("exponential", [0, 2]) == pytest.approx(math.asinh(math.sinh(2) / 2))
    assert marginbv.centroid("logistic", [0, 2]) == pytest.approx(1)


def test_decompose_two_models():
    report = marginbv.decompose("logistic", [[1.0], [3.0]], [1], posteriors=[0.7])
    by_id = {d["theorem_id"]: d for d in report["decompositions"]}
    mv = by_id["margin_variance"]
    assert mv["expected_risk"] == pytest.approx(0.5 * (logistic(1) + logistic(3)))
    assert mv["components"]["central_risk"] == pytest.approx(logistic(2))
    variance = mv["components"]["margin_variance"]
    assert by_id["gradient_symmetric_bias_variance"]["components"]["variance"] == pytest.approx(variance)
    assert by_id["probability_bias_variance"]["components"]["variance"] == pytest.approx(variance)
    assert all(d["within_tolerance"] for d in report["decompositions"])


def test_inapplicable_and_errors():
    report = marginbv.decompose("exponential", [[0.0], [2.0]], [-1])
    ids = [n["theorem_id"] for n in report["inapplicable"]]
    assert "gradient_symmetric_bias_variance" in ids
    with pytest.raises(KeyError):
        marginbv.loss_value("hinge", 0.0)
    with pytest.raises(ValueError):
        marginbv.decompose("logistic", [[1.0]], [3])


def test_commands(tmp_path):
    code, report = marginbv.verify("logistic", suite="symmetry")
    assert code == 0 and report["passed"]

    code, a = marginbv.diagnose(synthetic="two_gaussians:n=200", models=4, iterations=40, threads=1)
    _, b = marginbv.diagnose(synthetic="two_gaussians:n=200", models=4, iterations=40, threads=3)
    assert code == 0 and a == b

    members = tmp_path / "members.csv"
    members.write_text("point_id,member_1,member_2,label\na,0,2,1\nb,1,3,-1\n")
    code, report = marginbv.ensemble(members, loss="squared")
    assert code == 0
    assert report["decompositions"][0]["theorem_id"] == "margin_ambiguity"
    with pytest.raises(ValueError):
        marginbv.ensemble(members, loss="exponential", combiner="additive")
