import math

import pytest

from nodefrag import verify as V
from nodefrag.exponent import Stable, truncate


def test_joint_law_root_examples(stable):
    assert V.prop73_root(stable, 1.0, 0.0, 1.0) == pytest.approx(2 ** (2 / 3) - 1, rel=1e-10)
    assert V.prop73_root(stable, 1.0, 0.0, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert V.prop73_root(stable, 1.0, 0.7, 0.0) == pytest.approx(0.7, rel=1e-10)
    with pytest.raises(ValueError):
        V.prop73_root(stable, 0.0, 0.0, 0.0)


def test_truncated_targets(trunc):
    # frozen from an independent scipy computation
    for lam, val in [(0.5, 0.58555252161103), (1.0, 0.9114908331738392),
                     (2.0, 1.4111692764625916), (4.0, 2.1694038377163074)]:
        assert V.eq9_truncated_target(trunc, lam) == pytest.approx(val, rel=1e-8)
    assert V.prop73_truncated_target(trunc, 1.0, 0.0, 1.0) == pytest.approx(
        0.5055915454587744, rel=1e-8)
    assert V.dust_fraction_prediction(trunc, 1.0) == pytest.approx(0.16726201848331623, rel=1e-8)


def test_joint_target_without_cutting_is_length_law(trunc):
    # theta -> 0 leaves sigma_tagged = sigma: target is eq9 at lam = kappa
    assert V.prop73_truncated_target(trunc, 1e-12, 0.0, 1.0) == pytest.approx(
        V.eq9_truncated_target(trunc, 1.0), rel=1e-6)


def test_targets_converge(stable):
    for lam in (0.5, 4.0):
        errs = [abs(V.eq9_truncated_target(truncate(stable, e), lam) - lam ** (2 / 3))
                for e in (1e-2, 2.5e-3, 6.25e-4)]
        assert errs[0] > errs[1] > errs[2]


def test_bonferroni_floor():
    th = V.Thresholds.bonferroni(27)
    assert th.p_min == pytest.approx(0.05 / 27)
    assert 2 * (1 - 0.5 * (1 + math.erf(th.z / math.sqrt(2)))) == pytest.approx(0.05 / 27, rel=1e-6)
    loose = V.Thresholds.bonferroni(1)
    assert loose.p_min == 0.01 and loose.z == 3.0


def test_report_rows_and_determinism(stable):
    a = V.check_thm61(stable, n=1500, seed=3)
    b = V.check_thm61(stable, n=1500, seed=3)
    assert [r.as_csv() for r in a.rows] == [r.as_csv() for r in b.rows]
    assert all(r.source for r in a.rows if r.passed is not None)
    assert a.rows[0].as_csv()[-1] in ("pass", "fail")


def test_run_checks_unknown(stable):
    with pytest.raises(KeyError):
        V.run_checks(["nope"], stable)


def test_self_similarity_check_requires_stable(stable):
    from test_exponent import tempered
    with pytest.raises(TypeError):
        V.check_cor93(tempered(), n=10)
