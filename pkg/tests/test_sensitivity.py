import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hev_madrl.errors import DegenerateCovariance, IdenticalSettings, PowerInfeasible
from hev_madrl.sensitivity import (
    DIMENSIONS,
    GroupResult,
    SettingProjector,
    SweepLog,
    convergence_episode,
    learning_rate_groups,
    pca_project,
    run_sweep,
    sensitivity_level,
    sensitivity_report,
    summarize_dimension,
)


def eigen_scores(X):
    """First-component scores from the covariance eigendecomposition of z-scored columns."""
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0)
    Z = (X - X.mean(axis=0)) / np.where(sd == 0, 1.0, sd)
    w, V = np.linalg.eigh(Z.T @ Z / (len(Z) - 1))
    v = V[:, np.argmax(w)]
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return Z @ v


def hand_level(yb, yw, xb, xw):
    return abs(yb - yw) * math.sqrt(sum(x * x for x in xb)) / (
        yb * math.sqrt(sum((a - b) ** 2 for a, b in zip(xb, xw)))) * 100.0


# ---------------------------------------------------------------------------
# projection


@pytest.mark.parametrize("seed", range(5))
def test_pca_matches_eigen_oracle(seed):
    X = np.random.default_rng(seed).normal(size=(5, 3)) * [1.0, 10.0, 0.1]
    np.testing.assert_allclose(pca_project(X), eigen_scores(X), rtol=0, atol=1e-9)


def test_two_settings_are_symmetric():
    s = pca_project([[1.0, 5.0], [3.0, -2.0]])
    assert s[0] == pytest.approx(-s[1], abs=1e-12)
    assert s[0] != 0


def test_axis_aligned_settings_score_along_that_axis():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    X = np.column_stack([x, np.full(4, 3.0)])
    s = pca_project(X)
    np.testing.assert_allclose(s, (x - x.mean()) / x.std(), atol=1e-12)


def test_identical_settings_are_degenerate():
    with pytest.raises(DegenerateCovariance):
        pca_project([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])
    with pytest.raises(DegenerateCovariance):
        pca_project([[1.0, 2.0]])


def test_projector_is_a_transformer():
    X = np.random.default_rng(0).normal(size=(6, 2))
    proj = SettingProjector().fit(X)
    np.testing.assert_allclose(proj.transform(X)[:, 0], pca_project(X), atol=1e-12)
    assert 0.5 <= proj.explained_variance_ratio_ <= 1.0


# ---------------------------------------------------------------------------
# sensitivity level


def test_level_matches_hand_calculation():
    assert sensitivity_level(2.0, 3.0, [3.0, 4.0], [0.0, 0.0]) == pytest.approx(50.0 * 5.0 / 5.0, rel=1e-15)
    assert sensitivity_level(2.0, 3.0, [3.0, 4.0], [3.0, 0.0]) == pytest.approx(0.5 * 5.0 / 4.0 * 100, rel=1e-15)


def test_ct_example_with_projected_learning_rate_settings():
    groups = learning_rate_groups()
    scores = dict(zip((g.label for g in groups), eigen_scores([g.setting for g in groups])))
    xb, xw = scores["2.3"], scores["2.5"]
    got = sensitivity_level(2434.72, 3456.10, xb, xw)
    assert got == pytest.approx(hand_level(2434.72, 3456.10, [xb], [xw]), rel=1e-9)
    # the scalar case reduces to |dy| / y_best * |x_b| / |x_b - x_w|
    assert got == pytest.approx(1021.38 / 2434.72 * abs(xb) / abs(xb - xw) * 100, rel=1e-9)


def test_equal_outcomes_have_zero_level():
    assert sensitivity_level(4.5, 4.5, [1.0], [2.0]) == 0.0


@given(st.floats(0.01, 100.0), st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_level_is_scale_invariant(c, xb, xw):
    if np.linalg.norm(np.subtract(xb, xw)) < 1e-3:
        return
    base = sensitivity_level(2.0, 3.0, xb, xw)
    scaled = sensitivity_level(2.0, 3.0, np.multiply(xb, c), np.multiply(xw, c))
    assert scaled == pytest.approx(base, rel=1e-9, abs=1e-12)


def test_level_guards():
    with pytest.raises(IdenticalSettings):
        sensitivity_level(1.0, 2.0, [1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        sensitivity_level(0.0, 2.0, [1.0], [2.0])


# ---------------------------------------------------------------------------
# convergence episode


def test_convergence_episode_of_a_step():
    rewards = [-10.0] * 20 + [-1.0] * 30
    # the 10-episode window is fully on the plateau at episode 30
    assert convergence_episode(rewards) == 30


def test_convergence_episode_constant_and_short():
    assert convergence_episode([-3.0] * 15) == 10
    with pytest.raises(ValueError):
        convergence_episode([-1.0] * 5)


# ---------------------------------------------------------------------------
# sweeps and reports


def fake_train(overrides, seed):
    lr = overrides["actor_lr"]
    if lr < 5e-5:
        raise PowerInfeasible("diverged")
    n = 20 + int(1e4 * lr)
    return [-(n - i) if i < n else 0.0 for i in range(60)] + [-1.0] * 10, 4.0 + 1e2 * lr


class FakeClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        self.t += 1.5
        return self.t


def test_sweep_records_indicators_and_marks_failures():
    log = run_sweep(learning_rate_groups(), fake_train, seeds=(0, 1), clock=FakeClock())
    by = {g.label: g for g in log.groups}
    assert not by["2.5"].converged and "PowerInfeasible" in by["2.5"].error
    assert by["2.1"].ct == 1.5 and by["2.1"].fe == pytest.approx(4.01)
    report = sensitivity_report(log)
    assert "non_convergent\t2.5" in report
    assert "LearningRates\tFE\t2.1" in report


def test_one_group_sweep_has_no_level():
    log = run_sweep(learning_rate_groups()[:1], fake_train, clock=FakeClock())
    report = sensitivity_report(log)
    assert "LearningRates" not in report
    assert report.splitlines()[-1] == "ranking\tdimension\tmax_L_s_percent"


def test_same_setting_groups_surface_identical_settings():
    g = dict(dimension="PolicyNoise", setting=(0.2, -4.0), seeds=[0], ct=1.0, ce=20.0)
    groups = [GroupResult("a", fe=4.5, **g), GroupResult("b", fe=4.7, **g)]
    with pytest.raises(IdenticalSettings):
        summarize_dimension(groups)
    with pytest.raises(IdenticalSettings):
        sensitivity_report(SweepLog(groups))


def test_report_is_a_pure_function_of_the_log(tmp_path):
    log = run_sweep([g for d in sorted(DIMENSIONS) for g in DIMENSIONS[d]()][:9], _any_train,
                    clock=FakeClock(), host={"machine": "x"})
    log.write(tmp_path / "log.json")
    again = SweepLog.read(tmp_path / "log.json")
    assert again.groups == log.groups and again.host == log.host
    assert sensitivity_report(again) == sensitivity_report(log)


def _any_train(overrides, seed):
    k = int(1e4 * sum(abs(v) for v in overrides.values())) % 7
    return [-(10.0 - min(i, 10 + k)) for i in range(40)], 4.0 + 0.1 * k


def test_ranking_orders_dimensions_by_largest_level():
    mk = lambda label, dim, x, fe: GroupResult(label, dim, x, [0], 1.0, 10.0, fe)
    log = SweepLog([mk("a", "A", (1.0,), 4.0), mk("b", "A", (2.0,), 4.4),
                    mk("c", "B", (1.0,), 4.0), mk("d", "B", (2.0,), 8.0)])
    lines = sensitivity_report(log).splitlines()
    i = lines.index("ranking\tdimension\tmax_L_s_percent")
    assert [ln.split("\t")[1] for ln in lines[i + 1:i + 3]] == ["B", "A"]
