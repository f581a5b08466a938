import numpy as np
import pytest
from oracles import straight_line_step

from hev_madrl.cycles import DriveCycle
from hev_madrl.env import TRACE_COLUMNS, HevEnv, Observation, fuel_economy, rollout
from hev_madrl.errors import EpisodeNotFinished, InvalidInitialSoc, SteppedAfterDone
from hev_madrl.plant import PlantParameters, PowertrainModel

STILL = DriveCycle("still", np.zeros(5))
CRUISE = DriveCycle("cruise", np.full(100, 10.0))


def test_reset_sets_soc_and_is_repeatable():
    env = HevEnv()
    a = env.reset(CRUISE, 0.28)
    b = env.reset(CRUISE, 0.28)
    assert a.soc == 0.28
    assert a == b


@pytest.mark.parametrize("soc", [0.0, 0.95, 0.10])
def test_reset_rejects_out_of_range_soc(soc):
    with pytest.raises(InvalidInitialSoc):
        HevEnv().reset(CRUISE, soc)


def test_observation_layout():
    obs = Observation(300.0, 0.3, 12.0)
    np.testing.assert_array_equal(obs.as_array(), [300.0, 0.3])
    np.testing.assert_array_equal(obs.normalized(1500.0), [0.2, 0.3])


def test_null_step_is_idle_loss_only():
    env = HevEnv()
    env.reset(STILL, 0.5)
    out = env.step((0.0, 0.0))
    assert out.soc == 0.5
    assert out.loss_batt == 0.0
    assert out.p_loss == out.loss_eng
    assert out.p_loss == pytest.approx(env.model.engine_map(1000.0, 0.0) * 43.5e3)


def test_step_after_done_and_early_finalize():
    env = HevEnv()
    env.reset(DriveCycle("two", [0.0, 0.0]), 0.5)
    with pytest.raises(EpisodeNotFinished):
        env.finalize()
    env.step((0.0, 0.0))
    out = env.step((0.0, 0.0))
    assert out.done
    with pytest.raises(SteppedAfterDone):
        env.step((0.0, 0.0))


def test_loss_identity_and_time_advance():
    env = HevEnv()
    env.reset(DriveCycle("ramp", np.linspace(0, 20, 30)), 0.4)
    k = 0
    while not env.done:
        out = env.step((0.4, 0.5))
        k += 1
        assert out.p_loss == out.loss_eng + out.loss_batt
        assert env.time == k * 1.0
    assert k == 30


def test_distance_and_zero_distance_episode():
    env = HevEnv()
    m = rollout(env, lambda obs: (0.3, 1.0), CRUISE, 0.5)
    assert m.distance == pytest.approx(1000.0)
    assert rollout(env, lambda obs: (0.3, 1.0), STILL, 0.5).fuel_l_per_100km is None


def test_fuel_economy_unit_conversion():
    assert fuel_economy(500.0, 10_000.0) == pytest.approx(6.711, abs=5e-4)
    assert fuel_economy(500.0, 10_000.0, density=500.0) == pytest.approx(10.0)


def test_episode_fuel_matches_chained_oracle():
    # traction-only trace: accelerate from rest, then cruise
    v = np.concatenate([np.linspace(0.0, 15.0, 16), np.full(40, 15.0)])
    cycle = DriveCycle("traction", v)
    actions = [(0.5, 0.6) if k % 2 else (0.3, 0.8) for k in range(len(v))]
    env = HevEnv()
    env.reset(cycle, 0.5)
    for act in actions:
        env.step(act)
    metrics = env.finalize()
    soc, fuel = 0.5, 0.0
    for k, (u1, u2) in enumerate(actions):
        out = straight_line_step(soc, u1, u2, v[k], cycle.accel(k))
        soc = out["soc"]
        fuel += out["fuel_rate"]
    assert metrics.fuel_g == pytest.approx(fuel, rel=1e-6)
    assert metrics.soc_end == pytest.approx(soc, rel=1e-9)


def test_soc_violation_terminates_or_clamps():
    model = PowertrainModel.default(PlantParameters(soc_min=0.45, soc_max=0.9))
    cycle = DriveCycle("fast", np.full(400, 30.0))
    env = HevEnv(model)
    m = rollout(env, lambda obs: (0.0, 1.0), cycle, 0.46)
    assert m.soc_violation and m.steps < 400
    env = HevEnv(model, terminate_on_soc_violation=False)
    m = rollout(env, lambda obs: (0.0, 1.0), cycle, 0.46)
    assert m.soc_violation and m.steps == 400 and m.soc_end == 0.45


def test_out_of_range_actions_are_clamped_and_flagged():
    env = HevEnv()
    env.reset(CRUISE, 0.5)
    out = env.step((2.0, 1.0))
    assert out.diagnostics["action_clamped"]


def test_trace_export(tmp_path):
    env = HevEnv(record_trace=True)
    rollout(env, lambda obs: (0.3, 1.0), DriveCycle("c", np.linspace(0, 5, 10)), 0.5)
    env.write_trace(tmp_path / "t.tsv")
    lines = (tmp_path / "t.tsv").read_text().splitlines()
    assert lines[0].split("\t") == list(TRACE_COLUMNS)
    assert len(lines) == 11
