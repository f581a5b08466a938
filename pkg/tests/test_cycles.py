from collections import Counter
from itertools import permutations

import numpy as np
import pytest

from hev_madrl.cycles import (
    BUILTIN,
    CycleSource,
    DriveCycle,
    PhaseSpec,
    build_learning_cycle,
    builtin_cycle,
    default_phases,
    learning_cycle_order,
    load_cycle,
    parse_cycle,
    save_cycle,
)
from hev_madrl.errors import NonPositiveDuration, ParseError, VelocityOutOfRange

# 99.9th percentile of chi-square with 23 degrees of freedom
CHI2_23_999 = 49.728


def test_minimal_two_sample_cycle(tmp_path):
    (tmp_path / "c.txt").write_text("0;0\n")
    cycle = load_cycle(tmp_path / "c.txt")
    assert cycle.duration == 2.0
    assert not cycle.samples.any()


def test_kmh_header_is_converted():
    cycle = parse_cycle("# units: kmh\n36\n36\n")
    assert cycle.samples[0] == pytest.approx(10.0)


def test_invalid_traces():
    with pytest.raises(VelocityOutOfRange):
        parse_cycle("0\n-1\n")
    with pytest.raises(NonPositiveDuration):
        parse_cycle("3\n")
    with pytest.raises(ParseError):
        parse_cycle("0\nfast\n")
    with pytest.raises(ParseError):
        parse_cycle("# units: mph\n0\n1\n")
    with pytest.raises(VelocityOutOfRange):
        parse_cycle("0\n20\n")


def test_forward_difference_acceleration():
    cycle = DriveCycle("c", [0.0, 1.0, 3.0, 3.0])
    np.testing.assert_array_equal(cycle.accelerations, [1.0, 2.0, 0.0, 0.0])
    assert [cycle.accel(k) for k in range(4)] == [1.0, 2.0, 0.0, 0.0]


def test_save_load_round_trip(tmp_path):
    cycle = builtin_cycle("udds")
    save_cycle(cycle, tmp_path / "u.txt", units="kmh")
    back = load_cycle(tmp_path / "u.txt")
    np.testing.assert_allclose(back.samples, cycle.samples, atol=1e-12)
    assert back.source is CycleSource.UDDS


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_builtin_cycles_are_valid(name):
    cycle = builtin_cycle(name)
    assert len(cycle) > 200
    assert cycle.source.value != "Custom"
    assert cycle.samples[0] == 0.0


def test_default_learning_cycle_length_in_range():
    phases = default_phases()
    raw = sum(p.end - p.start for p in phases)
    cycle = build_learning_cycle(phases, seed=0)
    assert len(cycle) == raw + 3 * 3
    assert 200 <= len(cycle) <= 400


def test_identity_order_without_bridges_reconstructs_segments():
    phases = default_phases()
    cycle = build_learning_cycle(phases, order=[0, 1, 2, 3], bridge_seconds=0)
    np.testing.assert_array_equal(cycle.samples, np.concatenate([p.segment for p in phases]))
    assert [p.label for p in phases] == ["Phase1", "Phase2", "Phase3", "Phase4"]


def test_bridges_are_linear_ramps():
    phases = default_phases()
    cycle = build_learning_cycle(phases, order=[0, 1, 2, 3], bridge_seconds=3)
    n0 = len(phases[0].segment)
    a, b = phases[0].segment[-1], phases[1].segment[0]
    np.testing.assert_allclose(cycle.samples[n0:n0 + 3], a + (b - a) * np.arange(1, 4) / 4)


def test_same_seed_same_cycle():
    phases = default_phases()
    a = build_learning_cycle(phases, seed=7)
    b = build_learning_cycle(phases, seed=7)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert learning_cycle_order(7) == learning_cycle_order(7)


def test_orders_are_uniform_over_permutations():
    counts = Counter(tuple(learning_cycle_order(seed)) for seed in range(10_000))
    assert set(counts) <= set(permutations(range(4)))
    expected = 10_000 / 24
    chi2 = sum((counts.get(p, 0) - expected) ** 2 / expected for p in permutations(range(4)))
    assert chi2 < CHI2_23_999


def test_phase_and_order_validation():
    cycle = builtin_cycle("udds")
    with pytest.raises(ValueError):
        PhaseSpec(cycle, 10, 10, "Phase1")
    phases = default_phases()
    with pytest.raises(ValueError):
        build_learning_cycle(phases[:3], seed=0)
    with pytest.raises(ValueError):
        build_learning_cycle(phases, order=[0, 0, 1, 2])
