import math

import pytest
from pydantic import ValidationError

from error_handler import InvalidInput
from geometry import are_conflicting, free_flow_exit_time, free_flow_merge_time, zone_of
from models import IntersectionConfig, Zone


@pytest.mark.parametrize("t_entry, overrides, expected", [
    (0.0, {}, 30.7692),
    (10.0, {"L_C": 13.0}, 11.0),
    (5.0, {"v_max": 10.0}, 45.0),
])
def test_free_flow_merge_time(t_entry, overrides, expected):
    cfg = IntersectionConfig(**overrides)
    assert free_flow_merge_time(t_entry, cfg) == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize("t_entry, overrides, expected", [
    (0.0, {}, 33.0769),
    (0.0, {"L_C": 10.0, "L_M": 3.0, "v_max": 13.0, "delta_a": 4.0}, 1.0),
    (7.0, {"L_C": 390.0, "L_M": 10.0, "v_max": 10.0}, 47.0),
])
def test_free_flow_exit_time(t_entry, overrides, expected):
    cfg = IntersectionConfig(**overrides)
    assert free_flow_exit_time(t_entry, cfg) == pytest.approx(expected, abs=1e-4)


def test_exit_follows_merge_by_the_merging_zone(cfg):
    for t in (0.0, 12.5, 300.0):
        assert free_flow_exit_time(t, cfg) - free_flow_merge_time(t, cfg) == pytest.approx(cfg.L_M / cfg.v_max)


@pytest.mark.parametrize("position, zone", [
    (0.0, Zone.CZ),
    (399.999, Zone.CZ),
    (400.0, Zone.MZ),
    (429.999, Zone.MZ),
    (430.0, Zone.EZ),
    (829.999, Zone.EZ),
    (830.0, Zone.EXITED),
    (5000.0, Zone.EXITED),
])
def test_zone_boundaries_are_left_closed(cfg, position, zone):
    assert zone_of(position, cfg) is zone


def test_zone_is_monotone_in_position(cfg):
    order = [Zone.CZ, Zone.MZ, Zone.EZ, Zone.EXITED]
    ranks = [order.index(zone_of(p, cfg)) for p in range(0, 900, 7)]
    assert ranks == sorted(ranks)


@pytest.mark.parametrize("position", [-0.1, math.nan, math.inf])
def test_zone_rejects_bad_positions(cfg, position):
    with pytest.raises(InvalidInput):
        zone_of(position, cfg)


@pytest.mark.parametrize("j, l, expected", [
    (1, 3, False),
    (2, 4, False),
    (1, 2, True),
    (3, 4, True),
    (2, 2, False),
])
def test_are_conflicting(cfg, j, l, expected):
    assert are_conflicting(j, l, cfg) is expected


def test_conflict_relation_is_symmetric(cfg):
    for j in range(1, 5):
        for l in range(1, 5):
            assert are_conflicting(j, l, cfg) == are_conflicting(l, j, cfg)


@pytest.mark.parametrize("j, l", [(0, 1), (1, 5)])
def test_are_conflicting_rejects_unknown_lanes(cfg, j, l):
    with pytest.raises(InvalidInput):
        are_conflicting(j, l, cfg)


def test_config_parses_flat_strings():
    cfg = IntersectionConfig(W="2, 1,1,1", non_conflicting_pairs="1:3,2:4")
    assert cfg.W == (2.0, 1.0, 1.0, 1.0)
    assert cfg.non_conflicting_pairs == ((1, 3), (2, 4))
    assert cfg.steps_per_block == 30
    assert cfg.alert_steps == 6
    assert cfg.T_delay == 30.0


@pytest.mark.parametrize("overrides", [
    {"T_RL": 15.2},
    {"T_alert": 0.7},
    {"T_alert": 15.0},
    {"L_C": -1.0},
    {"W": (1.0, 1.0)},
    {"delta_a": 400.0},
    {"non_conflicting_pairs": ((1, 3), (3, 4))},
])
def test_config_rejects_broken_invariants(overrides):
    with pytest.raises(ValidationError):
        IntersectionConfig(**overrides)
