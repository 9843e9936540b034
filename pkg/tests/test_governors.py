import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvfslab.errors import ConfigError
from dvfslab.governors import (Conservative, Ondemand, OndemandConfig, SchedutilLike, make_builtin,
                               ondemand_next, schedutil_like_next, static_governor)
from dvfslab.power import JETSON2, JETSON_FULL, FrequencyTable
from dvfslab.workload import Observation
from oracles import ondemand_oracle

T3 = FrequencyTable.from_pairs([(0.307, 0.8), (0.893, 1.1), (1.479, 1.1)])
D = OndemandConfig()


def obs(u):
    return Observation(0.307, u, u, 0.02)


def test_ondemand_examples():
    assert ondemand_next(0.9, D, JETSON2).frequency == 1.479
    assert ondemand_next(0.0, D, JETSON2).frequency == 0.307
    assert ondemand_next(0.5, D, T3).frequency == 0.893
    assert ondemand_next(0.5, OndemandConfig(powersave_bias=0.6), T3).frequency == 0.307


def test_ondemand_config_bounds():
    with pytest.raises(ValueError):
        OndemandConfig(up_threshold=1.2)
    with pytest.raises(ValueError):
        OndemandConfig(powersave_bias=-0.1)


tables = st.lists(st.integers(100_000, 3_000_000), min_size=2, max_size=8, unique=True).map(
    lambda khz: FrequencyTable.from_pairs([(k / 1e6, 1.0) for k in sorted(khz)]))


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), tables)
def test_ondemand_matches_oracle(u, th, bias, table):
    got = ondemand_next(u, OndemandConfig(th, bias), table)
    assert table.index_of(got) == ondemand_oracle(u, th, bias, list(table.frequencies))


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_ondemand_monotone_and_bias_one(u1, u2, th):
    cfg = OndemandConfig(th, 0.2)
    lo, hi = sorted((u1, u2))
    assert ondemand_next(lo, cfg, JETSON_FULL) <= ondemand_next(hi, cfg, JETSON_FULL)
    assert ondemand_next(hi, OndemandConfig(th, 1.0), JETSON_FULL) == JETSON_FULL.min_level


def test_conservative_steps():
    g = Conservative()
    assert g.start(T3) == T3[0]
    assert g.next(obs(1.0), T3) == T3[1]
    g.current = 2
    assert g.next(obs(1.0), T3) == T3[2]
    g.reset()
    seq = [T3.index_of(g.next(obs(u), T3)) for u in (1.0, 0.0, 1.0, 0.0)]
    assert seq == [1, 0, 1, 0]
    assert T3.index_of(g.next(obs(0.5), T3)) == 0


def test_schedutil_like():
    assert schedutil_like_next(0.0, T3) == T3.min_level
    assert schedutil_like_next(0.8, T3) == T3.max_level
    assert schedutil_like_next(0.4, T3).frequency == 0.307


def test_static_governors():
    assert static_governor("performance").next(obs(0.0), JETSON_FULL) == JETSON_FULL.max_level
    assert static_governor("powersave").next(obs(1.0), JETSON_FULL) == JETSON_FULL.min_level
    assert static_governor(0.922).next(obs(1.0), JETSON_FULL).frequency == 0.922


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), tables)
def test_all_governors_stay_in_table(u, table):
    for gov in (Ondemand(), Conservative(), SchedutilLike(), static_governor("performance")):
        gov.reset()
        assert table.find(gov.next(obs(u), table).frequency) is not None


def test_make_builtin():
    g = make_builtin("ondemand", up_threshold="0.7", powersave_bias="0.3")
    assert g.cfg == OndemandConfig(0.7, 0.3)
    assert make_builtin("conservative", step="2").step == 2
    assert make_builtin("pinned:1.037").next(obs(0), JETSON_FULL).frequency == 1.037
    with pytest.raises(ConfigError):
        make_builtin("interactive")
    with pytest.raises(ConfigError):
        make_builtin("ondemand", up_threshold="lots")
