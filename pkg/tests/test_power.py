import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvfslab.power import (DEFAULT_PARAMS, JETSON2, JETSON_FULL, FrequencyTable, FreqLevel,
                           PowerParams, calibrate, dynamic_power, energy_of_trace, instant_power,
                           static_power)

LO, HI = JETSON2.min_level, JETSON2.max_level


def test_table_invariants():
    assert JETSON2.f_min == 0.307 and JETSON2.f_max == 1.479
    assert len(JETSON_FULL) == 13
    with pytest.raises(ValueError):
        FrequencyTable.from_pairs([(1.0, 1.0)])
    with pytest.raises(ValueError):
        FrequencyTable.from_pairs([(1.0, 1.0), (1.0, 1.1)])
    with pytest.raises(ValueError):
        FrequencyTable.from_pairs([(1.0, 1.1), (2.0, 1.0)])
    with pytest.raises(ValueError):
        FreqLevel(0.0, 1.0)


def test_floor_and_find():
    t = FrequencyTable.from_pairs([(0.307, 0.8), (0.893, 1.1), (1.479, 1.1)])
    assert t.floor(0.892).frequency == 0.307
    assert t.floor(0.893).frequency == 0.893
    assert t.floor(0.1).frequency == 0.307
    assert t.floor(5.0).frequency == 1.479
    assert t.find(0.893) == 1 and t.find(0.9) is None
    with pytest.raises(KeyError):
        t.index_of(FreqLevel(0.9, 1.1))


def test_zero_utilization_has_no_dynamic_term():
    for lv in JETSON2:
        p = instant_power(lv, 0.0, DEFAULT_PARAMS)
        assert dynamic_power(lv, 0.0, DEFAULT_PARAMS) == 0.0
        assert p == pytest.approx(DEFAULT_PARAMS.base_board_power + static_power(lv, DEFAULT_PARAMS))


def test_dynamic_doubles_with_frequency_at_fixed_voltage():
    a, b = FreqLevel(0.5, 1.0), FreqLevel(1.0, 1.0)
    assert dynamic_power(b, 1.0, DEFAULT_PARAMS) == pytest.approx(2 * dynamic_power(a, 1.0, DEFAULT_PARAMS))


def test_calibration_hits_idle_and_busy_ratios():
    idle = instant_power(LO, 0, DEFAULT_PARAMS) / instant_power(HI, 0, DEFAULT_PARAMS)
    busy = instant_power(HI, 1, DEFAULT_PARAMS) / instant_power(LO, 1, DEFAULT_PARAMS)
    assert abs(idle - 0.64) <= 0.01
    assert busy == pytest.approx(2.0)
    # an independent evaluation of the formula
    p = DEFAULT_PARAMS
    hand = p.base_board_power + p.static_current_per_volt * 1.1 ** 2 + p.switch_activity_capacitance * 1.1 ** 2 * 1.479
    assert instant_power(HI, 1.0, p) == pytest.approx(hand, rel=1e-12)


def test_static_power_grows_with_voltage():
    assert static_power(LO, DEFAULT_PARAMS) < static_power(HI, DEFAULT_PARAMS)
    with pytest.raises(ValueError):
        PowerParams(0.1, 0.0, 0.5)
    with pytest.raises(ValueError):
        calibrate(JETSON2, idle_ratio=0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.5, 1.5), st.floats(0, 1), st.floats(0.01, 0.5))
def test_power_monotone_in_each_argument(f, v, u, d):
    p = DEFAULT_PARAMS
    base = instant_power(FreqLevel(f, v), u, p)
    assert instant_power(FreqLevel(f + d, v), u, p) >= base
    assert instant_power(FreqLevel(f, v + d), u, p) > base
    assert instant_power(FreqLevel(f, v), min(1.0, u + d), p) >= base


def test_single_segment_energy():
    rep = energy_of_trace([(HI, 0.7, 0.4)], DEFAULT_PARAMS)
    assert rep.total_joules == pytest.approx(instant_power(HI, 0.7, DEFAULT_PARAMS) * 0.4)
    assert rep.total_joules == pytest.approx(rep.dynamic_joules + rep.static_joules + rep.base_joules)
    assert sum(rep.shares().values()) == pytest.approx(1.0, abs=1e-9)


def test_empty_trace_is_zero():
    rep = energy_of_trace([], DEFAULT_PARAMS)
    assert rep.total_joules == 0.0 and rep.duration == 0.0
    with pytest.raises(ValueError):
        energy_of_trace([(HI, 0.5, -1.0)], DEFAULT_PARAMS)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(0, 1), st.floats(0, 0.1)), min_size=1, max_size=30),
       st.integers(0, 30))
def test_energy_additive_and_order_free(segs, cut):
    trace = [(HI if hi else LO, u, t) for hi, u, t in segs]
    whole = energy_of_trace(trace, DEFAULT_PARAMS)
    cut = min(cut, len(trace))
    split = energy_of_trace(trace[:cut], DEFAULT_PARAMS) + energy_of_trace(trace[cut:], DEFAULT_PARAMS)
    rev = energy_of_trace(trace[::-1], DEFAULT_PARAMS)
    assert split.total_joules == pytest.approx(whole.total_joules, rel=1e-12, abs=1e-15)
    assert rev.total_joules == pytest.approx(whole.total_joules, rel=1e-12, abs=1e-15)


def test_same_cycles_cheaper_at_low_level():
    cycles = 0.5  # giga-cycles on one busy core
    t_lo, t_hi = cycles / LO.frequency, cycles / HI.frequency
    lo = energy_of_trace([(LO, 1.0, t_lo)], DEFAULT_PARAMS)
    # pinned at the top level the CPU finishes early and idles there for the rest of the window
    hi = energy_of_trace([(HI, 1.0, t_hi), (HI, 0.0, t_lo - t_hi)], DEFAULT_PARAMS)
    assert lo.dynamic_joules < hi.dynamic_joules
    assert lo.total_joules < hi.total_joules


@pytest.mark.parametrize("f1,f2", [(0.5, 1.0), (0.3, 1.2), (1.0, 2.5)])
def test_cubic_law_with_voltage_proportional_to_frequency(f1, f2):
    cycles = 2.0
    e = []
    for f in (f1, f2):
        lv = FreqLevel(f, 0.8 * f)
        e.append(energy_of_trace([(lv, 1.0, cycles / f)], DEFAULT_PARAMS).dynamic_joules)
    assert e[1] / e[0] == pytest.approx((f2 / f1) ** 2, rel=1e-9)


def test_digest_changes_with_levels():
    other = FrequencyTable.from_pairs([(0.307, 0.8), (1.479, 1.2)])
    assert JETSON2.digest() != other.digest()
    assert JETSON2.digest() == FrequencyTable.from_pairs([(0.307, 0.8), (1.479, 1.1)]).digest()
