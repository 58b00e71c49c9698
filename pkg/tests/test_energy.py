import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from fedunlearn.energy import (DeviceProfile, DvfsState, EnergyRecord, EnergyTrace, FrequencyLevel, MemoryLayout,
                               ThetaLruCache, builtin_profiles, cubic_profile, dvfs_step, execute_operations,
                               layout_for, load_profiles, lru_access, model_access_trace, round_energy,
                               training_time)
from fedunlearn.errors import ConfigError
from fedunlearn.models import PprModel, RidgeModel, UserItems


def simple_profile(**kw):
    levels = ((1.0, 0.5), (2.0, 1.0), (4.0, 2.0))
    kw.setdefault("default_level", 1)
    return DeviceProfile("test", 4, levels, **kw)


class TestDvfs:
    def test_saturates_at_max(self):
        s = DvfsState(3, 1, level=2)
        assert dvfs_step(s, 1).level == 2

    def test_reset(self):
        s = DvfsState(5, 2, level=4)
        assert dvfs_step(s, 0).level == 2

    def test_sequence(self):
        s = DvfsState(5, 2)
        for h in (1, -1, -1):
            dvfs_step(s, h)
        assert s.level == 1 and s.steps == 3 and s.history == [3, 2, 1]

    @given(st.lists(st.sampled_from([-1, 0, 1]), max_size=200), st.integers(1, 8), st.data())
    def test_never_leaves_bounds(self, hooks, n, data):
        s = DvfsState(n, data.draw(st.integers(0, n - 1)))
        for h in hooks:
            dvfs_step(s, h)
            assert 0 <= s.level < n


class TestTiming:
    def test_intercept(self):
        assert training_time(simple_profile(), 0) == simple_profile().B

    def test_direct_evaluation(self):
        p = simple_profile(A=2.0, B=3.0)
        assert training_time(p, 10, weight=1.0) == pytest.approx(23.0)

    def test_doubling_frequency_halves_work_term(self):
        p = simple_profile(A=2.0, B=3.0)
        base = training_time(p, 10, level=1) - p.B
        fast = training_time(p, 10, level=2) - p.B
        assert fast == pytest.approx(base / 2)


class TestEnergy:
    def test_idle_without_static_is_zero(self):
        assert round_energy(simple_profile(), [(1, 0.0, 10.0)]) == 0.0

    def test_single_segment(self):
        p = simple_profile(static_draws=(("display", 0.1),))
        assert round_energy(p, [(1, 0.5, 10.0)]) == pytest.approx(6.0)

    def test_split_segment(self):
        p = simple_profile(static_draws=(("display", 0.1),))
        assert round_energy(p, [(2, 0.7, 3.0)]) == pytest.approx(round_energy(p, [(2, 0.7, 1.5)] * 2))


def test_hook_conservation():
    p = cubic_profile("x", 4, 2.0)
    dvfs = DvfsState.for_profile(p)
    ops = [(10, [1]), (5, [-1, -1, 0]), (3, [])]
    execute_operations(p, dvfs, ops)
    assert dvfs.steps == 4


def test_profile_validation():
    with pytest.raises(ConfigError):
        DeviceProfile("bad", 4, ((2.0, 1.0), (1.0, 2.0)))
    with pytest.raises(ConfigError):
        DeviceProfile("bad", 4, ((1.0, 2.0), (2.0, 1.0)))
    with pytest.raises(ConfigError):
        simple_profile(A=-1.0)


def test_builtin_profiles_use_reference_frequencies():
    by_name = {p.name: p for p in builtin_profiles()}
    assert by_name["Nexus"].freq_levels[-1].freq_ghz == pytest.approx(2.65)
    assert by_name["Honor"].core_count == 8


def test_profiles_round_trip(tmp_path):
    profiles = builtin_profiles()
    path = tmp_path / "devices.json"
    path.write_text(json.dumps({"devices": [p.to_dict() for p in profiles]}))
    assert load_profiles(path) == profiles


class TestThetaLru:
    def test_window_example(self):
        c = ThetaLruCache(4, theta=0.5)
        c.run(["p1", "p2", "p3", "p4", "p5"])
        assert c.evicted == ["p1"] and c.faults == 5 and c.swaps == 1

    def test_repeated_hits(self):
        c = ThetaLruCache(2)
        c.run(["a"] * 10)
        assert (c.faults, c.swaps, c.hits) == (1, 0, 9)

    def test_lru_access(self):
        c = ThetaLruCache(2)
        _, hit = lru_access(c, 1)
        assert hit is False
        assert lru_access(c, 1)[1] is True

    @given(st.lists(st.integers(0, 12), max_size=200), st.integers(1, 6),
           st.floats(0.01, 1.0))
    def test_resident_bound_and_counters(self, trace, cap, theta):
        c = ThetaLruCache(cap, theta)
        for page in trace:
            c.access(page)
            assert len(c.pages) <= cap
        assert c.hits + c.faults == len(trace)
        assert c.swaps == max(0, c.faults - cap)

    def test_bad_theta(self):
        with pytest.raises(ConfigError):
            ThetaLruCache(4, theta=0.0)


class TestAccessTrace:
    def test_empty(self):
        assert model_access_trace(MemoryLayout([("x", (10,))]), "forget", []) == []

    def test_block_counting(self):
        layout = MemoryLayout([("x", (128,))])
        pages = model_access_trace(layout, "forget", [("x", i) for i in range(128)], block=64)
        assert len(set(pages)) == 2

    def test_retrain_covers_forget(self):
        rng = random.Random(3)
        users = [UserItems(u, rng.sample(range(20), 4)) for u in range(15)]
        model = PprModel.fit(users, 20)
        model.trace = []
        model.forget(users[0])
        layout = layout_for(model)
        dec = set(model_access_trace(layout, "forget", model.trace, block=16))
        retrain_entries = []
        PprModel.fit(users[1:], 20, trace=retrain_entries)
        ret = set(model_access_trace(layout, "retrain", retrain_entries, block=16))
        assert dec <= ret

    def test_ridge_layout(self):
        layout = layout_for(RidgeModel(3))
        assert layout.size == 3 + 3 * 9 + 3


def test_energy_trace_csv(tmp_path):
    t = EnergyTrace()
    t.add(EnergyRecord(0, 1, 5.0, 0.25, (2, 3), 1, 0, 10, 2, 2))
    t.write_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0].startswith("round,device") and lines[1] == "0,1,5.0,0.25,2;3,1,0,10,2,2"


def test_frequency_level_is_value_type():
    assert FrequencyLevel(1.0, 0.5) == FrequencyLevel(1.0, 0.5)
