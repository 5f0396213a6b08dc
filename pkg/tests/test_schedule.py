import pytest
from hypothesis import given
from hypothesis import strategies as st

from coldelta.errors import ConfigError
from coldelta.flops import flop_account
from coldelta.model import ModelConfig
from coldelta.schedule import DENSE, SKIPPED, SPARSE, resolve_schedule


def test_fifty_steps():
    s = resolve_schedule(50, 10)
    assert s.dense_steps == [0, 11, 22, 33, 44]
    assert len(s.sparse_steps) == 45 and not s.skipped_steps


def test_all_dense():
    assert resolve_schedule(7, 0).modes == (DENSE,) * 7


def test_single_step():
    assert resolve_schedule(1, 10).modes == (DENSE,)


def test_step_cache_window():
    s = resolve_schedule(50, 10, use_step_cache=True, window=30, stride=4)
    assert len(s.skipped_steps) in (22, 23)
    assert s.window_start == 10
    assert all(s.window_start <= i < s.window_start + 30 for i in s.skipped_steps)
    cfg = ModelConfig()
    dense = flop_account(cfg, resolve_schedule(50, 0), cfg.n_tokens, cfg.hidden)
    cached = flop_account(cfg, resolve_schedule(50, 0, True, 30, 4), cfg.n_tokens, cfg.hidden)
    assert 1.7 <= dense.actual / cached.actual <= 1.9
    assert 1.7 <= s.step_cache_speedup <= 1.9


def test_skipped_steps_do_not_age_cache():
    s = resolve_schedule(50, 10, True, 30, 4)
    computed = [m for m in s.modes if m != SKIPPED]
    assert computed[::11] == [DENSE] * len(computed[::11])
    assert computed.count(DENSE) == len(computed[::11])


@pytest.mark.parametrize("args", [(0, 1), (5, -1), (10, 1, True, 11, 4), (10, 1, True, 5, 0)])
def test_bad_config(args):
    with pytest.raises(ConfigError):
        resolve_schedule(*args)


@given(st.integers(1, 120), st.integers(0, 15), st.booleans(), st.integers(1, 120), st.integers(1, 8))
def test_every_sparse_step_follows_a_dense_one(total, interval, cache, window, stride):
    try:
        s = resolve_schedule(total, interval, cache, window, stride)
    except ConfigError:
        assert cache and window > total
        return
    assert len(s.modes) == total and s.modes[0] == DENSE
    seen_dense = False
    for m in s.modes:
        seen_dense |= m == DENSE
        if m == SPARSE:
            assert seen_dense
    if interval == 0:
        assert SPARSE not in s.modes
