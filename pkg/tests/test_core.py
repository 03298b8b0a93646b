import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feasprox import CorrectionConfig, NoiseModel, Rng, gamma_at, make_edm_schedule
from feasprox.tensorio import (TensorFormatError, from_bytes, read_tensor, to_bytes,
                               write_tensor)


def test_schedule_single_level_is_the_endpoints():
    assert make_edm_schedule(0.1, 100, 1, 7).sigmas == (100.0, 0.1)


def test_schedule_default_endpoints():
    s = make_edm_schedule(0.1, 100, 50, 7)
    assert s.T == 50 and len(s) == 51
    assert s[0] == 100.0 and s[-1] == 0.1


def test_schedule_midpoint_matches_extended_precision():
    # ((100^(1/7) + 0.1^(1/7)) / 2)^7 evaluated with mpmath at 50 digits
    expected = 7.177132302454147354944872
    mid = make_edm_schedule(0.1, 100, 2, 7).sigmas[1]
    assert mid == pytest.approx(expected, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(lo=st.floats(1e-4, 1.0), ratio=st.floats(1.01, 1e4), T=st.integers(1, 300),
       rho=st.floats(0.5, 12.0))
def test_schedule_strictly_decreasing_and_positive(lo, ratio, T, rho):
    s = make_edm_schedule(lo, lo * ratio, T, rho).sigmas
    assert s[0] == lo * ratio and s[-1] == lo
    assert all(a > b > 0 for a, b in zip(s, s[1:]))


@pytest.mark.parametrize("args", [(0.0, 1.0, 5, 7), (1.0, 1.0, 5, 7), (0.1, 1.0, 0, 7),
                                  (0.1, 1.0, 5, 0.0), (0.1, math.inf, 5, 7)])
def test_schedule_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        make_edm_schedule(*args)


def test_gamma_rules():
    assert gamma_at(CorrectionConfig(), 2.0) == 4.0
    assert gamma_at(CorrectionConfig(), 0.1) == pytest.approx(0.01, rel=1e-15)
    assert gamma_at(CorrectionConfig(gamma_rule="constant", gamma_value=0.5), 9.0) == 0.5


@pytest.mark.parametrize("field,value", [("rho", 0.0), ("epsilon", -1.0), ("eta", 0.0),
                                         ("bt_shrink", 1.0), ("bt_shrink", 0.0), ("S", 0),
                                         ("K", -1), ("bt_max", 0), ("step_mode", "newton"),
                                         ("gamma_rule", "cosine"), ("epsilon_mode", "max")])
def test_correction_config_validation(field, value):
    with pytest.raises(ValueError):
        CorrectionConfig(**{field: value})


def test_radius_modes():
    assert CorrectionConfig(epsilon=0.05).radius(64) == pytest.approx(0.4)
    assert CorrectionConfig(epsilon=0.05, epsilon_mode="raw").radius(64) == 0.05


def test_rng_is_keyed_by_seed_and_stream():
    a = Rng(7, 1).normal((100,))
    assert np.array_equal(a, Rng(7, 1).normal((100,)))
    assert not np.array_equal(a, Rng(7, 2).normal((100,)))
    assert not np.array_equal(a, Rng(8, 1).normal((100,)))


def test_rng_split_differs_from_parent():
    root = Rng(3)
    assert not np.array_equal(root.split(1).normal((8,)), Rng(3).normal((8,)))
    with pytest.raises(ValueError):
        root.split(0)


def test_rng_normal_moments():
    z = Rng(11).normal((200_000,))
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.01
    u = Rng(11).uniform((100_000,))
    assert u.min() >= 0.0 and u.max() < 1.0


def test_rng_odd_lengths_are_prefixes():
    assert np.array_equal(Rng(5).normal((7,)), Rng(5).normal((8,))[:7])


def test_noise_model():
    clean = np.arange(4.0)
    assert np.array_equal(NoiseModel(0.0).sample(clean, Rng(0)), clean)
    noisy = NoiseModel(0.1).sample(clean, Rng(0))
    assert np.allclose(noisy - clean, 0.1 * Rng(0).normal((4,)))
    with pytest.raises(ValueError):
        NoiseModel(-1.0)


def test_tensor_round_trip(tmp_path):
    path = tmp_path / "a.ten"
    write_tensor(np.array([1.0, 2.0]), path)
    assert np.array_equal(read_tensor(path), [1.0, 2.0])
    write_tensor(np.arange(6.0).reshape(2, 3), path)
    back = read_tensor(path)
    assert back.shape == (2, 3) and np.array_equal(back, np.arange(6.0).reshape(2, 3))


def test_tensor_layout_is_little_endian():
    buf = to_bytes(np.array([1.0]))
    assert buf[:4] == b"TEN1"
    assert buf[4:8] == (1).to_bytes(4, "little")
    assert buf[8:16] == (1).to_bytes(8, "little")
    assert buf[16:] == np.array([1.0], dtype="<f8").tobytes()


def test_tensor_rejects_malformed(tmp_path):
    good = to_bytes(np.arange(6.0))
    for bad in (good[:-3], good[:10], b"TEN2" + good[4:], good + b"\0" * 8):
        with pytest.raises(TensorFormatError):
            from_bytes(bad)
    with pytest.raises(TensorFormatError):
        to_bytes(np.array([1.0, np.nan]))
    path = tmp_path / "t.ten"
    path.write_bytes(good[:-1])
    with pytest.raises(TensorFormatError):
        read_tensor(path)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(0, 2 ** 32 - 1))
def test_tensor_round_trip_property(shape, seed):
    arr = np.random.default_rng(seed).normal(size=shape)
    back = from_bytes(to_bytes(arr))
    assert back.shape == arr.shape and np.array_equal(back, arr)
