import math

import numpy as np
import pytest

from sqrk.linalg import make_rng, residual
from sqrk.problems import (GenSpec, corrupt, gen_gaussian_system, load_system, read_system_csv,
                           save_system, system_from_arrays, write_system_csv)


@pytest.fixture(scope="module")
def large_system():
    # the full-scale generator is cheap enough to run once
    return gen_gaussian_system(GenSpec(50000, 100, beta=1e-4, corruption_magnitude=10, seed=1))


def test_full_scale_corruption_count(large_system):
    s = large_system
    assert s.n_corrupt == 5
    np.testing.assert_array_equal(s.b, 0.0)
    np.testing.assert_array_equal(s.b_hat[s.corrupt_support], 10.0)
    assert np.count_nonzero(s.b_hat) == 5
    assert abs(np.sum(s.A ** 2) - 50000) < 1e-8


def test_floor_corruption_count():
    assert GenSpec(50000, 100, beta=1e-5).n_corrupt == 0
    assert GenSpec(50000, 100, beta=1e-3).n_corrupt == 50
    assert GenSpec(50000, 100, beta=1e-2).n_corrupt == 500


def test_zero_beta():
    s = gen_gaussian_system(GenSpec(100, 5, beta=0.0, x_star_policy="gaussian", seed=2))
    np.testing.assert_array_equal(s.c, 0.0)
    np.testing.assert_array_equal(s.b_hat, s.b)
    assert s.n_corrupt == 0


def test_system_invariants(small_system):
    s = small_system
    np.testing.assert_allclose(s.b, s.A @ s.x_star, atol=1e-10)
    np.testing.assert_array_equal(s.b_hat, s.b + s.c)
    assert np.count_nonzero(s.c) == s.n_corrupt == math.floor(s.beta * s.m)
    np.testing.assert_array_equal(np.flatnonzero(s.c), s.corrupt_support)
    assert abs(np.linalg.norm(s.x_star) - 1) < 1e-12
    for i in range(s.m):
        assert abs(residual(s.A, s.x_star, s.b_hat, i) + s.c[i]) < 1e-12


def test_systems_are_read_only(small_system):
    with pytest.raises(ValueError):
        small_system.b_hat[0] = 1.0


def test_regeneration_bit_identical():
    spec = GenSpec(200, 6, beta=0.05, x_star_policy="gaussian", seed=11)
    a, b = gen_gaussian_system(spec), gen_gaussian_system(spec)
    for name in ("A", "x_star", "b", "c", "corrupt_support"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_corrupt_examples():
    c, supp = corrupt(np.zeros(10), 0.3, 10.0, make_rng(0))
    assert supp.size == 3 and np.all(c[supp] == 10.0) and np.count_nonzero(c) == 3
    c, supp = corrupt(np.zeros(4), 0.5 - 1e-9, 10.0, make_rng(0))
    assert supp.size == 1


def test_corrupt_signed():
    c, supp = corrupt(np.zeros(1000), 0.2, 3.0, make_rng(1), signed=True)
    assert set(np.unique(c[supp])) == {-3.0, 3.0}


def test_corrupt_frequency():
    rng = make_rng(21)
    hits = np.zeros(20)
    for _ in range(10_000):
        hits[corrupt(np.zeros(20), 0.1, 1.0, rng)[1]] += 1
    sd = math.sqrt(10_000 * 0.1 * 0.9)
    assert np.all(np.abs(hits - 1000) <= 3 * sd)


def test_invalid_specs():
    with pytest.raises(ValueError):
        GenSpec(10, 10)
    with pytest.raises(ValueError):
        GenSpec(10, 2, beta=1.0)
    with pytest.raises(ValueError):
        GenSpec(10, 2, x_star_policy="given")


def test_given_x_star():
    x = np.array([1.0, -2.0, 0.5])
    s = gen_gaussian_system(GenSpec(20, 3, x_star_policy="given", x_star=x, seed=1))
    np.testing.assert_array_equal(s.x_star, x)


def test_binary_round_trip(tmp_path, small_system):
    p = tmp_path / "sys.bin"
    save_system(small_system, p)
    back = load_system(p)
    for name in ("A", "x_star", "b", "c", "b_hat", "corrupt_support"):
        assert np.array_equal(getattr(back, name), getattr(small_system, name))
    assert back.beta == small_system.beta and back.seed == small_system.seed
    p2 = tmp_path / "sys2.bin"
    save_system(back, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_binary_rejects_garbage(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"not a system at all, definitely not" * 3)
    with pytest.raises(ValueError):
        load_system(p)


def test_csv_round_trip(tmp_path, small_system):
    p = tmp_path / "sys.csv"
    write_system_csv(small_system, p)
    back = read_system_csv(p)
    assert np.array_equal(back.A, small_system.A)
    assert np.array_equal(back.c, small_system.c)
    assert np.array_equal(back.x_star, small_system.x_star)
    assert np.array_equal(back.corrupt_support, small_system.corrupt_support)


def test_system_from_arrays():
    s = system_from_arrays([[2.0, 0.0], [0.0, 3.0], [1.0, 1.0]], [1.0, 1.0], c=[0, 0, 5.0])
    np.testing.assert_allclose(np.linalg.norm(s.A, axis=1), 1.0)
    assert list(s.corrupt_support) == [2]
