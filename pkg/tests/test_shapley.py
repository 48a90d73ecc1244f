import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from families import cluster_and_outlier, two_on_a_line
from oracles import brute_costs, permutation_shapley
from tsgame.experiments import generate_corpus
from tsgame.instance import generate_euclidean
from tsgame.rng import Stream
from tsgame.shapley import (Allocation, AllocationError, PermutationSampler, appro_shapley,
                            check_efficiency, exact_shapley, fractionalize, read_allocation,
                            subset_shapley, subset_weights, write_allocation)
from tsgame.tsp import CHRISTOFIDES, exact_cost_table

seeds = st.integers(0, 2**63 - 1)

# square with side 1000; cross-checked against the permutation oracle below
SQUARE_FRACTIONS = (0.29881554, 0.40236893, 0.29881554)


def test_square_exact(square):
    a = exact_shapley(square)
    assert a.fractional == pytest.approx(SQUARE_FRACTIONS, abs=1e-8)
    assert math.fsum(a.absolute) == pytest.approx(4000.0, rel=1e-12)
    ref = permutation_shapley(brute_costs(square.distances), 3)
    assert a.absolute == pytest.approx(ref, rel=1e-12)


def test_line_instance():
    a = exact_shapley(two_on_a_line(1000.0))
    assert a.absolute == pytest.approx([1000.0, 3000.0])
    assert a.fractional == pytest.approx([0.25, 0.75], abs=1e-15)


@pytest.mark.parametrize("n", range(1, 8))
def test_exact_matches_permutation_oracle(n):
    inst = generate_euclidean(n, 100 + n)
    ref = permutation_shapley(brute_costs(inst.distances), n)
    got = exact_shapley(inst).absolute
    assert np.max(np.abs(got - ref) / np.abs(ref)) <= 1e-9


def test_exact_limit():
    with pytest.raises(AllocationError):
        exact_shapley(generate_euclidean(6, 1), limit=5)


def test_subset_weights_are_correctly_rounded():
    for n in range(1, 25):
        for s, w in enumerate(subset_weights(n)):
            exact = Fraction(math.factorial(s) * math.factorial(n - s - 1), math.factorial(n))
            assert w == float(exact)


@given(seeds, st.integers(1, 9))
@settings(max_examples=25, deadline=None)
def test_efficiency(seed, n):
    inst = generate_euclidean(n, seed)
    for a in (exact_shapley(inst), appro_shapley(inst, 50, seed % 1000),
              subset_shapley(inst, 50, seed % 1000)):
        check_efficiency(a)
        assert math.fsum(a.fractional) == pytest.approx(1.0, abs=1e-12)


@given(seeds, st.integers(1, 8), st.data())
@settings(max_examples=20, deadline=None)
def test_fixed_cost_additivity(seed, n, data):
    inst = generate_euclidean(n, seed)
    f = np.array(data.draw(st.lists(st.floats(0, 100), min_size=n, max_size=n)))
    with_f = exact_shapley(inst.with_fixed_costs(f)).absolute
    plain = exact_shapley(inst).absolute
    assert with_f == pytest.approx(plain + f, rel=1e-9, abs=1e-9)


@given(seeds, st.integers(2, 8), st.randoms(use_true_random=False))
@settings(max_examples=20, deadline=None)
def test_anonymity(seed, n, rnd):
    inst = generate_euclidean(n, seed)
    perm = list(range(1, n + 1))
    rnd.shuffle(perm)
    base = exact_shapley(inst).absolute
    moved = exact_shapley(inst.relabel(perm)).absolute
    assert moved == pytest.approx(base[np.array(perm) - 1], rel=1e-9)


def test_single_location_gets_everything():
    inst = generate_euclidean(1, 4)
    cost = 2 * inst.distances[0, 1]
    for a in (exact_shapley(inst), appro_shapley(inst, 7, 3), subset_shapley(inst, 7, 3)):
        assert a.absolute == pytest.approx([cost]) and a.fractional == pytest.approx([1.0])


def test_identical_rows_share_equally():
    # colocated twins: whichever joins first pays, so sampled shares agree only
    # in expectation; the exact value splits evenly
    inst = cluster_and_outlier(3, 100.0, 250.0)
    exact = exact_shapley(inst).absolute
    assert exact[0] == exact[1]
    for seed in range(5):
        a = appro_shapley(inst, 4000, seed).absolute
        # per-sample margin is 0 or 200, so the standard error is 100/sqrt(4000)
        assert abs(a[0] - a[1]) < 4 * 2 * 100 / math.sqrt(4000)


def test_appro_square_close_to_exact(square):
    a = appro_shapley(square, 4000, 0)
    assert np.max(np.abs(a.fractional - np.array(SQUARE_FRACTIONS))) <= 0.02


def test_appro_raw_is_plain_average(square):
    a = appro_shapley(square, 3000, 5)
    assert a.raw == pytest.approx(exact_shapley(square).absolute, rel=0.03)
    assert a.absolute == pytest.approx(a.raw * 4000.0 / a.raw.sum(), rel=1e-12)


def test_subset_raw_scale(square):
    a = subset_shapley(square, 6000, 5)
    assert a.raw == pytest.approx(exact_shapley(square).absolute, rel=0.05)


@pytest.mark.parametrize("fn", [appro_shapley, subset_shapley])
def test_samplers_deterministic(fn):
    inst = generate_euclidean(9, 13)
    a, b = fn(inst, 200, 17), fn(inst, 200, 17)
    assert np.array_equal(a.absolute, b.absolute)
    assert not np.array_equal(a.absolute, fn(inst, 200, 18).absolute)


def test_sampler_stream_is_pinned():
    s = PermutationSampler(6, 42)
    ref = Stream(42)
    for _ in range(10):
        assert next(s) == ref.permutation(range(1, 7))
    assert s.iteration == 10


def test_sampler_with_christofides(square):
    a = appro_shapley(square, 200, 0, solver=CHRISTOFIDES)
    assert a.method == "appro-christofides"
    check_efficiency(a)


def test_samplers_converge_in_corpus_mean():
    corpus = generate_corpus([8], 20, 11)
    ms = (10, 100, 1000, 5000)
    errs = {"appro": np.zeros(len(ms)), "subset": np.zeros(len(ms))}
    for inst in corpus:
        exact = exact_shapley(inst).fractional
        for c, m in enumerate(ms):
            for name, fn in (("appro", appro_shapley), ("subset", subset_shapley)):
                errs[name][c] += np.mean(np.abs(fn(inst, m, 1).fractional - exact))
    for name in errs:
        assert np.all(np.diff(errs[name]) <= 0), (name, errs[name])


@pytest.mark.parametrize("n", [3, 5, 9, 17])
def test_cluster_family_values(n):
    a = 1000.0
    alloc = exact_shapley(cluster_and_outlier(n, a), limit=17)
    assert alloc.fractional[-1] == pytest.approx(0.5, abs=1e-12)
    assert alloc.fractional[:-1] == pytest.approx(1 / (2 * (n - 1)), abs=1e-12)


@pytest.mark.parametrize("n", [3, 5, 9, 17])
def test_far_outlier_family_values(n):
    # outlier at distance (n+1)a: SV_n = 2a(n+1) and the total is 2a(n+2)
    a = 1.0
    alloc = exact_shapley(cluster_and_outlier(n, a, (n + 1) * a), limit=17)
    assert alloc.absolute[-1] == pytest.approx(2 * a * (n + 1), rel=1e-12)
    assert alloc.absolute[:-1] == pytest.approx(2 * a / (n - 1), rel=1e-12)
    assert alloc.fractional[-1] == pytest.approx((n + 1) / (n + 2), rel=1e-12)
    depot_share = (n + 1) / (2 * n)
    assert alloc.fractional[-1] / depot_share == pytest.approx(2 * n / (n + 2), rel=1e-12)


@pytest.mark.parametrize("vec,frac", [((2, 2), (0.5, 0.5)), ((1, 3), (0.25, 0.75))])
def test_fractionalize(vec, frac):
    a = fractionalize(Allocation("x", np.array(vec, dtype=float)))
    assert a.fractional == pytest.approx(frac) and np.array_equal(a.absolute, vec)
    assert np.array_equal(fractionalize(a).fractional, a.fractional)


def test_fractionalize_zero_total():
    with pytest.raises(AllocationError):
        fractionalize(Allocation("x", np.zeros(3)))


def test_efficiency_check_catches_drift():
    a = Allocation("x", np.array([1.0, 2.0]), total_cost=3.1)
    with pytest.raises(AllocationError):
        check_efficiency(a)


def test_allocation_json_round_trip(tmp_path, square):
    a = appro_shapley(square, 30, 2)
    write_allocation(a, tmp_path / "a.json")
    b = read_allocation(tmp_path / "a.json")
    assert np.array_equal(a.absolute, b.absolute) and np.array_equal(a.fractional, b.fractional)
    assert (b.method, b.seed, b.iterations, b.total_cost) == ("appro", 2, 30, a.total_cost)


def test_negative_margins_not_clamped():
    # non-metric: visiting 2 makes the route to 1 cheaper
    d = np.array([[0, 10, 1], [10, 0, 1], [1, 1, 0]], dtype=float)
    from tsgame.instance import Instance
    table = exact_cost_table(Instance(d))
    assert table[0b11] < table[0b01] + 2  # c({1,2}) = 4 < c({1}) = 20
    a = exact_shapley(Instance(d))
    assert a.absolute[1] < 0


@pytest.mark.parametrize("sampler", [appro_shapley, subset_shapley])
def test_oversized_exact_sampling_fails_fast(sampler):
    with pytest.raises(ValueError, match="limited"):
        sampler(generate_euclidean(30, 0), 5)
