import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsgame.instance import (Instance, InstanceError, InstanceFormatError, coalition_mask,
                             coalition_members, generate_euclidean, read_instance, symmetrize,
                             validate, write_instance)
from tsgame.tsp import characteristic

seeds = st.integers(0, 2**63 - 1)


def test_generate_bounds_and_determinism():
    a = generate_euclidean(10, 42)
    b = generate_euclidean(10, 42)
    assert a.coords.shape == (11, 2)
    assert np.all((a.coords >= 0) & (a.coords <= 1000))
    assert a == b
    assert a.coords.tobytes() == b.coords.tobytes()


def test_generate_coords_are_single_precision():
    c = generate_euclidean(30, 1).coords
    assert np.array_equal(c.astype(np.float32).astype(np.float64), c)


def test_single_location_round_trip_cost():
    inst = generate_euclidean(1, 0)
    assert characteristic(inst, 1) == 2 * inst.distances[0, 1]


def test_generate_rejects_empty():
    with pytest.raises(ValueError):
        generate_euclidean(0, 1)


@given(st.integers(1, 25), seeds)
@settings(max_examples=40, deadline=None)
def test_generated_instances_validate(n, seed):
    inst = generate_euclidean(n, seed)
    rep = validate(inst)
    assert rep.symmetric and rep.metric and rep.finite
    assert np.array_equal(inst.distances, inst.distances.T)


@given(st.integers(1, 12), seeds)
@settings(max_examples=25, deadline=None)
def test_distances_match_coordinates(n, seed):
    inst = generate_euclidean(n, seed)
    c = inst.coords
    for i in range(n + 1):
        for j in range(n + 1):
            ref = math.hypot(c[i, 0] - c[j, 0], c[i, 1] - c[j, 1])
            assert inst.distances[i, j] == pytest.approx(ref, rel=2.3e-16, abs=0)


def test_symmetrize_takes_max():
    d = np.array([[0, 1, 2], [1, 0, 5], [2, 7, 0]], dtype=float)
    s = symmetrize(Instance(d))
    assert s.distances[1, 2] == s.distances[2, 1] == 7
    assert s.coords is None


def test_symmetrize_idempotent():
    rng = np.random.default_rng(0)
    d = rng.uniform(1, 10, (6, 6))
    np.fill_diagonal(d, 0)
    once = symmetrize(Instance(d))
    assert symmetrize(once) == once


def test_symmetrize_infinite_pair():
    d = np.array([[0, 1, np.inf], [1, 0, 1], [2, 1, 0]])
    s = symmetrize(Instance(d))
    assert s.distances[0, 2] == s.distances[2, 0] == np.inf
    assert not validate(s).finite


def test_validate_flags_triangle_violation():
    d = np.array([[0, 1, 1, 1], [1, 0, 1, 5], [1, 1, 0, 1], [1, 5, 1, 0]], dtype=float)
    rep = validate(Instance(d))
    assert rep.symmetric and not rep.metric
    i, j, k = rep.worst_violation
    assert d[i, j] + d[j, k] < d[i, k]
    assert rep.violation == pytest.approx(3.0)


def test_validate_flags_asymmetry():
    d = np.array([[0, 1, 2], [1, 0, 1], [3, 1, 0]], dtype=float)
    assert not validate(Instance(d)).symmetric


def test_degenerate_flag():
    assert Instance.from_coords([(0, 0), (1, 0), (1, 0)]).degenerate
    assert not generate_euclidean(5, 3).degenerate


@pytest.mark.parametrize("bad", [
    np.array([[0, -1], [1, 0]], dtype=float),
    np.array([[1, 1], [1, 0]], dtype=float),
    np.array([[0, np.nan], [1, 0]]),
    np.zeros((2, 3)),
])
def test_invalid_matrices_rejected(bad):
    with pytest.raises(InstanceError):
        Instance(bad)


def test_fixed_cost_count_checked():
    with pytest.raises(InstanceError):
        generate_euclidean(3, 1).with_fixed_costs([1.0, 2.0])
    with pytest.raises(InstanceError):
        generate_euclidean(2, 1).with_fixed_costs([1.0, -2.0])


@given(st.integers(1, 15), seeds, st.booleans())
@settings(max_examples=30, deadline=None)
def test_round_trip(tmp_path_factory, n, seed, with_fixed):
    inst = generate_euclidean(n, seed, id=f"g{n}")
    if with_fixed:
        inst = inst.with_fixed_costs(np.linspace(0.1, 99.9, n) / 3)
    path = tmp_path_factory.mktemp("rt") / "inst.json"
    write_instance(inst, path)
    assert read_instance(path) == inst


def test_matrix_round_trip(tmp_path):
    inst = symmetrize(generate_euclidean(6, 4))
    write_instance(inst, tmp_path / "m.json")
    back = read_instance(tmp_path / "m.json")
    assert back.coords is None and back == inst


def test_coordinate_file_materializes_matrix(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"n": 2, "coords": [[0, 0], [3, 4], [0, 4]]}))
    inst = read_instance(p)
    assert inst.distances[0, 1] == 5.0 and inst.distances[1, 2] == 3.0


def test_fixed_cost_dimension_mismatch(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"n": 3, "coords": [[0, 0], [1, 0], [2, 0], [3, 0]],
                             "fixed_costs": [1, 2]}))
    with pytest.raises(InstanceFormatError, match="fixed_costs"):
        read_instance(p)


def test_matrix_dimension_mismatch(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"n": 3, "matrix": [[0, 1], [1, 0]]}))
    with pytest.raises(InstanceFormatError, match="matrix"):
        read_instance(p)


def test_negative_distance_in_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"n": 1, "matrix": [[0, -1], [1, 0]]}))
    with pytest.raises(InstanceFormatError, match="negative"):
        read_instance(p)


def test_parse_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"n": 2,\n  "coords": [[0, 0], [1 1]]}')
    with pytest.raises(InstanceFormatError, match="line 2"):
        read_instance(p)


def test_both_or_neither_geometry(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"n": 1}))
    with pytest.raises(InstanceFormatError, match="exactly one"):
        read_instance(p)


def test_csv_ingest(tmp_path):
    p = tmp_path / "route.csv"
    p.write_text("id,x,y\ndepot,0,0\na,3,4\nb,6,8\n")
    inst = read_instance(p)
    assert inst.n == 2 and inst.distances[0, 2] == 10.0


def test_csv_bad_row(tmp_path):
    p = tmp_path / "route.csv"
    p.write_text("depot,0,0\na,3,x\n")
    with pytest.raises(InstanceFormatError, match="line 2"):
        read_instance(p)


@given(st.sets(st.integers(1, 30)))
def test_mask_members_round_trip(members):
    assert coalition_members(coalition_mask(members)) == sorted(members)


def test_relabel_permutes_rows():
    inst = generate_euclidean(4, 8)
    r = inst.relabel([3, 1, 4, 2])
    assert r.distances[1, 2] == inst.distances[3, 1]
    assert r.distances[0, 4] == inst.distances[0, 2]
