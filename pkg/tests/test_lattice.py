import numpy as np
import pytest
from hypothesis import given, strategies as st

from lfcmesh.lattice import (
    CellOffset, GridDims, LatticeError, LfcField, column_nodes, predecessor_set,
    read_field, translate_template, write_field,
)
from lfcmesh.mesh_prior import load_appendix_prior


def test_linear_index_is_row_major():
    d = GridDims(3, 4)
    assert d.linear((1, 1)) == 0
    assert d.linear((2, 1)) == 4
    assert d.linear((3, 4)) == 11
    assert [d.node(k) for k in range(d.size)] == [(i, j) for i in range(1, 4) for j in range(1, 5)]


@pytest.mark.parametrize("m,n", [(0, 3), (3, 0), (-1, 2)])
def test_bad_dims(m, n):
    with pytest.raises(LatticeError):
        GridDims(m, n)


def test_predecessor_examples():
    assert predecessor_set(GridDims(105, 51), (1, 1)) == set()
    assert predecessor_set(GridDims(2, 3), (2, 1)) == {(1, 1), (1, 2), (1, 3)}
    assert predecessor_set(GridDims(2, 3), (1, 3)) == {(1, 1), (1, 2)}
    with pytest.raises(LatticeError):
        predecessor_set(GridDims(2, 3), (3, 1))


@given(st.integers(1, 5), st.integers(1, 5), st.data())
def test_predecessor_matches_linear_order(m, n, data):
    d = GridDims(m, n)
    v = (data.draw(st.integers(1, m)), data.draw(st.integers(1, n)))
    pred = predecessor_set(d, v)
    for u in ((i, j) for i in range(1, m + 1) for j in range(1, n + 1)):
        assert (u in pred) == (d.linear(u) < d.linear(v))


def test_translate_template_examples():
    tau = load_appendix_prior().tau
    big = GridDims(105, 51)
    assert translate_template(tau, (1, 1), big) == set()
    nodes = translate_template(tau, (2, 5), big)
    assert {(1, 5), (2, 4), (1, 7), (2, 3)} <= nodes
    assert nodes <= predecessor_set(big, (2, 5))
    assert translate_template([CellOffset(-1, 0)], (3, 3), GridDims(5, 5)) == {(2, 3)}


def test_translate_template_counts_in_lattice_offsets():
    tau = load_appendix_prior().tau
    d = GridDims(105, 51)
    node = (2, 5)
    expected = {(node[0] + o.di, node[1] + o.dj) for o in tau if d.contains((node[0] + o.di, node[1] + o.dj))}
    assert translate_template(tau, node, d) == expected
    # interior node keeps all nine
    assert len(translate_template(tau, (10, 10), d)) == 9


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 3), st.integers(0, 3))
def test_translate_template_monotone_in_dims(m, n, dm, dn):
    tau = load_appendix_prior().tau
    small, large = GridDims(m, n), GridDims(m + dm, n + dn)
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            assert translate_template(tau, (i, j), small) <= translate_template(tau, (i, j), large)


def test_column_nodes():
    assert column_nodes(GridDims(3, 2), 2) == [(1, 2), (2, 2), (3, 2)]
    assert len(column_nodes(GridDims(105, 51), 51)) == 105
    assert column_nodes(GridDims(1, 1), 1) == [(1, 1)]
    with pytest.raises(LatticeError):
        column_nodes(GridDims(3, 2), 3)
    d = GridDims(4, 3)
    union = [v for j in range(1, 4) for v in column_nodes(d, j)]
    assert len(union) == len(set(union)) == d.size


def test_field_validation_and_access():
    f = LfcField([[0, 1], [1, 0]])
    assert f[(1, 2)] == 1 and f[(2, 2)] == 0
    assert list(f.flat()) == [0, 1, 1, 0]
    with pytest.raises(LatticeError):
        LfcField([[0, 2]])
    with pytest.raises(ValueError):
        f.values[0, 0] = 1
    g = f.with_column(1, [1, 1])
    assert g[(1, 1)] == 1 and f[(1, 1)] == 0


def test_field_file_round_trip(tmp_path):
    f = LfcField(np.random.default_rng(0).integers(0, 2, (4, 7)))
    p = tmp_path / "f.txt"
    write_field(p, f)
    text = p.read_bytes()
    assert text.startswith(b"4 7\n") and b"\r" not in text
    assert read_field(p) == f


def test_read_field_rejects_bad_shape(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2 2\n0 1\n")
    with pytest.raises(LatticeError):
        read_field(p)
