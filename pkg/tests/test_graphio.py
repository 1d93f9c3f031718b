import gzip
import io
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from commcert.graphio import (
    Graph,
    ParseError,
    ParseStats,
    StructureVector,
    apply_flips,
    build_pair_space,
    parse_communities,
    parse_edge_list,
    parse_node_labels,
    structure_vector,
)


def test_parse_simple_edge_list():
    g = parse_edge_list("1 2\n2 3\n")
    assert g.nodes == {1, 2, 3}
    assert g.edges == {(1, 2), (2, 3)}


def test_parse_dedups_reversed_edges():
    stats = ParseStats()
    g = parse_edge_list("1 2\n2 1\n", stats)
    assert g.edges == {(1, 2)}
    assert stats.edge_lines == 2 and stats.duplicates == 1


def test_parse_drops_self_loops_and_comments():
    stats = ParseStats()
    g = parse_edge_list("# header\n1 1\n1 2\n\n", stats)
    assert g.edges == {(1, 2)}
    assert stats.self_loops == 1


def test_parse_rejects_garbage():
    with pytest.raises(ParseError):
        parse_edge_list("1 x\n")
    with pytest.raises(ParseError):
        parse_edge_list("1\n")


def test_parse_gzip_file(tmp_path):
    p = tmp_path / "g.txt.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("0 1\n1 2\n")
    assert parse_edge_list(str(p)).num_edges == 2


def test_parse_communities():
    gt = parse_communities("1 2 3\n\n4 5\n")
    assert gt.communities == (frozenset({1, 2, 3}), frozenset({4, 5}))


def test_parse_node_labels_groups_by_label():
    gt = parse_node_labels(io.StringIO("0 1\n1 0\n2 1\n"))
    assert gt.communities == (frozenset({1}), frozenset({0, 2}))


def test_pair_space_enumeration():
    space = build_pair_space([1, 2, 3])
    assert space.pairs == ((1, 2), (1, 3), (2, 3))
    assert space.n == 3


def test_pair_space_size_for_hundred_nodes():
    assert build_pair_space(range(100)).n == comb(100, 2) == 4950


def test_pair_space_needs_two_nodes():
    with pytest.raises(ValueError):
        build_pair_space([7])


def test_structure_vector_examples():
    tri = Graph.from_edges([(1, 2), (2, 3), (1, 3)])
    space = build_pair_space([1, 2, 3])
    assert structure_vector(tri, space).bits.tolist() == [1, 1, 1]
    empty = Graph.from_edges([], nodes=[1, 2, 3])
    assert structure_vector(empty, space).bits.tolist() == [0, 0, 0]
    path = Graph.from_edges([(1, 2), (2, 3)])
    assert structure_vector(path, space).bits.tolist() == [1, 0, 1]


def test_apply_flips_examples():
    path = Graph.from_edges([(1, 2), (2, 3)])
    space = build_pair_space([1, 2, 3])
    assert apply_flips(path, space, StructureVector.zeros(space)) == path
    mask = StructureVector(np.array([0, 1, 1], dtype=np.uint8), space)
    assert apply_flips(path, space, mask).edges == {(1, 2), (1, 3)}


def test_apply_flips_rejects_foreign_space():
    path = Graph.from_edges([(1, 2), (2, 3)])
    mask = StructureVector.zeros(build_pair_space([1, 2]))
    with pytest.raises(ValueError):
        apply_flips(path, build_pair_space([1, 2, 3]), mask)


@st.composite
def graph_and_mask(draw):
    n = draw(st.integers(2, 7))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges = [p for p in pairs if draw(st.booleans())]
    g = Graph.from_edges(edges, nodes=range(n))
    k = draw(st.integers(2, n))
    space = build_pair_space(range(k))
    bits = np.array(draw(st.lists(st.integers(0, 1), min_size=space.n, max_size=space.n)), dtype=np.uint8)
    return g, space, StructureVector(bits, space)


@given(graph_and_mask())
def test_apply_flips_is_an_involution(case):
    g, space, mask = case
    assert apply_flips(apply_flips(g, space, mask), space, mask) == g


@given(graph_and_mask())
def test_flips_xor_the_structure_vector(case):
    g, space, mask = case
    assert structure_vector(apply_flips(g, space, mask), space) == structure_vector(g, space) ^ mask
