import itertools
import random

import pytest

from streamfold import (
    CutSet,
    DesignPoint,
    HDGraph,
    HDNode,
    NetworkModel,
    PropagationError,
    UnsupportedLayerError,
    apply_cuts,
    build_hdgraph,
    check_inter_matching,
    check_intra_matching,
    divisors,
    folding_domains,
    get_backend,
    propagate_matching,
    resource_minimal_init,
)
from streamfold.backends import BackendDescriptor, MAP_COARSE
from streamfold.network import LayerKind

from helpers import BACKEND_NAMES, conv, dense, graph, net, random_chain, relu


def three_layer(backend_name):
    return graph(backend_name, conv("c1", 3, 4, 8, 8), relu("r1", 4, 6, 6),
                 dense("fc1", 144, 10))


def chain_graph(backend_name, n):
    layers = [relu(f"r{i}", 4, 6, 6) for i in range(n)]
    return graph(backend_name, *layers)


def test_build_sets_intra_flags_per_backend():
    g = three_layer("fpgaconvnet-like")
    assert len(g) == 3
    assert [n.requires_intra_match for n in g.nodes] == [False, True, False]
    assert [n.folding() for n in g.nodes] == [(1, 1, 1)] * 3

    g = three_layer("hls4ml-like")
    assert [n.requires_intra_match for n in g.nodes] == [False, False, False]


def test_build_rejects_empty_model():
    with pytest.raises(ValueError, match="empty"):
        build_hdgraph(NetworkModel(name="e"), get_backend("finn-like"))


def test_build_rejects_unsupported_kind():
    partial = BackendDescriptor(
        name="ConvOnly", enforce_intra_matching=True,
        enforce_inter_matching=False,
        variable_mapping={LayerKind.CONVOLUTION: MAP_COARSE})
    with pytest.raises(UnsupportedLayerError, match="Dense"):
        build_hdgraph(net(dense("fc1", 4, 4)), partial)


def test_apply_cuts_reference_cases():
    g = chain_graph("finn-like", 4)
    def spans(cuts):
        return [(p.start, p.stop) for p in apply_cuts(g, CutSet(cuts))]
    assert spans(()) == [(0, 4)]
    assert spans((2,)) == [(0, 2), (2, 4)]
    assert spans((1, 3)) == [(0, 1), (1, 3), (3, 4)]


def test_apply_cuts_out_of_range():
    g = chain_graph("finn-like", 4)
    for bad in (0, 4, 7):
        with pytest.raises(ValueError, match="out of range"):
            apply_cuts(g, CutSet((bad,)))


def _assert_partitioning(g, cuts):
    parts = apply_cuts(g, CutSet(cuts))
    assert len(parts) == len(cuts) + 1
    covered = []
    for part in parts:
        indices = list(part.node_indices)
        assert indices, "partitions are non-empty"
        assert indices == list(range(indices[0], indices[-1] + 1)), "contiguous"
        covered.extend(indices)
    assert covered == list(range(len(g))), "disjoint, complete, order-preserving"


def test_partition_properties_exhaustive_small():
    for n in range(1, 9):
        g = chain_graph("finn-like", n)
        for r in range(n):
            for cuts in itertools.combinations(range(1, n), r):
                _assert_partitioning(g, cuts)


def test_partition_properties_random_large():
    rng = random.Random(11)
    for _ in range(200):
        n = rng.randint(1, 64)
        g = chain_graph("finn-like", n)
        edges = [e for e in range(1, n) if rng.random() < 0.3]
        _assert_partitioning(g, tuple(edges))


def test_cutset_rejects_duplicates_and_disorder():
    with pytest.raises(ValueError):
        CutSet((2, 2))
    with pytest.raises(ValueError):
        CutSet((3, 1))


def test_folding_domains_are_divisor_sets():
    g = graph("fpgaconvnet-like", conv("c1", 6, 6, 8, 8), relu("r1", 6, 6, 6),
              dense("fc1", 216, 10))
    s_in, s_out, k = folding_domains(g.nodes[0])
    assert s_in == (1, 2, 3, 6)
    assert s_out == (1, 2, 3, 6)
    assert k == (1, 3, 9)
    assert folding_domains(g.nodes[2])[2] == (1,)  # Dense kernel is 1x1

    rng = random.Random(5)
    for _ in range(100):
        n = rng.randint(1, 512)
        for d in divisors(n):
            assert n % d == 0
        assert divisors(n)[0] == 1 and divisors(n)[-1] == n


def test_domain_filter_restricts_domains():
    powers_of_two = BackendDescriptor(
        name="Pow2", enforce_intra_matching=False, enforce_inter_matching=False,
        variable_mapping={kind: MAP_COARSE for kind in LayerKind},
        domain_filter=lambda node, var, dom: [v for v in dom if v & (v - 1) == 0])
    g = build_hdgraph(net(conv("c1", 12, 12, 8, 8)), powers_of_two)
    s_in, s_out, k = folding_domains(g.nodes[0], powers_of_two)
    assert s_in == (1, 2, 4)
    assert s_out == (1, 2, 4)
    assert k == (1,)


def test_resource_minimal_init():
    g1 = chain_graph("finn-like", 1)
    point = resource_minimal_init(g1)
    assert point.cutset.cuts == ()
    g4 = chain_graph("finn-like", 4)
    point = resource_minimal_init(g4)
    assert point.cutset.cuts == (1, 2, 3)
    assert len(point.partitions()) == 4
    assert all(n.folding() == (1, 1, 1) for n in point.graph.nodes)
    # unit foldings trivially satisfy both matching constraints
    assert check_intra_matching(point) == []
    assert check_inter_matching(point) == []


def test_resource_minimal_init_is_the_resource_minimum():
    rng = random.Random(3)
    from streamfold import node_resources
    for _ in range(30):
        g = build_hdgraph(random_chain(rng), get_backend("fpgaconvnet-like"))
        point = resource_minimal_init(g)
        for node in point.graph.nodes:
            floor = node_resources(node)
            doms = folding_domains(node, g.backend)
            for _ in range(5):
                node.s_in = rng.choice(doms[0])
                node.s_out = rng.choice(doms[1])
                node.k = rng.choice(doms[2])
                assert floor <= node_resources(node)
            node.s_in = node.s_out = node.k = 1


def _matched_chain(backend_name):
    """conv(c_out=4) -> relu -> conv, one partition, all foldings consistent."""
    g = graph(backend_name, conv("c1", 2, 4, 8, 8), relu("r1", 4, 6, 6),
              conv("c2", 4, 8, 6, 6))
    point = DesignPoint(graph=g, cutset=CutSet(()))
    for node, (s_in, s_out) in zip(point.graph.nodes, [(1, 2), (2, 2), (2, 1)]):
        node.s_in, node.s_out = s_in, s_out
    return point


def test_propagation_forces_matching_chain_finn():
    point = _matched_chain("finn-like")
    mutated = point.with_folding(0, "s_out", 4)
    result = propagate_matching(mutated, 0, "s_out")
    assert result.graph.nodes[0].s_out == 4
    assert result.graph.nodes[1].s_in == 4
    assert result.graph.nodes[1].s_out == 4
    assert result.graph.nodes[2].s_in == 4
    assert check_intra_matching(result) == []
    assert check_inter_matching(result) == []


def test_propagation_stops_without_inter_matching():
    point = _matched_chain("fpgaconvnet-like")
    # make the point consistent for this backend (intra only)
    mutated = point.with_folding(0, "s_out", 4)
    result = propagate_matching(mutated, 0, "s_out")
    assert result.graph.nodes[0].s_out == 4
    assert result.graph.nodes[1].s_in == 2  # unchanged: inter not enforced
    assert result.graph.nodes[1].s_out == 2


def test_propagation_stops_at_cut_edges():
    point = _matched_chain("finn-like")
    point = DesignPoint(graph=point.graph, cutset=CutSet((1,)))
    result = propagate_matching(point.with_folding(0, "s_out", 4), 0, "s_out")
    assert result.graph.nodes[0].s_out == 4
    assert result.graph.nodes[1].s_in == 2  # across the cut: untouched


def test_propagation_infeasible_divisor():
    # hand-built mismatched chain: a forced value must divide the neighbour
    nodes = [
        HDNode(index=0, layer=conv("c1", 2, 4, 8, 8)),
        HDNode(index=1, layer=conv("c2", 6, 6, 6, 6, kernel=1)),
    ]
    g = HDGraph(nodes=nodes, backend=get_backend("finn-like"))
    point = DesignPoint(graph=g, cutset=CutSet(()))
    mutated = point.with_folding(0, "s_out", 4)
    with pytest.raises(PropagationError, match="does not divide"):
        propagate_matching(mutated, 0, "s_out")


def test_propagation_intra_resolves_towards_changed_variable():
    g = graph("finn-like", relu("r1", 4, 6, 6))
    point = DesignPoint(graph=g, cutset=CutSet(()))
    by_s_out = propagate_matching(point.with_folding(0, "s_out", 4), 0, "s_out")
    assert by_s_out.graph.nodes[0].folding() == (4, 4, 1)
    by_s_in = propagate_matching(point.with_folding(0, "s_in", 2), 0, "s_in")
    assert by_s_in.graph.nodes[0].folding() == (2, 2, 1)


def test_propagation_idempotent_and_restores_matching():
    rng = random.Random(23)
    for backend_name in BACKEND_NAMES:
        for _ in range(40):
            model = random_chain(rng)
            g = build_hdgraph(model, get_backend(backend_name))
            point = resource_minimal_init(g)
            for _ in range(6):
                index = rng.randrange(len(g))
                var_i = rng.randrange(3)
                var = ("s_in", "s_out", "k")[var_i]
                domain = folding_domains(point.graph.nodes[index], g.backend)[var_i]
                value = rng.choice(domain)
                try:
                    once = propagate_matching(
                        point.with_folding(index, var, value), index, var)
                except PropagationError:
                    continue
                twice = propagate_matching(once, index, var)
                assert once == twice
                assert check_intra_matching(once) == []
                assert check_inter_matching(once) == []
                point = once
