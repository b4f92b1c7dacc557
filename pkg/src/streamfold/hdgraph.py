"""Hardware-description graph: folding variables, cuts and matching propagation.

The graph is a chain with one computation node per network layer. Each node
carries three folding variables:

    s_in   parallelism over the input channel dimension
    s_out  parallelism over the output channel dimension
    k      parallelism within the kernel window

Folding values must divide the dimension they fold. Cutting an edge splits
the chain into partitions; each partition is a separate device configuration
and partitions execute one after another with a reconfiguration in between.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

from .backends import BackendDescriptor, UnsupportedLayerError
from .network import CHANNEL_PRESERVING_KINDS, LayerSpec, NetworkModel


class PropagationError(ValueError):
    """A forced folding value does not divide the target dimension."""


def divisors(n: int) -> tuple[int, ...]:
    """All positive divisors of n, ascending."""
    if n < 1:
        raise ValueError(f"expected a positive integer, got {n}")
    small, large = [], []
    d = 1
    while d * d <= n:
        if n % d == 0:
            small.append(d)
            if d != n // d:
                large.append(n // d)
        d += 1
    return tuple(small + large[::-1])


@dataclass
class HDNode:
    index: int
    layer: LayerSpec
    s_in: int = 1
    s_out: int = 1
    k: int = 1
    requires_intra_match: bool = False

    def folding(self) -> tuple[int, int, int]:
        return (self.s_in, self.s_out, self.k)


@dataclass
class HDGraph:
    nodes: list[HDNode]
    backend: BackendDescriptor

    def __len__(self) -> int:
        return len(self.nodes)

    def copy(self) -> "HDGraph":
        return HDGraph(nodes=[replace(n) for n in self.nodes], backend=self.backend)


@dataclass(frozen=True)
class CutSet:
    """Cut edge ids; edge e (1-based) sits after the e-th node of the chain."""

    cuts: tuple[int, ...] = ()

    def __post_init__(self):
        if list(self.cuts) != sorted(set(self.cuts)):
            raise ValueError(f"cuts must be strictly increasing, got {self.cuts}")

    def toggled(self, edge: int) -> "CutSet":
        if edge in self.cuts:
            return CutSet(tuple(e for e in self.cuts if e != edge))
        return CutSet(tuple(sorted(self.cuts + (edge,))))


@dataclass(frozen=True)
class Partition:
    """Contiguous, non-empty run of node indices [start, stop)."""

    start: int
    stop: int

    def __post_init__(self):
        if not 0 <= self.start < self.stop:
            raise ValueError(f"empty or inverted partition [{self.start}, {self.stop})")

    @property
    def node_indices(self) -> range:
        return range(self.start, self.stop)

    def __len__(self) -> int:
        return self.stop - self.start


def apply_cuts(graph: HDGraph, cutset: CutSet) -> list[Partition]:
    """Split the chain at the cut edges.

    The result is ordered, and the partitions are disjoint, contiguous and
    cover every node; len(result) == len(cuts) + 1.
    """
    n = len(graph)
    for edge in cutset.cuts:
        if not 1 <= edge <= n - 1:
            raise ValueError(f"cut edge {edge} out of range for {n} nodes")
    bounds = [0, *cutset.cuts, n]
    return [Partition(lo, hi) for lo, hi in zip(bounds, bounds[1:])]


@dataclass
class DesignPoint:
    """Optimisation state: all node foldings plus the cut set."""

    graph: HDGraph
    cutset: CutSet

    def copy(self) -> "DesignPoint":
        return DesignPoint(graph=self.graph.copy(), cutset=self.cutset)

    def partitions(self) -> list[Partition]:
        return apply_cuts(self.graph, self.cutset)

    def with_folding(self, index: int, var: str, value: int) -> "DesignPoint":
        point = self.copy()
        setattr(point.graph.nodes[index], var, value)
        return point

    def with_cut_toggled(self, edge: int) -> "DesignPoint":
        return DesignPoint(graph=self.graph.copy(), cutset=self.cutset.toggled(edge))


def build_hdgraph(model: NetworkModel, backend: BackendDescriptor) -> HDGraph:
    """One computation node per layer, foldings initialised to 1.

    A node is flagged for intra matching when its layer's output channel
    count is tied to the input (pooling and activation kinds) and the backend
    enforces that constraint.
    """
    if not model.layers:
        raise ValueError("cannot build a graph from an empty model")
    nodes = []
    for index, layer in enumerate(model.layers):
        if not backend.supports(layer.kind):
            raise UnsupportedLayerError(
                f"backend {backend.name} does not support {layer.kind.value} "
                f"(layer '{layer.name}')")
        nodes.append(HDNode(
            index=index,
            layer=layer,
            requires_intra_match=(layer.kind in CHANNEL_PRESERVING_KINDS
                                  and backend.enforce_intra_matching),
        ))
    return HDGraph(nodes=nodes, backend=backend)


def folding_domains(node: HDNode,
                    backend: BackendDescriptor | None = None
                    ) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    """Allowed values of (s_in, s_out, k): exact divisor sets of the folded
    dimensions, intersected with any backend domain restriction."""
    layer = node.layer
    doms = {
        "s_in": divisors(layer.channels_in),
        "s_out": divisors(layer.channels_out),
        "k": divisors(layer.kernel_size),
    }
    if backend is not None and backend.domain_filter is not None:
        for var, dom in doms.items():
            doms[var] = tuple(sorted(backend.domain_filter(node, var, dom)))
    return doms["s_in"], doms["s_out"], doms["k"]


def resource_minimal_init(graph: HDGraph) -> DesignPoint:
    """Cheapest possible state: every folding 1, every edge cut."""
    point = DesignPoint(graph=graph.copy(), cutset=CutSet(tuple(range(1, len(graph)))))
    for node in point.graph.nodes:
        node.s_in = node.s_out = node.k = 1
    return point


def propagate_matching(point: DesignPoint, changed_node: int,
                       changed_var: str | None = None) -> DesignPoint:
    """Restore the matching equalities after one node's foldings changed.

    Values are copied breadth-first outward from the changed node: within an
    intra-matched node s_in and s_out are equalised (the changed variable
    wins), and across uncut edges s_out of a producer is tied to s_in of its
    consumer when the backend enforces inter matching. Propagation stops at
    cut edges. Raises PropagationError when a forced value does not divide
    the target dimension; callers must then reject the transform.

    The input point must be consistent everywhere except at the changed
    node, and the changed node's own values must lie in its domains. The
    operation is idempotent.
    """
    backend = point.graph.backend
    new = point.copy()
    nodes = new.graph.nodes
    n = len(nodes)
    if not 0 <= changed_node < n:
        raise ValueError(f"node index {changed_node} out of range")
    cut_after = set(new.cutset.cuts)  # edge id e == boundary offset before node e

    pinned: dict[tuple[int, str], int] = {}
    work: deque[tuple[int, str]] = deque()

    def pin(idx: int, var: str, value: int, forced: bool):
        key = (idx, var)
        if key in pinned:
            if pinned[key] != value:
                raise PropagationError(
                    f"conflicting folding requirements at node {idx}")
            return
        node = nodes[idx]
        if forced:
            dim = node.layer.channels_in if var == "s_in" else node.layer.channels_out
            if dim % value != 0:
                raise PropagationError(
                    f"forced {var}={value} does not divide {dim} at node {idx} "
                    f"('{node.layer.name}')")
            setattr(node, var, value)
        pinned[key] = value
        work.append(key)

    src = nodes[changed_node]
    if (src.requires_intra_match and backend.enforce_intra_matching
            and src.s_in != src.s_out):
        # the node's own mismatch resolves in favour of the changed variable
        winner = "s_out" if changed_var == "s_out" else "s_in"
        loser = "s_in" if winner == "s_out" else "s_out"
        pin(changed_node, winner, getattr(src, winner), forced=False)
        pin(changed_node, loser, getattr(src, winner), forced=True)
    else:
        pin(changed_node, "s_in", src.s_in, forced=False)
        pin(changed_node, "s_out", src.s_out, forced=False)

    while work:
        idx, var = work.popleft()
        value = pinned[(idx, var)]
        node = nodes[idx]
        if node.requires_intra_match and backend.enforce_intra_matching:
            other = "s_out" if var == "s_in" else "s_in"
            pin(idx, other, value, forced=True)
        if backend.enforce_inter_matching:
            if var == "s_in" and idx > 0 and idx not in cut_after:
                pin(idx - 1, "s_out", value, forced=True)
            if var == "s_out" and idx + 1 < n and (idx + 1) not in cut_after:
                pin(idx + 1, "s_in", value, forced=True)
    return new
