"""Objective and constraint evaluation of design points against a platform.

A partition streams all its nodes concurrently, so its latency is the
largest node latency. The whole design's makespan adds one device
reconfiguration per cut. Constraint checks are pure and independent; a
design is feasible when every check enabled by the backend profile passes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources as importlib_resources

from .backends import ResourceVector, node_latency, node_resources
from .hdgraph import DesignPoint, HDGraph, Partition, folding_domains

_PLATFORM_FIELDS = {"name", "resources", "mem_bandwidth_bytes_per_s",
                    "reconfig_time_s", "clock_hz"}


class PlatformError(ValueError):
    """A platform document is malformed."""


@dataclass(frozen=True)
class Platform:
    name: str
    resources: ResourceVector
    mem_bandwidth_bytes_per_s: float
    reconfig_time_s: float
    clock_hz: float

    def __post_init__(self):
        if self.mem_bandwidth_bytes_per_s <= 0:
            raise PlatformError("mem_bandwidth_bytes_per_s must be positive")
        if self.clock_hz <= 0:
            raise PlatformError("clock_hz must be positive")
        if self.reconfig_time_s < 0:
            raise PlatformError("reconfig_time_s must be non-negative")
        if min(self.resources.as_dict().values()) < 0:
            raise PlatformError("resource counts must be non-negative")


def parse_platform(source: str | dict) -> Platform:
    if isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise PlatformError(
                f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    else:
        doc = source
    if not isinstance(doc, dict) or set(doc) != _PLATFORM_FIELDS:
        raise PlatformError(f"platform document must have exactly the fields "
                            f"{sorted(_PLATFORM_FIELDS)}")
    res = doc["resources"]
    if not isinstance(res, dict) or set(res) != {"dsp", "bram", "lut", "ff"}:
        raise PlatformError("'resources' must map dsp, bram, lut and ff to counts")
    return Platform(
        name=doc["name"],
        resources=ResourceVector(**res),
        mem_bandwidth_bytes_per_s=float(doc["mem_bandwidth_bytes_per_s"]),
        reconfig_time_s=float(doc["reconfig_time_s"]),
        clock_hz=float(doc["clock_hz"]),
    )


def load_platform(path_or_name) -> Platform:
    """Load a platform file; bare names fall back to the bundled fixtures."""
    try:
        with open(path_or_name, "r", encoding="utf-8") as fh:
            return parse_platform(fh.read())
    except OSError as exc:
        ref = importlib_resources.files("streamfold") / "platforms" / f"{path_or_name}.json"
        if ref.is_file():
            return parse_platform(ref.read_text(encoding="utf-8"))
        raise PlatformError(f"cannot read platform file '{path_or_name}': {exc}") from exc


def partition_latency(partition: Partition, graph: HDGraph,
                      platform: Platform) -> float:
    """Latency of the partition: the largest latency among its nodes."""
    return max(node_latency(graph.nodes[i], platform.clock_hz)
               for i in partition.node_indices)


def partition_resources(partition: Partition, graph: HDGraph) -> ResourceVector:
    total = ResourceVector()
    for i in partition.node_indices:
        total = total + node_resources(graph.nodes[i])
    return total


def partition_bandwidth(partition: Partition, graph: HDGraph,
                        platform: Platform) -> float:
    """Average off-chip traffic in bytes/s: boundary feature maps over latency.

    Traffic counts the full input and output feature maps of the partition
    per inference (weights are excluded), sized by the boundary layers'
    activation widths.
    """
    first = graph.nodes[partition.start].layer
    last = graph.nodes[partition.stop - 1].layer
    bytes_in = first.rows_in * first.cols_in * first.channels_in \
        * first.activation_bits / 8
    bytes_out = last.rows_out * last.cols_out * last.channels_out \
        * last.activation_bits / 8
    return (bytes_in + bytes_out) / partition_latency(partition, graph, platform)


def _total_latency(point: DesignPoint, platform: Platform) -> float:
    return sum(partition_latency(p, point.graph, platform)
               for p in point.partitions())


def objective_latency(point: DesignPoint, platform: Platform) -> float:
    """Makespan of one inference: partition latencies plus reconfigurations."""
    return _total_latency(point, platform) \
        + len(point.cutset.cuts) * platform.reconfig_time_s


def objective_throughput(point: DesignPoint, platform: Platform,
                         batch: int) -> float:
    """Negated images/s over a batch (lower is better for the optimisers)."""
    if batch < 1:
        raise ValueError(f"batch must be at least 1, got {batch}")
    total = _total_latency(point, platform)
    return -batch / (batch * total + len(point.cutset.cuts) * platform.reconfig_time_s)


def objective_value(point: DesignPoint, platform: Platform,
                    objective: str, batch: int = 1) -> float:
    if objective == "latency":
        return objective_latency(point, platform)
    if objective == "throughput":
        return objective_throughput(point, platform, batch)
    raise ValueError(f"unknown objective '{objective}'")


def check_resources(point: DesignPoint, platform: Platform) -> list[str]:
    """Each partition must fit the platform's resource vector on its own."""
    out = []
    if not point.graph.backend.enforce_resource:
        return out
    for idx, part in enumerate(point.partitions()):
        used = partition_resources(part, point.graph)
        for comp, avail in platform.resources.as_dict().items():
            got = getattr(used, comp)
            if got > avail:
                out.append(f"partition {idx}: {comp} {got} > {avail}")
    return out


def check_bandwidth(point: DesignPoint, platform: Platform) -> list[str]:
    """Each partition's boundary traffic must be strictly below the platform
    memory bandwidth."""
    out = []
    for idx, part in enumerate(point.partitions()):
        bw = partition_bandwidth(part, point.graph, platform)
        if not bw < platform.mem_bandwidth_bytes_per_s:
            out.append(f"partition {idx}: bandwidth {bw:.6g} B/s >= limit "
                       f"{platform.mem_bandwidth_bytes_per_s:.6g} B/s")
    return out


def check_channel_factors(point: DesignPoint) -> list[str]:
    """Folding values must divide the dimensions they fold (no padding)."""
    out = []
    if not point.graph.backend.enforce_channel_factor:
        return out
    for node in point.graph.nodes:
        layer = node.layer
        if node.s_in < 1 or layer.channels_in % node.s_in != 0:
            out.append(f"node {node.index} ('{layer.name}'): s_in={node.s_in} "
                       f"does not divide channels_in={layer.channels_in}")
        if node.s_out < 1 or layer.channels_out % node.s_out != 0:
            out.append(f"node {node.index} ('{layer.name}'): s_out={node.s_out} "
                       f"does not divide channels_out={layer.channels_out}")
        if node.k < 1 or layer.kernel_size % node.k != 0:
            out.append(f"node {node.index} ('{layer.name}'): k={node.k} "
                       f"does not divide kernel size {layer.kernel_size}")
    return out


def check_intra_matching(point: DesignPoint) -> list[str]:
    """s_in == s_out on nodes whose output channels follow the input; skipped
    when the backend does not enforce intra matching."""
    out = []
    if not point.graph.backend.enforce_intra_matching:
        return out
    for node in point.graph.nodes:
        if node.requires_intra_match and node.s_in != node.s_out:
            out.append(f"node {node.index} ('{node.layer.name}'): "
                       f"s_in={node.s_in} != s_out={node.s_out}")
    return out


def check_inter_matching(point: DesignPoint) -> list[str]:
    """s_out of a producer must equal s_in of its consumer on uncut edges;
    edges crossing a cut are buffered off-chip and exempt."""
    out = []
    if not point.graph.backend.enforce_inter_matching:
        return out
    cut_after = set(point.cutset.cuts)
    nodes = point.graph.nodes
    for left, right in zip(nodes, nodes[1:]):
        if right.index in cut_after:
            continue
        if left.s_out != right.s_in:
            out.append(f"edge {left.index}->{right.index}: s_out={left.s_out} "
                       f"!= s_in={right.s_in}")
    return out


def validate_design(point: DesignPoint, platform: Platform) -> list[str]:
    """All violations across the five checks, gated by the backend profile."""
    return (check_channel_factors(point)
            + check_intra_matching(point)
            + check_inter_matching(point)
            + check_resources(point, platform)
            + check_bandwidth(point, platform))


@dataclass(frozen=True)
class PartitionMetrics:
    latency_s: float
    resources: ResourceVector
    bandwidth_bytes_per_s: float


@dataclass(frozen=True)
class Evaluation:
    per_partition: tuple[PartitionMetrics, ...]
    objective_value: float
    feasible: bool
    violations: tuple[str, ...] = field(default_factory=tuple)


def evaluate_design(point: DesignPoint, platform: Platform,
                    objective: str = "latency", batch: int = 1) -> Evaluation:
    """Aggregate metrics, objective and feasibility for a design point."""
    metrics = tuple(
        PartitionMetrics(
            latency_s=partition_latency(p, point.graph, platform),
            resources=partition_resources(p, point.graph),
            bandwidth_bytes_per_s=partition_bandwidth(p, point.graph, platform),
        )
        for p in point.partitions()
    )
    violations = tuple(validate_design(point, platform))
    return Evaluation(
        per_partition=metrics,
        objective_value=objective_value(point, platform, objective, batch),
        feasible=not violations,
        violations=violations,
    )


def design_space_size(graph: HDGraph) -> int:
    """Exact cardinality of the search space: the product of each node's
    folding-domain sizes times the number of cut subsets."""
    total = 1
    for node in graph.nodes:
        for domain in folding_domains(node, graph.backend):
            total *= len(domain)
    return total * 2 ** (len(graph) - 1)
