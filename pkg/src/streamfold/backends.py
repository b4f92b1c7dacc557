"""Backend profiles and the reference cost models.

A backend profile captures how a streaming-architecture toolflow constrains
and names the per-node folding variables (s_in, s_out, k):

===================  =============  =============  ==================
constraint           fpgaconvnet    finn           hls4ml
-------------------  -------------  -------------  ------------------
resource             yes            yes            yes
channel factor       yes            yes            yes
intra matching       yes            yes            no
inter matching       no             yes            yes
variable names       coarse_in /    SIMD = s_in*k  reuse_factor =
                     coarse_out /   PE   = s_out   (c_in/s_in) *
                     fine                          (c_out/s_out) *
                                                   (K/k)
===================  =============  =============  ==================

The latency and resource models below are documented reference models, not
reproductions of any real toolflow's estimators. Cycle counts are the
steady-state initiation intervals of a folded streaming schedule; pipeline
fill is excluded:

    Convolution    rows_out*cols_out * (c_in/s_in) * (c_out/s_out) * (K/k)
    Dense          (c_in/s_in) * (c_out/s_out)
    Pool/ReLU/GAP  rows_out*cols_out * (c_in/s_in)

Resources (p = s_in*s_out*k, BRAM in 18Kb blocks):

    dsp   p for weighted layers, 0 otherwise
    bram  max(p, ceil(weight_bits*c_in*c_out*K / 18432)) weight banks for
          weighted layers, plus (kernel_rows-1) *
          ceil(cols_in*c_in*activation_bits / 18432) line-buffer blocks for
          Convolution
    lut   300 + 50*(s_in + s_out) + 10*dsp
    ff    lut // 2

The coefficients are arbitrary but fixed; every model is monotone
non-decreasing in each folding variable (latency non-increasing), which the
optimisers rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Mapping

from .network import WEIGHTED_KINDS, LayerKind

if TYPE_CHECKING:
    from .hdgraph import DesignPoint, HDNode

BRAM_BLOCK_BITS = 18432  # one 18Kb block

RESOURCE_COMPONENTS = ("dsp", "bram", "lut", "ff")


class UnsupportedLayerError(ValueError):
    """The backend has no hardware building block for a layer kind."""


class ExportError(ValueError):
    """A design cannot be exported (it violates the enabled constraints)."""


@dataclass(frozen=True)
class ResourceVector:
    dsp: int = 0
    bram: int = 0
    lut: int = 0
    ff: int = 0

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(self.dsp + other.dsp, self.bram + other.bram,
                              self.lut + other.lut, self.ff + other.ff)

    def __le__(self, other: "ResourceVector") -> bool:
        return (self.dsp <= other.dsp and self.bram <= other.bram
                and self.lut <= other.lut and self.ff <= other.ff)

    def as_dict(self) -> dict[str, int]:
        return {"dsp": self.dsp, "bram": self.bram, "lut": self.lut, "ff": self.ff}


ZERO_RESOURCES = ResourceVector()

# variable-mapping styles, one per supported toolflow family
MAP_COARSE = "coarse"
MAP_SIMD_PE = "simd_pe"
MAP_REUSE_FACTOR = "reuse_factor"

# callable(node, variable_name, values) -> iterable of allowed values
DomainFilter = Callable[["HDNode", str, tuple[int, ...]], "tuple[int, ...] | list[int]"]


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    enforce_intra_matching: bool
    enforce_inter_matching: bool
    enforce_channel_factor: bool = True
    enforce_resource: bool = True
    variable_mapping: Mapping[LayerKind, str] = None
    domain_filter: DomainFilter | None = None

    def supports(self, kind: LayerKind) -> bool:
        return kind in self.variable_mapping


def _uniform_mapping(style: str) -> Mapping[LayerKind, str]:
    return {kind: style for kind in LayerKind}


FPGACONVNET_LIKE = BackendDescriptor(
    name="FpgaConvNetLike",
    enforce_intra_matching=True,
    enforce_inter_matching=False,
    variable_mapping=_uniform_mapping(MAP_COARSE),
)

FINN_LIKE = BackendDescriptor(
    name="FinnLike",
    enforce_intra_matching=True,
    enforce_inter_matching=True,
    variable_mapping=_uniform_mapping(MAP_SIMD_PE),
)

HLS4ML_LIKE = BackendDescriptor(
    name="Hls4mlLike",
    enforce_intra_matching=False,
    enforce_inter_matching=True,
    variable_mapping=_uniform_mapping(MAP_REUSE_FACTOR),
)

BACKENDS = {
    "fpgaconvnet-like": FPGACONVNET_LIKE,
    "finn-like": FINN_LIKE,
    "hls4ml-like": HLS4ML_LIKE,
}


def get_backend(name: str) -> BackendDescriptor:
    try:
        return BACKENDS[name]
    except KeyError:
        raise UnsupportedLayerError(
            f"unknown backend '{name}', expected one of {sorted(BACKENDS)}"
        ) from None


def node_cycles(node: "HDNode") -> int:
    """Initiation interval of the node in clock cycles under its foldings."""
    layer = node.layer
    pixels = layer.rows_out * layer.cols_out
    if layer.kind == LayerKind.CONVOLUTION:
        return (pixels * (layer.channels_in // node.s_in)
                * (layer.channels_out // node.s_out)
                * (layer.kernel_size // node.k))
    if layer.kind == LayerKind.DENSE:
        return (layer.channels_in // node.s_in) * (layer.channels_out // node.s_out)
    return pixels * (layer.channels_in // node.s_in)


def node_latency(node: "HDNode", clock_hz: float) -> float:
    """Node latency in seconds; strictly positive."""
    return node_cycles(node) / clock_hz


def node_resources(node: "HDNode") -> ResourceVector:
    """Reference resource estimate; monotone in each folding variable."""
    layer = node.layer
    if layer.kind in WEIGHTED_KINDS:
        dsp = node.s_in * node.s_out * node.k
        weight_volume = (layer.weight_bits * layer.channels_in
                         * layer.channels_out * layer.kernel_size)
        # each of the dsp weight banks holds at least one block
        bram = max(dsp, math.ceil(weight_volume / BRAM_BLOCK_BITS))
    else:
        dsp = 0
        bram = 0
    if layer.kind == LayerKind.CONVOLUTION:
        line_bits = layer.cols_in * layer.channels_in * layer.activation_bits
        bram += (layer.kernel_rows - 1) * math.ceil(line_bits / BRAM_BLOCK_BITS)
    lut = 300 + 50 * (node.s_in + node.s_out) + 10 * dsp
    return ResourceVector(dsp=dsp, bram=bram, lut=lut, ff=lut // 2)


def map_variables(node: "HDNode", backend: BackendDescriptor) -> dict[str, int]:
    """Backend-native parameter names for the node's folding variables."""
    style = backend.variable_mapping.get(node.layer.kind)
    if style is None:
        raise UnsupportedLayerError(
            f"backend {backend.name} does not support {node.layer.kind.value}")
    if style == MAP_COARSE:
        return {"coarse_in": node.s_in, "coarse_out": node.s_out, "fine": node.k}
    if style == MAP_SIMD_PE:
        return {"SIMD": node.s_in * node.k, "PE": node.s_out}
    if style == MAP_REUSE_FACTOR:
        layer = node.layer
        return {"reuse_factor": (layer.channels_in // node.s_in)
                * (layer.channels_out // node.s_out)
                * (layer.kernel_size // node.k)}
    raise UnsupportedLayerError(f"unknown variable mapping style '{style}'")


def export_design(point: "DesignPoint", backend: BackendDescriptor,
                  platform) -> dict:
    """Backend configuration document for a valid design point.

    Refuses to export a point that violates any enabled constraint. The
    document lists, per partition, each node's backend parameters together
    with its predicted latency and resources.
    """
    from .evaluation import validate_design  # avoids a module cycle

    violations = validate_design(point, platform)
    if violations:
        raise ExportError("design violates constraints: " + "; ".join(violations))
    partitions = []
    for part in point.partitions():
        nodes = []
        for idx in part.node_indices:
            node = point.graph.nodes[idx]
            nodes.append({
                "layer": node.layer.name,
                "parameters": map_variables(node, backend),
                "latency_s": node_latency(node, platform.clock_hz),
                "resources": node_resources(node).as_dict(),
            })
        partitions.append({"nodes": nodes})
    return {"backend": backend.name, "partitions": partitions}


def load_design(doc: dict) -> dict:
    """Validate and return an export document produced by export_design."""
    if not isinstance(doc, dict) or set(doc) != {"backend", "partitions"}:
        raise ExportError("design document must have 'backend' and 'partitions'")
    if not isinstance(doc["partitions"], list) or not doc["partitions"]:
        raise ExportError("'partitions' must be a non-empty list")
    for part in doc["partitions"]:
        if set(part) != {"nodes"} or not part["nodes"]:
            raise ExportError("each partition must list its nodes")
        for node in part["nodes"]:
            missing = {"layer", "parameters", "latency_s", "resources"} - set(node)
            if missing:
                raise ExportError(f"node entry missing fields {sorted(missing)}")
    return doc


def design_objective(doc: dict, reconfig_time_s: float,
                     objective: str = "latency", batch: int = 1) -> float:
    """Re-evaluate the objective of an exported design from its document.

    Partition latency is the maximum of its node latencies, matching the
    evaluation module, so the result reproduces the optimiser's objective.
    """
    doc = load_design(doc)
    latencies = [max(node["latency_s"] for node in part["nodes"])
                 for part in doc["partitions"]]
    total = sum(latencies)
    n_cuts = len(latencies) - 1
    if objective == "latency":
        return total + n_cuts * reconfig_time_s
    if objective == "throughput":
        return -batch / (batch * total + n_cuts * reconfig_time_s)
    raise ValueError(f"unknown objective '{objective}'")
