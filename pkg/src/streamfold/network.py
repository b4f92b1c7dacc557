"""Sequential CNN model descriptions: parsing, validation and shape inference.

Models are plain chains of layers. Dense layers are normalised to 1x1
spatial dims and a 1x1 kernel so that every layer exposes the same
(channels_in, channels_out, kernel) tuple to the rest of the toolchain.
There is no flatten layer kind: a Dense layer directly after a spatial layer
must declare channels_in equal to the predecessor's channels_out * rows_out
* cols_out.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

DEFAULT_WEIGHT_BITS = 16
DEFAULT_ACTIVATION_BITS = 16


class LayerKind(enum.Enum):
    CONVOLUTION = "Convolution"
    DENSE = "Dense"
    POOLING = "Pooling"
    RELU = "ReLU"
    GLOBAL_POOLING = "GlobalPooling"


# kinds whose output spatial dims follow the sliding-window formula
SPATIAL_KINDS = frozenset({LayerKind.CONVOLUTION, LayerKind.POOLING})
# kinds whose output channel count is tied to the input channel count
CHANNEL_PRESERVING_KINDS = frozenset(
    {LayerKind.POOLING, LayerKind.RELU, LayerKind.GLOBAL_POOLING}
)
# kinds carrying trainable weights (and therefore multipliers / weight storage)
WEIGHTED_KINDS = frozenset({LayerKind.CONVOLUTION, LayerKind.DENSE})


class ParseError(ValueError):
    """A network document is malformed or violates a model invariant."""


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: LayerKind
    channels_in: int
    channels_out: int
    rows_in: int = 1
    cols_in: int = 1
    rows_out: int = 1
    cols_out: int = 1
    kernel_rows: int = 1
    kernel_cols: int = 1
    stride: int = 1
    padding: int = 0
    weight_bits: int = DEFAULT_WEIGHT_BITS
    activation_bits: int = DEFAULT_ACTIVATION_BITS

    @property
    def kernel_size(self) -> int:
        return self.kernel_rows * self.kernel_cols


@dataclass(frozen=True)
class NetworkModel:
    name: str
    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)


def infer_output_shape(kind: LayerKind, rows_in: int, cols_in: int,
                       kernel_rows: int, kernel_cols: int,
                       stride: int, padding: int) -> tuple[int, int]:
    """Output spatial dims implied by the layer's own parameters."""
    if kind in SPATIAL_KINDS:
        rows_out = (rows_in + 2 * padding - kernel_rows) // stride + 1
        cols_out = (cols_in + 2 * padding - kernel_cols) // stride + 1
        return rows_out, cols_out
    if kind == LayerKind.RELU:
        return rows_in, cols_in
    # Dense and GlobalPooling collapse the spatial dims
    return 1, 1


def layer_violations(layer: LayerSpec) -> list[str]:
    """Invariant violations for a single layer, empty if it is well formed."""
    out = []

    def bad(msg):
        out.append(f"layer '{layer.name}': {msg}")

    for attr in ("channels_in", "channels_out", "rows_in", "cols_in",
                 "rows_out", "cols_out", "kernel_rows", "kernel_cols",
                 "weight_bits", "activation_bits"):
        if getattr(layer, attr) < 1:
            bad(f"{attr} must be positive, got {getattr(layer, attr)}")
    if layer.padding < 0:
        bad(f"padding must be non-negative, got {layer.padding}")
    if layer.kind in SPATIAL_KINDS and layer.stride < 1:
        bad(f"stride must be positive for {layer.kind.value}, got {layer.stride}")
    elif layer.stride < 0:
        bad(f"stride must be non-negative, got {layer.stride}")
    if out:
        return out

    if layer.kind in CHANNEL_PRESERVING_KINDS and layer.channels_out != layer.channels_in:
        bad(f"{layer.kind.value} must preserve channels, "
            f"got channels_in={layer.channels_in} channels_out={layer.channels_out}")
    if layer.kind == LayerKind.DENSE:
        if (layer.rows_in, layer.cols_in) != (1, 1):
            bad("Dense layers must have 1x1 input spatial dims")
        if (layer.rows_out, layer.cols_out) != (1, 1):
            bad("Dense layers must have 1x1 output spatial dims")
    if layer.kind in (LayerKind.DENSE, LayerKind.RELU, LayerKind.GLOBAL_POOLING):
        if (layer.kernel_rows, layer.kernel_cols) != (1, 1):
            bad(f"{layer.kind.value} layers must have a 1x1 kernel")
    expected = infer_output_shape(layer.kind, layer.rows_in, layer.cols_in,
                                  layer.kernel_rows, layer.kernel_cols,
                                  layer.stride, layer.padding)
    if layer.kind != LayerKind.DENSE and (layer.rows_out, layer.cols_out) != expected:
        bad(f"output dims {layer.rows_out}x{layer.cols_out} inconsistent with "
            f"kernel/stride/padding, expected {expected[0]}x{expected[1]}")
    return out


def validate_network(model: NetworkModel) -> list[str]:
    """All invariant violations of the model; an empty list means valid."""
    out = []
    if not model.layers:
        return ["network has no layers"]
    for layer in model.layers:
        out.extend(layer_violations(layer))
    for prev, cur in zip(model.layers, model.layers[1:]):
        if cur.kind == LayerKind.DENSE:
            flat = prev.channels_out * prev.rows_out * prev.cols_out
            if cur.channels_in != flat:
                out.append(
                    f"layer '{cur.name}': channels_in={cur.channels_in} does not match "
                    f"flattened output {flat} of layer '{prev.name}'")
        else:
            if (cur.channels_in, cur.rows_in, cur.cols_in) != \
                    (prev.channels_out, prev.rows_out, prev.cols_out):
                out.append(
                    f"layer '{cur.name}': input shape "
                    f"{cur.channels_in}x{cur.rows_in}x{cur.cols_in} does not match "
                    f"output shape {prev.channels_out}x{prev.rows_out}x{prev.cols_out} "
                    f"of layer '{prev.name}'")
    return out


_TOP_LEVEL_FIELDS = {"name", "defaults", "layers"}
_DEFAULTS_FIELDS = {"weight_bits", "activation_bits"}
_LAYER_FIELDS = {
    "name", "kind", "channels_in", "channels_out", "rows_in", "cols_in",
    "rows_out", "cols_out", "kernel", "stride", "padding",
    "weight_bits", "activation_bits",
}


def _require_int(doc: dict, key: str, where: str, default=None) -> int:
    if key not in doc:
        if default is None:
            raise ParseError(f"{where}: missing required field '{key}'")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{where}: field '{key}' must be an integer, got {value!r}")
    return value


def _parse_layer(doc: dict, index: int, defaults: dict) -> LayerSpec:
    where = f"layers[{index}]"
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object")
    unknown = set(doc) - _LAYER_FIELDS
    if unknown:
        raise ParseError(f"{where}: unknown fields {sorted(unknown)}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ParseError(f"{where}: 'name' must be a non-empty string")
    where = f"layer '{name}'"
    kind_name = doc.get("kind")
    try:
        kind = LayerKind(kind_name)
    except ValueError:
        raise ParseError(f"{where}: unknown layer kind {kind_name!r}") from None

    channels_in = _require_int(doc, "channels_in", where)
    if kind in CHANNEL_PRESERVING_KINDS:
        channels_out = _require_int(doc, "channels_out", where, default=channels_in)
    else:
        channels_out = _require_int(doc, "channels_out", where)
    rows_in = _require_int(doc, "rows_in", where, default=1)
    cols_in = _require_int(doc, "cols_in", where, default=1)
    kernel = doc.get("kernel", [1, 1])
    if (not isinstance(kernel, list) or len(kernel) != 2
            or not all(isinstance(k, int) and not isinstance(k, bool) for k in kernel)):
        raise ParseError(f"{where}: 'kernel' must be a [rows, cols] pair of integers")
    stride = _require_int(doc, "stride", where, default=1)
    padding = _require_int(doc, "padding", where, default=0)
    for attr, value in (("channels_in", channels_in), ("channels_out", channels_out),
                        ("rows_in", rows_in), ("cols_in", cols_in),
                        ("kernel rows", kernel[0]), ("kernel cols", kernel[1])):
        if value < 1:
            raise ParseError(f"{where}: non-positive dimension {attr}={value}")

    inferred = infer_output_shape(kind, rows_in, cols_in, kernel[0], kernel[1],
                                  stride, padding) if stride != 0 else (0, 0)
    rows_out = _require_int(doc, "rows_out", where, default=inferred[0])
    cols_out = _require_int(doc, "cols_out", where, default=inferred[1])
    if rows_out < 1 or cols_out < 1:
        raise ParseError(
            f"{where}: non-positive output dims {rows_out}x{cols_out} "
            f"(kernel {kernel[0]}x{kernel[1]}, stride {stride}, padding {padding})")

    return LayerSpec(
        name=name, kind=kind,
        channels_in=channels_in, channels_out=channels_out,
        rows_in=rows_in, cols_in=cols_in, rows_out=rows_out, cols_out=cols_out,
        kernel_rows=kernel[0], kernel_cols=kernel[1],
        stride=stride, padding=padding,
        weight_bits=_require_int(doc, "weight_bits", where,
                                 default=defaults["weight_bits"]),
        activation_bits=_require_int(doc, "activation_bits", where,
                                     default=defaults["activation_bits"]),
    )


def parse_network(source: str | dict) -> NetworkModel:
    """Parse a network document (JSON text or an already-decoded dict).

    The returned model satisfies every layer and chaining invariant; output
    spatial dims that are not stated in the document are inferred from
    kernel, stride and padding.
    """
    if isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    else:
        doc = source
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    unknown = set(doc) - _TOP_LEVEL_FIELDS
    if unknown:
        raise ParseError(f"unknown top-level fields {sorted(unknown)}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ParseError("'name' must be a non-empty string")
    raw_defaults = doc.get("defaults", {})
    if not isinstance(raw_defaults, dict) or set(raw_defaults) - _DEFAULTS_FIELDS:
        raise ParseError(f"'defaults' may only contain {sorted(_DEFAULTS_FIELDS)}")
    defaults = {
        "weight_bits": _require_int(raw_defaults, "weight_bits", "defaults",
                                    default=DEFAULT_WEIGHT_BITS),
        "activation_bits": _require_int(raw_defaults, "activation_bits", "defaults",
                                        default=DEFAULT_ACTIVATION_BITS),
    }
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ParseError("'layers' must be a non-empty list")

    layers = tuple(_parse_layer(layer, i, defaults)
                   for i, layer in enumerate(raw_layers))
    model = NetworkModel(name=name, layers=layers)
    violations = validate_network(model)
    if violations:
        raise ParseError("; ".join(violations))
    return model


def serialize_network(model: NetworkModel) -> str:
    """JSON text for the model; parse_network(serialize_network(m)) == m."""
    doc = {
        "name": model.name,
        "layers": [
            {
                "name": layer.name,
                "kind": layer.kind.value,
                "channels_in": layer.channels_in,
                "channels_out": layer.channels_out,
                "rows_in": layer.rows_in,
                "cols_in": layer.cols_in,
                "kernel": [layer.kernel_rows, layer.kernel_cols],
                "stride": layer.stride,
                "padding": layer.padding,
                "weight_bits": layer.weight_bits,
                "activation_bits": layer.activation_bits,
            }
            for layer in model.layers
        ],
    }
    return json.dumps(doc, indent=2)


def load_network(path) -> NetworkModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read network file '{path}': {exc}") from exc
    return parse_network(text)
