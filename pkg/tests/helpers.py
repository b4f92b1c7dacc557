"""Shared fixtures: layer builders, platforms and a random network generator."""

from __future__ import annotations

import random

from streamfold import (
    HDGraph,
    LayerKind,
    LayerSpec,
    NetworkModel,
    Platform,
    ResourceVector,
    build_hdgraph,
    get_backend,
)

BACKEND_NAMES = ("fpgaconvnet-like", "finn-like", "hls4ml-like")


def conv(name, c_in, c_out, rows_in, cols_in, kernel=3, stride=1, padding=0,
         weight_bits=16, activation_bits=16):
    rows_out = (rows_in + 2 * padding - kernel) // stride + 1
    cols_out = (cols_in + 2 * padding - kernel) // stride + 1
    return LayerSpec(name=name, kind=LayerKind.CONVOLUTION,
                     channels_in=c_in, channels_out=c_out,
                     rows_in=rows_in, cols_in=cols_in,
                     rows_out=rows_out, cols_out=cols_out,
                     kernel_rows=kernel, kernel_cols=kernel,
                     stride=stride, padding=padding,
                     weight_bits=weight_bits, activation_bits=activation_bits)


def pool(name, channels, rows_in, cols_in, kernel=2, stride=2,
         activation_bits=16):
    rows_out = (rows_in - kernel) // stride + 1
    cols_out = (cols_in - kernel) // stride + 1
    return LayerSpec(name=name, kind=LayerKind.POOLING,
                     channels_in=channels, channels_out=channels,
                     rows_in=rows_in, cols_in=cols_in,
                     rows_out=rows_out, cols_out=cols_out,
                     kernel_rows=kernel, kernel_cols=kernel, stride=stride,
                     activation_bits=activation_bits)


def relu(name, channels, rows_in=1, cols_in=1, activation_bits=16):
    return LayerSpec(name=name, kind=LayerKind.RELU,
                     channels_in=channels, channels_out=channels,
                     rows_in=rows_in, cols_in=cols_in,
                     rows_out=rows_in, cols_out=cols_in,
                     activation_bits=activation_bits)


def gap(name, channels, rows_in, cols_in, activation_bits=16):
    return LayerSpec(name=name, kind=LayerKind.GLOBAL_POOLING,
                     channels_in=channels, channels_out=channels,
                     rows_in=rows_in, cols_in=cols_in,
                     activation_bits=activation_bits)


def dense(name, c_in, c_out, weight_bits=16, activation_bits=16):
    return LayerSpec(name=name, kind=LayerKind.DENSE,
                     channels_in=c_in, channels_out=c_out,
                     weight_bits=weight_bits, activation_bits=activation_bits)


def net(*layers, name="testnet"):
    return NetworkModel(name=name, layers=tuple(layers))


def graph(backend_name, *layers) -> HDGraph:
    return build_hdgraph(net(*layers), get_backend(backend_name))


def generous_platform(reconfig_time_s=1e-3, **overrides) -> Platform:
    kw = dict(
        name="generous",
        resources=ResourceVector(dsp=100_000, bram=100_000,
                                 lut=10_000_000, ff=10_000_000),
        mem_bandwidth_bytes_per_s=1e15,
        reconfig_time_s=reconfig_time_s,
        clock_hz=1e8,
    )
    kw.update(overrides)
    return Platform(**kw)


def random_chain(rng: random.Random, max_nodes=3, max_channels=8):
    """Random valid sequential net with every channel dimension <= max_channels.

    Dense layers only follow 1x1 feature maps (or start the chain) so the
    implicit flatten never inflates a channel count past the bound.
    """
    n = rng.randint(1, max_nodes)
    layers = []
    channels = rng.randint(1, max_channels)
    rows = cols = rng.choice([1, 4, 5, 6, 8])
    for i in range(n):
        kinds = []
        if rows == 1 and cols == 1:
            kinds.append("dense")
        else:
            kinds.append("conv")
            kinds.append("relu")
            if rows >= 2:
                kinds.extend(["pool", "gap"])
        kind = rng.choice(kinds)
        name = f"{kind}{i}"
        if kind == "dense":
            c_out = rng.randint(1, max_channels)
            layers.append(dense(name, channels, c_out))
            channels = c_out
        elif kind == "conv":
            kernel = rng.choice([k for k in (1, 2, 3) if k <= min(rows, cols)])
            c_out = rng.randint(1, max_channels)
            layers.append(conv(name, channels, c_out, rows, cols, kernel=kernel))
            rows = rows - kernel + 1
            cols = cols - kernel + 1
            channels = c_out
        elif kind == "relu":
            layers.append(relu(name, channels, rows, cols))
        elif kind == "pool":
            layers.append(pool(name, channels, rows, cols, kernel=2, stride=2))
            rows = (rows - 2) // 2 + 1
            cols = (cols - 2) // 2 + 1
        else:
            layers.append(gap(name, channels, rows, cols))
            rows = cols = 1
    return net(*layers, name=f"random{rng.randint(0, 10**6)}")
