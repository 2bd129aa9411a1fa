"""Analytical layer stack and hardware cost model for the architecture family.

Every architecture expands to the same canonical stack:

    input -> conv1d(k=16, 32 filters) -> batchnorm -> relu
          -> B residual blocks
          -> lstm(2^z cells, consuming the feature map as a sequence and
             emitting its final hidden state)
          -> dense(num_classes) -> softmax

and each residual block is

    conv1d -> batchnorm -> relu -> dropout -> conv1d -> batchnorm
    -> add skip (1x1 projection conv when channel counts differ) -> relu.

All convolutions are stride 1 with "same" padding, so the sequence length
never changes before the LSTM. Block i (1-based) uses 32 * 2^floor((i-1)/x)
filters.

Parameter accounting (values stored on device):
    conv1d     k*Cin*Cout + Cout
    batchnorm  4*Cout           (gamma, beta, running mean, running var)
    lstm       4*(din*h + h^2 + h)
    dense      h*C + C
    add-skip   1*Cin*Cout + Cout when projecting, else 0

FLOP convention (1 multiply-accumulate = 2 FLOPs, per single inference):
    conv1d     2*k*Cin*Cout*L + Cout*L
    batchnorm  2*Cout*L          (scale + shift)
    relu       Cout*L
    dropout    0                 (identity at inference)
    add-skip   Cout*L, plus projection conv cost when present
    lstm       2*4*(din*h + h^2)*T + 5*h*T
    dense      2*h*C
    softmax    3*C
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field

from .archspace import ArchParams, ArchitectureSpace


@dataclass(frozen=True)
class NetConfig:
    """Fixed parts of the network family; only ``num_classes`` usually varies."""

    input_len: int = 256
    input_channels: int = 1
    kernel: int = 16
    base_filters: int = 32
    num_classes: int = 2
    bytes_per_param: int = 4

    def __post_init__(self):
        if self.input_len <= 0:
            raise ValueError("input_len must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.kernel <= 0 or self.base_filters <= 0:
            raise ValueError("kernel and base_filters must be positive")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    output_len: int
    params: int
    flops: int


@dataclass(frozen=True)
class NetworkSummary:
    layers: tuple[LayerSpec, ...]
    param_count: int
    storage_bytes: int
    flops: int


def filter_schedule(arch: ArchParams) -> list[int]:
    """Per-block filter counts: 32 * 2^floor((i-1)/x) for block i (1-based)."""
    return [32 << ((i - 1) // arch.filter_interval) for i in range(1, arch.blocks + 1)]


def _conv(cin: int, cout: int, k: int, length: int) -> tuple[int, int]:
    params = k * cin * cout + cout
    flops = 2 * k * cin * cout * length + cout * length
    return params, flops


def build(arch: ArchParams, cfg: NetConfig | None = None) -> NetworkSummary:
    """Expand an architecture into the canonical stack with per-layer costs."""
    cfg = cfg or NetConfig()
    k, length = cfg.kernel, cfg.input_len
    layers: list[LayerSpec] = []

    def add(kind: str, cin: int, cout: int, out_len: int, params: int, flops: int):
        layers.append(LayerSpec(kind, cin, cout, out_len, params, flops))

    # Stem
    p, f = _conv(cfg.input_channels, cfg.base_filters, k, length)
    add("conv1d", cfg.input_channels, cfg.base_filters, length, p, f)
    add("batchnorm", cfg.base_filters, cfg.base_filters, length, 4 * cfg.base_filters, 2 * cfg.base_filters * length)
    add("relu", cfg.base_filters, cfg.base_filters, length, 0, cfg.base_filters * length)

    channels = cfg.base_filters
    for filters in filter_schedule(arch):
        p, f = _conv(channels, filters, k, length)
        add("conv1d", channels, filters, length, p, f)
        add("batchnorm", filters, filters, length, 4 * filters, 2 * filters * length)
        add("relu", filters, filters, length, 0, filters * length)
        add("dropout", filters, filters, length, 0, 0)
        p, f = _conv(filters, filters, k, length)
        add("conv1d", filters, filters, length, p, f)
        add("batchnorm", filters, filters, length, 4 * filters, 2 * filters * length)
        skip_params, skip_flops = 0, filters * length
        if channels != filters:  # 1x1 projection on the shortcut
            proj_p, proj_f = _conv(channels, filters, 1, length)
            skip_params += proj_p
            skip_flops += proj_f
        add("add-skip", filters, filters, length, skip_params, skip_flops)
        add("relu", filters, filters, length, 0, filters * length)
        channels = filters

    h = arch.lstm_cells
    lstm_params = 4 * (channels * h + h * h + h)
    lstm_flops = 2 * 4 * (channels * h + h * h) * length + 5 * h * length
    add("lstm", channels, h, 1, lstm_params, lstm_flops)
    add("dense", h, cfg.num_classes, 1, h * cfg.num_classes + cfg.num_classes, 2 * h * cfg.num_classes)
    add("softmax", cfg.num_classes, cfg.num_classes, 1, 0, 3 * cfg.num_classes)

    param_count = sum(layer.params for layer in layers)
    total_flops = sum(layer.flops for layer in layers)
    return NetworkSummary(
        layers=tuple(layers),
        param_count=param_count,
        storage_bytes=param_count * cfg.bytes_per_param,
        flops=total_flops,
    )


def s_max(space: ArchitectureSpace, cfg: NetConfig | None = None) -> int:
    """Largest storage footprint over the space, the S_MAX of the cost function."""
    if space.size == 0:
        raise ValueError("cannot take s_max of an empty architecture space")
    cfg = cfg or NetConfig()
    return max(build(arch, cfg).storage_bytes for arch in space)


def describe_csv(summary: NetworkSummary) -> str:
    """Layer table as CSV: kind,in_ch,out_ch,out_len,params,flops plus totals."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["kind", "in_ch", "out_ch", "out_len", "params", "flops"])
    for layer in summary.layers:
        writer.writerow([layer.kind, layer.in_channels, layer.out_channels,
                         layer.output_len, layer.params, layer.flops])
    writer.writerow(["total", "", "", "", summary.param_count, summary.flops])
    return out.getvalue()
