"""Multi-resolution periodic pattern forecaster.

The lookback is cut into patches at several resolutions (one conv kernel of
width r, stride r), each patched view is scanned by a dilated convolution
whose dilation equals the patch-level period and whose kernel covers the
number of period repetitions in the lookback, and the trailing one-period
slice of each scan is kept.  All slices concatenate into a pattern bank of
width P; a learnable per-channel sigmoid gate rescales the bank, and a
single shared affine layer projects the flattened bank to the horizon.

Pattern extraction weights are shared across channels; the gate matrix is
the only channel-specific parameter.  The only nonlinearity in the network
is the gate's sigmoid.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .rng import SplitMix64, derive
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MPPNConfig:
    """Geometry and seed of one model instance.

    A (period, resolution) pair survives only if the lookback holds at
    least one full period and the period holds at least one patch; pairs
    failing either test are dropped with a warning.
    """

    lookback: int
    horizon: int
    channels: int
    hidden: int = 48
    resolutions: tuple[int, ...] = (1, 3, 4, 6)
    periods: tuple[int, ...] = (24,)
    overlap: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.lookback < 1 or self.horizon < 1 or self.channels < 1 or self.hidden < 1:
            raise ConfigError(
                f"config: lookback/horizon/channels/hidden must be positive, got "
                f"{self.lookback}/{self.horizon}/{self.channels}/{self.hidden}")
        object.__setattr__(self, "resolutions", tuple(int(r) for r in self.resolutions))
        object.__setattr__(self, "periods", tuple(int(p) for p in self.periods))
        for r in self.resolutions:
            if r < 1 or r > self.lookback:
                raise ConfigError(f"config: resolution {r} outside [1, lookback={self.lookback}]")
        for p in self.periods:
            if p < 2:
                raise ConfigError(f"config: period {p} must be >= 2")
        dropped = [(p, r) for p in self.periods for r in self.resolutions
                   if self.lookback // p < 1 or p // r < 1]
        for p, r in dropped:
            log.warning("config: dropping (period=%d, resolution=%d): kernel %d, phases %d",
                        p, r, self.lookback // p, p // r)
        if not self.retained_pairs:
            raise ConfigError(
                f"config: no usable (period, resolution) pairs for lookback {self.lookback}, "
                f"periods {self.periods}, resolutions {self.resolutions}")

    @property
    def retained_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple((p, r) for p in self.periods for r in self.resolutions
                     if self.lookback // p >= 1 and p // r >= 1)

    @property
    def used_resolutions(self) -> tuple[int, ...]:
        used = []
        for r in self.resolutions:
            if r not in used and any(rr == r for _, rr in self.retained_pairs):
                used.append(r)
        return tuple(used)


def pattern_dim(config: MPPNConfig) -> int:
    """Total number of pattern slots: sum of period//resolution over all
    retained pairs."""
    return sum(p // r for p, r in config.retained_pairs)


@dataclass
class MPPNParams:
    """All learnable arrays of one model instance."""

    patch: dict[int, tuple[Tensor, Tensor]]  # r -> (weight [D,1,r], bias [D])
    mine: dict[tuple[int, int], tuple[Tensor, Tensor]]  # (period, r) -> ([D,D,K], [D])
    embed: Tensor  # [C, P] gate logits
    out_weight: Tensor  # [P*D, H]
    out_bias: Tensor  # [H]

    @classmethod
    def init(cls, config: MPPNConfig) -> "MPPNParams":
        """Seeded init: weights uniform +-1/sqrt(fan_in), biases and gate
        logits zero (gate starts at 0.5)."""
        rng = SplitMix64(derive(config.seed, "mppn-init"))
        d = config.hidden
        patch = {}
        for r in config.used_resolutions:
            bound = 1.0 / math.sqrt(1 * r)
            patch[r] = (Tensor(rng.uniform(-bound, bound, (d, 1, r)), requires_grad=True),
                        Tensor(np.zeros(d), requires_grad=True))
        mine = {}
        for p, r in config.retained_pairs:
            k = config.lookback // p
            bound = 1.0 / math.sqrt(d * k)
            mine[(p, r)] = (Tensor(rng.uniform(-bound, bound, (d, d, k)), requires_grad=True),
                            Tensor(np.zeros(d), requires_grad=True))
        p_dim = pattern_dim(config)
        embed = Tensor(np.zeros((config.channels, p_dim)), requires_grad=True)
        bound = 1.0 / math.sqrt(p_dim * d)
        out_w = Tensor(rng.uniform(-bound, bound, (p_dim * d, config.horizon)), requires_grad=True)
        out_b = Tensor(np.zeros(config.horizon), requires_grad=True)
        return cls(patch, mine, embed, out_w, out_b)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for r, (w, b) in self.patch.items():
            out.append((f"patch.{r}.weight", w))
            out.append((f"patch.{r}.bias", b))
        for (p, r), (w, b) in self.mine.items():
            out.append((f"mine.{p}.{r}.weight", w))
            out.append((f"mine.{p}.{r}.bias", b))
        out.append(("embed", self.embed))
        out.append(("out.weight", self.out_weight))
        out.append(("out.bias", self.out_bias))
        return out

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def _patch_batch(x3: Tensor, r: int, params: MPPNParams, config: MPPNConfig) -> Tensor:
    """[N, 1, L] -> [N, D, ceil(L/r)] semantic units at resolution r.

    Non-overlap mode left-pads by replicating the earliest value so the
    most recent timestep always closes a patch; overlap mode strides by 1
    on the raw series and keeps the trailing ceil(L/r) positions so the
    mining geometry is unchanged.
    """
    length = config.lookback
    w, b = params.patch[r]
    keep = -(-length // r)  # ceil
    if config.overlap:
        raw = T.conv1d(x3, w, b, stride=1)
        have = raw.shape[-1]
        if have < keep:
            raise ConfigError(f"patch: overlap output {have} shorter than {keep} at resolution {r}")
        if have == keep:
            return raw
        return T.slice_axis(raw, 2, have - keep, have)
    pad = (-length) % r
    padded = T.pad_edge(x3, pad, 0) if pad else x3
    return T.conv1d(padded, w, b, stride=r)


def _mine_batch(xr: Tensor, period: int, r: int, params: MPPNParams, config: MPPNConfig) -> Tensor:
    """[N, D, L_r] -> [N, D, period//r] phase aggregates for one pair.

    Kernel size is the period count in the lookback, dilation is the patch
    count per period, and only the trailing one-period window of positions
    survives, so slot p holds the most recent aggregates of phase p.
    """
    kernel = config.lookback // period
    dil = period // r
    w, b = params.mine[(period, r)]
    try:
        raw = T.conv1d(xr, w, b, stride=1, dilation=dil)
    except ShapeError as exc:
        raise ConfigError(f"mine: (period={period}, resolution={r}) does not fit: {exc}") from exc
    have = raw.shape[-1]
    if have < dil:
        raise ConfigError(
            f"mine: (period={period}, resolution={r}) yields {have} positions, needs {dil}")
    if have == dil:
        return raw
    return T.slice_axis(raw, 2, have - dil, have)


def multi_resolution_patch(x: Tensor, r: int, params: MPPNParams, config: MPPNConfig) -> Tensor:
    """Single-channel view: [L] -> [D, L_r]."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 1 or x.shape[0] != config.lookback:
        raise ShapeError(f"multi_resolution_patch: expected [{config.lookback}], got {x.shape}")
    out = _patch_batch(T.reshape(x, (1, 1, config.lookback)), r, params, config)
    return T.reshape(out, out.shape[1:])


def periodic_pattern_mine(xr: Tensor, period: int, r: int, params: MPPNParams,
                          config: MPPNConfig) -> Tensor:
    """Single-channel view: [D, L_r] -> [D, period // r]."""
    xr = xr if isinstance(xr, Tensor) else Tensor(xr)
    if xr.ndim != 2:
        raise ShapeError(f"periodic_pattern_mine: expected [D, L_r], got {xr.shape}")
    out = _mine_batch(T.reshape(xr, (1,) + xr.shape), period, r, params, config)
    return T.reshape(out, out.shape[1:])


def _assemble_batch(xb: Tensor, params: MPPNParams, config: MPPNConfig) -> Tensor:
    """[B, L, C] -> [B, C, P, D] pattern bank, channels folded into the
    batch axis so extraction weights are shared bit-exactly."""
    if xb.ndim != 3 or xb.shape[1] != config.lookback or xb.shape[2] != config.channels:
        raise ShapeError(
            f"assemble: expected [B, {config.lookback}, {config.channels}], got {xb.shape}")
    b, length, c = xb.shape
    x1 = T.reshape(T.transpose(xb, (0, 2, 1)), (b * c, 1, length))
    patched = {r: _patch_batch(x1, r, params, config) for r in config.used_resolutions}
    pieces = [_mine_batch(patched[r], p, r, params, config) for p, r in config.retained_pairs]
    bank = T.concat(pieces, axis=2)  # [B*C, D, P]
    bank = T.transpose(bank, (0, 2, 1))
    return T.reshape(bank, (b, c, pattern_dim(config), config.hidden))


def assemble_patterns(x: Tensor, params: MPPNParams, config: MPPNConfig) -> Tensor:
    """[L, C] -> [C, P, D]; see _assemble_batch for the geometry."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"assemble_patterns: expected [L, C], got {x.shape}")
    out = _assemble_batch(T.reshape(x, (1,) + x.shape), params, config)
    return T.reshape(out, out.shape[1:])


def channel_adapt(bank: Tensor, embed: Tensor) -> Tensor:
    """Scale pattern slots by per-channel sigmoid gates.

    bank is [..., C, P, D] and embed is [C, P]; the gate broadcasts over
    the feature axis (and any leading batch axis).
    """
    embed = embed if isinstance(embed, Tensor) else Tensor(embed)
    if embed.ndim != 2:
        raise ShapeError(f"channel_adapt: embed must be [C, P], got {embed.shape}")
    c, p = embed.shape
    if bank.shape[-3:] != (c, p, bank.shape[-1]):
        raise ShapeError(f"channel_adapt: bank {bank.shape} incompatible with embed {embed.shape}")
    gate = T.reshape(T.sigmoid(embed), (c, p, 1))
    return T.broadcast_mul(bank, gate)


def forward_batch(xb: Tensor, params: MPPNParams, config: MPPNConfig) -> Tensor:
    """[B, L, C] -> [B, H, C] direct multi-horizon forecast."""
    b = xb.shape[0]
    bank = _assemble_batch(xb, params, config)
    adapted = channel_adapt(bank, params.embed)
    flat = T.reshape(adapted, (b, config.channels, pattern_dim(config) * config.hidden))
    y = T.linear(flat, params.out_weight, params.out_bias)  # [B, C, H]
    return T.transpose(y, (0, 2, 1))


def forward(x: Tensor, params: MPPNParams, config: MPPNConfig) -> Tensor:
    """[L, C] -> [H, C] forecast for a single window."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"forward: expected [L, C], got {x.shape}")
    out = forward_batch(T.reshape(x, (1,) + x.shape), params, config)
    return T.reshape(out, out.shape[1:])


def export_gates(params: MPPNParams) -> np.ndarray:
    """Sigmoid of the gate logits as a plain [C, P] matrix in (0, 1)."""
    e = params.embed.data
    out = np.empty_like(e)
    pos = e >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-e[pos]))
    ex = np.exp(e[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def write_gates_csv(path, channel_names: list[str], gates: np.ndarray) -> None:
    """One row per channel, header ``channel,p0,p1,...``; floats use their
    shortest round-trip representation."""
    c, p = gates.shape
    if len(channel_names) != c:
        raise ShapeError(f"gates: {len(channel_names)} names for {c} channels")
    lines = ["channel," + ",".join(f"p{i}" for i in range(p))]
    for name, row in zip(channel_names, gates):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_gates_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    names, rows = [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        names.append(cells[0])
        rows.append([float(v) for v in cells[1:]])
    return names, np.asarray(rows)
