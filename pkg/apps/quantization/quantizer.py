"""
Uniform symmetric weight quantization (per-tensor and per-output-channel).

The quantize-dequantize map is

    w~ = clip(round(w / Δ), -Q, Q) * Δ,    Q = 2^(b-1) - 1

with rounding half away from zero. Arithmetic is carried out in float64 and the result is
returned in the input dtype.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

VALID_BITS = (2, 4, 6, 8)

# Step used when a tensor (or channel) has no range
DEGENERATE_SCALE = float(np.finfo(np.float32).tiny)

DEFAULT_SIGMA_K = 3.0


class ScaleMode(str, Enum):
    MAX = 'max'
    STATISTICAL = 'statistical'


@dataclass(frozen=True)
class QuantScheme:
    """How the clip range of a weight tensor is chosen, and whether per output channel."""
    mode: ScaleMode = ScaleMode.MAX
    k: float = DEFAULT_SIGMA_K
    per_channel: bool = False

    @classmethod
    def statistical(cls, k: float = DEFAULT_SIGMA_K) -> 'QuantScheme':
        return cls(mode=ScaleMode.STATISTICAL, k=k)


MAX_SCHEME = QuantScheme()
PER_CHANNEL_SCHEME = QuantScheme(per_channel=True)


def qmax_for(bits: int) -> int:
    return 2 ** (bits - 1) - 1


def check_bits(bits: int):
    if bits not in VALID_BITS:
        raise ValueError(f"bitwidth must be one of {VALID_BITS}, got {bits}")


@dataclass(frozen=True)
class QuantParams:
    """Step, integer range and bitwidth of one symmetric quantizer."""
    bits: int
    scale: float
    zero_point: int = 0
    qmin: int = 0
    qmax: int = 0
    degenerate: bool = False

    def __post_init__(self):
        check_bits(self.bits)
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not self.qmax:
            q = qmax_for(self.bits)
            object.__setattr__(self, 'qmin', -q)
            object.__setattr__(self, 'qmax', q)
        if not self.qmin <= 0 <= self.qmax:
            raise ValueError("qmin <= 0 <= qmax violated")

    @classmethod
    def symmetric(cls, bits: int, scale: float, degenerate: bool = False) -> 'QuantParams':
        return cls(bits=bits, scale=float(scale), degenerate=degenerate)

    @property
    def clip_range(self) -> float:
        return self.qmax * self.scale


@dataclass(frozen=True)
class ChannelQuantParams:
    """One QuantParams per output channel; all channels share the bitwidth."""
    per_channel: tuple[QuantParams, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'per_channel', tuple(self.per_channel))
        if not self.per_channel:
            raise ValueError("at least one channel is required")
        if len({qp.bits for qp in self.per_channel}) != 1:
            raise ValueError("all channels of a layer share one bitwidth")

    @classmethod
    def from_scales(cls, bits: int, scales: Sequence[float]) -> 'ChannelQuantParams':
        return cls(tuple(
            QuantParams.symmetric(bits, s, degenerate=s <= DEGENERATE_SCALE) for s in scales
        ))

    @property
    def bits(self) -> int:
        return self.per_channel[0].bits

    @property
    def qmax(self) -> int:
        return self.per_channel[0].qmax

    @property
    def scales(self) -> np.ndarray:
        return np.array([qp.scale for qp in self.per_channel], dtype=np.float64)

    @property
    def degenerate_channels(self) -> list[int]:
        return [index for index, qp in enumerate(self.per_channel) if qp.degenerate]

    def __len__(self) -> int:
        return len(self.per_channel)


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero."""
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def _scale_for(values: np.ndarray, bits: int, scheme: QuantScheme) -> tuple[float, bool]:
    q = qmax_for(bits)
    max_abs = float(np.max(np.abs(values))) if values.size else 0.0
    clip = max_abs
    if scheme.mode == ScaleMode.STATISTICAL:
        spread = float(np.std(values))
        # Constant tensors have no spread; their magnitude still needs a grid
        clip = scheme.k * spread if spread > 0.0 else max_abs
    if clip <= 0.0 or not np.isfinite(clip):
        return DEGENERATE_SCALE, True
    return clip / q, False


def weight_qparams(weights: np.ndarray, bits: int, scheme: QuantScheme = MAX_SCHEME) -> QuantParams:
    """
    Per-tensor symmetric parameters.

    Max mode uses Δ = max|w| / Q; statistical mode clips at R = kσ and uses Δ = R / Q,
    falling back to max mode when σ = 0.
    A tensor without range gets the sentinel step and is flagged degenerate.
    """
    check_bits(bits)
    values = np.asarray(weights, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot quantize an empty tensor")
    scale, degenerate = _scale_for(values, bits, scheme)
    return QuantParams.symmetric(bits, scale, degenerate=degenerate)


def per_channel_qparams(weights: np.ndarray, bits: int, scheme: QuantScheme = MAX_SCHEME) -> ChannelQuantParams:
    """Parameters per output channel (axis 0), max mode unless `scheme` says otherwise."""
    check_bits(bits)
    values = np.asarray(weights, dtype=np.float64)
    channels = values.reshape(values.shape[0], -1)
    return ChannelQuantParams(tuple(
        QuantParams.symmetric(bits, *_scale_for(row, bits, scheme)) for row in channels
    ))


def scheme_qparams(weights: np.ndarray, bits: int, scheme: QuantScheme = MAX_SCHEME):
    """Per-channel parameters when `scheme` asks for them and the tensor has channels, else per-tensor."""
    if scheme.per_channel and np.ndim(weights) >= 2:
        return per_channel_qparams(weights, bits, scheme)
    return weight_qparams(weights, bits, scheme)


def _broadcast_scales(weights: np.ndarray, qp) -> tuple[np.ndarray, int]:
    if isinstance(qp, ChannelQuantParams):
        if len(qp) != weights.shape[0]:
            raise ValueError(f"{len(qp)} channel scales for {weights.shape[0]} output channels")
        shape = (weights.shape[0],) + (1,) * (weights.ndim - 1)
        return qp.scales.reshape(shape), qp.qmax
    return np.float64(qp.scale), qp.qmax


def quantize_codes(weights: np.ndarray, qp) -> np.ndarray:
    """Integer codes clip(round(w / Δ), -Q, Q) as int64."""
    values = np.asarray(weights, dtype=np.float64)
    scale, q = _broadcast_scales(values, qp)
    return np.clip(round_half_away(values / scale), -q, q).astype(np.int64)


def quantize_dequantize(weights: np.ndarray, qp) -> np.ndarray:
    """
    Fake-quantize `weights` with per-tensor QuantParams or per-channel ChannelQuantParams.

    Idempotent: applying the map to its own output returns the same values.
    """
    values = np.asarray(weights)
    out_dtype = values.dtype if np.issubdtype(values.dtype, np.floating) else np.float64
    scale, _ = _broadcast_scales(values, qp)
    return (quantize_codes(values, qp) * scale).astype(out_dtype)


def ste_mask(weights: np.ndarray, qp) -> np.ndarray:
    """Boolean mask of weights inside the clip range, |w / Δ| <= Q."""
    values = np.asarray(weights, dtype=np.float64)
    scale, q = _broadcast_scales(values, qp)
    return np.abs(values / scale) <= q


def ste_grad(w: float, qp: QuantParams, upstream: float) -> float:
    """Straight-through gradient: `upstream` inside the clip range, 0 outside."""
    return float(upstream) if abs(float(w) / qp.scale) <= qp.qmax else 0.0
