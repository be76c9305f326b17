"""
Per-layer distribution statistics and the normalized-KL sensitivity score.

Histograms use B = 256 bins over the float tensor's [min, max]; samples outside the range
are clamped into the edge bins and a sample equal to the upper edge lands in the last bin.
After normalization ε = 1e-12 is added to every bin and the mass is renormalized, which
keeps KL finite. KL is measured in nats.
"""
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from apps.network.graph import ModelGraph
from apps.quantization.observers import ActQuantParams, fake_quantize_range
from apps.quantization.quantizer import (
    MAX_SCHEME,
    PER_CHANNEL_SCHEME,
    VALID_BITS,
    QuantScheme,
    quantize_dequantize,
    scheme_qparams,
)

if TYPE_CHECKING:
    from apps.planner.plan import BitPlan

logger = logging.getLogger(__name__)

DEFAULT_BINS = 256
SMOOTHING_EPS = 1e-12
ANCHOR_BITS = 2


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    mass: np.ndarray
    count: int

    @property
    def bins(self) -> int:
        return len(self.mass)


@dataclass(frozen=True)
class SensitivityRecord:
    layer: str
    index: int
    bits: int
    sigma: float
    kl_at_bits: dict[int, float] = field(default_factory=dict)
    normalized_kl: float = 0.0


def layer_sigma(weights: np.ndarray) -> float:
    """Population standard deviation (divides by n)."""
    values = np.asarray(weights, dtype=np.float64)
    if values.size == 0:
        raise ValueError("layer_sigma of an empty tensor")
    return float(np.std(values))


def build_histogram(values: np.ndarray, bins: int, value_range: tuple[float, float]) -> Histogram:
    lo, hi = float(value_range[0]), float(value_range[1])
    if not lo < hi:
        raise ValueError(f"histogram range must satisfy lo < hi, got ({lo}, {hi})")
    if bins < 2:
        raise ValueError("histogram needs at least 2 bins")

    samples = np.asarray(values, dtype=np.float64).reshape(-1)
    position = (np.clip(samples, lo, hi) - lo) / (hi - lo) * bins
    index = np.minimum(np.floor(position).astype(np.int64), bins - 1)
    counts = np.bincount(index, minlength=bins).astype(np.float64)

    mass = counts / max(samples.size, 1) + SMOOTHING_EPS
    mass /= mass.sum()
    return Histogram(edges=np.linspace(lo, hi, bins + 1), mass=mass, count=int(samples.size))


def kl_divergence(p: Histogram, q: Histogram) -> float:
    """KL(p || q) in nats over identical edges."""
    if p.bins != q.bins or not np.array_equal(p.edges, q.edges):
        raise ValueError("KL divergence requires histograms on identical edges")
    return max(0.0, float(np.sum(p.mass * np.log(p.mass / q.mass))))


def _shared_range(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        # Constant tensor: widen so the value sits well inside one bin
        pad = abs(lo) if lo else 1.0
        return lo - pad, hi + 2 * pad
    return lo, hi


def distribution_kl(original: np.ndarray, distorted: np.ndarray, bins: int = DEFAULT_BINS) -> float:
    """KL between the histograms of `original` and `distorted` on edges spanning `original`."""
    original = np.asarray(original, dtype=np.float64).reshape(-1)
    value_range = _shared_range(original)
    return kl_divergence(
        build_histogram(original, bins, value_range),
        build_histogram(distorted, bins, value_range),
    )


def layer_kl_at_bits(
    weights: np.ndarray,
    bits: int,
    scheme: QuantScheme = MAX_SCHEME,
    bins: int = DEFAULT_BINS,
) -> float:
    """KL between the float weights and their `bits`-bit fake-quantized version."""
    values = np.asarray(weights, dtype=np.float64)
    quantized = quantize_dequantize(values, scheme_qparams(values, bits, scheme))
    return distribution_kl(values, quantized, bins)


def _normalize(kl: float, anchor: float) -> float:
    if anchor <= SMOOTHING_EPS:
        return 0.0
    return float(min(1.0, max(0.0, kl / anchor)))


def normalized_kl(
    weights: np.ndarray,
    bits: int,
    scheme: QuantScheme = MAX_SCHEME,
    bins: int = DEFAULT_BINS,
) -> float:
    """KL at `bits` divided by the 2-bit KL, clamped to [0, 1]; 0 when the anchor vanishes."""
    anchor = layer_kl_at_bits(weights, ANCHOR_BITS, scheme, bins)
    if bits == ANCHOR_BITS:
        return _normalize(anchor, anchor)
    return _normalize(layer_kl_at_bits(weights, bits, scheme, bins), anchor)


def activation_normalized_kl(
    sample: np.ndarray,
    bits: int,
    lo: float,
    hi: float,
    bins: int = DEFAULT_BINS,
) -> float:
    """Normalized KL of an activation sample fake-quantized over its calibrated [lo, hi]."""
    values = np.asarray(sample, dtype=np.float64).reshape(-1)
    if values.size == 0:
        return 0.0
    anchor = distribution_kl(values, fake_quantize_range(values, ActQuantParams(ANCHOR_BITS, lo, hi)), bins)
    if bits == ANCHOR_BITS:
        return _normalize(anchor, anchor)
    current = distribution_kl(values, fake_quantize_range(values, ActQuantParams(bits, lo, hi)), bins)
    return _normalize(current, anchor)


def layer_record(
    name: str,
    index: int,
    weights: np.ndarray,
    bits: int,
    scheme: QuantScheme = PER_CHANNEL_SCHEME,
    bins: int = DEFAULT_BINS,
) -> SensitivityRecord:
    kl = {b: layer_kl_at_bits(weights, b, scheme, bins) for b in VALID_BITS}
    return SensitivityRecord(
        layer=name,
        index=index,
        bits=bits,
        sigma=layer_sigma(weights),
        kl_at_bits=kl,
        normalized_kl=_normalize(kl[bits], kl[ANCHOR_BITS]),
    )


def sensitivity_scores(
    model: ModelGraph,
    plan: Optional['BitPlan'] = None,
    scheme: QuantScheme = PER_CHANNEL_SCHEME,
    bins: int = DEFAULT_BINS,
) -> list[SensitivityRecord]:
    """
    One record per quantizable layer, in layer order, scored at the layer's planned bits_w.

    Weights are quantized per output channel, as in the forward pass. Without a plan
    every layer is scored at 8 bits.
    """
    records = []
    for index, layer in enumerate(model.quantizable_layers()):
        bits = plan.layer(layer.name).bits_w if plan is not None else 8
        records.append(layer_record(layer.name, index, layer.weights, bits, scheme, bins))
    logger.debug(
        "Computed sensitivity scores",
        extra={'extra_data': {'scores': {r.layer: round(r.normalized_kl, 6) for r in records}}},
    )
    return records
