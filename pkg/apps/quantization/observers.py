"""
Activation range observers and asymmetric activation fake-quantization.

Bounds are nearest-rank percentiles of every value seen so far: `lo` at 1 - p and `hi`
at p (p = 0.999 by default). Values are pooled in a reservoir; once the reservoir is full
it is subsampled with a seeded generator, so an observer is re-derivable from its
state and the order of updates.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from apps.quantization.quantizer import check_bits, round_half_away

DEFAULT_PERCENTILE = 0.999
DEFAULT_CAPACITY = 262_144


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Value at rank ceil(q * n) (1-based) of an ascending array."""
    n = len(sorted_values)
    rank = max(1, math.ceil(round(q * n, 9)))
    return float(sorted_values[min(rank, n) - 1])


@dataclass(frozen=True)
class ActQuantParams:
    """Affine parameters for one activation tensor over [lo, hi]."""
    bits: int
    lo: float
    hi: float

    def __post_init__(self):
        check_bits(self.bits)
        if self.lo > self.hi:
            raise ValueError(f"lo {self.lo} > hi {self.hi}")

    @property
    def levels(self) -> int:
        return 2 ** self.bits - 1

    @property
    def degenerate(self) -> bool:
        return self.hi == self.lo

    @property
    def scale(self) -> float:
        return (self.hi - self.lo) / self.levels if not self.degenerate else 0.0

    @property
    def zero_point(self) -> int:
        # Reported for export only; the fake-quant path interpolates between lo and hi
        if self.degenerate:
            return 0
        return int(np.clip(round_half_away(np.float64(-self.lo / self.scale)), 0, self.levels))


class ActObserver:
    """Percentile-clipping observer for one activation tensor."""

    def __init__(
        self,
        percentile: float = DEFAULT_PERCENTILE,
        capacity: int = DEFAULT_CAPACITY,
        seed: int = 0,
    ):
        if not 0.5 <= percentile <= 1.0:
            raise ValueError("percentile must lie in [0.5, 1]")
        self.percentile = percentile
        self.capacity = capacity
        self.seed = seed
        self.updates = 0
        self.reservoir = np.empty(0, dtype=np.float64)
        self.lo: Optional[float] = None
        self.hi: Optional[float] = None

    @property
    def ready(self) -> bool:
        return self.updates > 0

    def update(self, batch: np.ndarray) -> 'ActObserver':
        values = np.asarray(batch, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise ValueError("observer update with an empty batch")

        pooled = np.concatenate([self.reservoir, values])
        if pooled.size > self.capacity:
            rng = np.random.Generator(np.random.PCG64([self.seed, self.updates]))
            pooled = pooled[np.sort(rng.choice(pooled.size, size=self.capacity, replace=False))]
        self.reservoir = pooled
        self.updates += 1

        ordered = np.sort(pooled)
        self.lo = nearest_rank(ordered, 1.0 - self.percentile)
        self.hi = nearest_rank(ordered, self.percentile)
        return self

    def qparams(self, bits: int) -> ActQuantParams:
        if not self.ready:
            raise ValueError("observer has not seen any data")
        return ActQuantParams(bits=bits, lo=self.lo, hi=self.hi)


def act_observer_update(obs: ActObserver, batch: np.ndarray) -> ActObserver:
    return obs.update(batch)


def fake_quantize_range(x: np.ndarray, params: ActQuantParams) -> np.ndarray:
    """Quantize-dequantize `x` onto 2^bits levels spanning [lo, hi]; endpoints are exact."""
    values = np.asarray(x, dtype=np.float64)
    if params.degenerate:
        return np.full_like(values, params.lo)
    levels = params.levels
    step = (params.hi - params.lo) / levels
    codes = np.clip(round_half_away((values - params.lo) / step), 0, levels)
    fraction = codes / levels
    return params.lo * (1.0 - fraction) + params.hi * fraction


def act_quantize(x: np.ndarray, obs: ActObserver, bits: int) -> np.ndarray:
    """Fake-quantized activations for an observer with at least one update."""
    values = np.asarray(x)
    out_dtype = values.dtype if np.issubdtype(values.dtype, np.floating) else np.float64
    return fake_quantize_range(values, obs.qparams(bits)).astype(out_dtype)


def act_ste_mask(x: np.ndarray, params: ActQuantParams) -> np.ndarray:
    """Gradient pass-through mask for activation fake-quant: lo <= x <= hi."""
    return (x >= params.lo) & (x <= params.hi)
