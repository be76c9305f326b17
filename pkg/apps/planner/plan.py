"""
Per-layer bitwidth plans and the plan file.

A plan lists every quantizable layer of a model in layer order with its weight and
activation bitwidths. Once calibrated it also carries the frozen per-channel weight steps
and the activation clip range of the layer input.
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence

from apps.core.exceptions import ClusteringError, ConfigError
from apps.network.graph import ModelGraph
from apps.network.manifest import write_text_atomic
from apps.quantization.clustering import ClusterAssignment, cluster_bits
from apps.quantization.observers import ActQuantParams
from apps.quantization.quantizer import VALID_BITS, ChannelQuantParams

PLAN_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LayerBits:
    name: str
    bits_w: int = 8
    bits_a: int = 8
    weight_scales: Optional[tuple[float, ...]] = None
    act_lo: Optional[float] = None
    act_hi: Optional[float] = None

    def __post_init__(self):
        for label, bits in (('bits_w', self.bits_w), ('bits_a', self.bits_a)):
            if bits not in VALID_BITS:
                raise ConfigError(f"plan.{self.name}.{label}", f"must be one of {VALID_BITS}, got {bits}")
        if self.weight_scales is not None:
            object.__setattr__(self, 'weight_scales', tuple(float(s) for s in self.weight_scales))

    @property
    def weights_frozen(self) -> bool:
        return self.weight_scales is not None

    @property
    def act_calibrated(self) -> bool:
        return self.act_lo is not None and self.act_hi is not None

    def weight_qparams(self) -> Optional[ChannelQuantParams]:
        if self.weight_scales is None:
            return None
        return ChannelQuantParams.from_scales(self.bits_w, self.weight_scales)

    def act_qparams(self) -> Optional[ActQuantParams]:
        if not self.act_calibrated:
            return None
        return ActQuantParams(bits=self.bits_a, lo=self.act_lo, hi=self.act_hi)


@dataclass(frozen=True)
class BitPlan:
    """Immutable plan; every edit returns a new plan."""
    layers: tuple[LayerBits, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'layers', tuple(self.layers))
        names = [entry.name for entry in self.layers]
        if len(set(names)) != len(names):
            raise ConfigError('plan.layers', "duplicate layer names")

    def __iter__(self) -> Iterator[LayerBits]:
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    @classmethod
    def uniform(cls, model: ModelGraph, bits_w: int = 8, bits_a: int = 8) -> 'BitPlan':
        return cls(tuple(
            LayerBits(name=layer.name, bits_w=bits_w, bits_a=bits_a)
            for layer in model.quantizable_layers()
        ))

    @classmethod
    def from_weight_bits(cls, names: Sequence[str], bits: Sequence[int], bits_a: int = 8) -> 'BitPlan':
        return cls(tuple(LayerBits(name=n, bits_w=int(b), bits_a=bits_a) for n, b in zip(names, bits)))

    @property
    def names(self) -> list[str]:
        return [entry.name for entry in self.layers]

    def layer(self, name: str) -> LayerBits:
        for entry in self.layers:
            if entry.name == name:
                return entry
        raise KeyError(name)

    def weight_bits(self) -> dict[str, int]:
        return {entry.name: entry.bits_w for entry in self.layers}

    def act_bits(self) -> dict[str, int]:
        return {entry.name: entry.bits_a for entry in self.layers}

    def bits_signature(self) -> tuple[tuple[int, int], ...]:
        """Bit assignment without calibration state, for comparing plans."""
        return tuple((entry.bits_w, entry.bits_a) for entry in self.layers)

    @property
    def calibrated(self) -> bool:
        return all(entry.weights_frozen and entry.act_calibrated for entry in self.layers)

    def with_bits(
        self,
        weight_bits: Optional[Mapping[str, int]] = None,
        act_bits: Optional[Mapping[str, int]] = None,
    ) -> 'BitPlan':
        """
        Change bitwidths of named layers. Frozen weight steps of a layer whose bits_w
        changes are dropped; activation ranges survive since they do not depend on bits.
        """
        weight_bits = dict(weight_bits or {})
        act_bits = dict(act_bits or {})
        unknown = (set(weight_bits) | set(act_bits)) - set(self.names)
        if unknown:
            raise KeyError(f"layers not in plan: {sorted(unknown)}")

        updated = []
        for entry in self.layers:
            new_w = weight_bits.get(entry.name, entry.bits_w)
            new_a = act_bits.get(entry.name, entry.bits_a)
            scales = entry.weight_scales if new_w == entry.bits_w else None
            updated.append(replace(entry, bits_w=new_w, bits_a=new_a, weight_scales=scales))
        return BitPlan(tuple(updated))

    def with_calibration(
        self,
        weight_scales: Mapping[str, Sequence[float]],
        act_ranges: Mapping[str, tuple[float, float]],
    ) -> 'BitPlan':
        updated = []
        for entry in self.layers:
            lo, hi = act_ranges.get(entry.name, (entry.act_lo, entry.act_hi))
            updated.append(replace(
                entry,
                weight_scales=tuple(weight_scales[entry.name]) if entry.name in weight_scales else entry.weight_scales,
                act_lo=lo,
                act_hi=hi,
            ))
        return BitPlan(tuple(updated))

    def check_covers(self, model: ModelGraph):
        expected = [layer.name for layer in model.quantizable_layers()]
        if self.names != expected:
            raise ConfigError('plan.layers', f"plan covers {self.names}, model has {expected}")

    def to_dict(self, target: Optional[dict] = None, status: Optional[str] = None) -> dict:
        layers = []
        for entry in self.layers:
            act = entry.act_qparams()
            layers.append({
                'name': entry.name,
                'bits_w': entry.bits_w,
                'bits_a': entry.bits_a,
                'scales': list(entry.weight_scales) if entry.weight_scales is not None else None,
                'act_lo': entry.act_lo,
                'act_hi': entry.act_hi,
                'act_scale': act.scale if act is not None else None,
                'zero_point': act.zero_point if act is not None else 0,
            })
        return {
            'schema_version': PLAN_SCHEMA_VERSION,
            'target': target or {},
            'status': status,
            'layers': layers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'BitPlan':
        version = data.get('schema_version')
        if version != PLAN_SCHEMA_VERSION:
            raise ConfigError('plan.schema_version', f"unsupported plan schema {version!r}")
        try:
            return cls(tuple(
                LayerBits(
                    name=entry['name'],
                    bits_w=int(entry['bits_w']),
                    bits_a=int(entry.get('bits_a', 8)),
                    weight_scales=entry.get('scales'),
                    act_lo=entry.get('act_lo'),
                    act_hi=entry.get('act_hi'),
                )
                for entry in data['layers']
            ))
        except KeyError as e:
            raise ConfigError('plan.layers', f"missing field {e}") from e


def assign_bitwidths(
    clusters: ClusterAssignment,
    layer_names: Sequence[str],
    bitset: Sequence[int] = VALID_BITS,
    bits_a: int = 8,
) -> BitPlan:
    """Weight bits per layer from the cluster ordering; activations keep `bits_a`."""
    if len(layer_names) != len(clusters.assignment):
        raise ClusteringError(f"{len(layer_names)} layer names for {len(clusters.assignment)} features")
    return BitPlan.from_weight_bits(layer_names, cluster_bits(clusters, bitset), bits_a=bits_a)


def save_plan(plan: BitPlan, path, target: Optional[dict] = None, status: Optional[str] = None):
    text = json.dumps(plan.to_dict(target=target, status=status), indent=2, sort_keys=True) + '\n'
    write_text_atomic(path, text)


def load_plan_file(path) -> tuple[BitPlan, dict]:
    """Return the plan and the raw document (target, status)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError('plan', f"plan file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError('plan', f"plan file {path} is not valid JSON: {e}") from e
    return BitPlan.from_dict(data), data
