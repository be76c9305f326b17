"""
Hardware cost tables.

A table lists, for every arithmetic unit, its area and the energy of the events the
report counts. The shipped energies are placeholders proportional to area and carry no
physical meaning; supply a measured table for real comparisons.
"""
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional

from django.conf import settings
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from apps.core.exceptions import CostTableError

logger = logging.getLogger(__name__)

REQUIRED_UNITS = ('fp32', 'fp16', 'bf16', 'int8', 'shift_add')

# Published MAC areas in µm²
DEFAULT_AREAS_UM2 = {
    'shift_add': 1635.4,
    'int8': 2103.4,
    'fp32': 3218.3,
    'fp16': 3837.9,
    'bf16': 3501.9,
}


class UnitCost(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    area_um2: float = Field(gt=0)
    energy_multiply_pj: float = Field(gt=0)
    energy_accumulate_pj: float = Field(gt=0)
    energy_cycle_pj: float = Field(gt=0)


class HwCostTable(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    units: dict[str, UnitCost]
    non_physical: bool = False
    source: str = ''

    def unit(self, kind: str) -> UnitCost:
        try:
            return self.units[kind]
        except KeyError:
            raise CostTableError(f"cost table has no entry for unit '{kind}'") from None

    def area_ratio(self, kind: str, baseline: str = 'int8') -> float:
        return self.unit(kind).area_um2 / self.unit(baseline).area_um2

    def check_complete(self) -> 'HwCostTable':
        missing = [kind for kind in REQUIRED_UNITS if kind not in self.units]
        if missing:
            raise CostTableError(f"cost table is missing units {missing}")
        return self


def placeholder_unit(area: float) -> UnitCost:
    return UnitCost(
        area_um2=area,
        energy_multiply_pj=area / 1000.0,
        energy_accumulate_pj=area / 4000.0,
        energy_cycle_pj=area / 8000.0,
    )


def builtin_cost_table() -> HwCostTable:
    """Published areas with area-proportional placeholder energies."""
    return HwCostTable(
        units={kind: placeholder_unit(area) for kind, area in DEFAULT_AREAS_UM2.items()},
        non_physical=True,
        source='builtin',
    )


def parse_cost_table(data: dict, source: str = '') -> HwCostTable:
    try:
        table = HwCostTable.model_validate({**data, 'source': data.get('source', source)})
    except ValidationError as e:
        first = e.errors()[0]
        field = '.'.join(str(part) for part in first['loc'])
        raise CostTableError(f"{field}: {first['msg']}") from e
    return table.check_complete()


def load_cost_table(path: Optional[str] = None) -> HwCostTable:
    """
    Load a TOML or JSON cost table (by suffix, then by content).

    Without a path the table configured in settings is used, falling back to the
    built-in placeholder table when that file does not exist.
    """
    if path is None:
        configured = Path(settings.SIGMAQUANT_COST_TABLE)
        if not configured.is_file():
            return builtin_cost_table()
        path = configured
    path = Path(path)
    if not path.is_file():
        raise CostTableError(f"cost table not found: {path}")

    text = path.read_text()
    try:
        if path.suffix == '.json' or (path.suffix != '.toml' and text.lstrip().startswith('{')):
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise CostTableError(f"cost table {path} cannot be parsed: {e}") from e

    table = parse_cost_table(data, source=str(path))
    if table.non_physical:
        logger.warning(
            "Using a cost table with placeholder energies",
            extra={'extra_data': {'path': str(path)}},
        )
    return table
