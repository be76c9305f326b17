"""
Tensor helpers.

Tensors are plain `numpy.ndarray` objects; these helpers enforce the invariants the rest
of the system relies on (positive dims, finite 32-bit values, row-major layout).
"""
from typing import Sequence

import numpy as np

from apps.core.exceptions import DimensionMismatchError

Tensor = np.ndarray

TENSOR_DTYPE = np.float32


def make_tensor(data, dims: Sequence[int], name: str = 'tensor') -> Tensor:
    """
    Build a float32 tensor of shape `dims` from flat or shaped `data`.

    Raises DimensionMismatchError (naming `name`) when the element count does not match
    or when a value is not finite.
    """
    dims = tuple(int(d) for d in dims)
    if any(d <= 0 for d in dims):
        raise DimensionMismatchError(name, f"dims must be positive, got {list(dims)}")

    flat = np.ascontiguousarray(data, dtype=TENSOR_DTYPE).reshape(-1)
    expected = int(np.prod(dims))
    if flat.size != expected:
        raise DimensionMismatchError(
            name, f"expected {expected} values for dims {list(dims)}, got {flat.size}"
        )
    if not np.all(np.isfinite(flat)):
        raise DimensionMismatchError(name, "tensor contains non-finite values")
    return flat.reshape(dims)
