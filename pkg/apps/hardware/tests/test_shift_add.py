import numpy as np
import pytest

from apps.core.exceptions import MultiplierRangeError
from apps.hardware.shift_add import (
    Q17Value,
    add_events,
    code_add_events,
    code_cycles,
    multiplier_cycles,
    multiplier_limit,
    shift_add_mac,
)


def full_code_space(bits):
    return np.arange(-2 ** (bits - 1), 2 ** (bits - 1))


def test_half_times_half():
    product, cycles = shift_add_mac(Q17Value(64), 4, 4)
    assert product == Q17Value(32)
    assert cycles == 1


def test_zero_multiplier_takes_one_cycle():
    product, cycles = shift_add_mac(Q17Value(-77), 0, 8)
    assert product.raw == 0
    assert cycles == 1


@pytest.mark.parametrize('bits', [2, 4, 6, 8])
def test_products_match_floor_truncation_exhaustively(bits):
    limit = multiplier_limit(bits)
    for raw in range(-128, 128):
        for m in range(-limit, limit + 1):
            product, cycles = shift_add_mac(Q17Value(raw), m, bits)
            assert product.raw == max(-128, min(127, (raw * m) // 2 ** (bits - 1)))
            assert cycles == max(1, add_events(m, bits))
            assert 1 <= cycles <= bits


@pytest.mark.parametrize('bits', [2, 4, 6, 8])
def test_mean_add_events_is_half_the_width(bits):
    codes = full_code_space(bits)
    assert code_add_events(codes, bits).mean() == bits / 2
    # Only the zero code is lifted to one cycle
    assert code_cycles(codes, bits).mean() == pytest.approx(bits / 2 + 2.0 ** -bits)


def test_vector_counts_agree_with_scalar_counts():
    codes = full_code_space(6)
    assert list(code_cycles(codes, 6)) == [multiplier_cycles(int(m), 6) for m in codes]


def test_wider_codes_take_about_twice_the_cycles():
    ratio = code_cycles(full_code_space(8), 8).mean() / code_cycles(full_code_space(4), 4).mean()
    assert ratio == pytest.approx(2.0, rel=0.05)


@pytest.mark.parametrize('m, bits', [(8, 4), (-8, 4), (2, 2), (1, 3)])
def test_out_of_range_multiplier(m, bits):
    with pytest.raises(MultiplierRangeError):
        shift_add_mac(Q17Value(1), m, bits)


def test_q17_range():
    with pytest.raises(MultiplierRangeError):
        Q17Value(128)
    assert Q17Value.from_real(-1.5).raw == -128
    assert Q17Value.from_real(0.25).real == 0.25
