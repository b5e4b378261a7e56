"""Measurement-rate, compression and spatio-temporal-resolution arithmetic.

All quantities are computed with :class:`fractions.Fraction` and returned as
``int`` when integral, so ``M_r = K^2 f_dmd`` and ``STR = alpha M_r`` come out
exact for integer inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from ..errors import ConfigError

# rounded figures quoted for the prototype, shown next to exact values
REPORTED_ROUNDED = {
    "measurement_rate": 2e6,
    "str": 32e6,
    "fps_1mp": 32,
    "spc_fps_1mp": 0.32,
    "alpha_T64": 4,
    "alpha_T128": 2,
    "alpha_T256": 1,
    "alpha_T512": 0.5,
}


def _exact(value: Fraction):
    return int(value) if value.denominator == 1 else float(value)


def _frac(x, name) -> Fraction:
    f = Fraction(x)
    if f <= 0:
        raise ConfigError(f"{name} must be positive, got {x!r}")
    return f


@dataclass(frozen=True)
class RateReport:
    measurement_rate: int | float
    compression_factor: int | float
    str: int | float
    achievable: tuple[tuple[float, float], ...]


def rate_report(K, f_dmd, alpha, megapixels=(1.0,)) -> RateReport:
    """Rates for a ``K x K`` sensor synchronised with a DMD at ``f_dmd`` Hz.

    ``achievable`` pairs each requested frame size (in megapixels) with the
    frame rate the STR supports at that size.
    """
    k = _frac(K, "K")
    f = _frac(f_dmd, "f_dmd")
    a = _frac(alpha, "alpha")
    mr = k * k * f
    s = a * mr
    pairs = tuple((float(mp), float(s / (_frac(mp, "megapixels") * 10**6))) for mp in megapixels)
    return RateReport(_exact(mr), _exact(a), _exact(s), pairs)


def compression_factor(n_dmd_pixels, T, n_sensor_pixels) -> float:
    """Recovered pixels per measured sample, ``n_dmd / (T n_sensor)``."""
    return float(Fraction(n_dmd_pixels) / (_frac(T, "T") * _frac(n_sensor_pixels, "n_sensor_pixels")))
