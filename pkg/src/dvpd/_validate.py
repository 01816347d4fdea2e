"""Field-addressed validation helpers shared by the dataclasses."""

import math
import numbers


class ConfigError(ValueError):
    """A parameter failed validation. ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def finite(field, value):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not math.isfinite(value):
        raise ConfigError(field, f"expected a finite number, got {value!r}")
    return float(value)


def positive(field, value):
    if finite(field, value) <= 0.0:
        raise ConfigError(field, f"must be > 0, got {value!r}")
    return float(value)


def nonnegative(field, value):
    if finite(field, value) < 0.0:
        raise ConfigError(field, f"must be >= 0, got {value!r}")
    return float(value)


def integer(field, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(field, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(field, f"must be >= {minimum}, got {value!r}")
    return int(value)
