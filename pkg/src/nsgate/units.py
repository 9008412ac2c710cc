"""Unit conversions at the configuration boundary.

Internally every frequency is an angular frequency in rad/ns and every rate
is in 1/ns. Configs quote ω/2π in GHz (or MHz) and decoherence rates in 1/μs.
"""

import math

TWO_PI = 2.0 * math.pi

FREQ_UNITS = {
    "GHz_over_2pi": TWO_PI,
    "MHz_over_2pi": TWO_PI * 1e-3,
    "rad_per_ns": 1.0,
}

RATE_UNITS = {
    "per_us": 1e-3,
    "per_ns": 1.0,
}


def ghz(value):
    """ω/2π in GHz -> rad/ns."""
    return TWO_PI * value


def mhz(value):
    """ω/2π in MHz -> rad/ns."""
    return TWO_PI * 1e-3 * value


def to_ghz(omega):
    return omega / TWO_PI


def per_us(rate):
    """Rate in 1/μs -> 1/ns."""
    return 1e-3 * rate


def to_per_us(rate):
    return rate * 1e3


def parse_frequency(entry):
    """Accept a bare number (rad/ns) or ``{"value": x, "unit": tag}``."""
    if isinstance(entry, dict):
        unit = entry.get("unit", "rad_per_ns")
        if unit not in FREQ_UNITS:
            raise ValueError(f"unknown frequency unit {unit!r}")
        return float(entry["value"]) * FREQ_UNITS[unit]
    return float(entry)


def parse_rate(entry):
    if isinstance(entry, dict):
        unit = entry.get("unit", "per_ns")
        if unit not in RATE_UNITS:
            raise ValueError(f"unknown rate unit {unit!r}")
        return float(entry["value"]) * RATE_UNITS[unit]
    return float(entry)


def frequency_entry(omega, unit="GHz_over_2pi"):
    return {"value": omega / FREQ_UNITS[unit], "unit": unit}


def rate_entry(rate, unit="per_us"):
    return {"value": rate / RATE_UNITS[unit], "unit": unit}
