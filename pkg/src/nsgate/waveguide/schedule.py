"""Time-dependent coupler schedules g_wr(t) and the triangular g_rq(t) pulse."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from ..units import frequency_entry, mhz, parse_frequency

SEGMENT_KINDS = ("exp", "ramp", "const", "zero")
# coupling parameters carried by each kind (all frequencies)
_FREQ_KEYS = {"exp": ("amplitude",), "ramp": ("start", "end"), "const": ("value",), "zero": ()}


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    """One piece of g_wr on [t_start, t_end) (times in ns, couplings in rad/ns).

    exp:   amplitude · exp(−rate · (t − t_start))
    ramp:  linear from ``start`` to ``end``
    const: ``value``
    zero:  0
    """
    kind: str
    t_start: float
    t_end: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ScheduleError(f"unknown segment kind {self.kind!r}")
        if not self.t_end > self.t_start:
            raise ScheduleError(f"empty segment [{self.t_start}, {self.t_end}]")
        need = set(_FREQ_KEYS[self.kind]) | ({"rate"} if self.kind == "exp" else set())
        missing = need - set(self.params)
        if missing:
            raise ScheduleError(f"{self.kind} segment missing {sorted(missing)}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "exp":
            return p["amplitude"] * np.exp(-p["rate"] * (t - self.t_start))
        if self.kind == "ramp":
            x = (t - self.t_start) / (self.t_end - self.t_start)
            return p["start"] + (p["end"] - p["start"]) * x
        if self.kind == "const":
            return np.full_like(t, p["value"])
        return np.zeros_like(t)

    def peak(self) -> float:
        return float(np.max(np.abs(self(np.array([self.t_start, self.t_end])))))

    def to_dict(self) -> dict:
        params = {}
        for k, v in self.params.items():
            params[k] = frequency_entry(v, "MHz_over_2pi") if k in _FREQ_KEYS[self.kind] else v
        return {"type": self.kind, "t_start": self.t_start, "t_end": self.t_end, "params": params}

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        kind = d["type"]
        if kind not in SEGMENT_KINDS:
            raise ScheduleError(f"unknown segment kind {kind!r}")
        params = {}
        for k, v in (d.get("params") or {}).items():
            params[k] = parse_frequency(v) if k in _FREQ_KEYS[kind] else float(v)
        return cls(kind, float(d["t_start"]), float(d["t_end"]), params)


@dataclass(frozen=True)
class CouplerSchedule:
    """Waveguide-resonator coupler segments plus the resonator-qubit triangle.

    The triangle starts at ``t_in``, peaks at g0 and lasts t_q = √2π/g0, so
    √2∫g_rq dt = π by construction.
    """
    segments: tuple
    t_in: float
    g0: float

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ScheduleError("schedule has no segments")
        if abs(segs[0].t_start) > 1e-12:
            raise ScheduleError("first segment must start at t = 0")
        for a, b in zip(segs, segs[1:]):
            if abs(a.t_end - b.t_start) > 1e-9:
                raise ScheduleError(f"gap or overlap between {a.t_end} and {b.t_start}")
        for s in segs:
            ends = s(np.array([s.t_start, s.t_end]))
            if np.any(ends < -1e-15):
                raise ScheduleError("g_wr must be non-negative")
        if self.g0 < 0:
            raise ScheduleError("g0 must be non-negative")
        if self.g0 > 0 and self.t_in + self.t_q > self.t_end + 1e-9:
            raise ScheduleError("qubit pulse extends past the end of the schedule")

    @property
    def t_q(self) -> float:
        return math.sqrt(2) * math.pi / self.g0 if self.g0 > 0 else 0.0

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    @property
    def t_out(self) -> float:
        """Start of the release window."""
        return self.t_in + self.t_q

    def g_wr(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for i, s in enumerate(self.segments):
            last = i == len(self.segments) - 1
            mask = (t >= s.t_start) & ((t <= s.t_end) if last else (t < s.t_end))
            if np.any(mask):
                out[mask] = s(t[mask])
        return out

    def g_rq(self, t):
        t = np.asarray(t, dtype=float)
        if self.g0 == 0:
            return np.zeros_like(t)
        s = t - self.t_in
        tq = self.t_q
        rise = 2 * self.g0 * s / tq
        fall = -2 * self.g0 * (s - tq) / tq
        out = np.where(s < tq / 2, rise, fall)
        return np.where((s > 0) & (s <= tq), out, 0.0)

    def breakpoints(self) -> list[float]:
        pts = {0.0, self.t_end}
        for s in self.segments:
            pts.update((s.t_start, s.t_end))
        if self.g0 > 0:
            pts.update((self.t_in, self.t_in + self.t_q / 2, self.t_in + self.t_q))
        return sorted(p for p in pts if 0 <= p <= self.t_end)

    def max_couplings(self, t0: float, t1: float) -> tuple[float, float]:
        ts = np.linspace(t0, t1, 9)
        return float(np.max(self.g_wr(ts))), float(np.max(self.g_rq(ts)))

    # ---------------------------------------------------------------- I/O

    def to_dict(self) -> dict:
        return {
            "t_in": self.t_in,
            "g0": frequency_entry(self.g0, "GHz_over_2pi"),
            "t_q": self.t_q,
            "segments": [s.to_dict() for s in self.segments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CouplerSchedule":
        return cls(tuple(Segment.from_dict(s) for s in d["segments"]), float(d["t_in"]),
                   parse_frequency(d["g0"]))

    def save(self, path) -> Path:
        path = Path(path)
        data = self.to_dict()
        text = json.dumps(data, indent=2) if path.suffix == ".json" else yaml.safe_dump(data, sort_keys=False)
        path.write_text(text)
        return path

    @classmethod
    def load(cls, path) -> "CouplerSchedule":
        text = Path(path).read_text()
        return cls.from_dict(yaml.safe_load(text))

    # ---------------------------------------------------------------- variants

    def with_catch(self, amplitude: float, rate: float) -> "CouplerSchedule":
        """Replace the first (exponential) segment's parameters."""
        first = self.segments[0]
        if first.kind != "exp":
            raise ScheduleError("first segment is not an exponential catch")
        seg = replace(first, params={"amplitude": amplitude, "rate": rate})
        return replace(self, segments=(seg,) + self.segments[1:])

    def release_segments(self) -> tuple:
        return tuple(s for s in self.segments if s.t_start >= self.t_out - 1e-9)


def catch_release_schedule(*, catch_amplitude: float, catch_rate: float, t_in: float,
                           release_value: float, release_ramp: float = 5.0,
                           release_time: float = 100.0, g0: float | None = None) -> CouplerSchedule:
    """Exponential catch on [0, t_in], coupler off during the qubit pulse, then a
    linear ramp to ``release_value`` followed by a plateau.

    Couplings in rad/ns, times in ns. ``release_ramp = 0`` switches straight to the plateau.
    """
    if g0 is None:
        g0 = 2 * math.pi * 0.25
    tq = math.sqrt(2) * math.pi / g0
    t_out = t_in + tq
    if release_ramp < 0 or release_ramp > release_time:
        raise ScheduleError("release ramp must lie within the release window")
    segs = [Segment("exp", 0.0, t_in, {"amplitude": catch_amplitude, "rate": catch_rate}),
            Segment("zero", t_in, t_out)]
    if release_ramp > 0:
        segs.append(Segment("ramp", t_out, t_out + release_ramp, {"start": 0.0, "end": release_value}))
    if release_time > release_ramp:
        segs.append(Segment("const", t_out + release_ramp, t_out + release_time,
                            {"value": release_value}))
    return CouplerSchedule(tuple(segs), t_in, g0)


@dataclass(frozen=True)
class Preset:
    """A wavepacket bandwidth together with its catch/release schedule."""
    name: str
    epsilon: float
    span_k: float
    schedule: CouplerSchedule
    description: str = ""


def _preset(name, eps, k, amp_mhz, rate, t_in, rel_mhz, ramp, rel_time, desc):
    sched = catch_release_schedule(catch_amplitude=mhz(amp_mhz), catch_rate=rate, t_in=t_in,
                                   release_value=mhz(rel_mhz), release_ramp=ramp,
                                   release_time=rel_time)
    return Preset(name, eps, k, sched, desc)


def presets() -> dict[str, Preset]:
    """Named operating points.

    ``narrow``/``wide`` use the quoted catch profiles with release plateaus
    re-optimised for waveform overlap; the ``*-quoted`` variants keep the quoted
    plateau value and the default 5 ns ramp.
    """
    tq = math.sqrt(2) * math.pi / (2 * math.pi * 0.25)
    return {
        "narrow": _preset("narrow", 0.02, 5, 1.07, 0.0333, 100.0, 0.3926, 0.0, 300.0,
                          "ε = 0.02, catch 1.07·exp(−0.0333t) MHz, optimised release"),
        "wide": _preset("wide", 0.15, 4, 7.3, 0.24, 20.0, 2.26, 0.0, 70.0 - 20.0 - tq,
                        "ε = 0.15, catch 7.3·exp(−0.24t) MHz, 70 ns in total"),
        "narrow-quoted": _preset("narrow-quoted", 0.02, 5, 1.07, 0.0333, 100.0, 0.35, 5.0, 300.0,
                                 "ε = 0.02 with the quoted 0.35 MHz release plateau"),
        "wide-quoted": _preset("wide-quoted", 0.15, 4, 7.3, 0.24, 20.0, 2.26, 5.0, 70.0 - 20.0 - tq,
                               "ε = 0.15 with a 5 ns release ramp"),
    }


def get_preset(name: str) -> Preset:
    table = presets()
    if name not in table:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(table)}")
    return table[name]
