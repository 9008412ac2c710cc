"""Command-line scenario runner.

    nsgate run <scenario> [--config FILE] [--set key=value ...] [--out DIR] [--seed N]
    nsgate table1 [--out DIR]
    nsgate verify [--out DIR] [--inject FAULT]

Scenarios: ns-sc, ns-pusc, ns-dispersive, cz, catch-release, sweep. Every run
writes CSV series, a JSON summary and a manifest listing each file with its
SHA-256. Sweeps use ``NSGATE_WORKERS`` processes (default 1).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import gates, models
from .dynamics import NoiseParams
from .hilbert import to_json_dict
from .models import SystemParams
from .units import TWO_PI, ghz, parse_frequency, parse_rate

WORKERS_ENV = "NSGATE_WORKERS"


def _freq(v, unit="GHz_over_2pi"):
    return {"value": v, "unit": unit}


def _rate(v):
    return {"value": v, "unit": "per_us"}


def _noise_block(k=0.05, g=0.05, p=0.05):
    return {"kappa": _rate(k), "gamma": _rate(g), "gamma_phi": _rate(p)}


DEFAULTS = {
    "ns-sc": {
        "system": {"omega_r": _freq(5.0), "omega_q": _freq(10.0), "g": _freq(0.25)},
        "noise": _noise_block(),
        "steps": 50,
        "window": 0.05,
        "window_points": 41,
    },
    "ns-pusc": {
        "k": 4,
        "omega_r": _freq(5.0),
        "noise": _noise_block(),
        "dephasing": False,
        "steps": 50,
    },
    "ns-dispersive": {
        "n": 18,
        "omega_r": _freq(1.0),
        "abs_delta_over_omega_r": 10.0,
        "target_phase": math.pi,
        "noise": _noise_block(0.01, 0.01, 0.0),
        "steps": 50,
    },
    "cz": {
        "regime": "sc",
        "theta": math.pi / 4 + 0.01,
        "noise": _noise_block(),
        "dephasing": False,
        "sc": {"omega_r": _freq(5.0), "omega_q": _freq(10.0), "g": _freq(0.25)},
        "pusc": {"k": 4, "omega_r": _freq(5.0)},
        "dispersive": {"n": 18, "omega_r": _freq(1.0), "abs_delta_over_omega_r": 10.0},
        "steps": 20,
    },
    "catch-release": {
        "preset": "narrow",
        "N": 100,
        "mode": "pure",
        "noise": _noise_block(0.0, 0.0, 0.0),
        "record_dt": 1.0,
        "trajectories": 100,
        "phase_corrected": False,
    },
    "sweep": {
        "scenario": "ns-sc",
        "parameter": "noise.kappa",
        "values": [0.0, 0.05, 0.1, 0.2],
        "base": {},
    },
}

SCENARIOS = tuple(DEFAULTS)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config handling

def _coerce(text: str, like):
    if isinstance(like, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if isinstance(like, int):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"expected an integer, got {text!r}") from None
    if isinstance(like, float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"expected a number, got {text!r}") from None
    if isinstance(like, list):
        val = yaml.safe_load(text)
        if not isinstance(val, list):
            raise ConfigError(f"expected a list, got {text!r}")
        return val
    if isinstance(like, dict):
        val = yaml.safe_load(text)
        if not isinstance(val, dict):
            raise ConfigError(f"expected a mapping, got {text!r}")
        return val
    return text


def apply_override(cfg: dict, path: str, text: str) -> None:
    """Set ``a.b.c=value``; unit-tagged leaves accept a bare number for their value."""
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"unknown config key {path!r}")
        node = node[k]
    leaf = keys[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown config key {path!r}")
    cur = node[leaf]
    if isinstance(cur, dict) and set(cur) == {"value", "unit"}:
        cur["value"] = _coerce(text, float(cur["value"]))
    else:
        node[leaf] = _coerce(text, cur)


def _merge(base: dict, extra: dict, where="") -> dict:
    for k, v in extra.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and set(base[k]) != {"value", "unit"}:
            _merge(base[k], v, f"{where}{k}.")
        else:
            base[k] = v
    return base


def build_config(scenario: str, config_file=None, overrides=()) -> dict:
    if scenario not in DEFAULTS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    cfg = copy.deepcopy(DEFAULTS[scenario])
    if config_file:
        data = yaml.safe_load(Path(config_file).read_text()) or {}
        _merge(cfg, data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        apply_override(cfg, k.strip(), v.strip())
    return cfg


def _noise(block) -> NoiseParams:
    return NoiseParams(*(parse_rate(block[k]) for k in ("kappa", "gamma", "gamma_phi")))


def _system(block) -> SystemParams:
    return SystemParams(*(parse_frequency(block[k]) for k in ("omega_r", "omega_q", "g")))


# ---------------------------------------------------------------- output bundle

class Bundle:
    def __init__(self, out_dir: Path):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def write(self, name: str, text: str) -> Path:
        p = self.dir / name
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.files.append(name)
        return p

    def json(self, name, obj):
        return self.write(name, json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n")

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        return self.write(name, buf.getvalue())

    def manifest(self, scenario, params, summary, wall, seed=None):
        entries = []
        for name in self.files:
            digest = hashlib.sha256((self.dir / name).read_bytes()).hexdigest()
            entries.append({"path": name, "sha256": digest})
        man = {
            "scenario": scenario,
            "params": params,
            "seed": seed,
            "summary": summary,
            "wall_time_s": wall,
            "versions": _versions(),
            "files": entries,
        }
        p = self.dir / "manifest.json"
        p.write_text(json.dumps(man, indent=2, sort_keys=True, default=_plain) + "\n")
        return man


def _plain(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"{type(x).__name__} is not JSON serialisable")


def _versions():
    import scipy
    from . import _backend
    try:
        from importlib.metadata import version
        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "package": pkg, "kernel": _backend.BACKEND}


# ---------------------------------------------------------------- scenarios

def _trace_csv(bundle, name, trace):
    bundle.write(name, trace.to_csv())


def scenario_ns_sc(cfg, bundle, seed=None):
    params = _system(cfg["system"])
    noise = _noise(cfg["noise"])
    rep = gates.ns_protocol_sc(params, noise, steps=int(cfg["steps"]))
    _trace_csv(bundle, "trace.csv", rep.trace)
    ts, fs = gates.sc_fidelity_window(params, noise, rel_window=float(cfg["window"]),
                                      points=int(cfg["window_points"]))
    bundle.csv("fidelity_window.csv", ["time_ns", "fidelity"], zip(ts, fs))
    bundle.json("report.json", rep.to_dict("trace.csv"))
    return {"fidelity": rep.fidelity, "gate_time_ns": rep.gate_time,
            "window_min_fidelity": float(fs.min())}


def scenario_ns_pusc(cfg, bundle, seed=None):
    bs = models.solve_pusc_k(int(cfg["k"]), parse_frequency(cfg["omega_r"]))
    rep = gates.ns_protocol_pusc(bs, _noise(cfg["noise"]), dephasing=bool(cfg["dephasing"]),
                                 steps=int(cfg["steps"]))
    _trace_csv(bundle, "trace.csv", rep.trace)
    bundle.json("report.json", rep.to_dict("trace.csv"))
    return {"fidelity": rep.fidelity, "gate_time_ns": rep.gate_time, "r": bs.r,
            "g_over_2pi_GHz": bs.base.g / TWO_PI, **rep.extras}


def _dispersive_params(block):
    omega_r = parse_frequency(block["omega_r"])
    return models.solve_dispersive(int(block["n"]), omega_r=omega_r,
                                   abs_delta=float(block["abs_delta_over_omega_r"]) * omega_r,
                                   target_phase=float(block.get("target_phase", math.pi)))


def scenario_ns_dispersive(cfg, bundle, seed=None):
    dp = _dispersive_params(cfg)
    rep = gates.ns_protocol_dispersive(dp, _noise(cfg["noise"]), steps=int(cfg["steps"]))
    _trace_csv(bundle, "trace.csv", rep.trace)
    bundle.json("report.json", rep.to_dict("trace.csv"))
    return {"fidelity": rep.fidelity, "gate_time_ns": rep.gate_time,
            "chi_over_omega_r": dp.chi / dp.base.omega_r,
            "g_over_omega_r": dp.base.g / dp.base.omega_r}


def scenario_cz(cfg, bundle, seed=None):
    regime = cfg["regime"]
    if regime == "sc":
        params = _system(cfg["sc"])
    elif regime == "pusc":
        params = models.solve_pusc_k(int(cfg["pusc"]["k"]), parse_frequency(cfg["pusc"]["omega_r"]))
    elif regime == "dispersive":
        params = _dispersive_params(cfg["dispersive"])
    else:
        raise ConfigError(f"unknown regime {regime!r}")
    rep = gates.cz_protocol(regime, params, _noise(cfg["noise"]), float(cfg["theta"]),
                            dephasing=bool(cfg["dephasing"]), steps=int(cfg["steps"]))
    _trace_csv(bundle, "trace.csv", rep.trace)
    bundle.json("rho_out.json", to_json_dict(rep.extras["output_density"]))
    bundle.json("report.json", rep.to_dict("trace.csv") | {"extras": {}})
    return {"fidelity": rep.fidelity, "gate_time_ns": rep.gate_time, "regime": regime}


def scenario_catch_release(cfg, bundle, seed=None):
    from .waveguide import (CatchReleaseSetup, export_waveforms, full_ns_fidelity, get_preset,
                            propagate_catch_release)
    preset = get_preset(cfg["preset"])
    setup = CatchReleaseSetup.from_preset(preset, int(cfg["N"]))
    psi0 = setup.input_state()
    trace = propagate_catch_release(psi0, setup.schedule, record_dt=float(cfg["record_dt"]))
    buf_path = bundle.dir / "waveforms.csv"
    export_waveforms(trace, buf_path)
    bundle.files.append("waveforms.csv")
    bundle.write("schedule.yaml", yaml.safe_dump(setup.schedule.to_dict(), sort_keys=False))
    from .waveguide.bath import tilde_reference_state, waveform_overlap
    s = setup.schedule
    i_in = int(np.argmin(np.abs(trace.times - s.t_in)))
    ref = tilde_reference_state(psi0, s.t_end, s.t_in, s.t_q)
    summary = {
        "resonator_populations_t_in": trace.states[i_in].resonator_populations().tolist(),
        "overlap_one_photon": waveform_overlap(trace.final, ref, "one_bath"),
        "overlap_two_photon": waveform_overlap(trace.final, ref, "two_bath"),
        "total_time_ns": s.t_end,
    }
    noise = _noise(cfg["noise"])
    mode = cfg["mode"]
    if mode == "pure" and not noise.is_zero:
        mode = "density"
    rep = full_ns_fidelity(setup, noise, mode=mode, trajectories=int(cfg["trajectories"]),
                           seed=0 if seed is None else int(seed),
                           phase_corrected=bool(cfg["phase_corrected"]))
    bundle.json("report.json", rep.to_dict("waveforms.csv"))
    summary["fidelity"] = rep.fidelity
    summary["mode"] = mode
    return summary


def _sweep_point(args):
    scenario, cfg, seed = args
    import tempfile
    with tempfile.TemporaryDirectory() as tmp, warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return RUNNERS[scenario](cfg, Bundle(Path(tmp)), seed)


def scenario_sweep(cfg, bundle, seed=None):
    target = cfg["scenario"]
    if target == "sweep" or target not in RUNNERS:
        raise ConfigError(f"cannot sweep scenario {target!r}")
    base = build_config(target)
    _merge(base, cfg.get("base") or {})
    jobs = []
    for v in cfg["values"]:
        c = copy.deepcopy(base)
        apply_override(c, cfg["parameter"], str(v))
        jobs.append((target, c, seed))
    workers = max(1, int(os.environ.get(WORKERS_ENV, "1")))
    if workers == 1:
        results = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_sweep_point, jobs))  # map keeps parameter order
    keys = sorted(k for k, v in results[0].items() if isinstance(v, (int, float)) and not isinstance(v, bool))
    rows = [[float(v)] + [r[k] for k in keys] for v, r in zip(cfg["values"], results)]
    bundle.csv("sweep.csv", [cfg["parameter"]] + keys, rows)
    return {"points": len(rows), "parameter": cfg["parameter"], "workers": workers}


RUNNERS = {
    "ns-sc": scenario_ns_sc,
    "ns-pusc": scenario_ns_pusc,
    "ns-dispersive": scenario_ns_dispersive,
    "cz": scenario_cz,
    "catch-release": scenario_catch_release,
    "sweep": scenario_sweep,
}


def run_scenario(scenario: str, cfg: dict, out_dir, seed=None) -> dict:
    bundle = Bundle(Path(out_dir))
    t0 = time.perf_counter()
    summary = RUNNERS[scenario](cfg, bundle, seed)
    bundle.json("summary.json", summary)
    return bundle.manifest(scenario, cfg, summary, time.perf_counter() - t0, seed)


# ---------------------------------------------------------------- parameter table

TABLE1_K = (4, 6, 7, 8, 9)


def table1_rows(omega_r=ghz(5.0), noise=None, theta=math.pi / 4 + 0.01):
    noise = noise or NoiseParams.per_us(0.05, 0.05, 0.05)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", models.ValidityWarning)
        for k in TABLE1_K:
            bs = models.solve_pusc_k(k, omega_r)
            f_plain = gates.cz_protocol("pusc", bs, noise, theta).fidelity
            f_deph = gates.cz_protocol("pusc", bs, noise, theta, dephasing=True).fidelity
            residual = models.pusc_condition_rhs(bs.r) - models.pusc_parity_factor(k)
            rows.append({
                "k": k, "r": bs.r, "omega_q_over_2pi_GHz": bs.base.omega_q / TWO_PI,
                "g_over_2pi_GHz": bs.base.g / TWO_PI, "gate_time_ns": bs.gate_time,
                "fidelity": f_plain, "fidelity_with_dephasing": f_deph,
                "solver_residual": abs(residual),
            })
    return rows


def run_table1(out_dir) -> dict:
    bundle = Bundle(Path(out_dir))
    t0 = time.perf_counter()
    rows = table1_rows()
    header = list(rows[0])
    bundle.csv("table1.csv", header, [[r[h] for h in header] for r in rows])
    summary = {"rows": rows}
    bundle.json("summary.json", summary)
    return bundle.manifest("table1", {"k": list(TABLE1_K)}, summary, time.perf_counter() - t0)


# ---------------------------------------------------------------- property suite

def run_verify(out_dir, inject=None) -> dict:
    from .properties import run_suite
    bundle = Bundle(Path(out_dir))
    t0 = time.perf_counter()
    results = run_suite(inject=inject)
    bundle.csv("properties.csv", ["name", "passed", "detail"],
               [[r.name, r.passed, r.detail] for r in results])
    summary = {"passed": sum(r.passed for r in results), "failed": [r.name for r in results if not r.passed],
               "total": len(results)}
    bundle.json("summary.json", summary)
    return bundle.manifest("verify", {"inject": inject}, summary, time.perf_counter() - t0)


# ---------------------------------------------------------------- entry point

def _parser():
    p = argparse.ArgumentParser(prog="nsgate", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario", choices=SCENARIOS)
    r.add_argument("--config", help="YAML file with parameter overrides")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--out", default="results", help="output directory")
    r.add_argument("--seed", type=int, default=None)
    t = sub.add_parser("table1", help="solve and simulate the p-USC parameter table")
    t.add_argument("--out", default="results/table1")
    v = sub.add_parser("verify", help="run the property suite")
    v.add_argument("--out", default="results/verify")
    v.add_argument("--inject", default=None, help="negative control, e.g. non-hermitian")
    d = sub.add_parser("defaults", help="print a scenario's default config as YAML")
    d.add_argument("scenario", choices=SCENARIOS)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = build_config(args.scenario, args.config, args.overrides)
            man = run_scenario(args.scenario, cfg, args.out, args.seed)
            print(json.dumps(man["summary"], indent=2, sort_keys=True, default=_plain))
            return 0
        if args.command == "table1":
            man = run_table1(args.out)
            for row in man["summary"]["rows"]:
                print("k={k} r={r:.4f} g/2pi={g_over_2pi_GHz:.4f} GHz t={gate_time_ns:.3f} ns "
                      "F={fidelity:.5f} F(deph)={fidelity_with_dephasing:.5f}".format(**row))
            return 0
        if args.command == "verify":
            man = run_verify(args.out, args.inject)
            s = man["summary"]
            print(f"{s['passed']}/{s['total']} properties passed")
            for name in s["failed"]:
                print(f"FAILED: {name}")
            return 0 if not s["failed"] else 1
        if args.command == "defaults":
            sys.stdout.write(yaml.safe_dump(DEFAULTS[args.scenario], sort_keys=False))
            return 0
    except (ConfigError, ValueError, models.NoSolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
