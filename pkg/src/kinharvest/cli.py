"""Command-line front end.

Every command collects its outputs in memory and writes them only after the
whole computation has succeeded, each through a temporary file and an atomic
rename, together with a ``<command>_manifest.json`` that echoes the resolved
parameters.  Manifests carry no timestamps, so identical invocations produce
byte-identical files.

Exit codes: 0 success, 1 domain error, 2 input or usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .allocator import ALGORITHMS, allocate_windows
from .errors import ConfigurationError, InputError, KinharvestError
from .harvester import H1, H2, HarvesterDesign, simulate
from .node import EnergyProfile, NodeConfig, StorageModel, slots_from_power
from .stochastic import (
    DEFAULT_GAMMA,
    conditional_probs,
    iid_surrogate,
    markov_surrogate,
    profile_onoff,
    runs_test,
)
from .trace import (
    TRACE_HEADER,
    SynthSpec,
    abs_deviation,
    dominant_frequency,
    load_trace,
    preprocess,
    synth_trace,
    trace_to_csv,
)
from .tuner import C_TX, ETA_H, data_rate, tune

# --------------------------------------------------------------------------
# argument helpers


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fr_grid(text: str) -> np.ndarray:
    """``start:step:stop`` inclusive."""
    try:
        a, step, b = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected start:step:stop") from None
    if not (step > 0 and b >= a > 0):
        raise argparse.ArgumentTypeError("need 0 < start <= stop and step > 0")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    return np.round(a + step * np.arange(n), 10)


def _b_grid(text: str) -> np.ndarray:
    """``lo:hi:n`` geometric."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo:hi:n") from None
    if not (0 < lo <= hi and n >= 1):
        raise argparse.ArgumentTypeError("need 0 < lo <= hi and n >= 1")
    return np.geomspace(lo, hi, n)


def _seconds(text: str) -> float:
    v = float(text[:-1] if text.endswith("s") else text)
    if not v > 0:
        raise argparse.ArgumentTypeError("window must be positive")
    return v


def _columns(text: str) -> tuple:
    cols = tuple(c.strip() for c in text.split(","))
    if len(cols) != 4:
        raise argparse.ArgumentTypeError("give four comma-separated names for t,ax,ay,az")
    return cols


def _add_global(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=d(1), help="worker processes for grid searches")
    p.add_argument("--out-dir", default=d("."), help="directory for output files")
    p.add_argument("--units", choices=("m/s2", "g"), default=d("m/s2"), help="acceleration units of input traces")


def _add_trace_input(p):
    p.add_argument("trace", help="CSV trace with header t,ax,ay,az")
    p.add_argument("--fs", type=float, help="sampling rate in Hz (default: inferred)")
    p.add_argument("--columns", type=_columns, default=TRACE_HEADER,
                   help="header names standing for t,ax,ay,az")
    p.add_argument("--time-scale", type=float, default=1.0, help="seconds per unit of the time column")


def _add_design(p):
    p.add_argument("--method", choices=("auto", "exhaustive", "matched"), default="auto",
                   help="search strategy (auto: matched for traces over 10 minutes)")
    p.add_argument("--grid-fr", type=_fr_grid, help="resonant frequency grid start:step:stop (Hz)")
    p.add_argument("--grid-b", type=_b_grid, help="damping grid lo:hi:n (geometric, kg/s)")
    p.add_argument("--mass", type=float, default=1e-3, help="proof mass (kg)")
    p.add_argument("--zl", type=float, default=10e-3, help="displacement limit (m)")


def _add_node(p, profile_input: bool):
    p.add_argument("--config", help="node configuration JSON")
    p.add_argument("--alg", choices=ALGORITHMS, default="greedy")
    p.add_argument("--storage", choices=("battery", "capacitor"))
    p.add_argument("--C", type=int, dest="C", help="storage capacity (nJ)")
    p.add_argument("--B0", type=int, help="initial storage (nJ); default 0, or C/2 for scheme-lb")
    p.add_argument("--BK", type=int, default=0, help="required final storage (nJ)")
    p.add_argument("--epsilon", type=float, help="FPTAS or Scheme-LB epsilon")
    p.add_argument("--window", type=int, default=600, help="slots per independent window (0: whole profile)")
    p.add_argument("--ctx", type=float, default=C_TX, help="transmission cost (J/bit)")
    if profile_input:
        p.add_argument("--T-int", dest="T_int", type=float, default=1.0, help="slot length (s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kinharvest", description="Kinetic energy harvesting toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_global(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="motion descriptors D and f_m of a trace")
    _add_global(p, suppress=True)
    _add_trace_input(p)
    p.add_argument("--window", type=_seconds, help="also report D and f_m per window (e.g. 1s)")

    p = sub.add_parser("synth", help="write a synthetic acceleration trace")
    _add_global(p, suppress=True)
    p.add_argument("--kind", choices=("sine", "burst-walk"), default="sine")
    p.add_argument("--amplitude", type=float, default=3.0)
    p.add_argument("--freq", type=float)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--on-fraction", type=float, default=0.1)
    p.add_argument("--blip-fraction", type=float, default=0.0)
    p.add_argument("--sample-rate", type=float, default=100.0)
    p.add_argument("--output", default="trace.csv", help="file name inside --out-dir")

    p = sub.add_parser("tune", help="search harvester parameters for a trace")
    _add_global(p, suppress=True)
    _add_trace_input(p)
    _add_design(p)
    p.add_argument("--eta-h", type=float, default=ETA_H)
    p.add_argument("--ctx", type=float, default=C_TX)

    p = sub.add_parser("pipeline", help="trace to harvested energy to allocation")
    _add_global(p, suppress=True)
    _add_trace_input(p)
    _add_design(p)
    p.add_argument("--design", choices=("tune", "H1", "H2"), default="tune",
                   help="tune a design for the trace or use a reference design")
    p.add_argument("--eta-h", type=float, default=ETA_H)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="ON threshold (W)")
    _add_node(p, profile_input=False)

    p = sub.add_parser("allocate", help="solve the allocation problem for a slotted profile")
    _add_global(p, suppress=True)
    p.add_argument("profile", help="CSV with columns slot,Q_nJ")
    _add_node(p, profile_input=True)

    p = sub.add_parser("surrogate", help="i.i.d. or Markov surrogate of a profile")
    _add_global(p, suppress=True)
    p.add_argument("profile")
    p.add_argument("--kind", choices=("iid", "markov"), default="iid")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--eta-h", type=float, help="harvest efficiency used to map gamma (default 0.2)")
    p.add_argument("--T-int", dest="T_int", type=float, default=1.0)

    p = sub.add_parser("onoff", help="ON/OFF states and interval statistics of a profile")
    _add_global(p, suppress=True)
    p.add_argument("profile")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--eta-h", type=float)
    p.add_argument("--T-int", dest="T_int", type=float, default=1.0)

    p = sub.add_parser("runstest", help="Wald-Wolfowitz runs test")
    _add_global(p, suppress=True)
    p.add_argument("input", help="ON/OFF CSV (slot,state) or profile CSV (slot,Q_nJ)")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--eta-h", type=float)
    return parser


# --------------------------------------------------------------------------
# output handling


class Outputs:
    """Files staged in memory and committed atomically."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def add_json(self, name: str, obj):
        self.add(name, json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")

    def commit(self):
        os.makedirs(self.out_dir, exist_ok=True)
        staged = []
        try:
            for name, text in self.files.items():
                fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.out_dir)
                with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
                staged.append((tmp, os.path.join(self.out_dir, name)))
            for tmp, final in staged:
                os.replace(tmp, final)
        except BaseException:
            for tmp, _ in staged:
                if os.path.exists(tmp):
                    os.remove(tmp)
            raise


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays become Python values, NaN becomes null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _manifest(args, outputs: Outputs, extra=None) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in ("out_dir", "func")}
    files = {
        name: hashlib.sha256(text.encode("utf-8")).hexdigest()
        for name, text in sorted(outputs.files.items())
    }
    m = {"command": args.command, "version": __version__, "seed": args.seed, "params": params, "outputs": files}
    if extra:
        m.update(extra)
    return m


# --------------------------------------------------------------------------
# commands


def _load(args):
    return load_trace(args.trace, fs=args.fs, units=args.units, columns=args.columns, time_scale=args.time_scale)


def cmd_analyze(args, out: Outputs) -> dict:
    a = preprocess(_load(args))
    f_m = dominant_frequency(a)
    report = {"D": abs_deviation(a), "f_m": f_m, "fs": a.fs, "duration_s": a.duration, "samples": len(a)}
    if args.window:
        n = int(round(args.window * a.fs))
        if n < 2:
            raise ConfigurationError("window holds fewer than two samples")
        lines = ["t,D,f_m"]
        for k in range(len(a) // n):
            w = a.with_values(a.values[k * n : (k + 1) * n])
            fw = dominant_frequency(w, min_duration=min(2.0, args.window))
            lines.append(f"{k * args.window!r},{float(abs_deviation(w))!r},{'' if fw is None else repr(float(fw))}")
        out.add("analyze_windows.csv", "\n".join(lines) + "\n")
        report["windows"] = len(lines) - 1
    out.add_json("analyze.json", report)
    return report


def cmd_synth(args, out: Outputs) -> dict:
    spec = SynthSpec(
        kind=args.kind,
        amplitude=args.amplitude,
        freq=args.freq,
        duration=args.duration,
        on_fraction=args.on_fraction,
        blip_fraction=args.blip_fraction,
        seed=args.seed,
        fs=args.sample_rate,
    )
    tr = synth_trace(spec)
    if os.path.basename(args.output) != args.output:
        raise ConfigurationError("--output must be a bare file name; use --out-dir for the directory")
    out.add(args.output, trace_to_csv(tr))
    meta = dict(tr.meta)
    out.add_json("synth_meta.json", meta)
    return {"samples": len(tr.samples), "fs": tr.fs, **{k: v for k, v in meta.items() if k != "bursts"}}


def _design(args, accel):
    kw = {"m": args.mass, "Z_L": args.zl}
    if args.grid_b is not None:
        kw["b_grid"] = args.grid_b
    if args.method != "matched":
        if args.grid_fr is not None:
            kw["fr_grid"] = args.grid_fr
        kw["workers"] = args.threads
    return tune(accel, method=args.method, **kw)


def _design_report(d: HarvesterDesign) -> dict:
    return {"f_r": d.f_r, "Q": d.Q, "k": d.k, "b": d.b, "m": d.m, "Z_L": d.Z_L}


def cmd_tune(args, out: Outputs) -> dict:
    accel = preprocess(_load(args))
    res = _design(args, accel)
    report = {
        **_design_report(res.best),
        "avg_power_uW": res.avg_power * 1e6,
        "rate_kbps": data_rate(res.avg_power, args.eta_h, args.ctx),
    }
    out.add("tune_surface.csv", res.surface_csv())
    out.add_json("tune.json", report)
    return report


def _node_config(args) -> NodeConfig:
    cfg = NodeConfig.load(args.config) if args.config else NodeConfig()
    if args.storage is not None or args.C is not None:
        s = cfg.storage
        storage = StorageModel(
            kind=args.storage or s.kind, C=args.C if args.C is not None else s.C,
            V_max=s.V_max, V_op=s.V_op, V_min=s.V_min,
        )
        cfg = NodeConfig(storage, cfg.S, cfg.utility, cfg.leakage)
    return cfg


def _allocate(args, profile: EnergyProfile, out: Outputs) -> dict:
    cfg = _node_config(args)
    results = allocate_windows(
        profile, cfg, args.alg, window=args.window, B0=args.B0, BK=args.BK, epsilon=args.epsilon, c_tx=args.ctx
    )
    win = ["window,start,rate_kbps,on_pct,utility,feasible"]
    plan = ["slot,s_nJ,B_nJ,utility"]
    for k, w in enumerate(results):
        win.append(
            f"{k},{w.start},{w.rate_kbps!r},{100 * w.on_fraction!r},{w.plan.total_utility!r},{int(w.plan.feasible)}"
        )
        for i, s in enumerate(w.plan.s):
            u = cfg.utility(s) if args.alg != "scheme-lb" else s
            plan.append(f"{w.start + i},{s!r},{w.plan.B[i]!r},{u!r}")
    out.add("windows.csv", "\n".join(win) + "\n")
    out.add("plan.csv", "\n".join(plan) + "\n")
    rates = [w.rate_kbps for w in results]
    ons = [w.on_fraction for w in results]
    return {
        "algorithm": args.alg,
        "storage": cfg.storage.kind,
        "C_nJ": cfg.storage.C,
        "windows": len(results),
        "infeasible_windows": sum(not w.plan.feasible for w in results),
        "mean_rate_kbps": float(np.mean(rates)) if rates else 0.0,
        "mean_on_pct": 100 * float(np.mean(ons)) if ons else 0.0,
        "total_utility": sum(w.plan.total_utility for w in results),
    }


def cmd_pipeline(args, out: Outputs) -> dict:
    accel = preprocess(_load(args))
    if args.design == "H1":
        design = H1
    elif args.design == "H2":
        design = H2
    else:
        design = _design(args, accel).best
    sim = simulate(design, accel)
    profile = slots_from_power(sim.power, 1.0, args.eta_h)
    if len(profile) == 0:
        raise ConfigurationError("trace is shorter than one slot")
    hours = accel.duration / 3600.0
    series = profile_onoff(profile, args.gamma)
    report = {
        "design": _design_report(design),
        "P_avg_uW": sim.avg_power * 1e6,
        # averaged over the whole day, counting unrecorded hours as zero power
        "P_day_uW": sim.avg_power * 1e6 * hours / 24.0,
        "trace_hours": hours,
        "rate_kbps_formula": data_rate(sim.avg_power, args.eta_h, args.ctx),
        "onoff": series.stats(),
    }
    report["allocation"] = _allocate(args, profile, out)
    out.add("profile.csv", profile.to_csv())
    out.add_json("pipeline.json", report)
    return report


def _read_profile(path, T_int) -> EnergyProfile:
    return EnergyProfile.from_csv(path, T_int=T_int)


def cmd_allocate(args, out: Outputs) -> dict:
    report = _allocate(args, _read_profile(args.profile, args.T_int), out)
    out.add_json("allocate.json", report)
    return report


def cmd_surrogate(args, out: Outputs) -> dict:
    profile = _read_profile(args.profile, args.T_int)
    if args.kind == "iid":
        sur = iid_surrogate(profile, args.seed)
    else:
        sur = markov_surrogate(profile, args.gamma, args.seed, eta_h=args.eta_h)
    out.add("surrogate.csv", sur.to_csv())
    info = {k: v for k, v in sur.meta.items() if k != "states"}
    info["total_nJ"] = int(sur.Q.sum())
    out.add_json("surrogate.json", info)
    return info


def cmd_onoff(args, out: Outputs) -> dict:
    series = profile_onoff(_read_profile(args.profile, args.T_int), args.gamma, args.eta_h)
    stats = series.stats()
    out.add("onoff.csv", series.to_csv())
    out.add_json("onoff_stats.json", stats)
    out.add_json("conditional.json", conditional_probs(series).as_dict())
    return stats


def _read_states(args) -> np.ndarray:
    try:
        with open(args.input, newline="", encoding="utf-8") as fh:
            fields = csv.DictReader(fh).fieldnames or []
    except UnicodeDecodeError:
        raise InputError(f"{args.input}: not a UTF-8 text file") from None
    if "Q_nJ" in fields:
        return profile_onoff(_read_profile(args.input, 1.0), args.gamma, args.eta_h).states
    if "state" not in fields:
        raise InputError(f"{args.input}: expected a 'state' or 'Q_nJ' column")
    states = []
    with open(args.input, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            v = (row["state"] or "").strip().upper()
            if v in ("ON", "1", "TRUE"):
                states.append(True)
            elif v in ("OFF", "0", "FALSE"):
                states.append(False)
            else:
                raise InputError(f"line {reader.line_num}: bad state {row['state']!r}")
    return np.array(states, dtype=bool)


def cmd_runstest(args, out: Outputs) -> dict:
    res = runs_test(_read_states(args)).as_dict()
    out.add_json("runstest.json", res)
    return res


COMMANDS = {
    "analyze": cmd_analyze,
    "synth": cmd_synth,
    "tune": cmd_tune,
    "pipeline": cmd_pipeline,
    "allocate": cmd_allocate,
    "surrogate": cmd_surrogate,
    "onoff": cmd_onoff,
    "runstest": cmd_runstest,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Outputs(args.out_dir)
    try:
        report = COMMANDS[args.command](args, out)
        out.add_json(f"{args.command}_manifest.json", _manifest(args, out))
        out.commit()
    except (InputError, ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KinharvestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_plain(report), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
