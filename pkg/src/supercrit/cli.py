"""Command-line front end.

Commands: ``envelope``, ``survival``, ``kernel``, ``green`` and ``verify``.
Settings come from a flat ``key = value`` config file (``--config``) and from
flags, which mirror the keys one to one and take precedence. Exit status is
0 on success, 2 when a verification verdict fails and 1 on usage or runtime
errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import envelopes as env
from . import fk_montecarlo as fk
from . import pde_radial as pde
from . import potentials as pot
from . import reports, specfun, suites
from .envelopes import EnvelopeConstants, ModelParams
from .reports import RatioReport

COMMANDS = ("envelope", "survival", "kernel", "green", "verify")
FORMATS = ("text", "csv", "json")
EVALS = ("h", "h_tilde", "h_tilde_prime", "H", "psi", "eta0", "eta1", "u1", "u2", "small_time",
         "large_time", "green", "log_shift", "q", "bessel_k", "V")

# key -> (type, commands it applies to; None = all)
KEYS = {
    "command": (str, None), "config": (str, None), "seed": (int, None), "threads": (int, None),
    "out": (str, None), "format": (str, None),
    "d": (int, None), "beta": (float, None), "kappa": (float, None),
    "form": (str, None), "C": (float, None), "theta": (float, None), "sign": (int, None),
    "C3": (float, None), "gamma": (float, None),
    "paths": (int, None), "dt": (float, None), "substep_theta": (float, None),
    "weight_floor": (float, None), "r_min": (float, None), "batch_size": (int, None),
    "eval": (str, ("envelope",)), "r": (str, None), "t": (float, None), "x": (str, None), "y": (str, None),
    "R": (float, ("envelope",)), "nu": (float, ("envelope",)), "beta_prime": (float, ("envelope",)),
    "c_gauss": (float, ("envelope",)), "c_kill": (float, ("envelope",)), "eta2": (float, ("envelope",)),
    "method": (str, ("survival", "kernel")), "per_decade": (int, ("survival", "kernel")),
    "steps": (int, ("survival", "kernel")), "table": (str, ("survival",)),
    "t_max": (float, ("green",)), "suite": (str, ("verify",)),
}

USAGE = """usage: supercrit <command> [options]

commands:
  envelope   evaluate a closed-form function (--eval h --r 0.5 ...)
  survival   P_x(lifetime > t) by PDE or Monte Carlo
  kernel     heat kernel p(t, x, y) (PDE for d = 1, Monte Carlo otherwise)
  green      Green function by Monte Carlo time integration
  verify     run an acceptance suite (--suite NAME or all)

global options: --config FILE --seed N --threads N --out PATH --format text|csv|json
Config files hold one 'key = value' per line; '#' starts a comment.
"""


class UsageError(Exception):
    pass


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; blank lines, ``#`` comments and ``[section]`` headers are skipped."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"config line {n}: empty key")
        out[key] = value
    return out


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    for key in KEYS:
        if key != "command":
            common.add_argument(f"--{key}", dest=key)
    parser = argparse.ArgumentParser(prog="supercrit", usage=USAGE, add_help=True,
                                     argument_default=argparse.SUPPRESS, parents=[common])
    sub = parser.add_subparsers(dest="command")
    for cmd in COMMANDS:
        sub.add_parser(cmd, parents=[common], argument_default=argparse.SUPPRESS, usage=USAGE)
    return parser


def resolve(argv) -> dict:
    """Merge the config file with flags (flags win) and convert types."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        raise UsageError("could not parse arguments") from exc
    flags = {k: v for k, v in vars(ns).items() if v is not None}
    merged = {}
    if "config" in flags:
        try:
            merged.update(parse_config_text(Path(flags["config"]).read_text()))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
    merged.update(flags)
    cmd = merged.get("command")
    if cmd not in COMMANDS:
        raise UsageError("no command given" if cmd is None else f"unknown command {cmd!r}")
    out = {}
    for key, value in merged.items():
        if key not in KEYS:
            raise UsageError(f"unknown key {key!r}")
        kind, scope = KEYS[key]
        if scope is not None and cmd not in scope:
            raise UsageError(f"key {key!r} does not apply to {cmd}")
        try:
            out[key] = kind(value) if not isinstance(value, kind) else value
        except ValueError as exc:
            raise UsageError(f"key {key!r}: cannot read {value!r} as {kind.__name__}") from exc
    fmt = out.setdefault("format", "text")
    if fmt not in FORMATS:
        raise UsageError(f"key 'format': expected one of {FORMATS}")
    return out


def _need(cfg, key):
    if key not in cfg:
        raise UsageError(f"missing key {key!r} for {cfg['command']}")
    return cfg[key]


def _floats(text) -> list:
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _point(cfg, key, d):
    vals = _floats(_need(cfg, key))
    if len(vals) == 1 and d > 1:
        vals = vals + [0.0] * (d - 1)
    if len(vals) != d:
        raise UsageError(f"key {key!r}: expected {d} coordinates")
    return np.array(vals)


def model_params(cfg) -> ModelParams:
    return ModelParams(cfg.get("d", 3), cfg.get("beta", 1.0), cfg.get("kappa", 1.0))


def potential_from(cfg) -> pot.Potential:
    p = model_params(cfg)
    block = {"form": cfg.get("form", "canonical")}
    for key in ("C", "theta", "sign", "C3", "gamma"):
        if key in cfg:
            block[key] = cfg[key]
    if block["form"] == "zero":
        return pot.zero(p)
    return pot.Potential.from_config(block, p)


def mc_config(cfg) -> fk.McConfig:
    block = {k: cfg[k] for k in ("paths", "dt", "substep_theta", "weight_floor", "seed", "r_min",
                                 "batch_size", "threads") if k in cfg}
    return fk.McConfig.from_config(block)


# --- output ------------------------------------------------------------------

def emit_report(report, fmt: str, path: str | None = None, inputs: dict | None = None) -> str:
    """Serialise a report and write it to ``path`` (stdout when None); returns the text."""
    if isinstance(report, RatioReport):
        text = reports.ratio_report_json(report) if fmt == "json" else reports.ratio_report_csv(report)
    elif isinstance(report, fk.McEstimate):
        rows = [(inputs or {}, report)]
        text = reports.to_json({"inputs": inputs or {}, "estimate": report}) if fmt == "json" \
            else reports.estimate_csv(rows)
    elif isinstance(report, suites.CriterionResult):
        if fmt == "json":
            text = reports.to_json(report.to_dict())
        elif isinstance(report.report, RatioReport) and fmt == "csv":
            text = reports.ratio_report_csv(report.report)
        else:
            text = report.line() + "\n"
    elif isinstance(report, dict):
        text = reports.to_json(report) if fmt == "json" else reports.table_csv(report)
    else:
        raise TypeError(f"cannot emit {type(report).__name__}")
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


# --- commands ------------------------------------------------------------------

def _constants(cfg) -> EnvelopeConstants:
    return EnvelopeConstants(cfg.get("c_gauss", 1.0), cfg.get("c_kill", 1.0), cfg.get("eta2", 1.0))


def cmd_envelope(cfg) -> int:
    p = model_params(cfg)
    what = _need(cfg, "eval")
    if what not in EVALS:
        raise UsageError(f"key 'eval': expected one of {EVALS}")
    r = lambda: float(_need(cfg, "r"))
    c = _constants(cfg)
    table = {
        "h": lambda: env.h(p, r()),
        "h_tilde": lambda: env.h_tilde(p, r()),
        "h_tilde_prime": lambda: env.h_tilde_prime(p, r()),
        "H": lambda: env.H(p, _need(cfg, "t"), r()),
        "psi": lambda: env.psi(p.d, _need(cfg, "R"), _need(cfg, "t"), r()),
        "eta0": lambda: env.eta0(p),
        "eta1": lambda: env.eta1(p),
        "u1": lambda: env.barrier_u("u1", p, cfg.get("beta_prime"), r()),
        "u2": lambda: env.barrier_u("u2", p, cfg.get("beta_prime"), r()),
        "small_time": lambda: env.small_time_envelope(p, c, _need(cfg, "t"), _point(cfg, "x", p.d),
                                                      _point(cfg, "y", p.d)).value,
        "large_time": lambda: env.large_time_envelope(p, c, _need(cfg, "t"), _point(cfg, "x", p.d),
                                                      _point(cfg, "y", p.d)).value,
        "green": lambda: env.green_envelope(p, c, _point(cfg, "x", p.d), _point(cfg, "y", p.d)).value,
        "log_shift": lambda: specfun.log_shift(r()),
        "q": lambda: specfun.gaussian_q(p.d, _need(cfg, "t"), _point(cfg, "x", p.d), _point(cfg, "y", p.d)),
        "bessel_k": lambda: specfun.bessel_k(_need(cfg, "nu"), r()),
        "V": lambda: potential_from(cfg)(r()),
    }
    value = float(table[what]())
    fmt = cfg["format"]
    if fmt == "text":
        text = f"{value:.6g}\n"
        if "out" in cfg:
            Path(cfg["out"]).write_text(text)
        else:
            sys.stdout.write(text)
    else:
        emit_report({"eval": [what], "value": [value]}, fmt, cfg.get("out"))
    return 0


def _radii(cfg):
    return _floats(_need(cfg, "r"))


def cmd_survival(cfg) -> int:
    V = potential_from(cfg)
    t = float(_need(cfg, "t"))
    method = cfg.get("method", "pde")
    fmt = "csv" if cfg["format"] == "text" else cfg["format"]
    if method == "pde":
        g = pde.default_grid(V, t, per_decade=cfg.get("per_decade", 200), steps=cfg.get("steps", 1000))
        sol = pde.solve_survival(V, V.params, g, t)
        if cfg.get("table", "false").lower() in ("1", "true", "yes"):
            emit_report({"r": sol.nodes, "u": sol.u}, fmt, cfg.get("out"))
        else:
            rs = _radii(cfg)
            emit_report({"t": [t] * len(rs), "r": rs, "u": [float(sol(r)) for r in rs]}, fmt, cfg.get("out"))
        return 0
    if method != "mc":
        raise UsageError("key 'method': expected pde or mc")
    mc = mc_config(cfg)
    rows = []
    for k, r in enumerate(_radii(cfg)):
        x = np.zeros(V.d)
        x[0] = r
        est = fk.survival_probability(V, x, t, mc if k == 0 else _reseed(mc, k))
        rows.append(({"t": t, "r": r}, est))
    _emit_rows(rows, fmt, cfg.get("out"))
    return 0


def _reseed(mc, k):
    from dataclasses import replace

    return replace(mc, seed=mc.seed + k)


def _emit_rows(rows, fmt, path):
    text = reports.to_json([{"inputs": i, "estimate": e} for i, e in rows]) if fmt == "json" \
        else reports.estimate_csv(rows)
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_kernel(cfg) -> int:
    V = potential_from(cfg)
    t = float(_need(cfg, "t"))
    x, y = _point(cfg, "x", V.d), _point(cfg, "y", V.d)
    fmt = "csv" if cfg["format"] == "text" else cfg["format"]
    method = cfg.get("method", "pde" if V.d == 1 else "mc")
    inputs = {"t": t, "x": x, "y": y}
    if method == "pde":
        if V.d != 1:
            raise UsageError("the PDE kernel is only available for d = 1")
        if x[0] * y[0] < 0 and V.singular:
            val = 0.0
        else:
            g = pde.kernel_grid_1d(V, t, (abs(x[0]), abs(y[0])), steps=cfg.get("steps", 2000),
                                   per_decade=cfg.get("per_decade", 200))
            val = pde.solve_kernel_1d(V, t, abs(x[0]), abs(y[0]), g)
        emit_report({"t": [t], "x": [x[0]], "y": [y[0]], "p": [val]}, fmt, cfg.get("out"))
        return 0
    if method != "mc":
        raise UsageError("key 'method': expected pde or mc")
    est = fk.heat_kernel(V, t, x, y, mc_config(cfg))
    emit_report(est, fmt, cfg.get("out"), inputs)
    return 0


def cmd_green(cfg) -> int:
    V = potential_from(cfg)
    x, y = _point(cfg, "x", V.d), _point(cfg, "y", V.d)
    fmt = "csv" if cfg["format"] == "text" else cfg["format"]
    est = fk.green_mc(V, x, y, mc_config(cfg), t_max=cfg.get("t_max", 100.0))
    emit_report(est, fmt, cfg.get("out"), {"x": x, "y": y, "t_max": est.t_max})
    return 0


def cmd_verify(cfg) -> int:
    name = cfg.get("suite", "all")
    mc_keys = ("paths", "dt", "substep_theta", "weight_floor", "seed", "r_min", "batch_size", "threads")
    mc = None
    if any(k in cfg for k in mc_keys):
        from dataclasses import replace

        mc = replace(suites.ACCEPT_MC, **{k: cfg[k] for k in mc_keys if k in cfg})
    if name == "all":
        results = suites.run_all(mc)
    elif name in suites.SUITES:
        if name == "counterexample" and "form" in cfg:
            results = [suites.counterexample(mc, V=potential_from(cfg))]
        else:
            results = [suites.SUITES[name](mc)]
    else:
        raise UsageError(f"key 'suite': expected all or one of {sorted(suites.SUITES)}")
    fmt = cfg["format"]
    if fmt == "json":
        text = reports.to_json([r.to_dict() for r in results])
        if "out" in cfg:
            Path(cfg["out"]).write_text(text)
        else:
            sys.stdout.write(text)
    elif len(results) == 1:
        emit_report(results[0], fmt, cfg.get("out"))
    else:
        text = "".join(r.line() + "\n" for r in results)
        if "out" in cfg:
            Path(cfg["out"]).write_text(text)
        else:
            sys.stdout.write(text)
    if fmt != "text" or "out" in cfg:
        for r in results:
            sys.stderr.write(r.line() + "\n")
    return 0 if all(r.passed for r in results) else 2


HANDLERS = {"envelope": cmd_envelope, "survival": cmd_survival, "kernel": cmd_kernel,
            "green": cmd_green, "verify": cmd_verify}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = resolve(argv)
        return HANDLERS[cfg["command"]](cfg)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n\n{USAGE}")
        return 1
    except (ValueError, TypeError, RuntimeError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
