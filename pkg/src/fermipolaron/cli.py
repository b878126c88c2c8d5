"""Command-line entry point.

Usage: ``fermipolaron SUBCOMMAND [--config FILE] [--key value ...]``.

A config file holds ``key = value`` lines (``#`` starts a comment); flags
override file values. Every subcommand writes a CSV with a ``#`` metadata
header and, next to it, ``<out>.meta.json`` with the resolved parameters and
git-style blob hashes of the inputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("fermipolaron")

SUBCOMMANDS = ("patches", "eta", "floor", "simulate", "verify")


class ConfigError(ValueError):
    pass


def _float(text: str) -> float:
    """Numbers, fractions ``a/b`` and ``sqrt(x)``."""
    t = text.strip()
    if t.startswith("sqrt(") and t.endswith(")"):
        return math.sqrt(_float(t[5:-1]))
    if "/" in t:
        a, b = t.split("/", 1)
        return _float(a) / _float(b)
    return float(t)


def _int(text: str) -> int:
    v = _float(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _str(text: str) -> str:
    return text.strip()


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


# key -> (parser, default)
KEYS = {
    "kF": (_float, None),
    "lambda": (_float, 1.0),
    "beta": (_float, 0.0),
    "M": (_str, "auto"),
    "delta": (_float, 2.0 / 15.0),
    "corridor": (_float, 0.0),
    "potential": (_str, None),
    "impurity": (_str, "static"),
    "q_cut": (_float, 1.0),
    "p_cut": (_float, None),
    "sector": (_str, "neutral"),
    "n_max": (_str, "auto"),
    "grid": (_str, None),
    "seed": (_int, 0),
    "out": (_str, None),
    "mode": (_str, "thm1"),
    "model": (_str, "fermionic"),
    "n": (_int, 1),
    "theta_mode": (_str, "closed"),
    "convention": (_str, "half"),
    "suite": (_str, None),
    "trials": (_int, None),
    "all": (_bool, False),
}

REQUIRED = {
    "patches": ("kF",),
    "eta": ("kF",),
    "floor": ("kF",),
    "simulate": ("kF",),
    "verify": (),
}


@dataclass
class Config:
    values: dict
    sources: dict = field(default_factory=dict)
    config_text: str | None = None

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def lam(self) -> float:
        return self.values["lambda"]


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    """``key = value`` lines into raw strings, with line-numbered errors."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, val = (x.strip() for x in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if not val:
            raise ConfigError(f"{origin}:{lineno}: missing value for {key!r}")
        raw[key] = (val, lineno)
    return raw


def parse_config(path=None, flags: dict | None = None, subcommand: str | None = None) -> Config:
    """Merge a config file and flags into a validated :class:`Config`."""
    text = None
    raw: dict = {}
    origin = "<config>"
    if path is not None:
        origin = str(path)
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        raw = parse_config_text(text, origin)
    values = {k: d for k, (_, d) in KEYS.items()}
    sources = {}
    for key, (val, lineno) in raw.items():
        try:
            values[key] = KEYS[key][0](val)
        except ValueError as e:
            raise ConfigError(f"{origin}:{lineno}: malformed value for {key!r}: {e}") from e
        sources[key] = f"{origin}:{lineno}"
    for key, val in (flags or {}).items():
        if val is None:
            continue
        if key not in KEYS:
            raise ConfigError(f"unknown option {key!r}")
        try:
            values[key] = KEYS[key][0](val) if isinstance(val, str) else val
        except ValueError as e:
            raise ConfigError(f"--{key}: malformed value: {e}") from e
        sources[key] = "flag"
    cfg = Config(values, sources, text)
    validate(cfg, subcommand)
    return cfg


def validate(cfg: Config, subcommand: str | None):
    v = cfg.values
    for key in REQUIRED.get(subcommand, ()):
        if v.get(key) is None:
            raise ConfigError(f"missing required key {key!r}")
    if v["kF"] is not None and v["kF"] <= 0:
        raise ConfigError("kF must be positive")
    if not v["lambda"] > 0:
        raise ConfigError("lambda must be positive")
    if v["beta"] < 0:
        raise ConfigError("beta must be nonnegative")
    if not 0 < v["delta"] < 1.0 / 3.0:
        raise ConfigError("delta must lie in (0, 1/3)")
    if v["M"] != "auto":
        try:
            M = _int(v["M"])
        except ValueError as e:
            raise ConfigError(f"M: {e}") from e
        if M < 1 or (M > 1 and M % 2):
            raise ConfigError("M must be 1 (diagnostic) or a positive even integer")
    if v["impurity"] not in ("static", "truncated"):
        raise ConfigError("impurity must be 'static' or 'truncated'")
    if v["mode"] not in ("thm1", "thm2", "cor", "moments"):
        raise ConfigError("mode must be one of thm1, thm2, cor, moments")
    if v["model"] not in ("fermionic", "oracle"):
        raise ConfigError("model must be 'fermionic' or 'oracle'")
    if v["theta_mode"] not in ("closed", "exact"):
        raise ConfigError("theta_mode must be 'closed' or 'exact'")
    if v["convention"] not in ("half", "full"):
        raise ConfigError("convention must be 'half' or 'full'")
    if v["n"] not in (1, 2, 3):
        raise ConfigError("n must be 1, 2 or 3")
    if v["n_max"] != "auto":
        try:
            if _int(v["n_max"]) < 1:
                raise ValueError("must be positive")
        except ValueError as e:
            raise ConfigError(f"n_max: {e}") from e
    _sector(v["sector"])
    if v["grid"] is not None:
        parse_grid(v["grid"])
    if v["potential"] is not None and not Path(v["potential"]).is_file():
        raise ConfigError(f"potential file {v['potential']} not found")


def parse_grid(spec: str) -> np.ndarray:
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    try:
        if ":" in spec:
            a, b, n = spec.split(":")
            n = _int(n)
            if n < 1:
                raise ValueError("need at least one point")
            g = np.linspace(_float(a), _float(b), n)
        else:
            g = np.array([_float(x) for x in spec.split(",")])
    except ValueError as e:
        raise ConfigError(f"grid: {e}") from e
    if np.any(g < 0) or np.any(np.diff(g) < 0):
        raise ConfigError("grid must be nonnegative and increasing")
    return g


def _sector(text: str):
    from .fock import ExcitationCutoff, Full

    t = text.strip().lower()
    if t == "full":
        return Full()
    if t == "neutral":
        return ExcitationCutoff(None, True)
    if t.startswith("cutoff:"):
        try:
            return ExcitationCutoff(int(t.split(":", 1)[1]), True)
        except ValueError as e:
            raise ConfigError(f"sector: {e}") from e
    raise ConfigError("sector must be 'full', 'neutral' or 'cutoff:<m>'")


# ------------------------------------------------------------------ helpers

def blob_hash(data: bytes) -> str:
    """Git blob id of ``data``."""
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def _potential(cfg: Config):
    from .lattice import Potential

    if cfg["potential"]:
        return Potential.from_file(cfg["potential"])
    return Potential.ball(1)


def _M(cfg: Config, N: int) -> int:
    from .patches import default_M

    return default_M(N) if cfg["M"] == "auto" else _int(cfg["M"])


RELEVANT = {
    "patches": ("kF", "M", "delta", "corridor", "potential"),
    "eta": ("kF", "lambda", "M", "delta", "corridor", "potential", "grid", "convention"),
    "floor": ("kF", "lambda", "beta", "M", "delta", "corridor", "potential", "grid", "theta_mode", "convention"),
    "simulate": ("kF", "lambda", "beta", "M", "delta", "corridor", "potential", "impurity", "q_cut", "p_cut",
                 "sector", "n_max", "grid", "mode", "model", "n", "seed"),
    "verify": ("seed", "suite", "trials", "all"),
}


def _meta(cfg: Config, subcommand: str, extra: dict | None = None) -> dict:
    keys = RELEVANT[subcommand]
    meta = {k: v for k, v in sorted(cfg.values.items()) if v is not None and k in keys}
    meta["subcommand"] = subcommand
    meta["version"] = __version__
    meta.update(extra or {})
    return meta


def _write(cfg: Config, subcommand: str, csv_text: str, meta: dict, default_name: str) -> Path:
    out = Path(cfg["out"] or default_name)
    out.write_text(csv_text)
    inputs = {}
    if cfg.config_text is not None:
        inputs["config"] = blob_hash(cfg.config_text.encode())
    if cfg["potential"]:
        inputs["potential"] = blob_hash(Path(cfg["potential"]).read_bytes())
    canonical = json.dumps(_meta(cfg, subcommand), sort_keys=True, default=str).encode()
    inputs["parameters"] = blob_hash(canonical)
    side = {"parameters": meta, "inputs": inputs, "output": {"path": out.name, "blob": blob_hash(csv_text.encode())}}
    Path(str(out) + ".meta.json").write_text(json.dumps(side, sort_keys=True, indent=2, default=str) + "\n")
    return out


# --------------------------------------------------------------- subcommands

def cmd_patches(cfg: Config) -> int:
    from .coherent import format_csv
    from .lattice import build_fermi_ball, gamma_set
    from .patches import build_patch_set, build_weights, n_alpha_asymptotic

    V = _potential(cfg)
    ball = build_fermi_ball(cfg["kF"])
    M = _M(cfg, ball.N)
    ps = build_patch_set(M, ball.kF, ball.N, cfg["delta"], cfg["corridor"])
    table = build_weights(ball, ps, gamma_set(V))
    rows = []
    for _, _, w in table.entries():
        dot = abs(float(np.dot(ps.centers[w.alpha], w.k)))
        asym = n_alpha_asymptotic(ball.kF, M, dot) ** 2
        rows.append((*w.k, w.alpha, w.hemisphere, w.count_sq, dot, w.count_sq / asym if asym else float("nan")))
    cols = ("kx", "ky", "kz", "alpha", "hemisphere", "count_sq", "dot", "ratio")
    sums = {}
    for k in table.gamma:
        tot = table.sum_n_squared(k)
        kn = math.sqrt(sum(x * x for x in k))
        sums[f"sum_n2{k}"] = tot
        sums[f"sum_n2_over_pi{k}"] = tot / (ball.kF ** 2 * kn * math.pi)
    meta = _meta(cfg, "patches", {"N": ball.N, "M_used": M, **sums})
    _write(cfg, "patches", format_csv(cols, rows, meta), meta, "patches.csv")
    return 0


def _coherent_params(cfg: Config):
    from .coherent import CoherentParams
    from .lattice import build_fermi_ball, gamma_set
    from .patches import build_patch_set, build_weights

    V = _potential(cfg)
    ball = build_fermi_ball(cfg["kF"])
    M = _M(cfg, ball.N)
    ps = build_patch_set(M, ball.kF, ball.N, cfg["delta"], cfg["corridor"])
    table = build_weights(ball, ps, gamma_set(V))
    return CoherentParams.from_weights(table, V, cfg.lam), table, M


def cmd_eta(cfg: Config) -> int:
    from .coherent import CURVE_COLUMNS, curve_rows, format_csv

    params, table, M = _coherent_params(cfg)
    kF = params.kF
    grid = parse_grid(cfg["grid"]) if cfg["grid"] else np.linspace(0.0, 10.0 / kF, 201)
    rows = curve_rows(params, grid, cfg["convention"])
    meta = _meta(cfg, "eta", {"N": table.ball.N, "M_used": M, "entries": len(params.keys)})
    _write(cfg, "eta", format_csv(CURVE_COLUMNS, rows, meta), meta, "eta.csv")
    return 0


def cmd_floor(cfg: Config) -> int:
    from .coherent import format_csv
    from .lowerbound import FLOOR_COLUMNS, floor_rows, make_floor_params

    V = _potential(cfg)
    table = None
    if cfg["theta_mode"] == "exact":
        _, table, _ = _coherent_params(cfg)
    from .lattice import build_fermi_ball

    N = build_fermi_ball(cfg["kF"]).N
    p = make_floor_params(cfg.lam, cfg["kF"], V, beta=cfg["beta"], M=_M(cfg, N), delta=cfg["delta"],
                          theta_mode=cfg["theta_mode"], table=table, convention=cfg["convention"])
    grid = parse_grid(cfg["grid"]) if cfg["grid"] else np.linspace(0.0, 5.0 / p.kF, 101)
    rows = floor_rows(p, grid)
    meta = _meta(cfg, "floor", {"N": p.N, "M_used": p.M, "theta": p.theta, "d": p.d,
                                "note": "scale, constants suppressed"})
    _write(cfg, "floor", format_csv(FLOOR_COLUMNS, rows, meta), meta, "floor.csv")
    return 0


def build_desk(cfg: Config):
    from .hamiltonians import DeskModel, Static, Truncated
    from .lattice import build_fermi_ball

    V = _potential(cfg)
    kF = cfg["kF"]
    ball = build_fermi_ball(kF)
    p_cut = cfg["p_cut"] if cfg["p_cut"] is not None else math.sqrt(ball.r2 + 1)
    imp = Truncated(cfg["q_cut"], cfg["beta"]) if cfg["impurity"] == "truncated" else Static()
    return DeskModel(kF, V, cfg.lam, p_cut, _M(cfg, ball.N), cfg["delta"], _sector(cfg["sector"]),
                     cfg["corridor"], imp)


def cmd_simulate(cfg: Config) -> int:
    from .evolve import cor_gap, moment_growth, thm1_residual, thm2_residual

    model = build_desk(cfg)
    grid = parse_grid(cfg["grid"]) if cfg["grid"] else np.linspace(0.0, 1.0 / (cfg.lam * cfg["kF"]), 21)
    mode = cfg["mode"]
    if mode == "thm1":
        rep = thm1_residual(model, grid)
    elif mode == "thm2":
        n_max = None if cfg["n_max"] == "auto" else _int(cfg["n_max"])
        rep = thm2_residual(model, grid, cfg["model"], n_max)
    elif mode == "cor":
        rep = cor_gap(model, grid)
    else:
        rep = moment_growth(model, cfg["n"], grid)
    rep.metadata.update(_meta(cfg, "simulate"))
    _write(cfg, "simulate", rep.to_csv(), rep.metadata, f"{mode}.csv")
    return 0


def cmd_verify(cfg: Config) -> int:
    from .verify import SUITES, exit_code, format_reports, run_all, run_suite

    seed = cfg["seed"]
    if cfg["suite"] and not cfg["all"]:
        names = [s.strip() for s in cfg["suite"].split(",")]
        unknown = [n for n in names if n not in SUITES]
        if unknown:
            raise ConfigError(f"unknown suite(s): {', '.join(unknown)}")
        reports = [run_suite(n, cfg["trials"], seed) for n in names]
    else:
        reports = run_all(seed)
    text = format_reports(reports)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    else:
        sys.stdout.write(text)
    return exit_code(reports)


COMMANDS = {"patches": cmd_patches, "eta": cmd_eta, "floor": cmd_floor,
            "simulate": cmd_simulate, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fermipolaron", description="Fermi polaron effective dynamics toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("-v", "--verbose", action="store_true")
        for key, (conv, _) in KEYS.items():
            if conv is _bool:
                p.add_argument(f"--{key}", dest=key, action="store_const", const=True, default=None)
            else:
                p.add_argument(f"--{key}", dest=key, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: getattr(args, k) for k in KEYS}
    try:
        cfg = parse_config(args.config, flags, args.command)
        return COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"fermipolaron: configuration error: {e}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, RuntimeError, OSError) as e:
        print(f"fermipolaron: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
