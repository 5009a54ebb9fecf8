"""Run configuration: YAML schema, strict validation, object builders.

One human-readable file per run; every key is known, typed, and defaulted,
and unknown keys are rejected outright so configs stay diffable and
archivable. ``seed``, ``threads``, and the output directory can be
overridden from the command line.
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .chaos import PathFunctional
from .coefficients import (
    DriftSpec,
    RankG,
    VolatilitySpec,
    make_constant_drift,
    make_mean_field_drift,
    make_rank_drift,
    zero_drift,
)
from .errors import ConfigError
from .state import Cloud, InitialLaw, TimeGrid

CONFIG_SCHEMA = 1

EXPERIMENTS = (
    "solve-mkv",
    "simulate-particles",
    "chaos-metrics",
    "burgers-compare",
    "sanov-check",
    "girsanov-check",
)

DEFAULTS = {
    "schema": CONFIG_SCHEMA,
    "seed": 20240801,
    "threads": 1,
    "grid": {"T": 1.0, "M": 200},
    "drift": {
        "kind": "rank",
        "g": {"kind": "identity", "a": 1.0, "b": 0.0, "s": 1.0},
        "value": 0.0,
        "bound": None,
        "mean_field": {"phi": "clamp", "lo": -1.0, "hi": 1.0, "f": "mean"},
    },
    "sigma": {"kind": "identity", "s": 1.0},
    "lambda0": {
        "kind": "point",
        "value": 0.0,
        "mean": 0.0,
        "std": 1.0,
        "lo": 0.0,
        "hi": 1.0,
    },
    "cloud": {"m": 10000},
    "particles": {"n": 200, "replicas": 1},
    "picard": {"m": 10000, "max_iter": 8, "tol": 0.03, "bins": 32, "common_noise": False},
    "metrics": {"bins": 64, "laplace_alpha": 0.0},
    "chaos": {"n_list": [50, 200, 800], "replicas": 30, "k": 1},
    "neighborhood": {"epsilon": 0.2, "phi": "terminal_leq", "threshold": "median"},
    "pde": {"x_min": None, "x_max": None, "nx": 2048, "nt": None},
    "compare": {"replicas": 1, "times": None},
    "girsanov": {"m": 10000, "delta": 0.4, "const_shift": 0.5, "phi_threshold": 0.5},
    "output": {"dump_paths": False},
}

_G_KINDS = ("identity", "affine", "tanh_scaled")
_DRIFT_KINDS = ("zero", "constant", "rank", "mean_field")
_SIGMA_KINDS = ("identity", "scalar")
_LAW_KINDS = ("point", "gaussian", "uniform")
_PHI_KINDS = ("terminal_leq", "at_time_leq", "tanh_at_time")


def load_config(path) -> dict:
    """Load a YAML config file, merge over defaults, and validate."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return merge_config(raw)


def merge_config(overrides: dict) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    _merge_into(cfg, overrides, prefix="")
    validate_config(cfg)
    return cfg


def _merge_into(base: dict, over: dict, prefix: str):
    for key, value in over.items():
        where = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a mapping")
            _merge_into(base[key], value, prefix=where + ".")
        else:
            base[key] = value


def validate_config(cfg: dict):
    if cfg["schema"] != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {cfg['schema']}")
    _require(isinstance(cfg["seed"], int) and 0 <= cfg["seed"] < 2**64, "seed must be a 64-bit integer")
    _require(isinstance(cfg["threads"], int) and cfg["threads"] >= 1, "threads must be >= 1")
    g = cfg["grid"]
    _require(_pos(g["T"]), "grid.T must be positive")
    _require(isinstance(g["M"], int) and g["M"] >= 1, "grid.M must be a positive integer")
    d = cfg["drift"]
    _require(d["kind"] in _DRIFT_KINDS, f"drift.kind must be one of {_DRIFT_KINDS}")
    _require(d["g"]["kind"] in _G_KINDS, f"drift.g.kind must be one of {_G_KINDS}")
    _require(np.isfinite(float(d["g"]["a"])) and np.isfinite(float(d["g"]["b"])), "drift.g coefficients must be finite")
    _require(_pos(d["g"]["s"]), "drift.g.s must be positive")
    if d["bound"] is not None:
        _require(_pos(d["bound"]), "drift.bound must be positive when given")
    mf = d["mean_field"]
    _require(mf["phi"] == "clamp", "drift.mean_field.phi must be 'clamp'")
    _require(mf["f"] in ("mean", "tanh_mean"), "drift.mean_field.f must be mean|tanh_mean")
    _require(float(mf["lo"]) < float(mf["hi"]), "drift.mean_field needs lo < hi")
    s = cfg["sigma"]
    _require(s["kind"] in _SIGMA_KINDS, f"sigma.kind must be one of {_SIGMA_KINDS}")
    _require(_pos(s["s"]), "sigma.s must be positive")
    lam = cfg["lambda0"]
    _require(lam["kind"] in _LAW_KINDS, f"lambda0.kind must be one of {_LAW_KINDS}")
    _require(_pos(lam["std"]), "lambda0.std must be positive")
    _require(float(lam["lo"]) < float(lam["hi"]), "lambda0 needs lo < hi")
    _require(isinstance(cfg["cloud"]["m"], int) and cfg["cloud"]["m"] >= 1, "cloud.m must be >= 1")
    p = cfg["particles"]
    _require(isinstance(p["n"], int) and p["n"] >= 1, "particles.n must be >= 1")
    _require(isinstance(p["replicas"], int) and p["replicas"] >= 1, "particles.replicas must be >= 1")
    pc = cfg["picard"]
    _require(isinstance(pc["m"], int) and pc["m"] >= 100, "picard.m must be >= 100")
    _require(isinstance(pc["max_iter"], int) and pc["max_iter"] >= 1, "picard.max_iter must be >= 1")
    _require(float(pc["tol"]) >= 0.0, "picard.tol must be nonnegative")
    _require(isinstance(pc["bins"], int) and pc["bins"] >= 2, "picard.bins must be >= 2")
    _require(isinstance(pc["common_noise"], bool), "picard.common_noise must be boolean")
    mt = cfg["metrics"]
    _require(isinstance(mt["bins"], int) and mt["bins"] >= 2, "metrics.bins must be >= 2")
    _require(float(mt["laplace_alpha"]) >= 0.0, "metrics.laplace_alpha must be nonnegative")
    ch = cfg["chaos"]
    _require(
        isinstance(ch["n_list"], list) and ch["n_list"] and all(isinstance(v, int) and v >= 1 for v in ch["n_list"]),
        "chaos.n_list must be a nonempty list of positive integers",
    )
    _require(_replicas_ok(ch["replicas"], len(ch["n_list"])), "chaos.replicas must be a positive int or per-n list")
    _require(isinstance(ch["k"], int) and ch["k"] >= 1, "chaos.k must be >= 1")
    nb = cfg["neighborhood"]
    _require(_pos(nb["epsilon"]), "neighborhood.epsilon must be positive")
    _require(nb["phi"] in _PHI_KINDS, f"neighborhood.phi must be one of {_PHI_KINDS}")
    _require(
        nb["threshold"] == "median" or isinstance(nb["threshold"], (int, float)),
        "neighborhood.threshold must be a number or 'median'",
    )
    pde = cfg["pde"]
    for key in ("x_min", "x_max", "nt"):
        if pde[key] is not None:
            _require(np.isfinite(float(pde[key])) if key != "nt" else isinstance(pde[key], int), f"pde.{key} invalid")
    _require(isinstance(pde["nx"], int) and pde["nx"] >= 4, "pde.nx must be >= 4")
    cp = cfg["compare"]
    _require(isinstance(cp["replicas"], int) and cp["replicas"] >= 1, "compare.replicas must be >= 1")
    if cp["times"] is not None:
        _require(
            isinstance(cp["times"], list) and all(_pos(t) for t in cp["times"]),
            "compare.times must be a list of positive times",
        )
    gv = cfg["girsanov"]
    _require(isinstance(gv["m"], int) and gv["m"] >= 100, "girsanov.m must be >= 100")
    for key in ("delta", "const_shift", "phi_threshold"):
        _require(np.isfinite(float(gv[key])), f"girsanov.{key} must be finite")
    _require(isinstance(cfg["output"]["dump_paths"], bool), "output.dump_paths must be boolean")


def _replicas_ok(value, n_count: int) -> bool:
    if isinstance(value, int):
        return value >= 1
    return (
        isinstance(value, list)
        and len(value) == n_count
        and all(isinstance(v, int) and v >= 1 for v in value)
    )


def _pos(v) -> bool:
    try:
        return float(v) > 0 and np.isfinite(float(v))
    except (TypeError, ValueError):
        return False


def _require(cond, msg: str):
    if not cond:
        raise ConfigError(msg)


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


def build_grid(cfg: dict) -> TimeGrid:
    return TimeGrid(float(cfg["grid"]["T"]), int(cfg["grid"]["M"]))


def build_sigma(cfg: dict) -> VolatilitySpec:
    s = cfg["sigma"]
    if s["kind"] == "identity":
        return VolatilitySpec.identity(1)
    return VolatilitySpec.scalar(float(s["s"]), 1)


def build_lambda0(cfg: dict) -> InitialLaw:
    lam = cfg["lambda0"]
    if lam["kind"] == "point":
        return InitialLaw.point(float(lam["value"]))
    if lam["kind"] == "gaussian":
        return InitialLaw.gaussian(float(lam["mean"]), float(lam["std"]))
    return InitialLaw.uniform(float(lam["lo"]), float(lam["hi"]))


def build_g(cfg: dict) -> RankG:
    g = cfg["drift"]["g"]
    if g["kind"] == "identity":
        return RankG.identity()
    if g["kind"] == "affine":
        return RankG.affine(float(g["a"]), float(g["b"]))
    return RankG.tanh_scaled(float(g["s"]))


def build_drift(cfg: dict, sigma: VolatilitySpec) -> DriftSpec:
    d = cfg["drift"]
    if d["kind"] == "zero":
        spec = zero_drift(1)
    elif d["kind"] == "constant":
        spec = make_constant_drift(float(d["value"]), sigma)
    elif d["kind"] == "rank":
        spec = make_rank_drift(build_g(cfg), sigma)
    else:
        mf = d["mean_field"]
        lo, hi = float(mf["lo"]), float(mf["hi"])
        phi_bound = max(abs(lo), abs(hi))

        def phi(values, _lo=lo, _hi=hi):
            return np.clip(values, _lo, _hi)

        if mf["f"] == "mean":
            def f(x, avg):
                return np.broadcast_to(avg, x.shape).copy()
            drift_bound = phi_bound
        else:
            def f(x, avg):
                return np.broadcast_to(np.tanh(avg), x.shape).copy()
            drift_bound = np.tanh(phi_bound)
        spec = make_mean_field_drift(
            f, phi, f_lipschitz=1.0, phi_bound=phi_bound,
            drift_bound=float(drift_bound), sigma=sigma,
        )
    if d["bound"] is not None:
        import dataclasses

        spec = dataclasses.replace(spec, bound=float(d["bound"]))
    return spec


def build_functional(cfg: dict, mu: Cloud | None) -> PathFunctional:
    nb = cfg["neighborhood"]
    thr = nb["threshold"]
    if thr == "median":
        if mu is None:
            raise ConfigError("threshold 'median' needs a solved reference law")
        thr = float(np.median(mu.marginal(mu.grid.steps)))
    else:
        thr = float(thr)
    kind = nb["phi"]
    if kind == "terminal_leq":
        return PathFunctional.terminal_leq(thr)
    if kind == "at_time_leq":
        return PathFunctional.at_time_leq(float(cfg["grid"]["T"]), thr)
    return PathFunctional.tanh_at_time(None, max(abs(thr), 1.0))
