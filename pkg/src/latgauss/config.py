"""Run configuration: a strict JSON schema shared by every CLI subcommand.

Unknown keys are rejected at every nesting level with the offending field
named, so a typo cannot silently fall back to a default. All randomness is
seeded from the config; nothing reads entropy implicitly.

Schema (JSON object):

    generator: {
        builtin: "identity" | "scale" | "tanh-residual" | "random-residual",
        # builtin parameters:
        scale: float (scale),                  # default 2.0
        alpha: float (tanh-residual, random-residual),  # default 0.5
        seed:  int   (random-residual),        # default 0
    } | { path: "<serialized network json>" }
    d: int >= 1
    beta: float > 0
    epsilon: float in (0, 1)           # default 0.1
    x: [float, ...]                    # default: 0.9 in every coordinate
    seed: int                          # default 0
    constants: { m, M, M2, M3: floats } # optional override; else estimated
    constants_samples: int             # default 4096
    caps: { max_gd_steps: int, max_langevin_steps: int }  # defaults 1e6 / 1e7
    compile: { gd_steps: int, langevin_steps: int, amortized: bool }  # optional
    chains: int                        # default 1000 (sample command)
    samples: int                       # default 10000 (TV report)
    jobs: int                          # default 1, bounded worker hint
    out_dir: str                       # default "out"
    experiments: [str, ...]            # verify command extras, default none
    lowerbound: { d, beta, rotation, mask, trials, closeness_samples }  # optional
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nets import (
    MapConstants,
    Network,
    identity_net,
    random_residual_tanh_net,
    scale_net,
    tanh_residual_net,
)

_BUILTINS = ("identity", "scale", "tanh-residual", "random-residual")


def _require(cond: bool, message: str, **payload):
    if not cond:
        raise ConfigError(message, **payload)


def _check_keys(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    _require(not unknown, f"unknown field(s) in {where}: {sorted(unknown)}")


@dataclass
class RunConfig:
    generator_spec: dict
    d: int
    beta: float
    epsilon: float
    x: np.ndarray
    seed: int
    constants: MapConstants | None
    constants_samples: int
    max_gd_steps: int
    max_langevin_steps: int
    compile_opts: dict
    chains: int
    samples: int
    jobs: int
    out_dir: str
    experiments: list
    lowerbound_opts: dict
    raw: dict = field(repr=False)

    def build_generator(self) -> Network:
        spec = self.generator_spec
        if "path" in spec:
            with open(spec["path"]) as fh:
                return Network.from_json(fh.read())
        name = spec["builtin"]
        if name == "identity":
            return identity_net(self.d)
        if name == "scale":
            return scale_net(self.d, spec.get("scale", 2.0))
        if name == "tanh-residual":
            return tanh_residual_net(self.d, spec.get("alpha", 0.5))
        if name == "random-residual":
            return random_residual_tanh_net(
                self.d, seed=spec.get("seed", 0), alpha=spec.get("alpha", 0.5)
            )
        raise ConfigError(f"unknown builtin generator {name!r}")


def load_config(path: str, seed_override: int | None = None, out_override: str | None = None,
                jobs_override: int | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    return parse_config(raw, seed_override, out_override, jobs_override)


def parse_config(
    raw: dict,
    seed_override: int | None = None,
    out_override: str | None = None,
    jobs_override: int | None = None,
) -> RunConfig:
    _require(isinstance(raw, dict), "config root must be a JSON object")
    _check_keys(
        raw,
        {
            "generator",
            "d",
            "beta",
            "epsilon",
            "x",
            "seed",
            "constants",
            "constants_samples",
            "caps",
            "compile",
            "chains",
            "samples",
            "jobs",
            "out_dir",
            "experiments",
            "lowerbound",
        },
        "config",
    )

    _require("generator" in raw, "missing required field: generator")
    gen = raw["generator"]
    _require(isinstance(gen, dict), "generator must be an object")
    if "path" in gen:
        _check_keys(gen, {"path"}, "generator")
        _require(isinstance(gen["path"], str), "generator.path must be a string")
    else:
        _check_keys(gen, {"builtin", "scale", "alpha", "seed"}, "generator")
        _require("builtin" in gen, "generator needs either builtin or path")
        _require(
            gen["builtin"] in _BUILTINS,
            f"generator.builtin must be one of {_BUILTINS}",
        )

    _require("d" in raw, "missing required field: d")
    d = raw["d"]
    _require(isinstance(d, int) and d >= 1, "d must be a positive integer")

    _require("beta" in raw, "missing required field: beta")
    beta = raw["beta"]
    _require(isinstance(beta, (int, float)) and beta > 0, "beta must be > 0")

    epsilon = raw.get("epsilon", 0.1)
    _require(
        isinstance(epsilon, (int, float)) and 0 < epsilon < 1,
        "epsilon must lie in (0, 1)",
    )

    x = raw.get("x", [0.9] * d)
    _require(
        isinstance(x, list) and len(x) == d and all(isinstance(v, (int, float)) for v in x),
        f"x must be a list of {d} numbers",
    )

    seed = raw.get("seed", 0)
    _require(isinstance(seed, int), "seed must be an integer")
    if seed_override is not None:
        seed = seed_override

    constants = None
    if "constants" in raw:
        c = raw["constants"]
        _require(isinstance(c, dict), "constants must be an object")
        _check_keys(c, {"m", "M", "M2", "M3"}, "constants")
        for k in ("m", "M", "M2", "M3"):
            _require(k in c and isinstance(c[k], (int, float)), f"constants.{k} must be a number")
        constants = MapConstants(m=c["m"], M=c["M"], M2=c["M2"], M3=c["M3"])

    constants_samples = raw.get("constants_samples", 4096)
    _require(
        isinstance(constants_samples, int) and constants_samples >= 16,
        "constants_samples must be an integer >= 16",
    )

    caps = raw.get("caps", {})
    _require(isinstance(caps, dict), "caps must be an object")
    _check_keys(caps, {"max_gd_steps", "max_langevin_steps"}, "caps")
    max_gd = caps.get("max_gd_steps", 10**6)
    max_lan = caps.get("max_langevin_steps", 10**7)
    _require(isinstance(max_gd, int) and max_gd > 0, "caps.max_gd_steps must be positive")
    _require(
        isinstance(max_lan, int) and max_lan > 0, "caps.max_langevin_steps must be positive"
    )

    compile_opts = raw.get("compile", {})
    _require(isinstance(compile_opts, dict), "compile must be an object")
    _check_keys(compile_opts, {"gd_steps", "langevin_steps", "amortized"}, "compile")
    for k in ("gd_steps", "langevin_steps"):
        if k in compile_opts:
            _require(
                isinstance(compile_opts[k], int) and compile_opts[k] >= 0,
                f"compile.{k} must be a nonnegative integer",
            )
    if "amortized" in compile_opts:
        _require(isinstance(compile_opts["amortized"], bool), "compile.amortized must be a bool")

    chains = raw.get("chains", 1000)
    _require(isinstance(chains, int) and chains >= 1, "chains must be a positive integer")
    samples = raw.get("samples", 10_000)
    _require(isinstance(samples, int) and samples >= 1, "samples must be a positive integer")

    jobs = raw.get("jobs", 1)
    _require(isinstance(jobs, int) and jobs >= 1, "jobs must be a positive integer")
    if jobs_override is not None:
        jobs = jobs_override

    out_dir = raw.get("out_dir", "out")
    _require(isinstance(out_dir, str) and out_dir, "out_dir must be a nonempty string")
    if out_override is not None:
        out_dir = out_override

    experiments = raw.get("experiments", [])
    _require(
        isinstance(experiments, list) and all(isinstance(e, str) for e in experiments),
        "experiments must be a list of strings",
    )

    lb = raw.get("lowerbound", {})
    _require(isinstance(lb, dict), "lowerbound must be an object")
    _check_keys(
        lb, {"d", "beta", "rotation", "mask", "trials", "closeness_samples"}, "lowerbound"
    )

    return RunConfig(
        generator_spec=gen,
        d=d,
        beta=float(beta),
        epsilon=float(epsilon),
        x=np.asarray(x, dtype=np.float64),
        seed=seed,
        constants=constants,
        constants_samples=constants_samples,
        max_gd_steps=max_gd,
        max_langevin_steps=max_lan,
        compile_opts=compile_opts,
        chains=chains,
        samples=samples,
        jobs=jobs,
        out_dir=out_dir,
        experiments=experiments,
        lowerbound_opts=lb,
        raw=raw,
    )
