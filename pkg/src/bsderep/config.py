"""Experiment configuration: schema validation, defaults and object construction."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .errors import ConfigError, ParameterError
from .families import make_generator
from .harness import DEFAULT_EPSILONS, EpsilonLadder, RepresentationProblem
from .solver import SolverConfig

SCHEMA_VERSION = 1
SEED_ENV = "BSDE_REP_SEED"

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "generator": {"params": {}},
    "target": {"t": 0.0},
    "ladder": {"epsilons": list(DEFAULT_EPSILONS), "n_paths": 100_000, "steps": None},
    "solver": {"scheme": "picard-lsmc", "picard_iters": 8, "basis": 2, "z_cap": None,
               "tolerance": 1e-8, "condition_limit": 1e10},
    "oracles": {"y": 1.0, "z": 0.5, "epsilon": 0.1, "gamma": 0.5, "mesh_size": 2000,
                "replicates": 10, "nested_steps": 4, "solver_steps": 32,
                "solver_paths": 20_000, "nx": 401, "tolerance": None},
    "checks": {"n_samples": 4000, "modulus_tolerance": 1e-3},
    "seed": 0,
    "mode": "L1",
    "outer_seeds": None,
    "outer_paths": 10_000,
    "output": {"dir": ".", "prefix": ""},
}


def load_schema():
    text = resources.files("bsderep").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated configuration tree with every default filled in."""

    tree: dict

    @property
    def seed(self):
        return int(self.tree["seed"])

    @property
    def d(self):
        z = self.tree["target"]["z"]
        return len(z) if isinstance(z, list) else 1

    def generator(self):
        g = self.tree["generator"]
        try:
            return make_generator(g["family"], d=self.d, **g["params"])
        except TypeError as exc:
            raise ConfigError(f"bad parameters for family {g['family']!r}", [str(exc)]) from None

    def problem(self):
        t = self.tree["target"]
        return RepresentationProblem(self.generator(), float(t["y"]), t["z"], float(t["t"]),
                                     self.tree["mode"])

    def ladder(self):
        lad = self.tree["ladder"]
        steps = tuple(lad["steps"]) if lad["steps"] is not None else None
        return EpsilonLadder(tuple(lad["epsilons"]), int(lad["n_paths"]), steps)

    def solver(self):
        return SolverConfig(**self.tree["solver"])

    def output_path(self, out_dir, name):
        return os.path.join(out_dir, self.tree["output"]["prefix"] + name)


def validate(tree):
    """Schema-check ``tree``; raise :class:`ConfigError` listing every problem."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(tree), key=lambda e: list(e.absolute_path))
    if errors:
        diags = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                 for e in errors]
        raise ConfigError("configuration does not match the schema", diags)


def build_config(tree, seed=None, environ=None):
    """Validate, fill defaults and apply the seed precedence flag > env > file."""
    if not isinstance(tree, dict):
        raise ConfigError("configuration must be a JSON object", ["<root>: not an object"])
    validate(tree)
    full = _merge(DEFAULTS, tree)
    environ = os.environ if environ is None else environ
    if seed is not None:
        full["seed"] = int(seed)
    elif environ.get(SEED_ENV):
        try:
            full["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer",
                              [f"{SEED_ENV}={environ[SEED_ENV]!r}"]) from None
    cfg = ExperimentConfig(full)
    try:
        cfg.generator()
        cfg.problem()
        cfg.ladder()
        cfg.solver()
    except ParameterError as exc:
        raise ConfigError(str(exc), [str(exc)]) from None
    return cfg


def load_config(path, seed=None, environ=None):
    try:
        with open(path) as fh:
            tree = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}", [str(exc)]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON", [str(exc)]) from None
    return build_config(tree, seed=seed, environ=environ)
