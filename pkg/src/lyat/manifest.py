"""Config tree: defaults, validation, resolution, and hashing.

A run is described by one JSON document with sections arch / adapt / ctrl /
plant / ref / sim.  Unknown keys are hard errors so a typo can never
silently fall back to a default.  The bundled defaults reproduce the
flight-test settings on the matched-integrator desk plant.
"""

from __future__ import annotations

import copy
import hashlib
import inspect
import json
from dataclasses import dataclass
from pathlib import Path

from .adaptation import AdaptConfig
from .control import ControlConfig
from .errors import ConfigError
from .params import ArchConfig
from .plant import PLANT_KINDS, Figure8, make_plant
from .sim import SimConfig

__all__ = ["DEFAULT_CONFIG", "RunManifest", "resolve_config", "load_config_file",
           "config_hash", "build_components"]

DEFAULT_CONFIG = {
    "arch": {
        "n": 6, "m": 6, "s": 3, "tau": 20, "layers": 1, "heads": 3, "d_f": 5,
        "gamma_self": 0.8, "beta_self": 0.0,
        "gamma_masked": 0.7, "beta_masked": 0.0,
        "gamma_cross": 0.7, "beta_cross": 0.0,
        "gamma_ff_enc": 0.8, "beta_ff_enc": 0.0,
        "gamma_ff_dec": 0.7, "beta_ff_dec": 0.0,
        "theta_bar": 10.0, "init_gain": 0.01, "ln_epsilon": 1e-8,
    },
    "adapt": {"gamma": 0.02, "sigma": 1e-6, "proj_band": None},
    "ctrl": {"k_e": 0.8, "vel_max": 1.8, "saturate": True},
    "plant": {"kind": "matched_integrator"},
    "ref": {"kind": "figure8", "a": 7.5, "b": 3.0, "h": 2.5, "omega": 0.15},
    "sim": {
        "physics_dt": 0.002, "control_dt": 0.02, "transformer_dt": 0.05,
        "duration": 60.0, "seed": 0,
        "warmup_kind": "gaussian", "warmup_scale": 0.1, "warmup_path": None,
        "baseline": False, "initial_state": [0.0, 0.0, 2.5, 0.0, 0.0, 0.0],
        "transient_cutoff": 10.0, "checkpoint_path": None,
    },
}

SECTIONS = tuple(DEFAULT_CONFIG)


def _plant_param_names(kind: str) -> tuple:
    if kind not in PLANT_KINDS:
        raise ConfigError(
            f"plant.kind: unknown plant {kind!r} (choose from {sorted(PLANT_KINDS)})"
        )
    return tuple(inspect.signature(PLANT_KINDS[kind]).parameters)


def _plant_defaults(kind: str) -> dict:
    sig = inspect.signature(PLANT_KINDS[kind])
    return {name: p.default for name, p in sig.parameters.items()}


def resolve_config(user: dict | None) -> dict:
    """Merge a user tree over the defaults, rejecting unknown keys."""
    user = user or {}
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    for section in user:
        if section not in SECTIONS:
            raise ConfigError(f"{section}: unknown config section")
    resolved = copy.deepcopy(DEFAULT_CONFIG)
    for section, defaults in DEFAULT_CONFIG.items():
        supplied = user.get(section, {})
        if not isinstance(supplied, dict):
            raise ConfigError(f"{section}: section must be a JSON object")
        if section == "plant":
            kind = supplied.get("kind", defaults["kind"])
            allowed = ("kind",) + _plant_param_names(kind)
            for key in supplied:
                if key not in allowed:
                    raise ConfigError(f"plant.{key}: unknown key for plant {kind!r}")
            resolved["plant"] = {"kind": kind, **_plant_defaults(kind)}
            resolved["plant"].update({k: v for k, v in supplied.items() if k != "kind"})
            continue
        for key in supplied:
            if key not in defaults:
                raise ConfigError(f"{section}.{key}: unknown key")
        resolved[section].update(supplied)
    if resolved["ref"]["kind"] != "figure8":
        raise ConfigError(f"ref.kind: unknown reference {resolved['ref']['kind']!r}")
    return resolved


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            user = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return resolve_config(user)


def config_hash(resolved: dict) -> str:
    """Digest of the resolved tree, stable under key reordering.

    The seed and the baseline flag are excluded: a baseline episode and its
    paired adaptive episode are runs of the same configuration.
    """
    tree = copy.deepcopy(resolved)
    tree.get("sim", {}).pop("seed", None)
    tree.get("sim", {}).pop("baseline", None)
    blob = json.dumps(tree, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_components(resolved: dict):
    """Instantiate typed configs and the plant/reference from a resolved tree."""
    arch_kw = dict(resolved["arch"])
    arch = ArchConfig(**arch_kw)
    adapt = AdaptConfig(theta_bar=arch.theta_bar, **resolved["adapt"])
    ctrl = ControlConfig(**resolved["ctrl"])
    plant_kw = dict(resolved["plant"])
    plant = make_plant(plant_kw.pop("kind"), **plant_kw)
    ref_kw = dict(resolved["ref"])
    ref_kw.pop("kind")
    ref = Figure8(**ref_kw)
    sim = SimConfig(**resolved["sim"])
    return arch, adapt, ctrl, plant, ref, sim


@dataclass
class RunManifest:
    """Everything one invocation will execute: resolved config, seeds, output."""

    config: dict
    seeds: list
    out_dir: Path
    jobs: int = 1

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ConfigError("manifest needs at least one seed")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def hash(self) -> str:
        return config_hash(self.config)

    def for_seed(self, seed: int) -> dict:
        tree = copy.deepcopy(self.config)
        tree["sim"]["seed"] = int(seed)
        return tree
