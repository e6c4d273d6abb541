"""Closed-loop episode harness: rate scheduling, windows, logging, metrics.

One episode couples four clocks, all integer multiples of the physics step:
the plant advances every physics step, the controller and the adaptation run
at the control rate, and the transformer is re-evaluated at its own
(typically slower) rate with its output held in between.  At each control
tick the update law consumes the vector-Jacobian product of the most recent
transformer evaluation with the current tracking error.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .adaptation import AdaptConfig, step_theta, theta_dot
from .control import ControlConfig, control_law, pinv_right
from .errors import ConfigError, NumericError
from .jacobian import backward
from .params import ArchConfig, init_theta, save_theta
from .plant import PlantModel, em_step
from .transformer import WindowState, forward, positional_encoding

__all__ = ["SimConfig", "EpisodeTrace", "run_episode", "rms_error",
           "write_trace_csv", "summary_dict", "write_summary_json"]

WARMUP_KINDS = ("zeros", "gaussian", "from_file")


@dataclass(frozen=True)
class SimConfig:
    physics_dt: float = 0.002
    control_dt: float = 0.02
    transformer_dt: float = 0.05
    duration: float = 60.0
    seed: int = 0
    warmup_kind: str = "gaussian"
    warmup_scale: float = 0.1
    warmup_path: str | None = None
    baseline: bool = False
    initial_state: tuple = (0.0, 0.0, 2.5, 0.0, 0.0, 0.0)
    transient_cutoff: float = 10.0
    checkpoint_path: str | None = None

    def __post_init__(self):
        for name in ("physics_dt", "control_dt", "transformer_dt", "duration"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"sim.{name} must be > 0")
        for name in ("control_dt", "transformer_dt"):
            ratio = getattr(self, name) / self.physics_dt
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ConfigError(
                    f"sim.{name}={getattr(self, name)} must be an integer multiple "
                    f"of sim.physics_dt={self.physics_dt}"
                )
        if self.warmup_kind not in WARMUP_KINDS:
            raise ConfigError(
                f"sim.warmup_kind must be one of {WARMUP_KINDS}, got {self.warmup_kind!r}"
            )
        if self.warmup_kind == "from_file" and not self.warmup_path:
            raise ConfigError("sim.warmup_path is required for warmup_kind='from_file'")
        object.__setattr__(self, "initial_state", tuple(float(v) for v in self.initial_state))


@dataclass
class EpisodeTrace:
    """Per-control-tick log plus summary counters."""

    t: np.ndarray
    x: np.ndarray
    x_d: np.ndarray
    e: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    theta_norm: np.ndarray
    rms_running: np.ndarray
    position_indices: tuple | None
    control_dt: float
    saturation_count: int = 0
    safeguard_count: int = 0
    wall_clock_s: float = 0.0
    aborted: bool = False
    abort_message: str = ""

    @property
    def rows(self) -> int:
        return len(self.t)

    def error_norms(self) -> np.ndarray:
        return np.linalg.norm(self.e, axis=1)


def _window_from_trace(path, cfg: ArchConfig) -> WindowState:
    """Repopulate both windows from the tail of a previous trace CSV."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.ndim == 0:
        data = data.reshape(1)
    if data.shape[0] < cfg.tau:
        raise ConfigError(
            f"sim.warmup_path: trace {path} has {data.shape[0]} rows, need >= {cfg.tau}"
        )
    tail = data[-cfg.tau:]
    names = data.dtype.names
    for col in [f"x_{i}" for i in range(cfg.n)] + [f"phi_{i}" for i in range(cfg.n)]:
        if col not in names:
            raise ConfigError(f"sim.warmup_path: trace {path} lacks column {col}")
    window = WindowState.initial(cfg, decoder_noise_scale=0.0)
    for row in tail:
        x = np.array([row[f"x_{i}"] for i in range(cfg.n)])
        x_d = np.array([row[f"xd_{i}"] for i in range(cfg.n)])
        window.push_state(x, x_d)
        window.push_phi(np.array([row[f"phi_{i}"] for i in range(cfg.n)]))
    return window


def _initial_window(arch: ArchConfig, sim: SimConfig, rng: np.random.Generator) -> WindowState:
    if sim.warmup_kind == "from_file":
        return _window_from_trace(sim.warmup_path, arch)
    scale = 0.0 if sim.warmup_kind == "zeros" else sim.warmup_scale
    return WindowState.initial(arch, decoder_noise_scale=scale, rng=rng)


def run_episode(arch: ArchConfig, adapt: AdaptConfig, ctrl: ControlConfig,
                plant: PlantModel, ref, sim: SimConfig) -> EpisodeTrace:
    """Run one closed-loop episode and return its trace.

    ``ref`` is any callable t -> (x_d, xd_dot).  In baseline mode the network
    output is identically zero and the parameter estimate stays frozen.  On a
    numeric abort the partial trace is attached to the raised error so the
    caller can still flush it.
    """
    if plant.n != arch.n:
        raise ConfigError(f"plant.n={plant.n} does not match arch.n={arch.n}")
    if plant.m != arch.m:
        raise ConfigError(f"plant.m={plant.m} does not match arch.m={arch.m}")
    if len(sim.initial_state) != arch.n:
        raise ConfigError(
            f"sim.initial_state has length {len(sim.initial_state)}, expected {arch.n}"
        )
    if abs(adapt.theta_bar - arch.theta_bar) > 1e-12:
        raise ConfigError("adapt.theta_bar must equal arch.theta_bar")

    started = time.perf_counter()
    rng_plant = np.random.default_rng([sim.seed, 0])
    rng_warmup = np.random.default_rng([sim.seed, 1])

    n_steps = round(sim.duration / sim.physics_dt)
    ctrl_every = round(sim.control_dt / sim.physics_dt)
    tf_every = round(sim.transformer_dt / sim.physics_dt)

    pe = positional_encoding(arch)
    theta = init_theta(arch, seed=sim.seed)
    window = _initial_window(arch, sim, rng_warmup)

    x = np.array(sim.initial_state, dtype=np.float64)
    u = np.zeros(arch.m)
    phi = np.zeros(arch.n)
    tape = None
    g1_pinv = pinv_right(plant.g1(x)) if plant.g1_constant else None

    rows_t, rows_x, rows_xd, rows_e, rows_u, rows_phi = [], [], [], [], [], []
    rows_tn, rows_rms = [], []
    sat_count = 0
    safeguard_count = 0
    sq_sum = 0.0

    pos = plant.position_indices

    def build_trace(aborted=False, message=""):
        return EpisodeTrace(
            t=np.array(rows_t), x=np.array(rows_x).reshape(-1, arch.n),
            x_d=np.array(rows_xd).reshape(-1, arch.n),
            e=np.array(rows_e).reshape(-1, arch.n),
            u=np.array(rows_u).reshape(-1, arch.m),
            phi=np.array(rows_phi).reshape(-1, arch.n),
            theta_norm=np.array(rows_tn), rms_running=np.array(rows_rms),
            position_indices=pos, control_dt=sim.control_dt,
            saturation_count=sat_count, safeguard_count=safeguard_count,
            wall_clock_s=time.perf_counter() - started,
            aborted=aborted, abort_message=message,
        )

    try:
        for k in range(n_steps):
            t = k * sim.physics_dt
            is_ctrl = k % ctrl_every == 0
            is_tf = k % tf_every == 0

            if is_ctrl:
                x_d, xd_dot = ref(t)
                e = x - x_d
                window.push_state(x, x_d)

            if is_tf and not sim.baseline:
                phi, tape = forward(window, theta, pe, arch)
                window.push_phi(phi)

            if is_ctrl:
                u, clamped = control_law(
                    x, x_d, xd_dot, phi if not sim.baseline else np.zeros(arch.n),
                    plant.g1(x), ctrl, g1_pinv=g1_pinv,
                )
                if np.any(clamped):
                    sat_count += 1
                if not sim.baseline and tape is not None:
                    drive = backward(tape, e)        # J^T e against the held tape
                    dtheta = theta_dot(drive, e, theta, adapt)
                    theta, rescued = step_theta(theta, dtheta, sim.control_dt, adapt)
                    if rescued:
                        safeguard_count += 1

                err = e[list(pos)] if pos is not None else e
                sq_sum += float(err @ err)
                rows_t.append(t)
                rows_x.append(x.copy())
                rows_xd.append(x_d)
                rows_e.append(e)
                rows_u.append(u.copy())
                rows_phi.append(phi.copy() if not sim.baseline else np.zeros(arch.n))
                rows_tn.append(theta.norm())
                rows_rms.append(np.sqrt(sq_sum / len(rows_t)))

            x = em_step(x, u, t, sim.physics_dt, plant, rng_plant)
    except NumericError as err:
        err.step_index = k
        err.trace = build_trace(aborted=True, message=str(err))
        raise

    trace = build_trace()
    if sim.checkpoint_path:
        save_theta(sim.checkpoint_path, theta, arch)
    return trace


def rms_error(trace: EpisodeTrace, from_t: float = 0.0) -> float:
    """Root mean square of the error norm over control steps with t >= from_t,
    restricted to position components when the plant declares a split."""
    sel = trace.t >= from_t
    if not np.any(sel):
        raise ConfigError(f"rms_error: no trace rows at or after t={from_t}")
    e = trace.e[sel]
    if trace.position_indices is not None:
        e = e[:, list(trace.position_indices)]
    return float(np.sqrt(np.mean(np.sum(e * e, axis=1))))


def write_trace_csv(trace: EpisodeTrace, path) -> None:
    """Plain-text trace, 17 significant digits per value."""
    n = trace.x.shape[1]
    m = trace.u.shape[1]
    header = (
        ["t"]
        + [f"x_{i}" for i in range(n)]
        + [f"xd_{i}" for i in range(n)]
        + [f"e_{i}" for i in range(n)]
        + [f"u_{i}" for i in range(m)]
        + [f"phi_{i}" for i in range(n)]
        + ["theta_norm", "rms_running"]
    )
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(trace.rows):
            vals = (
                [trace.t[i]]
                + list(trace.x[i]) + list(trace.x_d[i]) + list(trace.e[i])
                + list(trace.u[i]) + list(trace.phi[i])
                + [trace.theta_norm[i], trace.rms_running[i]]
            )
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")


def summary_dict(trace: EpisodeTrace, config_hash: str, seed: int,
                 files: list, baseline: bool, cutoff: float = 10.0) -> dict:
    norms = trace.error_norms()
    post = trace.t >= cutoff
    return {
        "config_hash": config_hash,
        "seed": seed,
        "baseline": baseline,
        "rms_total": rms_error(trace, 0.0) if trace.rows else None,
        "rms_post_transient": rms_error(trace, cutoff) if np.any(post) else None,
        "max_e_post_transient": float(norms[post].max()) if np.any(post) else None,
        "saturation_count": trace.saturation_count,
        "safeguard_count": trace.safeguard_count,
        "wall_clock_s": trace.wall_clock_s,
        "aborted": trace.aborted,
        "files": list(files),
    }


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
