"""Ground-truth stochastic plants, reference trajectories, and the
Euler-Maruyama stepper.

The plant evolves as  dx = (f(x) + g1(x) u) dt + g2(x) Sigma(t) dw  with the
drift f and the diffusion g2 unknown to the controller.  The built-in plants
are desk-scale stand-ins for the outdoor vehicle: same state layout
(position and velocity), same reference and controller settings, synthetic
uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericError

__all__ = [
    "PlantModel", "Figure8", "figure8", "wiener_increment", "em_step",
    "true_uncertainty", "g2_state_jacobian", "sigma_sup_norm", "make_plant", "PLANT_KINDS",
]


@dataclass(frozen=True)
class PlantModel:
    """Evaluable maps of one plant; all maps must be pure."""

    name: str
    n: int
    m: int
    s: int
    f: Callable[[np.ndarray], np.ndarray]
    g1: Callable[[np.ndarray], np.ndarray]
    g2: Callable[[np.ndarray], np.ndarray]
    sigma: Callable[[float], np.ndarray]
    g1_constant: bool = False
    position_indices: tuple | None = None
    labels: tuple = ()


@dataclass(frozen=True)
class Figure8:
    """Planar lemniscate at constant height, plus its velocity profile.

    State layout is [px, py, pz, vx, vy, vz]; the last three reference
    entries are the exact derivatives of the first three.
    """

    a: float = 7.5
    b: float = 3.0
    h: float = 2.5
    omega: float = 0.15

    def __call__(self, t: float):
        return figure8(t, self)


def figure8(t: float, ref: Figure8):
    """Return (x_d, xd_dot) at time t for the 6-state layout."""
    a, b, h, w = ref.a, ref.b, ref.h, ref.omega
    swt, cwt = np.sin(w * t), np.cos(w * t)
    s2, c2 = np.sin(2 * w * t), np.cos(2 * w * t)
    x_d = np.array([a * swt, b * s2, h, a * w * cwt, 2 * b * w * c2, 0.0])
    xd_dot = np.array([
        a * w * cwt,
        2 * b * w * c2,
        0.0,
        -a * w * w * swt,
        -4 * b * w * w * s2,
        0.0,
    ])
    return x_d, xd_dot


def wiener_increment(s: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian increment with variance dt per component; advances rng."""
    if dt <= 0:
        raise ConfigError("dt must be > 0")
    return rng.normal(0.0, np.sqrt(dt), size=s)


def em_step(x, u, t, dt, model: PlantModel, rng: np.random.Generator) -> np.ndarray:
    """One explicit Euler-Maruyama step of the plant."""
    x = np.asarray(x, dtype=np.float64)
    dw = wiener_increment(model.s, dt, rng)
    x_new = (
        x
        + (model.f(x) + model.g1(x) @ np.asarray(u, dtype=np.float64)) * dt
        + model.g2(x) @ (model.sigma(t) @ dw)
    )
    if not np.all(np.isfinite(x_new)):
        raise NumericError("plant state became non-finite", where="em_step")
    return x_new


def sigma_sup_norm(model: PlantModel, horizon: float, samples: int = 1000) -> float:
    """sup over the horizon of the Frobenius norm of Sigma Sigma^T, by dense
    time sampling."""
    ts = np.linspace(0.0, horizon, samples)
    best = 0.0
    for t in ts:
        s = model.sigma(float(t))
        best = max(best, float(np.linalg.norm(s @ s.T, "fro")))
    return best


def g2_state_jacobian(model: PlantModel, x_d: np.ndarray, fd_step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of vec(g2) with respect to the state,
    evaluated at the reference point.  Shape (n*s, n)."""
    x_d = np.asarray(x_d, dtype=np.float64)
    n = model.n
    cols = []
    for j in range(n):
        bump = np.zeros(n)
        bump[j] = fd_step
        gp = model.g2(x_d + bump).ravel(order="F")
        gm = model.g2(x_d - bump).ravel(order="F")
        cols.append((gp - gm) / (2.0 * fd_step))
    return np.stack(cols, axis=1)


def true_uncertainty(x, x_d, e, model: PlantModel, fd_step: float = 1e-5,
                     sigma_sup: float | None = None, horizon: float = 60.0) -> np.ndarray:
    """Ground-truth drift-plus-diffusion uncertainty the network is asked to
    match.  Diagnostic only; never fed back to the controller.
    """
    x = np.asarray(x, dtype=np.float64)
    x_d = np.asarray(x_d, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if sigma_sup is None:
        sigma_sup = sigma_sup_norm(model, horizon)
    G2 = g2_state_jacobian(model, x_d, fd_step)
    vec_g2 = model.g2(x_d).ravel(order="F")
    quad = float(np.sum(G2 * G2))           # tr(G2^T G2)
    return model.f(x) + 0.5 * e * sigma_sup * quad + sigma_sup * (G2.T @ vec_g2)


# ---------------------------------------------------------------------------
# built-in plant library

# fixed mixing constants for the matched-integrator plant; moderate coupling,
# bounded drift along the reference envelope
_DRIFT_MIX = np.array([
    [0.30, -0.20, 0.10, 0.40, 0.00, -0.10],
    [-0.10, 0.25, -0.30, 0.00, 0.35, 0.10],
    [0.20, 0.10, -0.25, -0.15, 0.10, 0.30],
    [0.00, -0.30, 0.20, 0.30, -0.20, 0.10],
    [0.15, 0.20, 0.00, -0.10, 0.25, -0.20],
    [-0.20, 0.00, 0.15, 0.20, -0.10, 0.35],
])
_DRIFT_OFFSET = np.array([0.40, -0.30, 0.20, 0.10, -0.20, 0.30])

_DIFF_BASE = np.array([
    [1.00, 0.30, -0.20],
    [-0.40, 0.90, 0.10],
    [0.20, -0.30, 0.80],
    [0.50, 0.00, 0.30],
    [0.00, 0.60, -0.40],
    [-0.30, 0.20, 0.70],
])
_DIFF_MOD = np.array([
    [0.30, -0.10, 0.20],
    [0.10, 0.25, 0.00],
    [-0.20, 0.10, 0.30],
    [0.00, 0.30, -0.10],
    [0.25, 0.00, 0.15],
    [0.10, -0.20, 0.25],
])
_DIFF_MIX = np.array([0.12, -0.08, 0.05, 0.20, 0.15, -0.10])

_LABELS6 = ("px [m]", "py [m]", "pz [m]", "vx [m/s]", "vy [m/s]", "vz [m/s]")


def matched_integrator(sigma_w: float = 0.1, drift_gain: float = 0.35,
                       diffusion_gain: float = 0.6) -> PlantModel:
    """Fully actuated six-state plant with bounded tanh drift and a smooth
    state-dependent diffusion."""
    eye = np.eye(6)
    sig = sigma_w * np.eye(3)

    def f(x):
        return drift_gain * np.tanh(_DRIFT_MIX @ x + _DRIFT_OFFSET)

    def g2(x):
        mod = np.tanh(_DIFF_MIX @ x / 4.0)
        return diffusion_gain * (_DIFF_BASE + 0.3 * mod * _DIFF_MOD)

    return PlantModel(
        name="matched_integrator", n=6, m=6, s=3,
        f=f, g1=lambda x: eye, g2=g2, sigma=lambda t: sig,
        g1_constant=True, position_indices=(0, 1, 2), labels=_LABELS6,
    )


def zero_noise() -> PlantModel:
    """Deterministic drift-free plant; the closed loop reduces to pure
    feedforward tracking."""
    eye = np.eye(6)
    zero6 = np.zeros(6)
    zero_g2 = np.zeros((6, 1))
    zero_sig = np.zeros((1, 1))
    return PlantModel(
        name="zero_noise", n=6, m=6, s=1,
        f=lambda x: zero6, g1=lambda x: eye, g2=lambda x: zero_g2,
        sigma=lambda t: zero_sig,
        g1_constant=True, position_indices=(0, 1, 2), labels=_LABELS6,
    )


# constant Jacobian of vec(g2) for the linear-diffusion plant, used as the
# exact oracle for the finite-difference surrogate
_LIN_A = np.linspace(-0.5, 0.5, 18 * 6).reshape(18, 6)
_LIN_B = np.linspace(0.2, -0.3, 18)


def linear_diffusion(sigma_w: float = 0.1, drift_gain: float = 0.35) -> PlantModel:
    """Like the matched plant but with vec(g2(x)) = A x + b, so the state
    Jacobian of the diffusion is exactly the constant A."""
    eye = np.eye(6)
    sig = sigma_w * np.eye(3)

    def f(x):
        return drift_gain * np.tanh(_DRIFT_MIX @ x + _DRIFT_OFFSET)

    def g2(x):
        return (_LIN_A @ x + _LIN_B).reshape((6, 3), order="F")

    return PlantModel(
        name="linear_diffusion", n=6, m=6, s=3,
        f=f, g1=lambda x: eye, g2=g2, sigma=lambda t: sig,
        g1_constant=True, position_indices=(0, 1, 2), labels=_LABELS6,
    )


PLANT_KINDS = {
    "matched_integrator": matched_integrator,
    "zero_noise": zero_noise,
    "linear_diffusion": linear_diffusion,
}


def make_plant(kind: str, **params) -> PlantModel:
    try:
        factory = PLANT_KINDS[kind]
    except KeyError:
        raise ConfigError(
            f"plant.kind: unknown plant {kind!r} (choose from {sorted(PLANT_KINDS)})"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"plant parameters invalid for {kind!r}: {exc}") from None
