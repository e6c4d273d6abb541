"""Real-time weight update law: projected gradient flow with leakage.

The raw update direction is Gamma * (J^T e - sigma * theta_hat).  A smooth
projection trims its outward radial component inside a thin band at the edge
of the admissible ball, so the estimate can never leave ||theta|| <= theta_bar
under integration, and never gains energy from the trim:
theta_hat . proj(y) <= theta_hat . y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IntegratorStateError, NumericError
from .params import ThetaVector

__all__ = ["AdaptConfig", "smooth_projection", "theta_dot", "step_theta"]

# slack on the ball-membership precondition; discretization keeps estimates
# well inside this
_BALL_TOL = 1e-8


@dataclass(frozen=True)
class AdaptConfig:
    """Gains of the update law.

    ``gamma`` is either a scalar (isotropic gain, stored without
    materializing a p x p matrix) or a full symmetric positive-definite
    matrix.  ``proj_band`` is the width of the blending band below
    ``theta_bar`` over which the projection ramps in; it defaults to 5% of
    the bound.
    """

    gamma: float | np.ndarray = 0.02
    sigma: float = 1e-6
    theta_bar: float = 10.0
    proj_band: float | None = None

    def __post_init__(self):
        if self.theta_bar <= 0:
            raise ConfigError("adapt.theta_bar must be > 0")
        if self.sigma < 0:
            raise ConfigError("adapt.sigma must be >= 0")
        if np.isscalar(self.gamma):
            if self.gamma <= 0:
                raise ConfigError("adapt.gamma must be > 0")
        else:
            g = np.asarray(self.gamma)
            if g.ndim != 2 or g.shape[0] != g.shape[1]:
                raise ConfigError("adapt.gamma matrix must be square")
            if not np.allclose(g, g.T):
                raise ConfigError("adapt.gamma matrix must be symmetric")
            if np.any(np.linalg.eigvalsh(g) <= 0):
                raise ConfigError("adapt.gamma matrix must be positive definite")
        band = self.band
        if not 0.0 < band < self.theta_bar:
            raise ConfigError("adapt.proj_band must lie in (0, theta_bar)")

    @property
    def band(self) -> float:
        return 0.05 * self.theta_bar if self.proj_band is None else self.proj_band


def _as_array(theta):
    return theta.data if isinstance(theta, ThetaVector) else np.asarray(theta, dtype=np.float64)


def smooth_projection(theta_hat, y, cfg: AdaptConfig) -> np.ndarray:
    """Trim the outward radial part of ``y`` near the ball boundary.

    Inside the band (||theta|| <= theta_bar - band) or for inward/neutral
    directions (theta . y <= 0) the direction passes through untouched.
    Otherwise the radial component is scaled down by a blend coefficient
    that rises from 0 at the inner edge of the band to 1 on the boundary,
    where the outward component vanishes entirely.
    """
    th = _as_array(theta_hat)
    y = np.asarray(y, dtype=np.float64)
    norm2 = float(th @ th)
    norm = np.sqrt(norm2)
    if norm > cfg.theta_bar * (1.0 + _BALL_TOL) + _BALL_TOL:
        raise IntegratorStateError(
            f"parameter estimate has norm {norm}, outside the ball of radius {cfg.theta_bar}"
        )
    inner = cfg.theta_bar - cfg.band
    if norm <= inner:
        return y
    radial = float(th @ y)
    if radial <= 0.0:
        return y
    blend = (norm2 - inner * inner) / (cfg.theta_bar ** 2 - inner * inner)
    blend = min(max(blend, 0.0), 1.0)
    return y - blend * (radial / norm2) * th


def theta_dot(phi_jac, e, theta_hat, cfg: AdaptConfig) -> np.ndarray:
    """Update direction: proj(Gamma * (J^T e - sigma * theta)).

    ``phi_jac`` is either the materialized (n, p) Jacobian or, on the fast
    path, the already-formed p-vector J^T e.
    """
    th = _as_array(theta_hat)
    jac = np.asarray(phi_jac, dtype=np.float64)
    if jac.ndim == 2:
        drive = jac.T @ np.asarray(e, dtype=np.float64)
    elif jac.ndim == 1:
        drive = jac
    else:
        raise ConfigError("phi_jac must be an (n, p) matrix or a p-vector")
    if drive.shape != th.shape:
        raise ConfigError(
            f"update drive has shape {drive.shape}, parameters have {th.shape}"
        )
    raw = drive - cfg.sigma * th
    y = cfg.gamma * raw if np.isscalar(cfg.gamma) else np.asarray(cfg.gamma) @ raw
    return smooth_projection(th, y, cfg)


def step_theta(theta_hat: ThetaVector, dtheta: np.ndarray, dt: float,
               cfg: AdaptConfig) -> tuple[ThetaVector, bool]:
    """Explicit-Euler step, with a radial rescale if discretization ever
    overshoots the ball.  Returns (new estimate, whether the safeguard fired).
    """
    if dt <= 0:
        raise ConfigError("dt must be > 0")
    new = theta_hat.data + dt * np.asarray(dtheta, dtype=np.float64)
    if not np.all(np.isfinite(new)):
        raise NumericError("non-finite parameter update", where="step_theta")
    rescued = False
    norm = np.linalg.norm(new)
    if norm > cfg.theta_bar:
        new = new * (cfg.theta_bar / norm)
        rescued = True
    return theta_hat.like(new), rescued
