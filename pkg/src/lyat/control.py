"""Tracking control law with right pseudo-inverse and command saturation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, RankError

__all__ = ["ControlConfig", "pinv_right", "control_law"]

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class ControlConfig:
    k_e: float = 0.8
    vel_max: float = 1.8
    saturate: bool = True   # the continuous-time law has no saturation; hardware does

    def __post_init__(self):
        if self.k_e <= 0:
            raise ConfigError("ctrl.k_e must be > 0")
        if self.vel_max <= 0:
            raise ConfigError("ctrl.vel_max must be > 0")


def pinv_right(g1: np.ndarray) -> np.ndarray:
    """Right pseudo-inverse g1^T (g1 g1^T)^-1 of a full-row-rank matrix."""
    g1 = np.asarray(g1, dtype=np.float64)
    gram = g1 @ g1.T
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[-1] <= _RANK_TOL:
        raise RankError(
            f"control effectiveness matrix is rank deficient "
            f"(smallest singular value of g1 g1^T is {sv[-1]:.3e})"
        )
    return g1.T @ np.linalg.inv(gram)


def control_law(x, x_d, xd_dot, phi, g1, cfg: ControlConfig,
                g1_pinv: np.ndarray | None = None):
    """u = g1^+ (xd_dot - k_e e - phi), clamped per component.

    Pass ``g1_pinv`` to reuse a cached pseudo-inverse when g1 is constant.
    Returns (u, clamped) where ``clamped`` marks the saturated components.
    """
    e = np.asarray(x, dtype=np.float64) - np.asarray(x_d, dtype=np.float64)
    pinv = pinv_right(g1) if g1_pinv is None else g1_pinv
    u_raw = pinv @ (np.asarray(xd_dot, dtype=np.float64) - cfg.k_e * e - np.asarray(phi))
    if not cfg.saturate:
        return u_raw, np.zeros(u_raw.shape, dtype=bool)
    u = np.clip(u_raw, -cfg.vel_max, cfg.vel_max)
    return u, u != u_raw
