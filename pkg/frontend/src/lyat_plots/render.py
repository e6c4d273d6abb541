"""Figure rendering from trace CSVs.

Three figure kinds: running RMS over time (with the transient cutoff
marked), the 3-D tracked trajectory against its reference, and the control
channels with their saturation guides.  Inputs are the simulator's trace
CSVs; outputs are static image files written atomically (temp + rename).
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

FIGURE_KINDS = ("rms_time", "traj3d", "control_time")


class PlotError(Exception):
    """Bad input for a figure: unreadable trace, missing column, no rows."""


@dataclass
class FigureSpec:
    kind: str
    traces: list
    out: Path
    cutoff: float = 10.0
    vel_max: float = 1.8

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise PlotError(f"unknown figure kind {self.kind!r} "
                            f"(choose from {FIGURE_KINDS})")
        if not self.traces:
            raise PlotError("at least one --trace is required")
        self.traces = [Path(t) for t in self.traces]
        self.out = Path(self.out)


def read_trace(path) -> pd.DataFrame:
    path = Path(path)
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise PlotError(f"trace not found: {path}") from None
    except Exception as exc:
        raise PlotError(f"trace {path} failed to parse: {exc}") from None
    if len(df) == 0:
        raise PlotError(f"trace {path} has zero data rows")
    return df


def require_columns(df: pd.DataFrame, cols, path) -> None:
    for col in cols:
        if col not in df.columns:
            raise PlotError(f"trace {path} is missing column {col}")


def _indexed(df, prefix):
    cols = []
    i = 0
    while f"{prefix}_{i}" in df.columns:
        cols.append(f"{prefix}_{i}")
        i += 1
    return cols


def _atomic_save(fig, out: Path) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    suffix = out.suffix or ".png"
    tmp = tempfile.NamedTemporaryFile(dir=out.parent, suffix=suffix, delete=False)
    try:
        fig.savefig(tmp.name, dpi=130, bbox_inches="tight")
        tmp.close()
        os.replace(tmp.name, out)
    finally:
        tmp.close()
        if os.path.exists(tmp.name):
            os.unlink(tmp.name)
        plt.close(fig)


def render_rms_time(spec: FigureSpec) -> dict:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    curves = []
    for path in spec.traces:
        df = read_trace(path)
        require_columns(df, ["t", "rms_running"], path)
        label = path.stem
        ax.plot(df["t"], df["rms_running"], label=label, linewidth=1.4)
        curves.append(label)
    ax.axvline(spec.cutoff, color="grey", linestyle="--", linewidth=1.0,
               label=f"transient cutoff {spec.cutoff:g} s")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("running RMS of tracking error [m]")
    ax.legend()
    ax.grid(alpha=0.3)
    _atomic_save(fig, spec.out)
    return {"out": str(spec.out), "curves": curves, "cutoff_marked": spec.cutoff}


def render_traj3d(spec: FigureSpec) -> dict:
    if len(spec.traces) != 1:
        raise PlotError("traj3d takes exactly one --trace")
    path = spec.traces[0]
    df = read_trace(path)
    cols = ["x_0", "x_1", "x_2", "xd_0", "xd_1", "xd_2"]
    require_columns(df, cols, path)
    actual = df[["x_0", "x_1", "x_2"]].to_numpy()
    desired = df[["xd_0", "xd_1", "xd_2"]].to_numpy()
    gap = float(np.linalg.norm(actual - desired, axis=1).max())

    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(projection="3d")
    ax.plot(*desired.T, label="reference", color="k", linestyle="--", linewidth=1.2)
    ax.plot(*actual.T, label="tracked", color="tab:blue", linewidth=1.0)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_zlabel("z [m]")
    ax.legend()
    _atomic_save(fig, spec.out)
    print(f"max pointwise gap: {gap:.6e}")
    return {"out": str(spec.out), "max_gap": gap}


def render_control_time(spec: FigureSpec) -> dict:
    if len(spec.traces) != 1:
        raise PlotError("control_time takes exactly one --trace")
    path = spec.traces[0]
    df = read_trace(path)
    require_columns(df, ["t"], path)
    u_cols = _indexed(df, "u")
    if not u_cols:
        raise PlotError(f"trace {path} is missing column u_0")
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for col in u_cols:
        ax.plot(df["t"], df[col], label=col, linewidth=1.0)
    ax.axhline(spec.vel_max, color="red", linestyle=":", linewidth=1.0,
               label=f"±{spec.vel_max:g} m/s limit")
    ax.axhline(-spec.vel_max, color="red", linestyle=":", linewidth=1.0)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("command [m/s]")
    ax.legend(ncol=2, fontsize=8)
    ax.grid(alpha=0.3)
    _atomic_save(fig, spec.out)
    return {"out": str(spec.out), "channels": len(u_cols), "vel_max": spec.vel_max}


RENDERERS = {
    "rms_time": render_rms_time,
    "traj3d": render_traj3d,
    "control_time": render_control_time,
}


def render(spec: FigureSpec) -> dict:
    return RENDERERS[spec.kind](spec)
