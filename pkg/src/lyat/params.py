"""Flat parameter vector: packing layout, dimension bookkeeping, initialization.

All weights of the adaptive transformer live in one flat vector ``theta`` so
the update law can treat them as a single estimate.  The packing follows a
fixed group order (multi-head combine matrices, then query / key / value
weights, then the encoder and decoder feedforward weights, then the output
matrix), with each matrix stored as its column-major vectorization, heads
innermost, layers next, attention index outermost within a group.
"""

from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# group names in packing order
GROUPS = (
    "combine",
    "query",
    "key",
    "value",
    "ff_enc_in",
    "ff_enc_out",
    "ff_dec_in",
    "ff_dec_out",
    "output",
)


def _per_layer(value, layers, name):
    """Normalize a scalar or sequence to a tuple with one entry per layer."""
    if isinstance(value, (int, float)):
        return (float(value),) * layers
    out = tuple(float(v) for v in value)
    if len(out) == 1:
        return out * layers
    if len(out) != layers:
        raise ConfigError(f"arch.{name}: expected {layers} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class ArchConfig:
    """Architecture hyperparameters.

    ``n`` is the state dimension, ``m`` the control dimension, ``s`` the
    Wiener dimension of the plant the network will face, ``tau`` the history
    window length, ``layers`` the encoder/decoder depth, ``heads`` the number
    of attention heads and ``d_f`` the feedforward hidden width.  LayerNorm
    gains/offsets are user-selected constants (not adapted), one per block
    per layer.
    """

    n: int = 6
    m: int = 6
    s: int = 3
    tau: int = 20
    layers: int = 1
    heads: int = 3
    d_f: int = 5
    gamma_self: tuple = (0.8,)
    beta_self: tuple = (0.0,)
    gamma_masked: tuple = (0.7,)
    beta_masked: tuple = (0.0,)
    gamma_cross: tuple = (0.7,)
    beta_cross: tuple = (0.0,)
    gamma_ff_enc: tuple = (0.8,)
    beta_ff_enc: tuple = (0.0,)
    gamma_ff_dec: tuple = (0.7,)
    beta_ff_dec: tuple = (0.0,)
    theta_bar: float = 10.0
    init_gain: float = 0.01
    ln_epsilon: float = 1e-8
    # the streams are single flattened vectors and each head's score matrix is
    # the d_k x d_k outer product of its query and key; no token-matrix
    # alternative exists, the flag records the convention
    attention_semantics: str = "flattened"

    def __post_init__(self):
        if self.attention_semantics != "flattened":
            raise ConfigError(
                "arch.attention_semantics: only 'flattened' is implemented"
            )
        for name in ("n", "m", "s", "tau", "layers", "heads", "d_f"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"arch.{name} must be a positive integer, got {v!r}")
        if self.m < self.n:
            raise ConfigError(
                f"arch.m must be >= arch.n for a right pseudo-inverse "
                f"(got m={self.m}, n={self.n})"
            )
        if self.n % self.heads != 0 or (3 * self.n) % self.heads != 0:
            raise ConfigError(
                f"arch.heads={self.heads} must divide n={self.n} "
                f"(and 3n={3 * self.n}) so head widths are integral"
            )
        for name in (
            "gamma_self", "beta_self", "gamma_masked", "beta_masked",
            "gamma_cross", "beta_cross", "gamma_ff_enc", "beta_ff_enc",
            "gamma_ff_dec", "beta_ff_dec",
        ):
            object.__setattr__(self, name, _per_layer(getattr(self, name), self.layers, name))
        for name in ("gamma_self", "gamma_masked", "gamma_cross", "gamma_ff_enc", "gamma_ff_dec"):
            if any(g <= 0 for g in getattr(self, name)):
                raise ConfigError(f"arch.{name} entries must be > 0")
        if self.theta_bar <= 0:
            raise ConfigError("arch.theta_bar must be > 0")
        if self.init_gain < 0:
            raise ConfigError("arch.init_gain must be >= 0")
        if self.ln_epsilon <= 0:
            raise ConfigError("arch.ln_epsilon must be > 0")

    @property
    def d_k_enc(self) -> int:
        return 3 * self.n // self.heads

    @property
    def d_k_dec(self) -> int:
        return self.n // self.heads

    @property
    def enc_width(self) -> int:
        """Length of the encoder stream: 3*n*tau."""
        return 3 * self.n * self.tau

    @property
    def dec_width(self) -> int:
        """Length of the decoder stream: n*tau."""
        return self.n * self.tau


def _slot_shapes(cfg: ArchConfig):
    """Yield (key, (rows, cols)) for every weight matrix in packing order."""
    n, tau, H = cfg.n, cfg.tau, cfg.heads
    ew, dw = cfg.enc_width, cfg.dec_width
    combine_shape = {1: (3 * n, ew), 2: (n, dw), 3: (n, dw)}
    query_shape = {1: (ew, cfg.d_k_enc), 2: (dw, cfg.d_k_dec), 3: (dw, cfg.d_k_dec)}
    kv_shape = {1: (ew, cfg.d_k_enc), 2: (dw, cfg.d_k_dec), 3: (ew, cfg.d_k_dec)}

    for attn in (1, 2, 3):
        for layer in range(cfg.layers):
            yield ("combine", attn, layer), combine_shape[attn]
    for kind, shapes in (("query", query_shape), ("key", kv_shape), ("value", kv_shape)):
        for attn in (1, 2, 3):
            for layer in range(cfg.layers):
                for head in range(H):
                    yield (kind, attn, layer, head), shapes[attn]
    for kind, shape in (
        ("ff_enc_in", (ew, cfg.d_f)),
        ("ff_enc_out", (cfg.d_f, ew)),
        ("ff_dec_in", (dw, cfg.d_f)),
        ("ff_dec_out", (cfg.d_f, dw)),
    ):
        for layer in range(cfg.layers):
            yield (kind, layer), shape
    yield ("output",), (cfg.dec_width, cfg.n)


@dataclass(frozen=True)
class ThetaLayout:
    """Offset table mapping every weight matrix into the flat vector."""

    config: ArchConfig
    p: int
    slots: dict = field(repr=False)
    group_sizes: dict = field(repr=False)

    @staticmethod
    def from_config(cfg: ArchConfig) -> "ThetaLayout":
        return _layout_for(cfg)

    def slot(self, kind, attn=None, layer=None, head=None):
        """Return (offset, (rows, cols)) for one weight matrix."""
        if kind == "output":
            key = ("output",)
        elif kind == "combine":
            key = (kind, attn, layer)
        elif kind in ("query", "key", "value"):
            key = (kind, attn, layer, head)
        elif kind in ("ff_enc_in", "ff_enc_out", "ff_dec_in", "ff_dec_out"):
            key = (kind, layer)
        else:
            raise ConfigError(f"unknown weight group {kind!r}")
        try:
            return self.slots[key]
        except KeyError:
            raise ConfigError(f"weight index out of range: {key}") from None

    def group_slice(self, kind) -> slice:
        """Contiguous slice of the flat vector occupied by a whole group."""
        start, length = self.group_sizes[kind]
        return slice(start, start + length)


@functools.lru_cache(maxsize=None)
def _layout_for(cfg: ArchConfig) -> ThetaLayout:
    slots = {}
    group_sizes = {}
    offset = 0
    group_start = {}
    for key, (r, c) in _slot_shapes(cfg):
        kind = key[0]
        group_start.setdefault(kind, offset)
        slots[key] = (offset, (r, c))
        offset += r * c
    for kind in GROUPS:
        start = group_start[kind]
        end = offset
        # the end of a group is the start of the next one in packing order
        idx = GROUPS.index(kind)
        if idx + 1 < len(GROUPS):
            end = group_start[GROUPS[idx + 1]]
        group_sizes[kind] = (start, end - start)
    return ThetaLayout(config=cfg, p=offset, slots=slots, group_sizes=group_sizes)


def dim_of(cfg: ArchConfig) -> int:
    """Total number of adapted parameters: 48*N*n^2*tau + 8*N*n*tau*d_f + n^2*tau."""
    return ThetaLayout.from_config(cfg).p


def group_dims(cfg: ArchConfig) -> dict:
    """Per-group parameter counts, in packing order."""
    layout = ThetaLayout.from_config(cfg)
    return {kind: layout.group_sizes[kind][1] for kind in GROUPS}


@dataclass
class ThetaVector:
    """Flat parameter vector plus its layout.

    ``view`` returns a writable (rows, cols) matrix whose column-major
    vectorization occupies the matrix's slice of ``data``; mutating the view
    mutates the vector.
    """

    data: np.ndarray
    layout: ThetaLayout

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.layout.p,):
            raise ConfigError(
                f"theta has length {self.data.shape}, layout requires ({self.layout.p},)"
            )

    @staticmethod
    def zeros(layout: ThetaLayout) -> "ThetaVector":
        return ThetaVector(np.zeros(layout.p), layout)

    def view(self, kind, attn=None, layer=None, head=None) -> np.ndarray:
        offset, (r, c) = self.layout.slot(kind, attn=attn, layer=layer, head=head)
        return self.data[offset:offset + r * c].reshape((r, c), order="F")

    def like(self, data: np.ndarray) -> "ThetaVector":
        """New vector with the same layout."""
        return ThetaVector(data, self.layout)

    def copy(self) -> "ThetaVector":
        return ThetaVector(self.data.copy(), self.layout)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))


def init_theta(cfg: ArchConfig, gain: float | None = None, seed: int = 0) -> ThetaVector:
    """Xavier-uniform initialization, matrix by matrix, deterministic in seed.

    Each (r, c) matrix is filled i.i.d. uniform on
    ``[-gain*sqrt(6/(r+c)), +gain*sqrt(6/(r+c))]``.  If the resulting vector
    exceeds the admissible ball the whole vector is rescaled onto it, so the
    projection operator's precondition holds from the first step.
    """
    if gain is None:
        gain = cfg.init_gain
    layout = ThetaLayout.from_config(cfg)
    rng = np.random.default_rng(seed)
    data = np.empty(layout.p)
    for key, (offset, (r, c)) in layout.slots.items():
        limit = gain * np.sqrt(6.0 / (r + c))
        data[offset:offset + r * c] = rng.uniform(-limit, limit, size=r * c)
    norm = np.linalg.norm(data)
    if norm > cfg.theta_bar:
        data *= cfg.theta_bar / norm
    return ThetaVector(data, layout)


def arch_hash(cfg: ArchConfig) -> str:
    """Stable hex digest of the architecture (guards checkpoint compatibility)."""
    payload = {
        k: getattr(cfg, k)
        for k in (
            "n", "m", "s", "tau", "layers", "heads", "d_f",
            "gamma_self", "beta_self", "gamma_masked", "beta_masked",
            "gamma_cross", "beta_cross", "gamma_ff_enc", "beta_ff_enc",
            "gamma_ff_dec", "beta_ff_dec", "theta_bar", "init_gain", "ln_epsilon",
        )
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(blob.encode()).hexdigest()


def save_theta(path, theta: ThetaVector, cfg: ArchConfig) -> None:
    """Checkpoint: 64-byte arch hash followed by little-endian float64 data."""
    with open(path, "wb") as fh:
        fh.write(arch_hash(cfg).encode("ascii"))
        fh.write(theta.data.astype("<f8").tobytes())


def load_theta(path, cfg: ArchConfig) -> ThetaVector:
    """Load a checkpoint written by :func:`save_theta`, verifying the arch hash."""
    layout = ThetaLayout.from_config(cfg)
    with open(path, "rb") as fh:
        stored = fh.read(64).decode("ascii", errors="replace")
        if stored != arch_hash(cfg):
            raise ConfigError(f"checkpoint {path} was written for a different architecture")
        raw = fh.read()
    expected = layout.p * 8
    if len(raw) != expected:
        raise ConfigError(
            f"checkpoint {path} holds {len(raw)} bytes of data, expected {expected}"
        )
    data = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return ThetaVector(data, layout)
