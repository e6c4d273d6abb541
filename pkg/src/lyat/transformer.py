"""Deterministic forward pass of the adaptive transformer.

The encoder consumes the flattened history window ``[x_i; x_d,i; e_i]`` for
the last ``tau`` samples (oldest first); the decoder consumes the last
``tau`` network outputs.  Queries, keys and values are projections of whole
flattened streams, so each head's score matrix is the d_k x d_k outer
product of its query and key vectors.  This literal flattened-vector form is
what the adaptation law differentiates, and it is implemented as such rather
than as token-matrix attention.

Every forward pass records a tape of intermediates (projections, score
matrices, softmax outputs, ReLU masks, LayerNorm statistics) so the exact
reverse-mode derivative can be taken afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .params import ArchConfig, ThetaVector

__all__ = [
    "PosEncoding", "WindowState", "ForwardTape",
    "positional_encoding", "layer_norm", "softmax_rows", "build_mask",
    "attention_block", "encoder_layer", "decoder_layer", "forward",
]


@dataclass(frozen=True)
class PosEncoding:
    """Sinusoidal position code for the encoder (3n per slot) and decoder (n)."""

    enc: np.ndarray
    dec: np.ndarray


def _pe_vector(tau: int, width: int) -> np.ndarray:
    pos = np.arange(tau, dtype=np.float64)  # i - 1
    d = np.arange(width, dtype=np.float64)
    angle = pos[:, None] / np.power(10000.0, 2.0 * np.floor(d / 2.0) / width)[None, :]
    pe = np.where(d[None, :] % 2 == 0, np.sin(angle), np.cos(angle))
    return pe.reshape(-1)  # position-major


def positional_encoding(cfg: ArchConfig) -> PosEncoding:
    return PosEncoding(
        enc=_pe_vector(cfg.tau, 3 * cfg.n),
        dec=_pe_vector(cfg.tau, cfg.n),
    )


@dataclass
class WindowState:
    """Sliding input windows, oldest sample first.

    ``zeta_enc`` stacks ``[x; x_d; e]`` per slot; ``phi_hist`` stacks the
    last ``tau`` network outputs.  Until enough real samples exist the
    remaining (oldest) slots hold warm-up padding; the fill counters say how
    many slots are real.
    """

    zeta_enc: np.ndarray
    phi_hist: np.ndarray
    enc_fill: int = 0
    dec_fill: int = 0

    @staticmethod
    def initial(cfg: ArchConfig, decoder_noise_scale: float = 0.1,
                rng: np.random.Generator | None = None) -> "WindowState":
        """Fresh window: zero-padded encoder, noise-padded decoder."""
        zeta = np.zeros(3 * cfg.n * cfg.tau)
        if decoder_noise_scale == 0.0 or rng is None:
            phi_hist = np.zeros(cfg.n * cfg.tau)
        else:
            phi_hist = decoder_noise_scale * rng.standard_normal(cfg.n * cfg.tau)
        return WindowState(zeta_enc=zeta, phi_hist=phi_hist)

    def push_state(self, x: np.ndarray, x_d: np.ndarray) -> None:
        """Append the newest sample [x; x_d; x - x_d], evicting the oldest."""
        n = len(x)
        slot = np.concatenate([x, x_d, x - x_d])
        self.zeta_enc[:-3 * n] = self.zeta_enc[3 * n:]
        self.zeta_enc[-3 * n:] = slot
        tau = len(self.zeta_enc) // (3 * n)
        self.enc_fill = min(self.enc_fill + 1, tau)

    def push_phi(self, phi: np.ndarray) -> None:
        n = len(phi)
        self.phi_hist[:-n] = self.phi_hist[n:]
        self.phi_hist[-n:] = phi
        tau = len(self.phi_hist) // n
        self.dec_fill = min(self.dec_fill + 1, tau)


@dataclass
class LayerNormTape:
    z: np.ndarray
    mean: float
    std: float
    denom: float        # max(std, eps); the value actually divided by
    floored: bool
    gamma: float


@dataclass
class AttentionTape:
    attn: int
    c_in: np.ndarray
    a_in: np.ndarray
    q: list = field(default_factory=list)
    k: list = field(default_factory=list)
    v: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    probs: list = field(default_factory=list)
    heads: np.ndarray = None
    r_prime: np.ndarray = None
    ln: LayerNormTape = None
    out: np.ndarray = None


@dataclass
class FeedForwardTape:
    r_in: np.ndarray
    z1: np.ndarray      # hidden pre-activation
    a1: np.ndarray      # ReLU(z1)
    b_prime: np.ndarray
    ln: LayerNormTape
    out: np.ndarray


@dataclass
class EncoderLayerTape:
    attn: AttentionTape
    ff: FeedForwardTape


@dataclass
class DecoderLayerTape:
    self_attn: AttentionTape
    cross_attn: AttentionTape
    ff: FeedForwardTape


@dataclass
class ForwardTape:
    """Everything one reverse sweep needs, including the parameter snapshot."""

    config: ArchConfig
    theta: np.ndarray
    enc_in: np.ndarray
    dec_in: np.ndarray
    enc_layers: list
    dec_layers: list
    upsilon: np.ndarray
    relu_out: np.ndarray
    phi: np.ndarray


def layer_norm(z: np.ndarray, gamma: float, beta: float, eps: float = 1e-8) -> np.ndarray:
    """gamma * (z - mean) / max(std, eps) + beta, with the population std."""
    out, _ = _layer_norm_tape(np.asarray(z, dtype=np.float64), gamma, beta, eps)
    return out


def _layer_norm_tape(z, gamma, beta, eps):
    mean = z.mean()
    std = np.sqrt(np.mean((z - mean) ** 2))
    floored = std < eps
    denom = eps if floored else std
    out = gamma * (z - mean) / denom + beta
    return out, LayerNormTape(z=z, mean=mean, std=std, denom=denom,
                              floored=bool(floored), gamma=gamma)


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax; -inf entries (mask) map to exactly zero."""
    scores = np.asarray(scores, dtype=np.float64)
    row_max = np.max(scores, axis=-1, keepdims=True)
    if not np.all(np.isfinite(row_max)):
        raise NumericError("softmax row is entirely masked", where="softmax_rows")
    shifted = scores - row_max
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def build_mask(d: int) -> np.ndarray:
    """Causal mask: 0 on and below the diagonal, -inf strictly above."""
    mask = np.zeros((d, d))
    mask[np.triu_indices(d, k=1)] = -np.inf
    return mask


def _check_finite(vec, where):
    if not np.all(np.isfinite(vec)):
        raise NumericError(f"non-finite values in {where}", where=where)


def _attn_weights(theta: ThetaVector, attn: int, layer: int):
    H = theta.layout.config.heads
    wq = [theta.view("query", attn, layer, h) for h in range(H)]
    wk = [theta.view("key", attn, layer, h) for h in range(H)]
    wv = [theta.view("value", attn, layer, h) for h in range(H)]
    combine = theta.view("combine", attn, layer)
    return wq, wk, wv, combine


def attention_block(c_in, a_in, theta: ThetaVector, attn: int, layer: int,
                    cfg: ArchConfig, mask: np.ndarray | None = None):
    """One multi-head attention block plus its residual LayerNorm.

    ``c_in`` feeds the queries, ``a_in`` the keys and values.  The mask is
    mandatory for the masked decoder self-attention (attn == 2) and not
    allowed elsewhere.
    """
    if attn == 2 and mask is None:
        raise ConfigError("masked self-attention requires a mask")
    if attn != 2 and mask is not None:
        raise ConfigError("mask is only valid for the masked self-attention block")

    d_k = cfg.d_k_enc if attn == 1 else cfg.d_k_dec
    c_len = cfg.enc_width if attn == 1 else cfg.dec_width
    a_len = cfg.dec_width if attn == 2 else cfg.enc_width
    if len(c_in) != c_len or len(a_in) != a_len:
        raise ConfigError(
            f"attention block {attn}: expected inputs of length ({c_len}, {a_len}), "
            f"got ({len(c_in)}, {len(a_in)})"
        )

    wq, wk, wv, combine = _attn_weights(theta, attn, layer)
    tape = AttentionTape(attn=attn, c_in=c_in, a_in=a_in)
    scale = 1.0 / np.sqrt(d_k)
    head_outs = []
    for h in range(cfg.heads):
        q = wq[h].T @ c_in
        k = wk[h].T @ a_in
        v = wv[h].T @ a_in
        scores = np.outer(q, k) * scale
        if mask is not None:
            scores = scores + mask
        probs = softmax_rows(scores)
        out_h = probs @ v
        if not np.all(np.isfinite(out_h)):
            raise NumericError(
                f"non-finite head output in attention block {attn}, "
                f"layer {layer}, head {h}",
                where=f"attention block {attn}, layer {layer}, head {h}",
            )
        head_outs.append(out_h)
        tape.q.append(q)
        tape.k.append(k)
        tape.v.append(v)
        tape.scores.append(scores)
        tape.probs.append(probs)
    heads = np.concatenate(head_outs)
    r_prime = combine.T @ heads
    gammas = {1: cfg.gamma_self, 2: cfg.gamma_masked, 3: cfg.gamma_cross}[attn]
    betas = {1: cfg.beta_self, 2: cfg.beta_masked, 3: cfg.beta_cross}[attn]
    out, ln = _layer_norm_tape(c_in + r_prime, gammas[layer], betas[layer], cfg.ln_epsilon)
    _check_finite(out, f"attention block {attn}, layer {layer}")
    tape.heads = heads
    tape.r_prime = r_prime
    tape.ln = ln
    tape.out = out
    return out, tape


def _feedforward(r_in, w1, w2, gamma, beta, eps, where):
    z1 = w1.T @ r_in
    a1 = np.maximum(z1, 0.0)
    b_prime = w2.T @ a1
    out, ln = _layer_norm_tape(r_in + b_prime, gamma, beta, eps)
    _check_finite(out, where)
    return out, FeedForwardTape(r_in=r_in, z1=z1, a1=a1, b_prime=b_prime, ln=ln, out=out)


def encoder_layer(x_in, theta: ThetaVector, layer: int, cfg: ArchConfig):
    """Self-attention followed by the position-wise feedforward, both with
    residual LayerNorms."""
    r, attn_tape = attention_block(x_in, x_in, theta, attn=1, layer=layer, cfg=cfg)
    out, ff_tape = _feedforward(
        r, theta.view("ff_enc_in", layer=layer), theta.view("ff_enc_out", layer=layer),
        cfg.gamma_ff_enc[layer], cfg.beta_ff_enc[layer], cfg.ln_epsilon,
        where=f"encoder feedforward, layer {layer}",
    )
    return out, EncoderLayerTape(attn=attn_tape, ff=ff_tape)


def decoder_layer(d_in, enc_out, theta: ThetaVector, layer: int, cfg: ArchConfig,
                  mask: np.ndarray):
    """Masked self-attention, cross-attention over the encoder output, then
    the feedforward."""
    r2, self_tape = attention_block(d_in, d_in, theta, attn=2, layer=layer,
                                    cfg=cfg, mask=mask)
    r3, cross_tape = attention_block(r2, enc_out, theta, attn=3, layer=layer, cfg=cfg)
    out, ff_tape = _feedforward(
        r3, theta.view("ff_dec_in", layer=layer), theta.view("ff_dec_out", layer=layer),
        cfg.gamma_ff_dec[layer], cfg.beta_ff_dec[layer], cfg.ln_epsilon,
        where=f"decoder feedforward, layer {layer}",
    )
    return out, DecoderLayerTape(self_attn=self_tape, cross_attn=cross_tape, ff=ff_tape)


def forward(window: WindowState, theta: ThetaVector, pe: PosEncoding,
            cfg: ArchConfig) -> tuple[np.ndarray, ForwardTape]:
    """Full network evaluation; returns the n-vector output and the tape.

    Pure in (window, theta, pe, cfg): the window and parameters are read,
    never written, and the tape holds copies of everything the reverse sweep
    needs (including a snapshot of theta).
    """
    enc_in = window.zeta_enc + pe.enc
    dec_in = window.phi_hist + pe.dec
    mask = build_mask(cfg.d_k_dec)

    enc_tapes = []
    stream = enc_in
    for layer in range(cfg.layers):
        stream, tape = encoder_layer(stream, theta, layer, cfg)
        enc_tapes.append(tape)
    enc_out = stream

    dec_tapes = []
    stream = dec_in
    for layer in range(cfg.layers):
        stream, tape = decoder_layer(stream, enc_out, theta, layer, cfg, mask)
        dec_tapes.append(tape)
    upsilon = stream

    relu_out = np.maximum(upsilon, 0.0)
    phi = theta.view("output").T @ relu_out
    _check_finite(phi, "output head")
    return phi, ForwardTape(
        config=cfg,
        theta=theta.data.copy(),
        enc_in=enc_in,
        dec_in=dec_in,
        enc_layers=enc_tapes,
        dec_layers=dec_tapes,
        upsilon=upsilon,
        relu_out=relu_out,
        phi=phi,
    )
