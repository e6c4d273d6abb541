"""Analytic derivative of the network output with respect to the parameters.

The derivative is taken by reverse accumulation over the forward tape: with
n outputs and tens of thousands of parameters, n backward sweeps are far
cheaper than forward-mode, and the update law only ever needs the
vector-Jacobian product (the transposed Jacobian applied to the tracking
error), which is a single sweep.

The decoder's own output history is treated as a constant input: the
derivative is of the instantaneous map only, with no unrolling through time.
A central finite-difference twin (`fd_jacobian`) serves as the independent
oracle; it also flags coordinates sitting near a ReLU kink or a LayerNorm
epsilon floor, where the two sides legitimately disagree.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .params import ArchConfig, ThetaLayout, ThetaVector
from .transformer import ForwardTape, PosEncoding, WindowState, forward

__all__ = ["jacobian", "jacobian_from_tape", "vjp", "backward", "fd_jacobian"]


def _ln_backward(lt, g):
    """Cotangent of LayerNorm.  With the floor active the denominator is a
    constant, so the std term drops out."""
    k = lt.z.size
    g_mean = g.mean()
    if lt.floored:
        return (lt.gamma / lt.denom) * (g - g_mean)
    zc = lt.z - lt.mean
    s = lt.denom
    return (lt.gamma / s) * (g - g_mean - zc * (g @ zc) / (k * s * s))


def _attn_backward(at, g_out, theta: ThetaVector, grad: ThetaVector,
                   layer: int, cfg: ArchConfig):
    """Backprop one attention block; returns cotangents for (C, A)."""
    attn = at.attn
    d_k = cfg.d_k_enc if attn == 1 else cfg.d_k_dec
    scale = 1.0 / np.sqrt(d_k)

    g_pre = _ln_backward(at.ln, g_out)
    g_c = g_pre.copy()                      # residual branch
    combine = theta.view("combine", attn, layer)
    grad.view("combine", attn, layer)[...] += np.outer(at.heads, g_pre)
    g_heads = combine @ g_pre

    g_a = np.zeros_like(at.a_in)
    for h in range(cfg.heads):
        g_h = g_heads[h * d_k:(h + 1) * d_k]
        probs = at.probs[h]
        g_probs = np.outer(g_h, at.v[h])
        g_v = probs.T @ g_h
        # row-local softmax derivative; masked entries have probs == 0 so
        # their cotangent vanishes automatically
        g_scores = probs * (g_probs - (probs * g_probs).sum(axis=1, keepdims=True))
        g_q = (g_scores @ at.k[h]) * scale
        g_k = (g_scores.T @ at.q[h]) * scale

        grad.view("query", attn, layer, h)[...] += np.outer(at.c_in, g_q)
        grad.view("key", attn, layer, h)[...] += np.outer(at.a_in, g_k)
        grad.view("value", attn, layer, h)[...] += np.outer(at.a_in, g_v)
        g_c += theta.view("query", attn, layer, h) @ g_q
        g_a += theta.view("key", attn, layer, h) @ g_k
        g_a += theta.view("value", attn, layer, h) @ g_v
    return g_c, g_a


def _ff_backward(ft, g_out, w1, w2, grad_w1, grad_w2):
    """Backprop feedforward-plus-LayerNorm; returns the input cotangent."""
    g_pre = _ln_backward(ft.ln, g_out)
    g_in = g_pre.copy()                     # residual branch
    grad_w2[...] += np.outer(ft.a1, g_pre)
    g_z1 = (w2 @ g_pre) * (ft.z1 > 0)
    grad_w1[...] += np.outer(ft.r_in, g_z1)
    g_in += w1 @ g_z1
    return g_in


def backward(tape: ForwardTape, v: np.ndarray) -> np.ndarray:
    """Reverse sweep: gradient of ``v . phi`` with respect to the flat
    parameter vector the tape was recorded with."""
    cfg = tape.config
    layout = ThetaLayout.from_config(cfg)
    theta = ThetaVector(tape.theta, layout)
    grad = ThetaVector.zeros(layout)

    w_o = theta.view("output")
    grad.view("output")[...] += np.outer(tape.relu_out, v)
    g = (w_o @ v) * (tape.upsilon > 0)

    g_enc_out = np.zeros(cfg.enc_width)
    for layer in reversed(range(cfg.layers)):
        dt = tape.dec_layers[layer]
        g_r3 = _ff_backward(
            dt.ff, g,
            theta.view("ff_dec_in", layer=layer), theta.view("ff_dec_out", layer=layer),
            grad.view("ff_dec_in", layer=layer), grad.view("ff_dec_out", layer=layer),
        )
        g_r2, g_mem = _attn_backward(dt.cross_attn, g_r3, theta, grad, layer, cfg)
        g_enc_out += g_mem
        g_c, g_a = _attn_backward(dt.self_attn, g_r2, theta, grad, layer, cfg)
        g = g_c + g_a                       # self-attention reads its input twice

    g = g_enc_out
    for layer in reversed(range(cfg.layers)):
        et = tape.enc_layers[layer]
        g_r = _ff_backward(
            et.ff, g,
            theta.view("ff_enc_in", layer=layer), theta.view("ff_enc_out", layer=layer),
            grad.view("ff_enc_in", layer=layer), grad.view("ff_enc_out", layer=layer),
        )
        g_c, g_a = _attn_backward(et.attn, g_r, theta, grad, layer, cfg)
        g = g_c + g_a

    if not np.all(np.isfinite(grad.data)):
        raise NumericError("non-finite parameter gradient", where="backward sweep")
    return grad.data


def jacobian(window: WindowState, theta: ThetaVector, pe: PosEncoding,
             cfg: ArchConfig) -> np.ndarray:
    """Materialized (n, p) derivative, column order identical to the
    parameter packing."""
    _, tape = forward(window, theta, pe, cfg)
    return jacobian_from_tape(tape)


def jacobian_from_tape(tape: ForwardTape) -> np.ndarray:
    n = tape.config.n
    rows = []
    for k in range(n):
        v = np.zeros(n)
        v[k] = 1.0
        rows.append(backward(tape, v))
    return np.vstack(rows)


def vjp(window: WindowState, theta: ThetaVector, pe: PosEncoding,
        cfg: ArchConfig, e: np.ndarray) -> np.ndarray:
    """Fast path for the update law: the p-vector J^T e in one sweep,
    without materializing the Jacobian."""
    _, tape = forward(window, theta, pe, cfg)
    return backward(tape, np.asarray(e, dtype=np.float64))


def _relu_preacts(tape: ForwardTape):
    for et in tape.enc_layers:
        yield et.ff.z1
    for dt in tape.dec_layers:
        yield dt.ff.z1
    yield tape.upsilon


def _ln_stats(tape: ForwardTape):
    for et in tape.enc_layers:
        yield et.attn.ln
        yield et.ff.ln
    for dt in tape.dec_layers:
        yield dt.self_attn.ln
        yield dt.cross_attn.ln
        yield dt.ff.ln


def _near_kink(tape0, tape_p, tape_m, h, eps):
    """True when perturbing this coordinate by ~10h can cross a ReLU kink
    or toggle a LayerNorm floor, making central differences unreliable."""
    margin = 10.0 * h
    for z0, zp, zm in zip(_relu_preacts(tape0), _relu_preacts(tape_p), _relu_preacts(tape_m)):
        if np.any((zp > 0) != (zm > 0)):
            return True
        dz = np.abs(zp - zm) / (2.0 * h)
        if np.any(np.abs(z0) <= margin * dz):
            return True
    for l0, lp, lm in zip(_ln_stats(tape0), _ln_stats(tape_p), _ln_stats(tape_m)):
        if l0.floored != lp.floored or l0.floored != lm.floored:
            return True
        ds = abs(lp.std - lm.std) / (2.0 * h)
        if abs(l0.std - eps) <= margin * ds:
            return True
    return False


def fd_jacobian(window: WindowState, theta: ThetaVector, pe: PosEncoding,
                cfg: ArchConfig, h: float = 1e-6):
    """Central-difference twin of :func:`jacobian`.

    Returns ``(J, excluded)`` where ``excluded`` marks coordinates within a
    10h margin of a ReLU kink or LayerNorm floor.  Intended for small
    instances: cost is 2p forward passes.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    layout = theta.layout
    _, tape0 = forward(window, theta, pe, cfg)
    J = np.zeros((cfg.n, layout.p))
    excluded = np.zeros(layout.p, dtype=bool)
    base = theta.data
    for k in range(layout.p):
        bumped = base.copy()
        bumped[k] = base[k] + h
        phi_p, tape_p = forward(window, theta.like(bumped), pe, cfg)
        bumped[k] = base[k] - h
        phi_m, tape_m = forward(window, theta.like(bumped), pe, cfg)
        J[:, k] = (phi_p - phi_m) / (2.0 * h)
        excluded[k] = _near_kink(tape0, tape_p, tape_m, h, cfg.ln_epsilon)
    return J, excluded
