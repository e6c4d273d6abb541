"""Independent straight-line re-implementation of the network forward pass.

Deliberately written from scratch against the production code: its own
parameter unpacking arithmetic, its own positional encoding, its own
softmax/LayerNorm in plain loops.  Used only as a test oracle.
"""

import math

import numpy as np


def oracle_positional_encoding(tau, width):
    out = np.zeros(tau * width)
    for i in range(1, tau + 1):
        for d in range(width):
            j = d // 2
            angle = (i - 1) / (10000.0 ** (2.0 * j / width))
            val = math.sin(angle) if d % 2 == 0 else math.cos(angle)
            out[(i - 1) * width + d] = val
    return out


def _oracle_softmax_rows(mat):
    rows, cols = mat.shape
    out = np.zeros_like(mat)
    for i in range(rows):
        biggest = max(mat[i, j] for j in range(cols))
        expo = [math.exp(mat[i, j] - biggest) if math.isfinite(mat[i, j]) else 0.0
                for j in range(cols)]
        total = sum(expo)
        for j in range(cols):
            out[i, j] = expo[j] / total
    return out


def _oracle_layer_norm(vec, gamma, beta, eps):
    k = len(vec)
    mu = sum(vec) / k
    var = sum((v - mu) ** 2 for v in vec) / k
    sd = math.sqrt(var)
    if sd < eps:
        sd = eps
    return np.array([gamma * (v - mu) / sd + beta for v in vec])


class OracleUnpacker:
    """Slices the flat vector in documented packing order, column-major."""

    def __init__(self, theta_flat):
        self.theta = np.asarray(theta_flat, dtype=float)
        self.cursor = 0

    def take(self, rows, cols):
        size = rows * cols
        chunk = self.theta[self.cursor:self.cursor + size]
        self.cursor += size
        # column-major vec: first `rows` entries are column 0
        return chunk.reshape(cols, rows).T


def oracle_unpack(theta_flat, n, tau, N, H, d_f):
    """Return a dict of every weight matrix, keyed like the production views."""
    up = OracleUnpacker(theta_flat)
    dk_enc = 3 * n // H
    dk_dec = n // H
    ew, dw = 3 * n * tau, n * tau
    w = {}
    combine_rows = {1: (3 * n, ew), 2: (n, dw), 3: (n, dw)}
    for attn in (1, 2, 3):
        for layer in range(N):
            r, c = combine_rows[attn]
            w[("combine", attn, layer)] = up.take(r, c)
    query_rows = {1: (ew, dk_enc), 2: (dw, dk_dec), 3: (dw, dk_dec)}
    kv_rows = {1: (ew, dk_enc), 2: (dw, dk_dec), 3: (ew, dk_dec)}
    for kind, table in (("query", query_rows), ("key", kv_rows), ("value", kv_rows)):
        for attn in (1, 2, 3):
            for layer in range(N):
                for head in range(H):
                    r, c = table[attn]
                    w[(kind, attn, layer, head)] = up.take(r, c)
    for layer in range(N):
        w[("ff_enc_in", layer)] = up.take(ew, d_f)
    for layer in range(N):
        w[("ff_enc_out", layer)] = up.take(d_f, ew)
    for layer in range(N):
        w[("ff_dec_in", layer)] = up.take(dw, d_f)
    for layer in range(N):
        w[("ff_dec_out", layer)] = up.take(d_f, dw)
    w[("output",)] = up.take(dw, n)
    assert up.cursor == len(up.theta), "oracle unpack did not consume theta exactly"
    return w


def oracle_forward(zeta_enc, phi_hist, theta_flat, cfg):
    """Whole-network evaluation; cfg is the production ArchConfig (read as
    plain attribute bag)."""
    n, tau, N, H, d_f = cfg.n, cfg.tau, cfg.layers, cfg.heads, cfg.d_f
    eps = cfg.ln_epsilon
    w = oracle_unpack(theta_flat, n, tau, N, H, d_f)
    dk_enc = 3 * n // H
    dk_dec = n // H

    mask = np.zeros((dk_dec, dk_dec))
    for i in range(dk_dec):
        for j in range(dk_dec):
            if i < j:
                mask[i, j] = -math.inf

    def attention(c_vec, a_vec, attn, layer, dk, use_mask, gamma, beta):
        pieces = []
        for head in range(H):
            q = w[("query", attn, layer, head)].T @ c_vec
            k = w[("key", attn, layer, head)].T @ a_vec
            v = w[("value", attn, layer, head)].T @ a_vec
            score = np.zeros((dk, dk))
            for i in range(dk):
                for j in range(dk):
                    score[i, j] = q[i] * k[j] / math.sqrt(dk)
            if use_mask:
                score = score + mask
            probs = _oracle_softmax_rows(score)
            pieces.append(probs @ v)
        stacked = np.concatenate(pieces)
        r_prime = w[("combine", attn, layer)].T @ stacked
        return _oracle_layer_norm(c_vec + r_prime, gamma, beta, eps)

    enc = np.asarray(zeta_enc) + oracle_positional_encoding(tau, 3 * n)
    for layer in range(N):
        r = attention(enc, enc, 1, layer, dk_enc, False,
                      cfg.gamma_self[layer], cfg.beta_self[layer])
        hidden = w[("ff_enc_in", layer)].T @ r
        hidden = np.array([max(h, 0.0) for h in hidden])
        b = w[("ff_enc_out", layer)].T @ hidden
        enc = _oracle_layer_norm(r + b, cfg.gamma_ff_enc[layer], cfg.beta_ff_enc[layer], eps)

    dec = np.asarray(phi_hist) + oracle_positional_encoding(tau, n)
    for layer in range(N):
        r2 = attention(dec, dec, 2, layer, dk_dec, True,
                       cfg.gamma_masked[layer], cfg.beta_masked[layer])
        r3 = attention(r2, enc, 3, layer, dk_dec, False,
                       cfg.gamma_cross[layer], cfg.beta_cross[layer])
        hidden = w[("ff_dec_in", layer)].T @ r3
        hidden = np.array([max(h, 0.0) for h in hidden])
        b = w[("ff_dec_out", layer)].T @ hidden
        dec = _oracle_layer_norm(r3 + b, cfg.gamma_ff_dec[layer], cfg.beta_ff_dec[layer], eps)

    relu = np.array([max(v, 0.0) for v in dec])
    return w[("output",)].T @ relu
