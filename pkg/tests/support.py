"""Shared helpers for the test suite."""

from lyat.params import ArchConfig, init_theta
from lyat.transformer import WindowState, positional_encoding

TINY = dict(n=2, m=2, s=1, tau=2, layers=1, heads=1, d_f=3)


def random_tiny_arch(rng):
    """A random valid architecture with p <= 500."""
    while True:
        heads = int(rng.integers(1, 4))
        n = heads * int(rng.integers(1, 4))
        tau = int(rng.integers(1, 4))
        layers = int(rng.integers(1, 3))
        d_f = int(rng.integers(1, 5))
        p = 48 * layers * n * n * tau + 8 * layers * n * tau * d_f + n * n * tau
        if p <= 500:
            return ArchConfig(
                n=n, m=n, s=1, tau=tau, layers=layers, heads=heads, d_f=d_f,
                gamma_self=float(rng.uniform(0.5, 1.2)),
                gamma_masked=float(rng.uniform(0.5, 1.2)),
                gamma_cross=float(rng.uniform(0.5, 1.2)),
                gamma_ff_enc=float(rng.uniform(0.5, 1.2)),
                gamma_ff_dec=float(rng.uniform(0.5, 1.2)),
                beta_self=float(rng.uniform(-0.3, 0.3)),
                beta_masked=float(rng.uniform(-0.3, 0.3)),
                beta_cross=float(rng.uniform(-0.3, 0.3)),
                beta_ff_enc=float(rng.uniform(-0.3, 0.3)),
                beta_ff_dec=float(rng.uniform(-0.3, 0.3)),
            )


def random_instance(arch, rng, gain=0.6):
    """(window, theta, pe) with non-degenerate activations."""
    theta = init_theta(arch, gain=gain, seed=int(rng.integers(0, 2**31)))
    window = WindowState.initial(arch, decoder_noise_scale=0.0)
    window.zeta_enc = rng.standard_normal(arch.enc_width)
    window.phi_hist = 0.5 * rng.standard_normal(arch.dec_width)
    pe = positional_encoding(arch)
    return window, theta, pe
