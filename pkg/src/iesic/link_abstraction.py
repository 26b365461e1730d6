"""SINR to symbol-error and packet-decode probability over Rician fading.

The symbol error is the MGF-based QPSK expression
``(1/pi) * int_0^{3pi/4} M(-sin^2(pi/4) / sin^2(theta)) dtheta`` with the
Rician moment generating function. The result is used per symbol in the
packet decode probability ``(1 - ser) ** packet_len_bits``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

QPSK_G = math.sin(math.pi / 4) ** 2
UPPER = 3 * math.pi / 4
DEFAULT_EPSABS = 1e-10


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class RicianLink:
    k_factor: float = 4.0
    packet_len_bits: int = 1024  # 128-byte packets
    mgf_as_printed: bool = False

    def __post_init__(self):
        if not self.k_factor >= 0:
            raise ValueError(f"k_factor must be >= 0, got {self.k_factor}")
        if self.packet_len_bits < 0:
            raise ValueError(f"packet_len_bits must be >= 0, got {self.packet_len_bits}")


def rician_mgf(s, gamma: float, k_factor: float, as_printed: bool = False):
    """Rician MGF of the instantaneous SNR with mean ``gamma``.

    The standard form has ``K*s*gamma`` in the exponent; ``as_printed`` drops
    the ``s`` (kept only for auditing, it exceeds 1 for s < 0).
    """
    k = k_factor
    den = (1 + k) - s * gamma
    num = k * s * gamma if not as_printed else k * gamma
    return (1 + k) / den * np.exp(num / den)


def _integrand(theta, gamma, k_factor, as_printed):
    st = math.sin(theta)
    if st == 0.0:
        # s -> -inf drives both MGF forms to 0
        return 0.0
    s = -QPSK_G / (st * st)
    return float(rician_mgf(s, gamma, k_factor, as_printed))


@lru_cache(maxsize=65536)
def _ser_cached(gamma: float, k_factor: float, as_printed: bool, epsabs: float) -> float:
    if gamma == 0.0:
        return UPPER / math.pi
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _err = integrate.quad(
                _integrand, 0.0, UPPER, args=(gamma, k_factor, as_printed),
                epsabs=epsabs, epsrel=1e-12, limit=400,
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(
                f"quadrature did not converge for gamma={gamma}, K={k_factor}: {exc}"
            ) from exc
    return val / math.pi


def rician_ser(gamma: float, k_factor: float = 4.0, as_printed: bool = False,
               epsabs: float = DEFAULT_EPSABS) -> float:
    """QPSK symbol-error probability at mean SNR ``gamma`` (linear)."""
    gamma = float(gamma)
    if not gamma >= 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if math.isinf(gamma):
        return 0.0
    return _ser_cached(gamma, float(k_factor), bool(as_printed), float(epsabs))


def decode_prob(gamma: float, link: RicianLink = RicianLink()) -> float:
    """Probability that all ``packet_len_bits`` symbols of a packet are correct."""
    ser = rician_ser(gamma, link.k_factor, link.mgf_as_printed)
    # the printed MGF can leave [0, 1]; clip so the power stays a probability
    ser = min(max(ser, 0.0), 1.0)
    return (1.0 - ser) ** link.packet_len_bits


def rician_ser_mc(gamma: float, k_factor: float, trials: int, rng: np.random.Generator,
                  chunk: int = 1_000_000) -> tuple[float, float]:
    """Monte Carlo QPSK symbol-error rate over Rician block fading.

    Each trial draws an independent fading coefficient with unit mean power,
    sends one QPSK symbol at mean SNR ``gamma`` and detects coherently.
    Returns ``(ser, standard_error)``.
    """
    los = math.sqrt(k_factor / (k_factor + 1))
    nlos = math.sqrt(1 / (2 * (k_factor + 1)))
    nsig = math.sqrt(1 / (2 * gamma)) if gamma > 0 else np.inf
    errors = 0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        h = los + nlos * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        sym = rng.integers(0, 4, n)
        x = np.exp(1j * (math.pi / 4 + sym * math.pi / 2))
        y = h * x + nsig * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        z = y * np.conj(h)
        # quadrant decision; symbol k sits in quadrant k
        det = (np.floor(np.angle(z) / (math.pi / 2)).astype(int)) % 4
        errors += int(np.count_nonzero(det != sym))
        done += n
    p = errors / trials
    return p, math.sqrt(p * (1 - p) / trials)
