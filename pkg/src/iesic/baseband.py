"""Complex-baseband slot synthesis and empirical cancellation SINR.

A slot is the superposition ``sum_k x_k * v_k * h_k + n`` of QPSK packets.
``h_k`` has power ``gamma_k`` and a random phase, ``v_k`` is the
transceiver distortion ``1 + CN(0, sigma_v2)`` and ``n`` is CN(0, noise).
Cancelling a packet subtracts ``x_k * h_hat_k`` with the imperfect estimate
``h_hat_k = h_k * (1 + eps)``, plus an independent noise draw standing in for
the noisy reference copy of that packet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .phy_model import LinkParams, ssinr, CancellationContext

V_MODES = ("symbol", "packet")


def _cn(rng: np.random.Generator, var: float, n: int) -> np.ndarray:
    s = math.sqrt(var / 2)
    return s * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def qpsk_symbols(n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-envelope QPSK symbols."""
    k = rng.integers(0, 4, n)
    return np.exp(1j * (math.pi / 4 + k * math.pi / 2))


@dataclass(frozen=True)
class UserTruth:
    link: LinkParams
    x: np.ndarray
    h: complex
    v: np.ndarray
    phase_drift: float = 0.0


@dataclass(frozen=True)
class BasebandSlot:
    samples: np.ndarray
    users: Mapping = field(repr=False)
    noise_power: float = 0.0

    @property
    def n_symbols(self) -> int:
        return int(self.samples.size)


def synthesize_slot(users, seed: int, n_symbols: int = 512, noise_power: float | None = None,
                    phase_drift: float = 0.0, v_mode: str = "symbol") -> BasebandSlot:
    """Build one slot.

    ``users`` maps an id to ``(LinkParams, payload_seed)``; a sequence is keyed
    by position. ``noise_power`` defaults to the first user's link value.
    ``phase_drift`` (radians) rotates every channel coefficient.
    """
    if v_mode not in V_MODES:
        raise ValueError(f"v_mode must be one of {V_MODES}, got {v_mode!r}")
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    if not isinstance(users, Mapping):
        users = dict(enumerate(users))
    if not users:
        raise ValueError("a slot needs at least one user")
    if noise_power is None:
        noise_power = next(iter(users.values()))[0].noise_power
    if noise_power < 0:
        raise ValueError("noise_power must be >= 0")
    rng = np.random.default_rng(seed)
    samples = np.zeros(n_symbols, dtype=complex)
    truth = {}
    for uid, (link, payload_seed) in users.items():
        x = qpsk_symbols(n_symbols, np.random.default_rng(payload_seed))
        phi = rng.uniform(0, 2 * math.pi)
        h = math.sqrt(link.gamma) * complex(np.exp(1j * (phi + phase_drift)))
        if v_mode == "symbol":
            v = 1 + _cn(rng, link.sigma_v2, n_symbols)
        else:
            v = np.full(n_symbols, 1 + _cn(rng, link.sigma_v2, 1)[0])
        samples += x * v * h
        truth[uid] = UserTruth(link, x, h, v, phase_drift)
    if noise_power > 0:
        samples += _cn(rng, noise_power, n_symbols)
    return BasebandSlot(samples, truth, float(noise_power))


def estimate_phase_drift(reference: np.ndarray, received: np.ndarray) -> float:
    """Circular mean of the per-sample phase difference ``received / reference``."""
    reference = np.asarray(reference)
    received = np.asarray(received)
    if reference.shape != received.shape:
        raise ValueError(f"length mismatch: {reference.shape} vs {received.shape}")
    return float(np.angle(np.sum(np.exp(1j * (np.angle(received) - np.angle(reference))))))


@dataclass(frozen=True)
class SinrMeasurement:
    sinr: float
    sinr_db: float
    ci_db: float  # 95% half width
    symbols: int


def cancel_and_measure(slot: BasebandSlot, target, cancelled, seed: int,
                       eps: Mapping | None = None, reference_noise: bool = True) -> SinrMeasurement:
    """Cancel ``cancelled`` packets plus the target and measure the target SINR.

    The error left after removing every estimated copy is the effective
    interference plus noise; the SINR is ``gamma_target / mean|error|^2``.
    ``eps`` overrides the injected estimation error per user (defaults: the
    target's ``eps_self``, the others' ``eps_cross``).
    """
    if target not in slot.users:
        raise KeyError(f"target {target!r} not in slot")
    cset = set(cancelled) | {target}
    missing = cset - set(slot.users)
    if missing:
        raise KeyError(f"cancelled users not in slot: {sorted(map(str, missing))}")
    rng = np.random.default_rng(seed)
    e = slot.samples.copy()
    for k in sorted(cset, key=str):
        u = slot.users[k]
        if eps is not None and k in eps:
            ek = eps[k]
        else:
            ek = u.link.eps_self if k == target else u.link.eps_cross
        e -= u.x * u.h * (1 + ek)
        if k != target and reference_noise:
            e -= _cn(rng, u.link.noise_power, slot.n_symbols)
    p = np.abs(e) ** 2
    mean = float(p.mean())
    gamma = slot.users[target].link.gamma
    sinr = gamma / mean
    se = float(p.std(ddof=1)) / math.sqrt(p.size) if p.size > 1 else math.inf
    ci = 1.96 * 10 / math.log(10) * se / mean
    return SinrMeasurement(sinr, 10 * math.log10(sinr), ci, int(p.size))


def fig1_rows(link: LinkParams, n_symbols: int, seed: int, max_cancelled: int = 3,
              v_mode: str = "symbol") -> list[dict]:
    """Analytical vs baseband SINR as more interferers are cancelled.

    Row ``n`` has ``n + 1`` colliding packets of equal power, all cancelled,
    with user 0 as the target.
    """
    rows = []
    for n in range(max_cancelled + 1):
        ids = list(range(n + 1))
        users = {i: (link, seed * 1009 + i) for i in ids}
        slot = synthesize_slot(users, seed + n, n_symbols, v_mode=v_mode)
        m = cancel_and_measure(slot, 0, ids[1:], seed + 7919 * (n + 1))
        ctx = CancellationContext(frozenset(ids), frozenset(ids), 0)
        ana = ssinr(ctx, {i: link for i in ids})
        rows.append({
            "cancelled_others": n,
            "analytical_sinr": ana,
            "analytical_db": 10 * math.log10(ana),
            "empirical_sinr": m.sinr,
            "empirical_db": m.sinr_db,
            "ci_db": m.ci_db,
        })
    return rows


def write_raw(slot: BasebandSlot, path) -> tuple[Path, Path]:
    """Write samples as little-endian float32 interleaved I/Q plus a header file."""
    path = Path(path)
    iq = np.empty(2 * slot.n_symbols, dtype="<f4")
    iq[0::2] = slot.samples.real
    iq[1::2] = slot.samples.imag
    path.write_bytes(iq.tobytes())
    header = path.with_name(path.name + ".hdr")
    header.write_text(
        "format=cf32le\n"
        f"symbols={slot.n_symbols}\n"
        f"noise_power={slot.noise_power:.9g}\n"
        f"users={','.join(str(k) for k in slot.users)}\n"
    )
    return path, header


def read_raw(path) -> np.ndarray:
    data = np.frombuffer(Path(path).read_bytes(), dtype="<f4")
    if data.size % 2:
        raise ValueError("odd number of float32 values in I/Q file")
    return data[0::2].astype(float) + 1j * data[1::2].astype(float)


def sinr_table(links: Sequence[LinkParams], seed: int, n_symbols: int) -> list[tuple]:
    """(analytical, empirical) pairs for every cancellation subset with the
    lowest-index user as target, one list entry per subset."""
    out = []
    ids = list(range(len(links)))
    lk = dict(zip(ids, links))
    slot = synthesize_slot({i: (lk[i], seed * 31 + i) for i in ids}, seed, n_symbols)
    for mask in range(2 ** (len(ids) - 1)):
        others = [ids[j + 1] for j in range(len(ids) - 1) if mask >> j & 1]
        ctx = CancellationContext(frozenset(ids), frozenset(others) | {0}, 0)
        m = cancel_and_measure(slot, 0, others, seed + mask + 1)
        out.append((ssinr(ctx, lk), m))
    return out
