"""Residual-interference SINR after inter-slot cancellation.

A packet recovered in one slot is re-created with an estimated channel and
subtracted from a collision slot. What is left behind has three parts: the
transmitter hardware distortion ``v``, the channel-estimation error ``eps``
and the noise carried in with the replica. ``ssinr`` combines those residuals
with the full power of any packets that were not cancelled.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Hashable, Mapping


@dataclass(frozen=True)
class LinkParams:
    """Per-user link description (all powers linear).

    gamma       received signal power |h|^2 at unit transmit power
    sigma_v2    variance of the multiplicative hardware coefficient v (mean 1)
    eps_self    channel-estimation error when a packet is estimated alone
    eps_cross   channel-estimation error when estimated inside a collision
    noise_power AWGN power of a slot
    """

    gamma: float = 1.0
    sigma_v2: float = 0.001
    eps_self: float = 0.001
    eps_cross: float = 0.2
    noise_power: float = 0.1

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.sigma_v2 >= 0:
            raise ValueError(f"sigma_v2 must be >= 0, got {self.sigma_v2}")
        if not 0 <= self.eps_self <= self.eps_cross < 1:
            raise ValueError(
                f"need 0 <= eps_self <= eps_cross < 1, got eps_self={self.eps_self}, "
                f"eps_cross={self.eps_cross}"
            )
        if not self.noise_power > 0:
            raise ValueError(f"noise_power must be > 0, got {self.noise_power}")

    @property
    def snr(self) -> float:
        """Interference-free SNR gamma / noise_power."""
        return self.gamma / self.noise_power

    def with_(self, **changes) -> "LinkParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class CancellationContext:
    """Decode ``target`` from a slot holding ``transmitters`` after cancelling.

    ``cancelled`` always contains the target itself; the target's own entry
    carries the self-estimation residual.
    """

    transmitters: frozenset
    cancelled: frozenset
    target: Hashable

    def __post_init__(self):
        object.__setattr__(self, "transmitters", frozenset(self.transmitters))
        object.__setattr__(self, "cancelled", frozenset(self.cancelled))
        if self.target not in self.transmitters:
            raise ValueError(f"target {self.target!r} not among transmitters")
        if self.target not in self.cancelled:
            raise ValueError(f"target {self.target!r} must be in the cancelled set")
        if not self.cancelled <= self.transmitters:
            raise ValueError("cancelled set must be a subset of the transmitters")


def residual_powers(link: LinkParams, self_cancellation: bool) -> tuple[float, float]:
    """Hardware-noise and channel-estimation residual powers of one replica.

    Returns ``(gamma * sigma_v2, gamma * eps**2 * (1 + sigma_v2))`` where
    ``eps`` is the self or cross estimation error. The correlation between the
    two residual terms is ignored.
    """
    eps = link.eps_self if self_cancellation else link.eps_cross
    hw = link.gamma * link.sigma_v2
    chan = link.gamma * eps * eps * (1.0 + link.sigma_v2)
    return hw, chan


def interference_terms(
    ctx: CancellationContext,
    links: Mapping[Hashable, LinkParams],
    eq3_as_printed: bool = False,
) -> tuple[float, float]:
    """Split the SSINR denominator into (residual + noise, uncancelled power).

    With ``eq3_as_printed`` the residual sum runs over every transmitter rather
    than only the cancelled ones, charging uncancelled users twice.
    """
    residual_set = ctx.transmitters if eq3_as_printed else ctx.cancelled
    residual = 0.0
    for k in residual_set:
        link = links[k]
        hw, chan = residual_powers(link, self_cancellation=(k == ctx.target))
        residual += hw + chan + link.noise_power
    uncancelled = sum(links[j].gamma for j in ctx.transmitters - ctx.cancelled)
    return residual, uncancelled


def ssinr(
    ctx: CancellationContext,
    links: Mapping[Hashable, LinkParams],
    eq3_as_printed: bool = False,
) -> float:
    """Linear SIC-SINR of ``ctx.target`` after the cancellations in ``ctx``."""
    missing = [u for u in ctx.transmitters if u not in links]
    if missing:
        raise KeyError(f"no LinkParams for users {sorted(map(str, missing))}")
    residual, uncancelled = interference_terms(ctx, links, eq3_as_printed)
    denom = residual + uncancelled
    if denom <= 0:
        raise ZeroDivisionError("SSINR denominator is zero; noise_power must be > 0")
    return links[ctx.target].gamma / denom


def homogeneous(users, link: LinkParams) -> dict:
    """Map every user id in ``users`` to the same ``link``."""
    return {u: link for u in users}
