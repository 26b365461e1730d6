"""Scenario enumeration and throughput of SICQTA with an imperfect PHY.

A scenario is one realisation of the query tree, identified by its label
(non-idle slot occupancies in query order). Throughput combines, over all
scenarios, the occurrence probability, the MAC efficiency of the tree and
the probability that every packet in it is actually decoded.

Three address models are available:

``branch-split``
    every user in a collided subtree picks the next address bit uniformly,
    conditioned per subtree on the remaining depth still being able to hold
    everyone (so a pair that has not split by the last bit is forced apart).
``distinct-uniform``
    the active set is a uniformly random M-subset of the 2^u addresses.
``iid-bits``
    addresses are drawn independently with replacement; draws with a repeated
    address cannot be resolved and are reported separately.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy import optimize

from .benchmarks import CALIBRATION_TARGETS
from .link_abstraction import RicianLink, decode_prob
from .phy_model import LinkParams, ssinr
from .sicqta import DecodeChain, decode_chain_of_trace, run_tree, throughput_of_trace

log = logging.getLogger(__name__)

ADDRESS_MODELS = ("branch-split", "distinct-uniform", "iid-bits")


@dataclass(frozen=True)
class AddressModel:
    kind: str = "branch-split"
    u: int = 3
    M: int = 2

    def __post_init__(self):
        if self.kind not in ADDRESS_MODELS:
            raise ValueError(f"unknown address model {self.kind!r}; choose from {ADDRESS_MODELS}")
        if self.u < 1 or self.M < 1:
            raise ValueError(f"need u >= 1 and M >= 1, got u={self.u}, M={self.M}")
        if self.kind != "iid-bits" and self.M > 2 ** self.u:
            raise ValueError(f"M={self.M} users cannot hold distinct {self.u}-bit addresses")


@dataclass
class Scenario:
    label: str
    slots_used: int
    p_occ: float
    rho: float
    p_res: float | None = None
    configurations: int = 0
    chain: DecodeChain | None = field(default=None, repr=False)

    @property
    def occupancy(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.label)

    @property
    def contribution(self) -> float:
        return self.p_occ * self.rho * (1.0 if self.p_res is None else self.p_res)


# ---------------------------------------------------------------- addresses

def _feasible_patterns(m: int, cap: int) -> int:
    return sum(math.comb(m, n0) for n0 in range(max(0, m - cap), min(m, cap) + 1))


def branch_split_probability(addrs: Sequence[str], u: int) -> Fraction:
    """Probability of an unordered address set under the branch-split model."""
    p = Fraction(math.factorial(len(addrs)))
    for depth in range(u):
        counts: dict[str, int] = {}
        for a in addrs:
            counts[a[:depth]] = counts.get(a[:depth], 0) + 1
        cap = 2 ** (u - depth - 1)
        for m in counts.values():
            p /= _feasible_patterns(m, cap)
    return p


def configurations(model: AddressModel) -> Iterator[tuple[tuple[str, ...], Fraction]]:
    """Every resolvable active set with its exact probability."""
    u, M = model.u, model.M
    names = [format(x, f"0{u}b") for x in range(2 ** u)]
    if model.kind == "distinct-uniform":
        p = Fraction(1, math.comb(2 ** u, M))
    elif model.kind == "iid-bits":
        p = Fraction(math.factorial(M), 2 ** (u * M))
    for combo in itertools.combinations(names, M):
        if model.kind == "branch-split":
            yield combo, branch_split_probability(combo, u)
        else:
            yield combo, p


def unresolvable_probability(model: AddressModel) -> Fraction:
    """Mass of draws with a repeated address (non-zero only for iid-bits)."""
    if model.kind != "iid-bits":
        return Fraction(0)
    n = 2 ** model.u
    if model.M > n:
        return Fraction(1)
    distinct = Fraction(math.perm(n, model.M), n ** model.M)
    return 1 - distinct


# ------------------------------------------------------------- resolution

def _as_links(chain: DecodeChain, links) -> Mapping:
    if isinstance(links, LinkParams):
        users = set()
        for step in chain:
            users |= step.transmitters
        return {usr: links for usr in users}
    return links


def resolution_probability(chain: DecodeChain, links, rician: RicianLink = RicianLink(),
                           eq3_as_printed: bool = False) -> float:
    """Probability that every step of ``chain`` decodes.

    ``links`` is a user -> LinkParams mapping or one LinkParams for everyone.
    A step that can use ``k`` identical slots succeeds unless all ``k``
    independent attempts fail.
    """
    lk = _as_links(chain, links)
    p = 1.0
    for step in chain:
        pd = decode_prob(ssinr(step.context(), lk, eq3_as_printed), rician)
        p *= 1.0 - (1.0 - pd) ** step.repeats
    return p


def group_factor(pd: float, k: int) -> float:
    """Success probability of one recovery with ``k`` identical candidate slots."""
    return 1.0 - (1.0 - pd) ** k


@lru_cache(maxsize=None)
def _config_result(addrs: tuple[str, ...], u: int):
    trace = run_tree(addrs, u)
    return trace, decode_chain_of_trace(trace)


def _pres_for(chain, addrs, links, rician, eq3_as_printed, cache):
    if links is None:
        return None
    if isinstance(links, LinkParams):
        key = chain.signature()
        if key not in cache:
            cache[key] = resolution_probability(chain, links, rician, eq3_as_printed)
        return cache[key]
    per_user = list(links)
    if len(per_user) != len(addrs):
        raise ValueError(f"need {len(addrs)} per-user LinkParams, got {len(per_user)}")
    # users are exchangeable over addresses: average over assignments
    vals = [resolution_probability(chain, dict(zip(addrs, perm)), rician, eq3_as_printed)
            for perm in itertools.permutations(per_user)]
    return sum(vals) / len(vals)


def enumerate_scenarios(model: AddressModel, links=None, rician: RicianLink = RicianLink(),
                        count_idle_slots: bool = True,
                        eq3_as_printed: bool = False) -> list[Scenario]:
    """Exhaustive scenario list for ``model``.

    Configurations sharing a label and slot count are grouped (probabilities
    summed, resolution probability averaged by occurrence). ``p_res`` stays
    ``None`` unless ``links`` is given. Rows are ordered by descending
    ``p_occ``, then label.
    """
    groups: dict[tuple[str, int], Scenario] = {}
    weighted_res: dict[tuple[str, int], float] = {}
    cache: dict = {}
    for addrs, p in configurations(model):
        trace, chain = _config_result(addrs, model.u)
        pf = float(p)
        n = trace.slots_used if count_idle_slots else trace.slots_used - trace.idle_slots
        key = (trace.label, n)
        sc = groups.get(key)
        if sc is None:
            sc = groups[key] = Scenario(trace.label, n, 0.0, throughput_of_trace(trace, count_idle_slots),
                                        chain=chain)
            weighted_res[key] = 0.0
        sc.p_occ += pf
        sc.configurations += 1
        pres = _pres_for(chain, addrs, links, rician, eq3_as_printed, cache)
        if pres is not None:
            weighted_res[key] += pf * pres
    out = list(groups.values())
    if links is not None:
        for key, sc in groups.items():
            sc.p_res = weighted_res[key] / sc.p_occ
    out.sort(key=lambda s: (-s.p_occ, s.label, s.slots_used))
    return out


def _resolvable_mass(scenarios) -> float:
    return sum(s.p_occ for s in scenarios)


def mac_throughput(model: AddressModel, count_idle_slots: bool = True) -> float:
    """Average packets per slot with perfect decoding.

    For ``iid-bits`` the unresolvable draws are excluded and the rest
    renormalised.
    """
    sc = enumerate_scenarios(model, count_idle_slots=count_idle_slots)
    return sum(s.p_occ * s.rho for s in sc) / _resolvable_mass(sc)


def total_throughput(model: AddressModel, links, rician: RicianLink = RicianLink(),
                     count_idle_slots: bool = True, eq3_as_printed: bool = False) -> float:
    """Average packets per slot including decoding failures."""
    sc = enumerate_scenarios(model, links, rician, count_idle_slots, eq3_as_printed)
    return sum(s.contribution for s in sc) / _resolvable_mass(sc)


def slotted_aloha_throughput(load):
    """Slotted ALOHA throughput ``G * exp(-G)`` at offered load ``G``."""
    g = np.asarray(load, dtype=float)
    if np.any(g < 0):
        raise ValueError("offered load must be >= 0")
    out = g * np.exp(-g)
    return float(out) if out.ndim == 0 else out


def sensitivity_table(Ms=(2, 3, 4), us=(3, 4, 5), kinds=("branch-split", "distinct-uniform"),
                      idle_modes=(True, False)) -> list[dict]:
    """MAC throughput for every combination of users, depth, model and slot accounting."""
    rows = []
    for kind in kinds:
        for count_idle in idle_modes:
            for u in us:
                for M in Ms:
                    rows.append({
                        "address_model": kind,
                        "count_idle_slots": count_idle,
                        "u": u,
                        "M": M,
                        "mac_tpt": mac_throughput(AddressModel(kind, u, M), count_idle),
                    })
    return rows


# --------------------------------------------------------------- labels

@lru_cache(maxsize=256)
def label_chain(label: str, u: int = 3, kind: str = "branch-split") -> DecodeChain:
    """Decode chain of the scenario with ``label`` (the first digit is M).

    Raises if the label does not occur, or if configurations sharing the
    label disagree on the chain shape.
    """
    M = int(label[0])
    found = None
    for addrs, _p in configurations(AddressModel(kind, u, M)):
        trace, chain = _config_result(addrs, u)
        if trace.label != label:
            continue
        if found is None:
            found = chain
        elif found.signature() != chain.signature():
            raise ValueError(f"label {label} maps to several decode-chain shapes")
    if found is None:
        raise KeyError(f"label {label} does not occur for u={u}")
    return found


def label_resolution(labels, link: LinkParams, rician: RicianLink = RicianLink(), u: int = 3,
                     eq3_as_printed: bool = False) -> dict[str, float]:
    return {lb: resolution_probability(label_chain(lb, u), link, rician, eq3_as_printed)
            for lb in labels}


# ---------------------------------------------------------------- calibration

FREE_PARAMETERS = ("snr", "sigma_v2", "eps_cross", "eps_self")


class CalibrationError(RuntimeError):
    def __init__(self, message, best_link=None, best_residual=None):
        super().__init__(message)
        self.best_link = best_link
        self.best_residual = best_residual


_BOUNDS = {
    "snr": (0.0, 12.0),          # log10
    "sigma_v2": (-12.0, math.log10(0.5)),
    "eps_cross": (-6.0, math.log10(0.99)),
    "eps_self": (-8.0, math.log10(0.99)),
}


def _apply(base: LinkParams, free, x) -> LinkParams:
    changes = {}
    for name, v in zip(free, x):
        val = float(10.0 ** v)
        if name == "snr":
            changes["noise_power"] = base.gamma / val
        else:
            changes[name] = val
    if "eps_cross" in changes and "eps_self" not in changes:
        changes["eps_cross"] = max(changes["eps_cross"], base.eps_self)
    if "eps_self" in changes:
        cross = changes.get("eps_cross", base.eps_cross)
        changes["eps_self"] = min(changes["eps_self"], cross)
    return base.with_(**changes)


def calibrate_links(targets: Mapping[str, float] | None = None,
                    free: Sequence[str] = ("snr", "sigma_v2"),
                    base: LinkParams | None = None,
                    rician: RicianLink = RicianLink(),
                    u: int = 3, tol: float = 1e-4, grid: int = 17) -> LinkParams:
    """Fit the ``free`` link parameters so labelled scenarios hit ``targets``.

    Every other field of ``base`` stays fixed. The search box is scanned on a
    log grid, then refined by bounded least squares. The fitted link is
    returned when every target is matched within ``tol``; otherwise
    :class:`CalibrationError` carries the best link and residual found.
    """
    targets = dict(CALIBRATION_TARGETS if targets is None else targets)
    if len(targets) < 2:
        raise ValueError("need at least two calibration targets")
    free = tuple(free)
    bad = [f for f in free if f not in FREE_PARAMETERS]
    if bad or not free:
        raise ValueError(f"free parameters must be drawn from {FREE_PARAMETERS}, got {free}")
    base = base or LinkParams(gamma=1.0)
    labels = list(targets)
    chains = [label_chain(lb, u) for lb in labels]
    want = np.array([targets[lb] for lb in labels])

    def resid(x):
        link = _apply(base, free, x)
        got = np.array([resolution_probability(c, link, rician) for c in chains])
        return got - want

    lo = np.array([_BOUNDS[f][0] for f in free])
    hi = np.array([_BOUNDS[f][1] for f in free])
    axes = [np.linspace(a, b, grid) for a, b in zip(lo, hi)]
    starts = sorted(itertools.product(*axes), key=lambda x: np.max(np.abs(resid(np.array(x)))))[:4]
    best_x, best_r = None, np.inf
    for x0 in starts:
        sol = optimize.least_squares(resid, np.array(x0), bounds=(lo, hi), xtol=1e-14,
                                     ftol=1e-14, gtol=1e-14, max_nfev=400)
        r = float(np.max(np.abs(sol.fun)))
        if r < best_r:
            best_x, best_r = sol.x, r
        if r <= tol:
            break
    best = _apply(base, free, best_x)
    if best_r > tol:
        raise CalibrationError(
            f"no {'/'.join(free)} combination reproduces {targets} "
            f"(best max residual {best_r:.4g} at {best})",
            best, best_r,
        )
    log.info("calibrated %s with residual %.2e", best, best_r)
    return best
