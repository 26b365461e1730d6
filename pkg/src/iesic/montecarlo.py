"""Monte Carlo throughput estimates by sampling active address sets.

Independent of the exact enumeration: addresses are drawn from the address
model's generative process, each sampled tree is resolved, and decoding is
sampled as Bernoulli trials per recovery step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .link_abstraction import RicianLink, decode_prob
from .phy_model import LinkParams, ssinr
from .scenarios import AddressModel, _config_result
from .sicqta import throughput_of_trace


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    trials: int
    discarded: int = 0

    def within(self, value: float, nsigma: float = 3.0) -> bool:
        return abs(self.mean - value) <= nsigma * self.stderr + 1e-12


def _branch_split(model: AddressModel, n: int, rng: np.random.Generator) -> np.ndarray:
    u, M = model.u, model.M
    addr = np.zeros((n, M), dtype=np.int64)
    for depth in range(u):
        cap = 2 ** (u - depth - 1)
        bits = rng.integers(0, 2, (n, M))
        rows = np.arange(n)
        while rows.size:
            a, b = addr[rows], bits[rows]
            same = a[:, :, None] == a[:, None, :]
            ones = (same & (b[:, None, :] == 1)).sum(axis=2)
            size = same.sum(axis=2)
            # a bad subtree flags all its members, so they are redrawn together
            bad = (ones > cap) | (size - ones > cap)
            hit = bad.any(axis=1)
            rows, bad = rows[hit], bad[hit]
            if rows.size:
                fresh = rng.integers(0, 2, (rows.size, M))
                bits[rows] = np.where(bad, fresh, bits[rows])
        addr = addr * 2 + bits
    return addr


def sample_addresses(model: AddressModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` active sets as integer addresses, shape ``(n, M)``.

    ``iid-bits`` draws may contain repeated addresses.
    """
    N = 2 ** model.u
    if model.kind == "iid-bits":
        return rng.integers(0, N, (n, model.M))
    if model.kind == "distinct-uniform":
        keys = rng.random((n, N))
        return np.argpartition(keys, model.M - 1, axis=1)[:, : model.M] if model.M < N else \
            np.tile(np.arange(N), (n, 1))
    return _branch_split(model, n, rng)


def mc_throughput(model: AddressModel, trials: int, rng: np.random.Generator,
                  links: LinkParams | None = None, rician: RicianLink = RicianLink(),
                  count_idle_slots: bool = True, eq3_as_printed: bool = False,
                  chunk: int = 200_000) -> Estimate:
    """Sample mean of per-tree throughput (with decoding if ``links`` given)."""
    total = 0.0
    total_sq = 0.0
    kept = 0
    discarded = 0
    done = 0
    pd_cache: dict = {}
    while done < trials:
        n = min(chunk, trials - done)
        done += n
        addr = np.sort(sample_addresses(model, n, rng), axis=1)
        if model.kind == "iid-bits":
            ok = np.all(np.diff(addr, axis=1) != 0, axis=1) if model.M > 1 else np.ones(n, bool)
            discarded += int(n - ok.sum())
            addr = addr[ok]
        base = 2 ** model.u
        keys = addr @ (base ** np.arange(model.M - 1, -1, -1))
        ukeys, counts = np.unique(keys, return_counts=True)
        uniq = [[(int(k) // base ** p) % base for p in range(model.M - 1, -1, -1)] for k in ukeys]
        vals = np.empty(len(uniq))
        for j, row in enumerate(uniq):
            names = tuple(format(a, f"0{model.u}b") for a in row)
            trace, chain = _config_result(names, model.u)
            vals[j] = throughput_of_trace(trace, count_idle_slots)
        if links is None:
            x_sum = float(np.dot(vals, counts))
            x_sq = float(np.dot(vals * vals, counts))
        else:
            x_sum = x_sq = 0.0
            for j, row in enumerate(uniq):
                names = tuple(format(a, f"0{model.u}b") for a in row)
                _trace, chain = _config_result(names, model.u)
                c = int(counts[j])
                ok = np.ones(c, dtype=bool)
                for step in chain:
                    key = (len(step.transmitters), len(step.cancelled))
                    if key not in pd_cache:
                        lk = {usr: links for usr in step.transmitters}
                        pd_cache[key] = decode_prob(ssinr(step.context(), lk, eq3_as_printed), rician)
                    tries = rng.random((c, step.repeats)) < pd_cache[key]
                    ok &= tries.any(axis=1)
                s = float(ok.sum())
                x_sum += vals[j] * s
                x_sq += vals[j] ** 2 * s
        total += x_sum
        total_sq += x_sq
        kept += int(counts.sum())
    mean = total / kept
    var = max(total_sq / kept - mean * mean, 0.0)
    return Estimate(mean, math.sqrt(var / kept), kept, discarded)


def task_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for one task, derived from the master seed and a task key.

    Results depend only on (seed, key), never on how tasks are spread over
    workers.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))
