"""Query tree collision resolution with inter-slot SIC (SICQTA).

The receiver queries address prefixes depth-first, appending ``0`` after a
collision. Every success is cancelled from all earlier collision slots; a
collision whose residual shrinks to one packet yields that packet too. Two
kinds of queries are skipped:

* a subtree whose packets are all already recovered, and
* a right sibling whose content equals the parent's residual (two or more
  packets): that slot would be a known collision, so the receiver descends
  straight into it.

Users are identified by their address strings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .phy_model import CancellationContext

IDLE = "idle"
SUCCESS = "success"
COLLISION = "collision"


@dataclass(frozen=True)
class SlotRecord:
    query: str
    transmitters: frozenset
    outcome: str
    recovered_by_sic: frozenset = frozenset()

    def __post_init__(self):
        n = len(self.transmitters)
        expected = IDLE if n == 0 else SUCCESS if n == 1 else COLLISION
        if self.outcome != expected:
            raise ValueError(f"outcome {self.outcome!r} inconsistent with {n} transmitters")


@dataclass(frozen=True)
class ResolutionTrace:
    u: int
    slots: tuple
    resolved: frozenset

    @property
    def slots_used(self) -> int:
        return len(self.slots)

    @property
    def idle_slots(self) -> int:
        return sum(1 for s in self.slots if s.outcome == IDLE)

    @property
    def occupancies(self) -> list[int]:
        return [len(s.transmitters) for s in self.slots if s.outcome != IDLE]

    @property
    def label(self) -> str:
        return "".join(str(n) for n in self.occupancies)


@dataclass(frozen=True)
class DecodeStep:
    """One packet recovery.

    ``cancelled`` holds the other packets removed from the slot (the target is
    not included); ``slots`` lists every slot with the identical transmitter
    set that could serve the recovery, so ``repeats == len(slots)``.
    """

    slots: tuple
    target: str
    cancelled: frozenset
    transmitters: frozenset

    @property
    def slot(self) -> int:
        return self.slots[0]

    @property
    def repeats(self) -> int:
        return len(self.slots)

    def context(self) -> CancellationContext:
        return CancellationContext(self.transmitters, self.cancelled | {self.target}, self.target)


@dataclass(frozen=True)
class DecodeChain:
    steps: tuple

    def __iter__(self):
        return iter(self.steps)

    def __len__(self):
        return len(self.steps)

    def signature(self) -> tuple:
        """User-agnostic shape: sorted (|S|, |cancelled|, repeats) triples."""
        return tuple(sorted((len(s.transmitters), len(s.cancelled), s.repeats) for s in self.steps))


def _validate(active: Iterable[str], u: int) -> list[str]:
    addrs = list(active)
    if not addrs:
        raise ValueError("no active addresses")
    if u < 1:
        raise ValueError(f"address size u must be >= 1, got {u}")
    for a in addrs:
        if not isinstance(a, str) or len(a) != u or set(a) - {"0", "1"}:
            raise ValueError(f"address {a!r} is not a {u}-bit string")
    if len(set(addrs)) != len(addrs):
        raise ValueError("duplicate addresses among active users")
    return sorted(addrs)


def _sic_waves(slot_sets: Sequence[frozenset], decoded: set) -> list[DecodeStep]:
    """Cancel ``decoded`` from every slot until no residual is a single packet.

    Updates ``decoded`` in place and returns the recoveries in wave order.
    When a packet becomes free in several slots, the smallest transmitter set
    is used; identical copies of that set are grouped as repeats.
    """
    steps = []
    while True:
        free: dict[str, list[int]] = {}
        for t, s in enumerate(slot_sets):
            if len(s) < 2:
                continue
            r = s - decoded
            if len(r) == 1:
                (i,) = r
                free.setdefault(i, []).append(t)
        if not free:
            return steps
        for i in sorted(free):
            groups: dict[frozenset, list[int]] = {}
            for t in free[i]:
                groups.setdefault(slot_sets[t], []).append(t)
            best = min(groups, key=lambda s: (len(s), -len(groups[s]), groups[s][0]))
            steps.append(DecodeStep(tuple(groups[best]), i, best - {i}, best))
        decoded.update(free)


def run_tree(active: Iterable[str], u: int) -> ResolutionTrace:
    """Resolve the ``active`` addresses and return the full slot trace."""
    addrs = _validate(active, u)

    def members(prefix):
        return frozenset(a for a in addrs if a.startswith(prefix))

    slot_sets: list[frozenset] = []
    queries: list[str] = []
    recovered: list[set] = []
    decoded: set = set()
    # (prefix, is_right_child); left child popped first
    stack = [("", False)]
    limit = 2 ** (u + 1)
    while stack:
        prefix, right = stack.pop()
        if right:
            # the left subtree is finished, so this equals the parent's residual
            pending = members(prefix) - decoded
            if not pending:
                continue
            if len(pending) >= 2:
                # known collision: descend without spending a slot
                stack.append((prefix + "1", True))
                stack.append((prefix + "0", False))
                continue
        elif prefix and not members(prefix[:-1]) - decoded:
            continue
        tx = members(prefix)
        slot_sets.append(tx)
        queries.append(prefix)
        recovered.append(set())
        if len(tx) == 1:
            decoded |= tx
        for step in _sic_waves(slot_sets, decoded):
            for t in step.slots:
                recovered[t].add(step.target)
        if len(tx) >= 2:
            stack.append((prefix + "1", True))
            stack.append((prefix + "0", False))
        if len(slot_sets) > limit:
            raise RuntimeError("query tree exceeded 2^(u+1) slots")
    return _assemble(u, queries, slot_sets, recovered, decoded)


def _assemble(u, queries, slot_sets, recovered, decoded) -> ResolutionTrace:
    slots = []
    for q, tx, rec in zip(queries, slot_sets, recovered):
        n = len(tx)
        outcome = IDLE if n == 0 else SUCCESS if n == 1 else COLLISION
        slots.append(SlotRecord(q, tx, outcome, frozenset(rec)))
    return ResolutionTrace(u, tuple(slots), frozenset(decoded))


def throughput_of_trace(trace: ResolutionTrace, count_idle_slots: bool = True) -> float:
    """Packets per slot; idle slots are excluded from the slot count on request."""
    n = trace.slots_used if count_idle_slots else trace.slots_used - trace.idle_slots
    return len(trace.resolved) / n


def decode_chain_of_trace(trace: ResolutionTrace) -> DecodeChain:
    """Replay a trace and list how each packet is recovered, in order."""
    slot_sets: list[frozenset] = []
    decoded: set = set()
    steps = []
    for t, slot in enumerate(trace.slots):
        slot_sets.append(slot.transmitters)
        if slot.outcome == SUCCESS and not slot.transmitters <= decoded:
            (i,) = slot.transmitters
            steps.append(DecodeStep((t,), i, frozenset(), slot.transmitters))
            decoded.add(i)
        steps.extend(_sic_waves(slot_sets, decoded))
    return DecodeChain(tuple(steps))


def format_query(prefix: str, u: int) -> str:
    return prefix + "x" * (u - len(prefix))


def trace_to_lines(trace: ResolutionTrace) -> list[str]:
    """One ``query,transmitters,outcome,sic_recovered`` line per slot.

    Queries are padded with ``x`` to the address size; user lists are
    space separated.
    """
    lines = []
    for s in trace.slots:
        lines.append(",".join([
            format_query(s.query, trace.u),
            " ".join(sorted(s.transmitters)),
            s.outcome,
            " ".join(sorted(s.recovered_by_sic)),
        ]))
    return lines


def trace_from_lines(lines: Iterable[str]) -> ResolutionTrace:
    slots = []
    u = None
    for raw in lines:
        raw = raw.strip()
        if not raw:
            continue
        q, tx, outcome, rec = raw.split(",")
        u = len(q)
        slots.append(SlotRecord(q.rstrip("x"), frozenset(tx.split()), outcome, frozenset(rec.split())))
    if u is None:
        raise ValueError("empty trace")
    resolved = set()
    for s in slots:
        if s.outcome == SUCCESS:
            resolved |= s.transmitters
        resolved |= s.recovered_by_sic
    return ResolutionTrace(u, tuple(slots), frozenset(resolved))
