"""Adversary strategies for the full-information Byzantine model.

A strategy is bound to a run via ``prepare`` (it may read the whole run
state, including the graph, the placement, and future color streams) and
then drives the Byzantine nodes through three hooks:

* ``setup_report`` substitutes per-receiver adjacency reports during setup;
* ``injections_for`` adds or replaces flood tokens in a given round;
* ``answer_query`` intercepts verification queries aimed at a Byzantine
  node (``TRUTHFUL`` falls through to the node's own forwarding log).

The adversary controls message content only; sender identity is
unforgeable and messages travel only over real edges (the engine drops and
counts anything else).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .protocol import ORIGIN, RoundContext

__all__ = [
    "TRUTHFUL",
    "Injection",
    "AdversaryStrategy",
    "strategy_honest_mimic",
    "strategy_silent",
    "strategy_max_injector",
    "strategy_late_injector",
    "strategy_topology_liar",
    "CompositeStrategy",
    "make_strategy",
    "STRATEGY_NAMES",
]

# Sentinel: "no override, answer from the node's own log".
TRUTHFUL = object()


@dataclass(frozen=True)
class Injection:
    """A token a Byzantine node emits outside the honest schedule.

    ``targets=None`` broadcasts over the node's H-ports.  ``replace=True``
    substitutes the node's own emission for the round and rewrites its
    state, so the node subsequently stands by the lie.
    """

    color: int
    pred: int
    targets: tuple[int, ...] | None = None
    replace: bool = False


def default_injection_color(n: int) -> int:
    """Color far above any honest maximum: ceil(4 log2 n) + 10."""
    return math.ceil(4 * math.log2(n)) + 10


class AdversaryStrategy:
    """Base strategy: Byzantine nodes behave exactly like honest ones."""

    name = "honest_mimic"
    suppress_sends = False
    sends_reports = True

    def __init__(self, **params):
        self.params = dict(params)

    def prepare(self, run) -> None:  # run: engine state, read-only by convention
        pass

    def setup_report(self, node: int, receiver: int):
        """Claimed H-adjacency list for one receiver, or None for the truth."""
        return None

    def lie_receivers(self) -> set[int]:
        """Nodes that receive at least one untruthful setup report."""
        return set()

    def injections_for(self, node: int, ctx: RoundContext) -> list[Injection]:
        return []

    def answer_query(self, target: int, asker: int, color: int,
                     phase: int, subphase: int, r: int):
        return TRUTHFUL


def strategy_honest_mimic() -> AdversaryStrategy:
    """Byzantine nodes follow the protocol to the letter."""
    return AdversaryStrategy()


class _Silent(AdversaryStrategy):
    """Byzantine nodes never send anything and never answer anything."""

    name = "silent"
    suppress_sends = True
    sends_reports = False

    def answer_query(self, target, asker, color, phase, subphase, r):
        return None


def strategy_silent() -> AdversaryStrategy:
    return _Silent()


class _MaxInjector(AdversaryStrategy):
    """Replace the round-1 color with a value beyond any honest maximum.

    The injection is a legal origination (round 1, self-provenance), so
    the hardened verification accepts it; the node's log is rewritten to
    match and queries are answered truthfully about it.
    """

    name = "max_injector"

    def __init__(self, magnitude: int | None = None):
        super().__init__(magnitude=magnitude)
        self.magnitude = magnitude
        self.value = 0
        self._byz: set[int] = set()

    def prepare(self, run) -> None:
        self.value = int(self.magnitude) if self.magnitude else default_injection_color(run.topo.n)
        self._byz = set(int(b) for b in run.byz_nodes)

    def injections_for(self, node, ctx):
        if node in self._byz and ctx.t == 1:
            return [Injection(color=self.value, pred=ORIGIN, replace=True)]
        return []


def strategy_max_injector(magnitude: int | None = None) -> AdversaryStrategy:
    return _MaxInjector(magnitude=magnitude)


class _LateInjector(AdversaryStrategy):
    """Inject mid-subphase with a fabricated backward chain.

    At subphase round ``inject_round`` every Byzantine node emits the
    oversized color with a claimed predecessor chain walked through real H
    edges, preferring Byzantine hops (only an all-Byzantine prefix of
    length min(t, k) - 1 can survive verification).  ``inject_round=1``
    degenerates to the max-injector behaviour.
    """

    name = "late_injector"

    def __init__(self, inject_round: int | None = None, magnitude: int | None = None):
        super().__init__(inject_round=inject_round, magnitude=magnitude)
        self.inject_round = inject_round
        self.magnitude = magnitude
        self.value = 0
        self._byz: set[int] = set()
        self._chain: dict[int, list[int]] = {}
        self._answers: dict[tuple[int, int], int] = {}

    def prepare(self, run) -> None:
        h = run.topo.h
        k = run.topo.k
        self.value = int(self.magnitude) if self.magnitude else default_injection_color(run.topo.n)
        if self.inject_round is None:
            self.inject_round = k
        t0 = int(self.inject_round)
        self._byz = set(int(b) for b in run.byz_nodes)
        if t0 == 1:
            return

        def pick_next(cur: int, avoid: set[int]) -> int | None:
            nbrs = [int(x) for x in h.simple_neighbors(cur) if int(x) not in avoid]
            if not nbrs:
                return None
            byz_nbrs = [x for x in nbrs if x in self._byz]
            return byz_nbrs[0] if byz_nbrs else nbrs[0]

        walk_len = min(t0, k) - 1  # chain nodes a verifier may query
        for b in self._byz:
            chain = [b]
            avoid = {b}
            for _ in range(walk_len + 1):  # one spare hop past the walk budget
                nxt = pick_next(chain[-1], avoid)
                if nxt is None:
                    break
                chain.append(nxt)
                avoid.add(nxt)
            self._chain[b] = chain
            # answers: chain[j] "sent" the color in round t0 - j
            for j in range(1, len(chain)):
                r = t0 - j
                if r < 1:
                    break
                nxt_pred = chain[j + 1] if j + 1 < len(chain) else ORIGIN
                self._answers[(chain[j], r)] = ORIGIN if r == 1 else nxt_pred

    def injections_for(self, node, ctx):
        if node not in self._byz or ctx.t != self.inject_round:
            return []
        if self.inject_round == 1:
            return [Injection(color=self.value, pred=ORIGIN, replace=True)]
        chain = self._chain.get(node, [node])
        pred = chain[1] if len(chain) > 1 else ORIGIN
        return [Injection(color=self.value, pred=pred, replace=False)]

    def answer_query(self, target, asker, color, phase, subphase, r):
        if color == self.value and (target, r) in self._answers:
            return self._answers[(target, r)]
        return TRUTHFUL


def strategy_late_injector(inject_round: int | None = None,
                           magnitude: int | None = None) -> AdversaryStrategy:
    return _LateInjector(inject_round=inject_round, magnitude=magnitude)


class _TopologyLiar(AdversaryStrategy):
    """Hide a real H-child and insert a fake one in targeted setup reports.

    In ``"auto"`` mode each liar picks one honest victim within G-distance
    such that the hidden child is also visible to the victim, guaranteeing
    a contradiction between the lying report and the child's truthful one;
    everyone else receives the truth.  ``"broadcast"`` sends the lie to all
    G-neighbors.  The fake child is a phantom identifier outside the node
    range, which never answers anything.
    """

    name = "topology_liar"

    def __init__(self, target_mode: str = "auto"):
        if target_mode not in ("auto", "broadcast"):
            raise ValueError("target_mode must be 'auto' or 'broadcast'")
        super().__init__(target_mode=target_mode)
        self.target_mode = target_mode
        self._lies: dict[int, tuple[int, int]] = {}       # liar -> (hidden, phantom)
        self._targets: dict[int, set[int]] = {}           # liar -> receivers of the lie
        self._ports: dict[int, tuple[int, ...]] = {}

    def prepare(self, run) -> None:
        topo = run.topo
        h = topo.h
        n = h.n
        byz = set(int(b) for b in run.byz_nodes)
        rng = run.adv_rng
        for b in sorted(byz):
            ports = tuple(int(x) for x in h.neighbors(b))
            self._ports[b] = ports
            nbrs = sorted(set(ports))
            if not nbrs:
                continue
            hidden = nbrs[0]
            phantom = n + b  # out-of-range index: guaranteed fake
            self._lies[b] = (hidden, phantom)
            if self.target_mode == "broadcast":
                self._targets[b] = set(int(x) for x in topo.l_neighbors(b))
            else:
                # honest victims that can hear both the lie and the hidden child
                candidates = [
                    v for v in sorted(set(int(x) for x in topo.l_neighbors(b)))
                    if v not in byz and v != hidden
                    and _within(h, v, b, topo.k - 1) and _within(h, v, hidden, topo.k)
                ]
                if candidates:
                    pick = candidates[int(rng.integers(0, len(candidates)))]
                    self._targets[b] = {pick}
                else:
                    self._targets[b] = set()

    def setup_report(self, node, receiver):
        if node in self._lies and receiver in self._targets.get(node, ()):
            hidden, phantom = self._lies[node]
            lst = list(self._ports[node])
            lst.remove(hidden)
            lst.append(phantom)
            return lst
        return None

    def lie_receivers(self):
        out: set[int] = set()
        for t in self._targets.values():
            out |= t
        return out

    def targeted_victims(self) -> dict[int, set[int]]:
        return {b: set(t) for b, t in self._targets.items()}


def _within(h, a: int, b: int, r: int) -> bool:
    """dist_H(a, b) <= r, by truncated BFS from a."""
    if a == b:
        return True
    if r <= 0:
        return False
    seen = {a}
    frontier = [a]
    for _ in range(r):
        nxt = []
        for u in frontier:
            for w in h.simple_neighbors(u):
                w = int(w)
                if w == b:
                    return True
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return False


def strategy_topology_liar(target_mode: str = "auto") -> AdversaryStrategy:
    return _TopologyLiar(target_mode=target_mode)


class CompositeStrategy(AdversaryStrategy):
    """Run several strategies at once (e.g. topology lies plus injection)."""

    name = "composite"

    def __init__(self, parts: list[AdversaryStrategy]):
        super().__init__(parts=[p.name for p in parts])
        self.parts = list(parts)

    @property
    def suppress_sends(self):  # type: ignore[override]
        return any(p.suppress_sends for p in self.parts)

    @property
    def sends_reports(self):  # type: ignore[override]
        return all(p.sends_reports for p in self.parts)

    def prepare(self, run) -> None:
        for p in self.parts:
            p.prepare(run)

    def setup_report(self, node, receiver):
        for p in self.parts:
            rep = p.setup_report(node, receiver)
            if rep is not None:
                return rep
        return None

    def lie_receivers(self):
        out: set[int] = set()
        for p in self.parts:
            out |= p.lie_receivers()
        return out

    def injections_for(self, node, ctx):
        out = []
        for p in self.parts:
            out.extend(p.injections_for(node, ctx))
        return out

    def answer_query(self, target, asker, color, phase, subphase, r):
        for p in self.parts:
            ans = p.answer_query(target, asker, color, phase, subphase, r)
            if ans is not TRUTHFUL:
                return ans
        return TRUTHFUL


STRATEGY_NAMES = ("none", "honest_mimic", "silent", "max_injector",
                  "late_injector", "topology_liar", "composite")


def make_strategy(name: str, params: dict | None = None) -> AdversaryStrategy | None:
    """Build a strategy from its registry name; ``"none"`` means no adversary."""
    params = dict(params or {})
    if name == "none":
        return None
    if name == "honest_mimic":
        return strategy_honest_mimic()
    if name == "silent":
        return strategy_silent()
    if name == "max_injector":
        return strategy_max_injector(**params)
    if name == "late_injector":
        return strategy_late_injector(**params)
    if name == "topology_liar":
        return strategy_topology_liar(**params)
    if name == "composite":
        parts = [make_strategy(p["name"], p.get("params")) for p in params.get("parts", [])]
        parts = [p for p in parts if p is not None]
        if not parts:
            raise ValueError("composite strategy needs at least one part")
        return CompositeStrategy(parts)
    raise ValueError(f"unknown strategy: {name!r}")
