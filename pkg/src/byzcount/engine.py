"""Deterministic synchronous round simulator for the counting protocols.

One trial = build the topology, place Byzantine nodes, run setup
(adjacency exchange, reconstruction, crash-on-conflict), then the
phase/subphase/round loops until every honest uncrashed node has decided
or the phase cap is hit.  Messages sent in round t are delivered into
round t+1 inboxes; provenance-verification queries run in fixed
constant-length windows after each flooding round and are charged to the
round count without being simulated as individual messages.

Two interchangeable executors cover every run: a vectorized fast path
(per-round numpy scatter-max over the H arc list, with per-receiver
token verification only where Byzantine senders or distorted local views
are involved) and a per-node reference loop driven entirely by
``honest_node_step``/``byzantine_node_step`` plus ``deliver_round``.
Both consume identical color streams and fold identical per-subphase
state into the transcript hash, so equality of results is testable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .graph import (
    NodeClassification,
    Topology,
    augment_small_world,
    classify_nodes,
    generate_h_graph,
    place_byzantine,
)
from .protocol import (
    ORIGIN,
    NodeState,
    RoundContext,
    Token,
    TopologyConflict,
    byzantine_node_step,
    continuation_threshold,
    honest_node_step,
    phase_params,
    reconstruct_local_topology,
    verify_color_provenance,
)
from .adversary import TRUTHFUL, make_strategy, STRATEGY_NAMES
from .rng import stream

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunResult",
    "SubphaseTrace",
    "run_experiment",
    "run_trials",
    "deliver_round",
    "verification_subround_scheduler",
    "collect_metrics",
    "simulate_subphase",
    "write_trial_csv",
    "write_summary_json",
]


class ConfigError(ValueError):
    """An experiment configuration violates its invariants."""


_CONFIG_FIELDS = (
    "n", "d", "delta", "epsilon", "seed", "algorithm", "strategy",
    "strategy_params", "phase_cap", "subphase_factor", "alpha_variant",
    "trials", "band", "a_radius", "tree_radius", "relax_degree", "engine",
)


@dataclass
class ExperimentConfig:
    """Everything one run needs; defaults match the protocol regime d=8.

    ``algorithm`` selects the undefended ("basic") or hardened
    ("byzantine") protocol; ``strategy`` names the adversary ("none"
    means no Byzantine placement at all).  ``band`` are multipliers of
    log2(n) bounding acceptable estimates for success accounting.
    ``engine`` picks the vectorized fast path or the per-node reference
    loop (results are identical; the reference loop is for small n).
    """

    n: int = 1024
    d: int = 8
    delta: float = 0.6
    epsilon: float = 0.1
    seed: int = 0
    algorithm: str = "basic"
    strategy: str = "none"
    strategy_params: dict = field(default_factory=dict)
    phase_cap: int | None = None
    subphase_factor: int | str = 1
    alpha_variant: str = "pseudocode"
    trials: int = 1
    band: tuple[float, float] = (0.0, 4.0)
    a_radius: int | None = None
    tree_radius: int | None = None
    relax_degree: bool = False
    engine: str = "fast"

    def validate(self) -> "ExperimentConfig":
        if not isinstance(self.n, int) or self.n < 3:
            raise ConfigError("n: need an integer >= 3")
        if not isinstance(self.d, int) or self.d < 2 or self.d % 2:
            raise ConfigError("d: need an even integer >= 2")
        if self.d < 8 and not self.relax_degree:
            raise ConfigError("d: protocol runs need d >= 8 (set relax_degree for fixtures)")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon: need 0 < epsilon < 1")
        delta_floor = 3.0 / self.d if not self.relax_degree else 0.0
        if not delta_floor < self.delta <= 1.0:
            raise ConfigError(f"delta: need 3/d = {3.0 / self.d:.3f} < delta <= 1")
        if self.algorithm not in ("basic", "byzantine"):
            raise ConfigError("algorithm: must be 'basic' or 'byzantine'")
        if self.strategy not in STRATEGY_NAMES:
            raise ConfigError(f"strategy: unknown name {self.strategy!r}")
        if self.alpha_variant not in ("pseudocode", "prose"):
            raise ConfigError("alpha_variant: must be 'pseudocode' or 'prose'")
        if self.engine not in ("fast", "reference"):
            raise ConfigError("engine: must be 'fast' or 'reference'")
        if self.phase_cap is not None and self.phase_cap < 1:
            raise ConfigError("phase_cap: must be >= 1")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials: need an integer >= 1")
        if self.subphase_factor != "phase":
            try:
                ok = int(self.subphase_factor) >= 1
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise ConfigError("subphase_factor: integer >= 1 or 'phase'")
        lo, hi = self.band
        if not (0.0 <= lo <= hi):
            raise ConfigError("band: need 0 <= lo <= hi")
        if not isinstance(self.strategy_params, dict):
            raise ConfigError("strategy_params: must be a mapping")
        return self

    def resolved_phase_cap(self) -> int:
        if self.phase_cap is not None:
            return self.phase_cap
        return max(4, math.ceil(10 * math.log2(self.n)))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["band"] = list(self.band)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = sorted(set(data) - set(_CONFIG_FIELDS))
        if unknown:
            raise ConfigError(f"config: unknown fields {', '.join(unknown)}")
        kwargs = dict(data)
        if "band" in kwargs:
            band = kwargs["band"]
            if (not isinstance(band, (list, tuple)) or len(band) != 2):
                raise ConfigError("band: need [lo, hi]")
            kwargs["band"] = (float(band[0]), float(band[1]))
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from exc
        return cfg.validate()


@dataclass
class _Counters:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0          # non-edge or spoofed-sender messages
    queries: int = 0          # provenance queries issued
    rejected: int = 0         # tokens failing verification
    malformed: int = 0        # tokens with bad stamps, dropped by receivers


def verification_subround_scheduler(t: int, k: int) -> tuple[tuple[str, int], ...]:
    """Fixed query/answer delivery steps appended to flooding round t.

    Each of the up-to-(k-1) chain depths gets one query step and one
    answer step, giving a constant window of 2(k-1) steps regardless of
    how many queries are actually issued (no timing side channel).
    """
    if t < 1:
        raise ValueError("round index must be >= 1")
    steps = []
    for depth in range(1, k):
        steps.append(("query", depth))
        steps.append(("answer", depth))
    return tuple(steps)


def deliver_round(outboxes, topo: Topology, counters: _Counters) -> dict[int, list[Token]]:
    """Move every round-t message into its target's round t+1 inbox.

    Messages with a spoofed sender ID or a target that is not a G-neighbor
    of the sender are dropped and counted; everything else is delivered.
    """
    inboxes: dict[int, list[Token]] = {}
    for sender, pairs in outboxes.items():
        for dst, tok in pairs:
            counters.sent += 1
            if tok.src != sender or not _is_g_edge(topo, sender, dst):
                counters.dropped += 1
                continue
            counters.delivered += 1
            inboxes.setdefault(dst, []).append(tok)
    return inboxes


def _is_g_edge(topo: Topology, u: int, v: int) -> bool:
    if not (0 <= u < topo.h.n and 0 <= v < topo.h.n):
        return False
    row = topo.l_idx[topo.l_ptr[u]:topo.l_ptr[u + 1]]
    pos = np.searchsorted(row, v)
    return pos < row.size and row[pos] == v


class _TrueView:
    """Adjacency oracle over the real graph, standing in for a faithful
    reconstruction.

    Sound because every chain node a verifier can touch lies within
    B_H(center, k), where a truthful reconstruction agrees edge-for-edge
    with the real graph.
    """

    __slots__ = ("_h", "center", "k")

    def __init__(self, topo: Topology, center: int):
        self._h = topo.h
        self.center = center
        self.k = topo.k

    def h_adjacent(self, a: int, b: int) -> bool:
        h = self._h
        if not (0 <= a < h.n and 0 <= b < h.n):
            return False
        row = h.simple_idx[h.simple_ptr[a]:h.simple_ptr[a + 1]]
        pos = np.searchsorted(row, b)
        return pos < row.size and row[pos] == b


def _trial_seed(seed: int, trial: int) -> int:
    return int(stream(seed, "trial", trial).integers(0, 2**63 - 1))


class _Run:
    """Mutable per-trial state shared by both executors."""

    def __init__(self, cfg: ExperimentConfig, trial: int,
                 topo: Topology | None = None,
                 byz: np.ndarray | None = None):
        cfg.validate()
        self.cfg = cfg
        self.trial = trial
        self.tseed = _trial_seed(cfg.seed, trial)
        if topo is None:
            h = generate_h_graph(cfg.n, cfg.d, seed=self.tseed)
            topo = augment_small_world(h)
        self.topo = topo
        self.n = topo.h.n
        self.d = topo.h.d
        self.k = topo.k
        h = topo.h
        self.degrees = np.diff(h.arc_ptr).astype(np.int64)
        self.arc_src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        self.arc_dst = h.arc_dst.astype(np.int64, copy=False)

        if byz is not None:
            self.byz_nodes = np.asarray(byz, dtype=np.int64)
        elif cfg.strategy != "none":
            self.byz_nodes = place_byzantine(self.n, cfg.delta, seed=self.tseed)
        else:
            self.byz_nodes = np.zeros(0, dtype=np.int64)
        self.byz_mask = np.zeros(self.n, dtype=bool)
        self.byz_mask[self.byz_nodes] = True

        self.strategy = make_strategy(cfg.strategy, cfg.strategy_params)
        self.adv_rng = stream(cfg.seed, "adversary", trial)
        if self.strategy is not None:
            self.strategy.prepare(self)
        self.suppressed = np.zeros(self.n, dtype=bool)
        if self.strategy is not None and self.strategy.suppress_sends:
            self.suppressed[self.byz_nodes] = True

        self.counters = _Counters()
        self.crashed = np.zeros(self.n, dtype=bool)
        self.views: dict[int, object] = {}
        self.lie_rx_set: set[int] = set()
        self.active = np.ones(self.n, dtype=bool)
        self.decided = np.zeros(self.n, dtype=np.int64)
        self.phase_continue = np.zeros(self.n, dtype=bool)
        self.rounds_total = 0
        self.rounds_setup = 0
        self.per_phase: list[dict] = []
        self.hasher = hashlib.blake2b(digest_size=16)
        self.states: dict[int, NodeState] | None = None

        self.classification = classify_nodes(
            topo, self.byz_nodes, a_radius=cfg.a_radius,
            tree_radius=cfg.tree_radius, delta=cfg.delta)

    # -- full-information hooks for strategies ---------------------------

    def peek_colors(self, phase: int, subphase: int) -> np.ndarray:
        """The exact color vector honest nodes will draw (adversary may look)."""
        return self.colors(phase, subphase)

    def colors(self, phase: int, subphase: int) -> np.ndarray:
        rng = stream(self.cfg.seed, "colors", self.trial, phase, subphase)
        return rng.geometric(0.5, size=self.n).astype(np.int64)

    # -- setup ----------------------------------------------------------

    def truthful_report(self, v: int) -> list[int]:
        return [int(x) for x in self.topo.h.neighbors(v)]

    def report_for(self, sender: int, receiver: int) -> list[int] | None:
        """The adjacency list ``sender`` hands ``receiver``; None = silent."""
        if self.byz_mask[sender] and self.strategy is not None:
            if not self.strategy.sends_reports:
                return None
            rep = self.strategy.setup_report(int(sender), int(receiver))
            if rep is not None:
                return list(rep)
        return self.truthful_report(sender)

    def run_setup(self, full: bool) -> None:
        """One round of adjacency-list exchange; reconstruction and crashes.

        ``full`` reconstructs every node's view (reference executor);
        otherwise only receivers of untruthful reports are reconstructed
        and everyone else keeps a faithful stand-in view, which is exact
        because truthful reports always reconstruct faithfully.
        """
        cfg = self.cfg
        report_senders = ~self.suppressed
        n_reports = int(np.diff(self.topo.l_ptr)[report_senders].sum())
        self.counters.sent += n_reports
        self.counters.delivered += n_reports
        self.rounds_setup = 1
        if cfg.algorithm != "byzantine":
            return
        if self.strategy is not None:
            self.lie_rx_set = {int(v) for v in self.strategy.lie_receivers()
                               if not self.byz_mask[v]}
        receivers = range(self.n) if full else sorted(self.lie_rx_set)
        for v in receivers:
            reports = {}
            for u in self.topo.l_neighbors(v):
                u = int(u)
                rep = self.report_for(u, v)
                if rep is not None:
                    reports[u] = rep
            res = reconstruct_local_topology(
                v, tuple(self.truthful_report(v)), reports, self.k,
                expected_degree=self.d)
            if isinstance(res, TopologyConflict):
                if not self.byz_mask[v]:
                    self.crashed[v] = True
            else:
                self.views[v] = res
        self.lie_rx_set = {v for v in self.lie_rx_set if not self.crashed[v]}
        self.hasher.update(b"setup" + self.crashed.tobytes())

    # -- verification ----------------------------------------------------

    def make_query_fn(self, asker: int, phase: int, subphase: int, get_log):
        def query(target: int, color: int, r: int):
            self.counters.queries += 1
            if not (0 <= target < self.n):
                return None  # phantom identifiers answer nothing
            if self.crashed[target]:
                return None
            if self.byz_mask[target] and self.strategy is not None:
                ans = self.strategy.answer_query(
                    int(target), int(asker), int(color), phase, subphase, int(r))
                if ans is not TRUTHFUL:
                    return ans
            entry = get_log(int(target), int(r))
            if entry is None:
                return None
            sent_color, sent_pred = entry
            return sent_pred if sent_color == color else None
        return query

    def verify_token(self, receiver: int, tok: Token,
                     phase: int, subphase: int, get_log) -> bool:
        view = self.views.get(receiver)
        if view is None:
            view = _TrueView(self.topo, receiver)
        qfn = self.make_query_fn(receiver, phase, subphase, get_log)
        return verify_color_provenance(view, tok, qfn)

    def fold(self, phase: int, subphase: int, k_rows: np.ndarray) -> None:
        self.hasher.update(struct.pack("<qq", phase, subphase))
        self.hasher.update(np.ascontiguousarray(k_rows[1:]).tobytes())
        self.hasher.update(self.decided.tobytes())


# ---------------------------------------------------------------------------
# fast executor
# ---------------------------------------------------------------------------


def _fast_subphase(run: _Run, i: int, j: int, last: bool,
                   colors: np.ndarray, threshold: float) -> np.ndarray:
    """One subphase of phase i on the vectorized path; returns k_rows."""
    n, k = run.n, run.k
    cnt = run.counters
    h = run.topo.h
    byz, crashed, supp = run.byz_mask, run.crashed, run.suppressed
    verifying = run.cfg.algorithm == "byzantine"
    proc = ~crashed & ~supp
    arc_src, arc_dst = run.arc_src, run.arc_dst

    origin = proc & run.active
    best = np.where(origin, colors, 0).astype(np.int64)
    best_src = np.full(n, ORIGIN, dtype=np.int64)
    last_sent = best.copy()
    k_rows = np.zeros((i + 1, n), dtype=np.int64)
    k_rows[1] = best

    send_mask = origin.copy()
    send_color = best.copy()
    send_pred = np.full(n, ORIGIN, dtype=np.int64)
    log: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    extras_next: list[tuple[int, int, int, int]] = []

    def get_log(target: int, r: int):
        ent = log.get(r)
        if ent is None or not ent[0][target]:
            return None
        return int(ent[1][target]), int(ent[2][target])

    def apply_injections(t: int) -> None:
        if run.strategy is None or run.byz_nodes.size == 0:
            return
        ctx = RoundContext(phase=i, subphase=j, t=t, flood_rounds=i,
                           threshold=threshold, last_subphase=last)
        for b in run.byz_nodes:
            b = int(b)
            if supp[b]:
                continue
            for inj in run.strategy.injections_for(b, ctx):
                if inj.replace:
                    if inj.targets is not None:
                        raise NotImplementedError(
                            "replace injections must broadcast on H-ports")
                    send_mask[b] = True
                    send_color[b] = inj.color
                    send_pred[b] = inj.pred
                    best[b] = inj.color
                    best_src[b] = inj.pred
                    last_sent[b] = inj.color
                    k_rows[1 if t == 1 else t - 1, b] = inj.color
                else:
                    targets = (inj.targets if inj.targets is not None
                               else run.truthful_report(b))
                    for dst in targets:
                        cnt.sent += 1
                        if _is_g_edge(run.topo, b, int(dst)):
                            cnt.delivered += 1
                            extras_next.append((b, int(dst), int(inj.color), int(inj.pred)))
                        else:
                            cnt.dropped += 1

    apply_injections(1)
    log[1] = (send_mask.copy(), send_color.copy(), send_pred.copy())
    n_sent = int(run.degrees[send_mask].sum())
    cnt.sent += n_sent
    cnt.delivered += n_sent

    for t in range(2, i + 2):
        extras, extras_next = extras_next, []
        m = send_mask[arc_src]
        asrc = arc_src[m]
        adst = arc_dst[m]
        acol = send_color[asrc]
        apred = send_pred[asrc]

        top = np.zeros(n, dtype=np.int64)
        if asrc.size:
            np.maximum.at(top, adst, acol)
        for (_, dv, c, _) in extras:
            if c > top[dv]:
                top[dv] = c
        minsrc = np.full(n, n, dtype=np.int64)
        if asrc.size:
            eq = acol == top[adst]
            np.minimum.at(minsrc, adst[eq], asrc[eq])
        for (s, dv, c, _) in extras:
            if c == top[dv] and s < minsrc[dv]:
                minsrc[dv] = s

        recv_col = np.where(proc, top, 0)
        recv_src = minsrc

        if verifying:
            hop = t - 1
            wl = min(hop, k) - 1
            touched = np.zeros(n, dtype=bool)
            if asrc.size:
                touched[adst[byz[asrc]]] = True
            for (_, dv, _, _) in extras:
                touched[dv] = True
            for v in run.lie_rx_set:
                touched[v] = True
            auto = proc & ~touched & (top >= 1)
            cnt.queries += wl * int(auto.sum())

            hot = touched & proc
            if hot.any():
                inbox_map: dict[int, list[tuple[int, int, int]]] = {
                    int(v): [] for v in np.flatnonzero(hot)}
                if asrc.size:
                    tm = hot[adst]
                    for s, dv, c, p in zip(asrc[tm], adst[tm], acol[tm], apred[tm]):
                        inbox_map[int(dv)].append((int(c), int(s), int(p)))
                for s, dv, c, p in extras:
                    if dv in inbox_map:
                        inbox_map[dv].append((c, s, p))
                for v, items in inbox_map.items():
                    items.sort(key=lambda x: (-x[0], x[1]))
                    acc_c, acc_s = 0, n
                    for c, s, p in items:
                        if byz[s] or v in run.lie_rx_set:
                            tok = Token(color=c, phase=i, subphase=j,
                                        hop=hop, src=s, pred=p)
                            if run.verify_token(v, tok, i, j, get_log):
                                acc_c, acc_s = c, s
                                break
                            cnt.rejected += 1
                        else:
                            cnt.queries += wl
                            acc_c, acc_s = c, s
                            break
                    recv_col[v] = acc_c
                    recv_src[v] = acc_s

        got = proc & (recv_col >= 1)
        np.maximum(k_rows[t - 1], np.where(got, recv_col, 0), out=k_rows[t - 1])
        gain = got & (recv_col > best)
        best[gain] = recv_col[gain]
        best_src[gain] = recv_src[gain]

        if t <= i:
            send_mask = proc & (best > last_sent)
            send_color = best.copy()
            send_pred = best_src.copy()
            last_sent = np.where(send_mask, best, last_sent)
            apply_injections(t)
            log[t] = (send_mask.copy(), send_color.copy(), send_pred.copy())
            n_sent = int(run.degrees[send_mask].sum())
            cnt.sent += n_sent
            cnt.delivered += n_sent
        else:
            apply_injections(t)  # byz may still emit; delivered then discarded

    elig = run.active & proc
    prev = k_rows[1:i].max(axis=0) if i >= 2 else np.zeros(n, dtype=np.int64)
    cont = elig & (k_rows[i] > prev) & (k_rows[i] > threshold)
    run.phase_continue |= cont
    if last:
        dec = elig & ~run.phase_continue
        run.decided[dec] = i
        run.active[dec] = False
        run.phase_continue[:] = False
    run.fold(i, j, k_rows)
    return k_rows


# ---------------------------------------------------------------------------
# reference executor
# ---------------------------------------------------------------------------


def _init_states(run: _Run) -> dict[int, NodeState]:
    states = {}
    for v in range(run.n):
        ports = tuple(int(x) for x in run.topo.h.neighbors(v))
        states[v] = NodeState(node=v, ports=ports, crashed=bool(run.crashed[v]))
    return states


def _reference_subphase(run: _Run, i: int, j: int, last: bool,
                        colors: np.ndarray, threshold: float) -> np.ndarray:
    states = run.states
    assert states is not None

    def get_log(target: int, r: int):
        return states[target].fwd_log.get((i, j, r))

    verify_cb = None
    if run.cfg.algorithm == "byzantine":
        def verify_cb(node: int, tok: Token) -> bool:
            return run.verify_token(node, tok, i, j, get_log)

    inboxes: dict[int, list[Token]] = {}
    for t in range(1, i + 2):
        outboxes: dict[int, list[tuple[int, Token]]] = {}
        ctx_common = dict(phase=i, subphase=j, t=t, flood_rounds=i,
                          threshold=threshold, last_subphase=last,
                          verify=verify_cb)
        for v in range(run.n):
            ctx = RoundContext(own_color=int(colors[v]), **ctx_common)
            policy = run.strategy if run.byz_mask[v] else None
            nst, out = byzantine_node_step(states[v], inboxes.get(v, []), ctx, policy)
            states[v] = nst
            if out:
                outboxes[v] = out
        inboxes = deliver_round(outboxes, run.topo, run.counters)

    k_rows = np.zeros((i + 1, n_ := run.n), dtype=np.int64)
    rejected = malformed = 0
    for v in range(n_):
        kv = states[v].k_values
        for r in range(1, i + 1):
            k_rows[r, v] = kv.get(r, 0)
        st = states[v]
        run.decided[v] = st.decided if st.decided is not None else 0
        run.active[v] = st.active
        rejected += st.rejected
        malformed += st.dropped
    # per-node tallies are cumulative across subphases, so overwrite
    run.counters.rejected = rejected
    run.counters.malformed = malformed
    run.fold(i, j, k_rows)
    return k_rows


# ---------------------------------------------------------------------------
# run driver and metrics
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RunResult:
    """Everything measured in one trial."""

    config: dict
    trial: int
    trial_seed: int
    n: int
    d: int
    node_ids: np.ndarray
    class_labels: np.ndarray
    decided: np.ndarray          # 0 = no decision
    crashed: np.ndarray
    byz_mask: np.ndarray
    success_fraction: float
    byz_safe_success_fraction: float | None
    decided_fraction: float
    crashed_honest: int
    non_deciders: int
    capped: bool
    rounds_total: int
    rounds_setup: int
    messages_sent: int
    messages_delivered: int
    messages_dropped: int
    queries_total: int
    tokens_rejected: int
    tokens_malformed: int
    per_phase: list
    transcript_hash: str

    @property
    def estimates(self) -> np.ndarray:
        return self.decided

    def to_summary(self) -> dict:
        honest = ~self.byz_mask
        dec = self.decided[honest & ~self.crashed]
        dec = dec[dec > 0]
        return {
            "protocol": self.config.get("algorithm"),
            "trial": self.trial,
            "trial_seed": self.trial_seed,
            "config": self.config,
            "success_fraction": self.success_fraction,
            "byz_safe_success_fraction": self.byz_safe_success_fraction,
            "decided_fraction": self.decided_fraction,
            "median_estimate": float(np.median(dec)) if dec.size else None,
            "crashed_honest": self.crashed_honest,
            "non_deciders": self.non_deciders,
            "capped": self.capped,
            "rounds_total": self.rounds_total,
            "rounds_setup": self.rounds_setup,
            "messages_total": self.messages_sent,
            "messages_delivered": self.messages_delivered,
            "messages_dropped": self.messages_dropped,
            "queries_total": self.queries_total,
            "tokens_rejected": self.tokens_rejected,
            "per_phase": self.per_phase,
            "transcript_hash": self.transcript_hash,
        }


def collect_metrics(cfg: ExperimentConfig, *, trial: int, trial_seed: int,
                    node_ids: np.ndarray, classification: NodeClassification,
                    decided: np.ndarray, crashed: np.ndarray,
                    byz_mask: np.ndarray, counters: _Counters,
                    rounds_total: int, rounds_setup: int,
                    per_phase: list, capped: bool,
                    transcript_hash: str) -> RunResult:
    """Final accounting: success fractions against the configured band.

    The denominator is all honest uncrashed nodes; in-band deciders make
    the numerator, so nodes that never decided (phase cap) count against
    success and are also reported separately.
    """
    n = decided.shape[0]
    log_n = math.log2(cfg.n)
    lo = cfg.band[0] * log_n
    hi = cfg.band[1] * log_n
    honest = ~byz_mask
    alive = honest & ~crashed
    deciders = alive & (decided > 0)
    in_band = deciders & (decided >= lo) & (decided <= hi)

    denom = int(alive.sum())
    success = float(in_band.sum() / denom) if denom else 0.0
    safe = classification.byz_safe & alive
    safe_dec = safe & (decided > 0)
    safe_in = safe_dec & in_band
    safe_frac = (float(safe_in.sum() / safe_dec.sum())
                 if int(safe_dec.sum()) else None)

    labels = np.where(byz_mask, "byz",
                      np.where(classification.bus, "bus", "byz_safe"))
    return RunResult(
        config=cfg.to_dict(),
        trial=trial,
        trial_seed=trial_seed,
        n=n,
        d=cfg.d,
        node_ids=node_ids,
        class_labels=labels,
        decided=decided.copy(),
        crashed=crashed.copy(),
        byz_mask=byz_mask.copy(),
        success_fraction=success,
        byz_safe_success_fraction=safe_frac,
        decided_fraction=float(deciders.sum() / denom) if denom else 0.0,
        crashed_honest=int((honest & crashed).sum()),
        non_deciders=int((alive & (decided == 0)).sum()),
        capped=capped,
        rounds_total=rounds_total,
        rounds_setup=rounds_setup,
        messages_sent=counters.sent,
        messages_delivered=counters.delivered,
        messages_dropped=counters.dropped,
        queries_total=counters.queries,
        tokens_rejected=counters.rejected,
        tokens_malformed=counters.malformed,
        per_phase=per_phase,
        transcript_hash=transcript_hash,
    )


def run_experiment(cfg: ExperimentConfig, trial: int = 0,
                   topo: Topology | None = None,
                   byz: np.ndarray | None = None) -> RunResult:
    """Execute one trial of the configured experiment, deterministically.

    ``topo``/``byz`` may be supplied to reuse a prebuilt topology or a
    fixed placement (fixtures); by default both derive from the trial
    seed.
    """
    run = _Run(cfg, trial, topo=topo, byz=byz)
    reference = cfg.engine == "reference"
    run.run_setup(full=reference)
    if reference:
        run.states = _init_states(run)
    subphase = _reference_subphase if reference else _fast_subphase

    overhead = 2 * (run.k - 1) if cfg.algorithm == "byzantine" else 0
    cap = cfg.resolved_phase_cap()
    capped = False
    i = 1
    while True:
        honest_active = run.active & ~run.byz_mask & ~run.crashed
        if not honest_active.any():
            break
        if i > cap:
            capped = True
            break
        pp = phase_params(i, cfg.epsilon, cfg.d, cfg.alpha_variant,
                          cfg.subphase_factor)
        before = (run.counters.sent, run.counters.queries)
        decided_before = int((run.decided > 0).sum())
        for j in range(1, pp.subphases + 1):
            colors = run.colors(i, j)
            subphase(run, i, j, j == pp.subphases, colors, pp.threshold)
        phase_rounds = pp.subphases * (i + i * overhead)
        run.rounds_total += phase_rounds
        run.per_phase.append({
            "phase": i,
            "subphases": pp.subphases,
            "rounds": phase_rounds,
            "messages": run.counters.sent - before[0],
            "queries": run.counters.queries - before[1],
            "deciders": int((run.decided > 0).sum()) - decided_before,
        })
        i += 1

    run.hasher.update(struct.pack("<qqq", run.counters.sent,
                                  run.counters.queries, run.counters.rejected))
    return collect_metrics(
        cfg, trial=trial, trial_seed=run.tseed, node_ids=run.topo.h.ids,
        classification=run.classification, decided=run.decided,
        crashed=run.crashed, byz_mask=run.byz_mask, counters=run.counters,
        rounds_total=run.rounds_total, rounds_setup=run.rounds_setup,
        per_phase=run.per_phase, capped=capped,
        transcript_hash=run.hasher.hexdigest())


def run_trials(cfg: ExperimentConfig) -> list[RunResult]:
    return [run_experiment(cfg, trial=t) for t in range(cfg.trials)]


# ---------------------------------------------------------------------------
# single-subphase harness (fixtures and unit experiments)
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SubphaseTrace:
    """What one isolated subphase did, for fixture-level assertions."""

    phase: int
    k_rows: np.ndarray           # row t = k_t per node
    continue_event: np.ndarray
    crashed: np.ndarray
    queries: int
    messages_sent: int
    messages_dropped: int
    rejected: int


def simulate_subphase(topo: Topology, phase: int, *,
                      colors: np.ndarray | None = None,
                      byz: np.ndarray | None = None,
                      strategy: str = "none",
                      strategy_params: dict | None = None,
                      algorithm: str = "byzantine",
                      epsilon: float = 0.1,
                      threshold: float | None = None,
                      seed: int = 0,
                      relax_degree: bool = False) -> SubphaseTrace:
    """Run exactly one subphase of the given phase on a fixed topology.

    Colors may be scripted; Byzantine placement may be pinned.  Setup
    (and its crash semantics) runs first when the hardened algorithm is
    selected.
    """
    cfg = ExperimentConfig(
        n=topo.h.n, d=topo.h.d, seed=seed, algorithm=algorithm,
        strategy=strategy, strategy_params=dict(strategy_params or {}),
        epsilon=epsilon, relax_degree=relax_degree,
        delta=1.0 if topo.h.d < 8 else 0.6)
    run = _Run(cfg, trial=0, topo=topo,
               byz=byz if byz is not None else np.zeros(0, dtype=np.int64))
    run.run_setup(full=False)
    if colors is None:
        colors = run.colors(phase, 1)
    colors = np.asarray(colors, dtype=np.int64)
    if colors.shape != (run.n,):
        raise ValueError("colors must have one entry per node")
    thr = threshold if threshold is not None else continuation_threshold(phase, run.d)
    cont_before = run.phase_continue.copy()
    k_rows = _fast_subphase(run, phase, 1, False, colors, thr)
    return SubphaseTrace(
        phase=phase,
        k_rows=k_rows,
        continue_event=run.phase_continue & ~cont_before,
        crashed=run.crashed.copy(),
        queries=run.counters.queries,
        messages_sent=run.counters.sent,
        messages_dropped=run.counters.dropped,
        rejected=run.counters.rejected,
    )


# ---------------------------------------------------------------------------
# emitters
# ---------------------------------------------------------------------------


def write_trial_csv(results: list[RunResult], path: str) -> None:
    """One row per node per trial: trial,node_id,class,decided,estimate,crashed."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "node_id", "class", "decided", "estimate", "crashed"])
        for res in results:
            for v in range(res.n):
                est = int(res.decided[v])
                w.writerow([
                    res.trial,
                    int(res.node_ids[v]),
                    str(res.class_labels[v]),
                    bool(est > 0),
                    est if est > 0 else "",
                    bool(res.crashed[v]),
                ])


def write_summary_json(results: list[RunResult], path: str) -> None:
    """One summary object per trial (config echo, fractions, counters, hash)."""
    with open(path, "w") as fh:
        json.dump([r.to_summary() for r in results], fh, indent=2)
        fh.write("\n")
