"""Support-estimation baseline: max-flood one geometric sample per node.

Every node draws X_u ~ geometric(1/2) and the network max-floods the
values over H; the global maximum is then ~log2(n) whp, which is the
whole estimator.  The point of carrying this protocol around is the
contrast: it concentrates beautifully with zero Byzantine nodes and is
arbitrarily wrong with one, since a single forged value becomes
everyone's maximum.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .graph import Topology
from .rng import stream

__all__ = ["SupportEstimate", "run_support_estimation",
           "write_baseline_csv", "write_baseline_summary"]


@dataclass(eq=False)
class SupportEstimate:
    """Outcome of one support-estimation run."""

    samples: np.ndarray            # X_u actually flooded (forced for byz)
    final_max: np.ndarray          # per-node highest value seen
    rounds_to_converge: int        # rounds until no message moved
    distinct_forwards: np.ndarray  # per-node count of distinct values sent
    byz: np.ndarray                # placement used

    @property
    def global_max(self) -> int:
        return int(self.final_max.max())

    @property
    def converged(self) -> bool:
        return bool((self.final_max == self.final_max.max()).all())


def run_support_estimation(topo: Topology,
                           byz: np.ndarray | None = None,
                           byz_value: int | None = None,
                           rounds: int | None = None,
                           seed: int = 0) -> SupportEstimate:
    """Max-flood geometric samples over H; Byzantine nodes flood byz_value.

    Each node forwards a value only the first time it becomes the node's
    new maximum, so per-node distinct forwards stay O(log n).  The flood
    runs until quiescent or the round budget (default comfortably above
    the H diameter) is exhausted.
    """
    h = topo.h
    n = h.n
    if rounds is None:
        rounds = 4 * math.ceil(math.log2(n)) + 10
    rng = stream(seed, "trial", 0)
    samples = rng.geometric(0.5, size=n).astype(np.int64)
    byz_mask = np.zeros(n, dtype=bool)
    if byz is not None:
        byz_idx = np.asarray(byz, dtype=np.int64)
        byz_mask[byz_idx] = True
        if byz_value is not None:
            samples[byz_idx] = int(byz_value)

    degrees = np.diff(h.arc_ptr)
    arc_src = np.repeat(np.arange(n, dtype=np.int64), degrees)
    arc_dst = h.arc_dst

    best = samples.copy()
    last_sent = np.zeros(n, dtype=np.int64)
    forwards = np.zeros(n, dtype=np.int64)
    rounds_run = 0
    for _ in range(rounds):
        send = best > last_sent
        if not send.any():
            break
        rounds_run += 1
        forwards[send] += 1
        last_sent[send] = best[send]
        m = send[arc_src]
        incoming = np.zeros(n, dtype=np.int64)
        np.maximum.at(incoming, arc_dst[m], best[arc_src[m]])
        np.maximum(best, incoming, out=best)

    return SupportEstimate(samples=samples, final_max=best,
                           rounds_to_converge=rounds_run,
                           distinct_forwards=forwards, byz=byz_mask)


def write_baseline_csv(est: SupportEstimate, topo: Topology, path: str,
                       trial: int = 0) -> None:
    """Per-node rows in the engine's CSV schema (estimate = final max)."""
    ids = topo.h.ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "node_id", "class", "decided", "estimate", "crashed"])
        for v in range(est.final_max.shape[0]):
            w.writerow([trial, int(ids[v]),
                        "byz" if est.byz[v] else "byz_safe",
                        True, int(est.final_max[v]), False])


def write_baseline_summary(est: SupportEstimate, path: str, *,
                           seed: int = 0, extra: dict | None = None) -> None:
    n = est.final_max.shape[0]
    summary = {
        "protocol": "baseline",
        "seed": seed,
        "n": n,
        "global_max": est.global_max,
        "converged": est.converged,
        "rounds_to_converge": est.rounds_to_converge,
        "byz_count": int(est.byz.sum()),
        "max_distinct_forwards": int(est.distinct_forwards.max()),
    }
    if extra:
        summary.update(extra)
    with open(path, "w") as fh:
        json.dump([summary], fh, indent=2)
        fh.write("\n")
