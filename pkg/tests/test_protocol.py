"""Protocol core: colors, schedules, the node state machine, setup
reconstruction, and provenance verification.

The six-node path trace is worked out by hand (colors scripted, every
message accounted for) and then checked through both executors.
"""

import math
from collections import deque
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzcount.engine import deliver_round, simulate_subphase
from byzcount.graph import (augment_small_world, census_locally_tree_like,
                            classify_nodes, generate_h_graph)
from byzcount.protocol import (
    ORIGIN,
    LocalView,
    NodeState,
    RoundContext,
    Token,
    TopologyConflict,
    alpha_subphases,
    continuation_threshold,
    draw_color,
    draw_colors,
    honest_node_step,
    phase_params,
    reconstruct_local_topology,
    verify_color_provenance,
)
from byzcount.rng import stream


# ---------------------------------------------------------------------------
# geometric colors
# ---------------------------------------------------------------------------

def test_color_distribution():
    rng = stream(0, "colors")
    colors = draw_colors(rng, 1_000_000)
    assert colors.min() >= 1
    assert abs((colors == 1).mean() - 0.5) < 0.002
    assert abs(colors.mean() - 2.0) < 0.01
    assert (colors >= 1).all()
    for r in range(2, 13):
        p = 2.0 ** (1 - r)
        tol = 4 * math.sqrt(p * (1 - p) / colors.size)
        assert abs((colors >= r).mean() - p) < tol, f"tail at r={r}"


def test_draw_color_scalar():
    rng = stream(1, "colors")
    c = draw_color(rng)
    assert isinstance(c, int) and c >= 1


# ---------------------------------------------------------------------------
# subphase counts and thresholds
# ---------------------------------------------------------------------------

def test_alpha_frozen_values():
    assert alpha_subphases(3, 0.1, 8) == 3
    assert alpha_subphases(1, 0.5, 8) == 3
    assert alpha_subphases(3, 0.1, 8, variant="prose") == 2
    assert [alpha_subphases(i, 0.1, 8) for i in range(1, 6)] == [6, 4, 3, 3, 3]
    assert [alpha_subphases(i, 0.1, 8) for i in range(3, 13)] == \
        [3, 3, 3, 4, 4, 4, 5, 5, 5, 5]


def test_alpha_is_non_decreasing_past_the_crossover():
    vals = [alpha_subphases(i, 0.1, 8) for i in range(3, 61)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("i,eps,d,variant", [
    (0, 0.1, 8, "pseudocode"),
    (3, 0.0, 8, "pseudocode"),
    (3, 1.2, 8, "pseudocode"),
    (3, 0.1, 1, "pseudocode"),
    (3, 0.1, 8, "nonsense"),
])
def test_alpha_rejects_bad_arguments(i, eps, d, variant):
    with pytest.raises(ValueError):
        alpha_subphases(i, eps, d, variant)


def test_threshold_frozen_values():
    assert continuation_threshold(1, 8) == pytest.approx(1.415037499278844, abs=1e-9)
    assert continuation_threshold(5, 8) == pytest.approx(10.398614767036197, abs=1e-9)
    assert continuation_threshold(2, 2) == 1.0


def test_threshold_strictly_increasing():
    vals = [continuation_threshold(i, 8) for i in range(1, 41)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("i,d", [(0, 8), (3, 1)])
def test_threshold_rejects_bad_arguments(i, d):
    with pytest.raises(ValueError):
        continuation_threshold(i, d)


def test_phase_params_factor_readings():
    base = phase_params(4, 0.1, 8)
    assert base.alpha == 3 and base.subphases == 3
    assert phase_params(4, 0.1, 8, subphase_factor=2).subphases == 6
    assert phase_params(4, 0.1, 8, subphase_factor="phase").subphases == 12
    assert base.threshold == continuation_threshold(4, 8)
    with pytest.raises(ValueError):
        phase_params(4, 0.1, 8, subphase_factor=0)


# ---------------------------------------------------------------------------
# honest node transitions, one round at a time
# ---------------------------------------------------------------------------

def _ctx(t, *, phase=3, threshold=2.0, own_color=None, last=False, verify=None):
    return RoundContext(phase=phase, subphase=1, t=t, flood_rounds=phase,
                        threshold=threshold, own_color=own_color,
                        last_subphase=last, verify=verify)


def _tok(color, hop, src, *, phase=3, subphase=1, pred=ORIGIN):
    return Token(color=color, phase=phase, subphase=subphase, hop=hop,
                 src=src, pred=pred)


def test_round_one_draws_and_floods():
    st, out = honest_node_step(NodeState(node=0, ports=(1, 2)), [],
                               _ctx(1, own_color=5))
    assert st.k_values == {1: 5} and st.best == 5 and st.last_sent == 5
    assert [dst for dst, _ in out] == [1, 2]
    assert all(t.color == 5 and t.hop == 1 and t.pred == ORIGIN for _, t in out)


def test_round_two_takes_the_maximum_and_forwards():
    st, _ = honest_node_step(NodeState(node=0, ports=(1, 2)), [],
                             _ctx(1, own_color=2))
    inbox = [_tok(3, 1, 1), _tok(5, 1, 2), _tok(2, 1, 3)]
    st, out = honest_node_step(st, inbox, _ctx(2))
    assert st.k_values == {1: 5}
    assert st.best == 5 and st.best_src == 2
    assert len(out) == 2 and out[0][1].color == 5 and out[0][1].hop == 2
    assert out[0][1].pred == 2


def test_malformed_tokens_are_dropped_not_accepted():
    st = NodeState(node=0, ports=(1,))
    st, _ = honest_node_step(st, [], _ctx(1, own_color=1))
    inbox = [
        _tok(9, 1, 1, phase=99),       # stale phase stamp
        _tok(9, 2, 1),                 # impossible hop for this round
        _tok(0, 1, 1),                 # non-positive color
        _tok(9, 1, 1, subphase=7),     # wrong subphase
    ]
    st, _ = honest_node_step(st, inbox, _ctx(2))
    assert st.dropped == 4
    assert st.k_values == {1: 1}


def test_rejected_tokens_are_counted_and_skipped():
    st = NodeState(node=0, ports=(1,))
    st, _ = honest_node_step(st, [], _ctx(1, own_color=1))
    veto = lambda node, tok: tok.color != 9
    st, _ = honest_node_step(st, [_tok(9, 1, 1), _tok(4, 1, 2)],
                             _ctx(2, verify=veto))
    assert st.rejected == 1
    assert st.k_values == {1: 4}


def test_crashed_node_is_silent():
    st = NodeState(node=0, ports=(1, 2), crashed=True)
    st, out = honest_node_step(st, [_tok(5, 1, 1)], _ctx(2))
    assert out == [] and st.k_values == {}


def test_decided_node_forwards_but_never_redecides():
    st = NodeState(node=0, ports=(1,), active=False, decided=2)
    st, out = honest_node_step(st, [], _ctx(1, own_color=7))
    assert out == [] and st.k_values == {}        # no fresh color
    st, out = honest_node_step(st, [_tok(6, 1, 1)], _ctx(2))
    assert len(out) == 1 and out[0][1].color == 6  # still a relay
    st, _ = honest_node_step(st, [], _ctx(4, last=True))
    assert st.decided == 2 and st.active is False


def test_continuation_criterion_and_flag_rearm():
    # k_3 = 6 beats k_1=5, k_2=5 and the threshold: the flag clears, the
    # node survives the last subphase undecided, and the flag rearms.
    # (A round-t arrival carries hop t-1 and lands in k_{t-1}, so the
    # decisive k_3 token arrives in the criterion round t=4.)
    st = NodeState(node=0, ports=(1,))
    st, _ = honest_node_step(st, [], _ctx(1, own_color=5))
    st, _ = honest_node_step(st, [_tok(5, 1, 1)], _ctx(2))
    st, _ = honest_node_step(st, [_tok(5, 2, 1, pred=2)], _ctx(3))
    st, _ = honest_node_step(st, [_tok(6, 3, 1, pred=2)], _ctx(4, last=True))
    assert st.k_values == {1: 5, 2: 5, 3: 6}
    assert st.decided is None and st.active
    assert st.flag_terminate is True


def test_no_new_record_means_decision():
    st = NodeState(node=0, ports=(1,))
    st, _ = honest_node_step(st, [], _ctx(1, own_color=5))
    st, _ = honest_node_step(st, [_tok(4, 1, 1)], _ctx(2))
    st, _ = honest_node_step(st, [_tok(3, 2, 1, pred=2)], _ctx(3))
    st, _ = honest_node_step(st, [], _ctx(4, last=True))
    assert st.k_values == {1: 5, 2: 3}
    assert st.decided == 3 and st.active is False


# ---------------------------------------------------------------------------
# the six-node path, both executors
# ---------------------------------------------------------------------------

PATH_COLORS = np.array([2, 1, 4, 1, 3, 1])
PATH_K1 = [2, 4, 4, 4, 3, 3]
PATH_K2 = [4, 0, 4, 0, 4, 0]
PATH_CONTINUERS = [0, 4]
PATH_DECIDERS = [1, 2, 3, 5]
PATH_FLOOD_MESSAGES = 15            # 10 at t=1, then 5 from nodes 1, 3, 5


def test_path_trace_reference_route(path6):
    h = path6.h
    states = {v: NodeState(node=v, ports=tuple(int(x) for x in h.neighbors(v)))
              for v in range(6)}
    counters = SimpleNamespace(sent=0, delivered=0, dropped=0)
    inboxes: dict[int, list] = {}
    for t in (1, 2, 3):
        outboxes = {}
        for v in range(6):
            ctx = RoundContext(phase=2, subphase=1, t=t, flood_rounds=2,
                               threshold=1.0, last_subphase=True,
                               own_color=int(PATH_COLORS[v]) if t == 1 else None)
            states[v], outboxes[v] = honest_node_step(
                states[v], inboxes.get(v, []), ctx)
        inboxes = deliver_round(outboxes, path6, counters)

    assert counters.sent == PATH_FLOOD_MESSAGES
    assert counters.dropped == 0
    for v in range(6):
        assert states[v].k_values.get(1, 0) == PATH_K1[v]
        assert states[v].k_values.get(2, 0) == PATH_K2[v]
        decided = states[v].decided
        assert (decided == 2) == (v in PATH_DECIDERS)
        assert states[v].active == (v in PATH_CONTINUERS)


def test_path_trace_fast_route(path6):
    tr = simulate_subphase(path6, 2, colors=PATH_COLORS, algorithm="basic",
                           relax_degree=True)
    np.testing.assert_array_equal(tr.k_rows[1], PATH_K1)
    np.testing.assert_array_equal(tr.k_rows[2], PATH_K2)
    np.testing.assert_array_equal(np.flatnonzero(tr.continue_event),
                                  PATH_CONTINUERS)
    # the fast route also counts the 10 setup adjacency reports
    assert tr.messages_sent == PATH_FLOOD_MESSAGES + 10
    assert not tr.crashed.any()


# ---------------------------------------------------------------------------
# local topology reconstruction
# ---------------------------------------------------------------------------

def _cycle8_reports():
    # truthful reports for center 0 on the 8-cycle, k=2
    return {1: (0, 2), 2: (1, 3), 6: (5, 7), 7: (6, 0)}


def test_reconstruction_faithful_cycle():
    view = reconstruct_local_topology(0, (1, 7), _cycle8_reports(), 2,
                                      expected_degree=2)
    assert isinstance(view, LocalView)
    assert view.members == frozenset({0, 1, 2, 6, 7})
    for a, b in [(0, 1), (1, 2), (0, 7), (7, 6)]:
        assert view.h_adjacent(a, b) and view.h_adjacent(b, a)
    assert not view.h_adjacent(1, 7)
    assert not view.h_adjacent(2, 3)      # 3 lies outside the ball
    assert view.h_neighbors(0) == {1, 7}


def test_reconstruction_detects_denied_edge():
    reports = dict(_cycle8_reports())
    reports[1] = (2, 5)                   # claims the center is not a neighbor
    out = reconstruct_local_topology(0, (1, 7), reports, 2, expected_degree=2)
    assert isinstance(out, TopologyConflict)
    assert out.detail == "asymmetric adjacency claim"
    assert {out.a, out.b} == {0, 1}


def test_reconstruction_detects_short_report():
    reports = dict(_cycle8_reports())
    reports[1] = (0,)
    out = reconstruct_local_topology(0, (1, 7), reports, 2, expected_degree=2)
    assert isinstance(out, TopologyConflict)
    assert out.detail == "report length != d"


def test_reconstruction_detects_multiplicity_mismatch():
    # center's port table shows a double edge to 1; 1 claims a single edge
    reports = {1: (0, 2), 2: (1, 1)}
    out = reconstruct_local_topology(0, (1, 1), reports, 1, expected_degree=2)
    assert isinstance(out, TopologyConflict)
    assert out.detail == "asymmetric adjacency claim"


def test_reconstruction_tolerates_missing_report():
    reports = {1: (0, 2), 7: (6, 0), 6: (5, 7)}   # node 2 stays silent
    view = reconstruct_local_topology(0, (1, 7), reports, 2, expected_degree=2)
    assert isinstance(view, LocalView)
    assert 2 in view.members                       # on node 1's word alone
    assert view.h_adjacent(1, 2)


def test_reconstruction_keeps_phantom_on_claimants_word():
    reports = {1: (0, 99), 7: (6, 0), 6: (5, 7)}
    view = reconstruct_local_topology(0, (1, 7), reports, 2, expected_degree=2)
    assert isinstance(view, LocalView)
    assert 99 in view.members and view.h_adjacent(1, 99)


# ---------------------------------------------------------------------------
# provenance verification
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def cycle_view():
    view = reconstruct_local_topology(0, (1, 7), _cycle8_reports(), 2,
                                      expected_degree=2)
    assert isinstance(view, LocalView)
    return view


def _query_table(table):
    return lambda target, color, r: table.get((target, color, r))


def test_verify_accepts_honest_chain(cycle_view):
    tok = _tok(4, 2, 1, pred=2)
    ok = verify_color_provenance(cycle_view, tok,
                                 _query_table({(2, 4, 1): ORIGIN}))
    assert ok


def test_verify_rejects_silence(cycle_view):
    tok = _tok(4, 2, 1, pred=2)
    assert not verify_color_provenance(cycle_view, tok, _query_table({}))


def test_verify_rejects_wrong_round_answer(cycle_view):
    # the chain member answers, but claims a predecessor where an
    # origination is the only legal round-1 answer
    tok = _tok(4, 2, 1, pred=2)
    assert not verify_color_provenance(cycle_view, tok,
                                       _query_table({(2, 4, 1): 3}))


def test_verify_rejects_non_adjacent_predecessor(cycle_view):
    tok = _tok(4, 2, 1, pred=7)     # 1 and 7 are not H-adjacent
    assert not verify_color_provenance(cycle_view, tok,
                                       _query_table({(7, 4, 1): ORIGIN}))


def test_verify_accepts_first_hop_unconditionally(cycle_view):
    assert verify_color_provenance(cycle_view, _tok(4, 1, 1),
                                   _query_table({}))
    # ... but only from a real H-neighbor
    assert not verify_color_provenance(cycle_view, _tok(4, 1, 2),
                                       _query_table({}))


def test_verify_rejects_mid_flood_origination(cycle_view):
    tok = _tok(4, 3, 1, pred=ORIGIN)
    assert not verify_color_provenance(cycle_view, tok, _query_table({}))


def test_verify_walk_is_depth_limited(cycle_view):
    # hop 3 with k=2 walks a single step; a valid round-2 answer ends it
    tok = _tok(4, 3, 1, pred=2)
    assert verify_color_provenance(cycle_view, tok,
                                   _query_table({(2, 4, 2): 3}))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_verify_never_accepts_malformed(cycle_view, seed):
    rng = np.random.default_rng(seed)
    color = int(rng.integers(-2, 3))     # includes non-positive colors
    hop = int(rng.integers(-1, 2))       # includes non-positive hops
    if color >= 1 and hop >= 1:
        return
    tok = _tok(max(color, -1), max(hop, -1), 1)
    assert not verify_color_provenance(cycle_view, tok, _query_table({}))


# ---------------------------------------------------------------------------
# single-subphase failure statistics at scale
# ---------------------------------------------------------------------------

def test_early_max_event_rate_on_safe_tree_like_nodes():
    """The probability that a safe tree-like node's round-i maximum fails
    to set a new record decays like 1/(d (d-1)^(i-2)) plus the protocol's
    error budget; checked at eps=0.5 where the finite-n constants fit."""
    n = 100_000
    topo = augment_small_world(generate_h_graph(n, 8, seed=3))
    cls = classify_nodes(topo, np.zeros(0, dtype=np.int64), delta=0.6)
    eligible = cls.byz_safe & cls.ltl
    assert eligible.sum() >= 10_000
    eps = 0.5
    for i in (3, 4, 5):
        tr = simulate_subphase(topo, i, algorithm="basic", seed=0)
        k = tr.k_rows
        fail = (k[1:i].max(axis=0) >= k[i])
        freq = fail[eligible].mean()
        bound = 1.0 / (8 * 7 ** (i - 2)) + eps / 2 + 0.05
        assert freq <= bound, f"phase {i}: {freq:.4f} > {bound:.4f}"
