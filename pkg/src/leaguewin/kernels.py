"""Hot inner loops, numba-jitted when available.

The two kernels here dominate runtime: the sequential Elo rating pass
(run once per grid-search configuration, ~12k times for the full lattice)
and the Gini split scan (run at every tree node of every forest).

Set ``LEAGUEWIN_NO_NUMBA=1`` to force the pure-Python fallback; the fallback
executes the exact same function bodies uncompiled, so both paths produce
identical results.  ``benchmarks/bench_kernels.py`` compares the two.
"""

import math
import os

import numpy as np

MOV_NONE = 0
MOV_LIN = 1
MOV_EXP = 2
MOV_LOG = 3
MOV_SQRT = 4

NUMBA_ENABLED = False
if os.environ.get("LEAGUEWIN_NO_NUMBA", "").strip().lower() not in ("1", "true", "yes"):
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        pass


def _maybe_jit(fn):
    if NUMBA_ENABLED:
        return njit(cache=True, nogil=True)(fn)
    return fn


def _mov_multiplier(kill_diff, mov_kind, w90):
    # g(d) = 1 + f(d)/f(w90); every variant satisfies g(0)=1 (lin/log/sqrt)
    # and g(w90)=2, so w90 is the margin at which K doubles.
    if mov_kind == MOV_LIN:
        return 1.0 + kill_diff / w90
    if mov_kind == MOV_EXP:
        return 1.0 + (math.exp(kill_diff / w90) - 1.0) / (math.e - 1.0)
    if mov_kind == MOV_LOG:
        return 1.0 + math.log1p(kill_diff) / math.log1p(w90)
    if mov_kind == MOV_SQRT:
        return 1.0 + math.sqrt(kill_diff) / math.sqrt(w90)
    return 1.0


def _scope_pass(
    team_idx,
    opp_idx,
    team_won,
    kill_diff,
    ratings,
    base_k,
    cutoff,
    reduction,
    mov_kind,
    w90,
    threshold,
    score_from,
    correct_out,
    trace_team,
    trace_opp,
):
    """One chronological Elo pass; mutates ``ratings`` in place.

    Games at index >= score_from are scored (predict before update).
    Returns the number of correct predictions over the scored span.
    """
    n_correct = 0
    for i in range(team_idx.shape[0]):
        t = team_idx[i]
        o = opp_idx[i]
        r_t = ratings[t]
        r_o = ratings[o]
        expected_t = 1.0 / (1.0 + 10.0 ** ((r_o - r_t) / 400.0))
        if i >= score_from:
            pred_team = expected_t >= threshold
            hit = pred_team == (team_won[i] == 1)
            if hit:
                correct_out[i] = 1
                n_correct += 1
        g = _mov_multiplier(float(kill_diff[i]), mov_kind, w90)
        k_t = base_k * g
        if r_t > cutoff:
            k_t *= 1.0 - reduction
        k_o = base_k * g
        if r_o > cutoff:
            k_o *= 1.0 - reduction
        outcome_t = 1.0 if team_won[i] == 1 else 0.0
        ratings[t] = r_t + k_t * (outcome_t - expected_t)
        ratings[o] = r_o + k_o * ((1.0 - outcome_t) - (1.0 - expected_t))
        trace_team[i] = ratings[t]
        trace_opp[i] = ratings[o]
    return n_correct


def _best_split(x, y, sample_idx, feat_idx, min_leaf):
    """Gini-minimizing axis-aligned split over the candidate features.

    Thresholds are midpoints between consecutive distinct values; splits
    leaving fewer than min_leaf rows on either side are skipped.  Ties keep
    the first candidate feature and the lowest threshold, so results are
    deterministic and identical between the jitted and fallback paths.

    Returns (feature, threshold, gini); feature is -1 when no valid split.
    """
    m = sample_idx.shape[0]
    best_gini = np.inf
    best_feat = -1
    best_thresh = 0.0
    total_pos = 0
    for i in range(m):
        total_pos += y[sample_idx[i]]
    for j in range(feat_idx.shape[0]):
        f = feat_idx[j]
        vals = np.empty(m, dtype=np.float64)
        for i in range(m):
            vals[i] = x[sample_idx[i], f]
        order = np.argsort(vals, kind="mergesort")
        pos = 0
        for s in range(m - 1):
            pos += y[sample_idx[order[s]]]
            n_left = s + 1
            n_right = m - n_left
            if n_right < min_leaf:
                break
            v_cur = vals[order[s]]
            v_next = vals[order[s + 1]]
            if n_left < min_leaf or v_cur == v_next:
                continue
            p_l = pos / n_left
            p_r = (total_pos - pos) / n_right
            g_l = 1.0 - p_l * p_l - (1.0 - p_l) * (1.0 - p_l)
            g_r = 1.0 - p_r * p_r - (1.0 - p_r) * (1.0 - p_r)
            g = (n_left * g_l + n_right * g_r) / m
            if g < best_gini:
                best_gini = g
                best_feat = f
                best_thresh = 0.5 * (v_cur + v_next)
    return best_feat, best_thresh, best_gini


# The rating pass calls the multiplier by global name, so rebind it to the
# jitted version before compiling the pass itself.
_mov_multiplier = _maybe_jit(_mov_multiplier)
scope_pass = _maybe_jit(_scope_pass)
best_split = _maybe_jit(_best_split)
