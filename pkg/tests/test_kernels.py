import subprocess
import sys

import numpy as np

from leaguewin import kernels


def _python_impl(fn):
    # The jitted dispatcher keeps the original function as py_func.
    return getattr(fn, "py_func", fn)


def _random_games(rng, n_games=300, n_teams=12):
    team = rng.integers(0, n_teams, size=n_games).astype(np.int64)
    opp = (team + 1 + rng.integers(0, n_teams - 1, size=n_games)).astype(np.int64) % n_teams
    won = rng.integers(0, 2, size=n_games).astype(np.uint8)
    kd = rng.integers(0, 25, size=n_games).astype(np.float64)
    return team, opp, won, kd


def test_scope_pass_jit_matches_python_all_mov_kinds():
    rng = np.random.default_rng(0)
    for mov_kind in (0, 1, 2, 3, 4):
        team, opp, won, kd = _random_games(rng)
        args = (40.0, 1550.0, 0.3, mov_kind, 150.0, 0.5, 50)
        out = []
        for fn in (kernels.scope_pass, _python_impl(kernels.scope_pass)):
            ratings = np.full(12, 1500.0)
            correct = np.zeros(len(team), dtype=np.uint8)
            t_team = np.zeros(len(team))
            t_opp = np.zeros(len(team))
            n = fn(team, opp, won, kd, ratings, *args, correct, t_team, t_opp)
            out.append((int(n), ratings.copy(), correct.copy(), t_team.copy()))
        assert out[0][0] == out[1][0]
        assert np.array_equal(out[0][2], out[1][2])
        assert np.allclose(out[0][1], out[1][1], rtol=0, atol=1e-9)
        assert np.allclose(out[0][3], out[1][3], rtol=0, atol=1e-9)


def test_best_split_jit_matches_python():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 8))
    y = (x[:, 3] + 0.3 * rng.normal(size=200) > 0).astype(np.int8)
    for trial in range(20):
        idx = np.sort(rng.integers(0, 200, size=120)).astype(np.int64)
        feats = rng.permutation(8)[:3].astype(np.int64)
        jit_out = kernels.best_split(x, y, idx, feats, 2)
        py_out = _python_impl(kernels.best_split)(x, y, idx, feats, 2)
        assert jit_out[0] == py_out[0]
        assert jit_out[1] == py_out[1]
        assert jit_out[2] == py_out[2]


def test_best_split_respects_min_leaf():
    x = np.arange(10.0).reshape(-1, 1)
    y = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1], dtype=np.int8)
    idx = np.arange(10, dtype=np.int64)
    feats = np.zeros(1, dtype=np.int64)
    feat, thresh, gini = kernels.best_split(x, y, idx, feats, 4)
    assert feat == 0
    # The perfect split at 4.5 is allowed (5 rows either side) and found.
    assert thresh == 4.5 and gini == 0.0
    feat6, _, _ = kernels.best_split(x, y, idx, feats, 6)
    assert feat6 == -1  # no split can leave 6 rows on both sides


def test_best_split_no_split_on_constant_feature():
    x = np.ones((8, 1))
    y = np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=np.int8)
    feat, _, _ = kernels.best_split(x, y, np.arange(8, dtype=np.int64), np.zeros(1, dtype=np.int64), 1)
    assert feat == -1


def test_mov_multiplier_codes_match_named_functions():
    import math

    w90 = 120.0
    d = 60.0
    assert kernels._mov_multiplier(d, kernels.MOV_NONE, w90) == 1.0
    assert kernels._mov_multiplier(d, kernels.MOV_LIN, w90) == 1.0 + d / w90
    assert kernels._mov_multiplier(d, kernels.MOV_EXP, w90) == 1.0 + (math.exp(d / w90) - 1.0) / (math.e - 1.0)
    assert kernels._mov_multiplier(d, kernels.MOV_LOG, w90) == 1.0 + math.log1p(d) / math.log1p(w90)
    assert kernels._mov_multiplier(d, kernels.MOV_SQRT, w90) == 1.0 + math.sqrt(d) / math.sqrt(w90)


def test_env_flag_disables_numba():
    code = (
        "import leaguewin.kernels as k; "
        "print(k.NUMBA_ENABLED, hasattr(k.scope_pass, 'py_func'))"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"LEAGUEWIN_NO_NUMBA": "1", "PATH": "/usr/bin:/bin"},
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "False False"


def test_fallback_produces_same_forest_and_scope_results():
    # Full pipeline agreement between the two paths, run out of process.
    script = r"""
import numpy as np
from leaguewin import synth
from leaguewin.baselines import scope as sc, forest as rf
records = synth.generate_league(synth.SynthConfig(n_teams=6, games_per_pair=2, seasons=2, first_season=2019, seed=3))
train = sc.games_from_records([r for r in records if r.season == 2019])
val = sc.games_from_records([r for r in records if r.season == 2020])
grid = {"base_k": [10, 40], "cutoff": [1650], "reduction": [0.2], "mov_func": ["none", "exp"], "w90": [100], "regression": [0]}
best, table = sc.scope_grid_search(train, val, grid)
x, y, _ = rf.lookback_dataset([r for r in records if r.season == 2019], 2, "delta")
f = rf.forest_train(x, y, n_trees=10, seed=0)
p = rf.forest_predict_many(f, x)
print(repr([round(a, 12) for _, a in table]))
print(repr(best.base_k), repr(best.mov_func))
print(repr([round(v, 12) for v in p[:10]]))
"""
    import os

    env = dict(os.environ)
    env.pop("LEAGUEWIN_NO_NUMBA", None)
    with_jit = subprocess.run([sys.executable, "-c", script], env=env, capture_output=True, text=True)
    env["LEAGUEWIN_NO_NUMBA"] = "1"
    without = subprocess.run([sys.executable, "-c", script], env=env, capture_output=True, text=True)
    assert with_jit.returncode == 0, with_jit.stderr
    assert without.returncode == 0, without.stderr
    assert with_jit.stdout == without.stdout
