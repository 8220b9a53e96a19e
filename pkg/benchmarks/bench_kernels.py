#!/usr/bin/env python3
"""Benchmark the jitted hot kernels against the pure-Python fallback.

Each backend runs in its own subprocess so LEAGUEWIN_NO_NUMBA takes effect
at import time.  Workloads: the sequential Elo pass over a grid of configs
and random-forest training (Gini split scans dominate).

Usage: python benchmarks/bench_kernels.py [--configs N] [--trees N]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def workload(n_configs: int, n_trees: int) -> dict:
    from leaguewin import kernels, synth
    from leaguewin.baselines import forest as rf
    from leaguewin.baselines import scope as sc

    records = synth.generate_league(
        synth.SynthConfig(n_teams=10, games_per_pair=4, seasons=2, first_season=2019, seed=13,
                          latent_skill_std=1.2, feature_noise_std=1.5)
    )
    train = sc.games_from_records([r for r in records if r.season == 2019])
    val = sc.games_from_records([r for r in records if r.season == 2020])
    grid = {
        "base_k": [5, 10, 20, 30, 40][: max(1, n_configs // 8)],
        "cutoff": [1600, 1700],
        "reduction": [0.1, 0.5],
        "mov_func": ["none", "lin"],
        "w90": [100],
        "regression": [0],
    }
    sc.scope_grid_search(train, val, grid)  # warm-up (JIT compile)
    start = time.perf_counter()
    sc.scope_grid_search(train, val, grid)
    scope_s = time.perf_counter() - start

    x, y, _ = rf.lookback_dataset([r for r in records if r.season == 2019], 3, "delta")
    rf.forest_train(x, y, n_trees=2, seed=0)  # warm-up
    start = time.perf_counter()
    rf.forest_train(x, y, n_trees=n_trees, seed=0)
    forest_s = time.perf_counter() - start

    return {
        "backend": "numba" if kernels.NUMBA_ENABLED else "numpy/python",
        "scope_grid_s": scope_s,
        "forest_train_s": forest_s,
        "grid_configs": len(sc.grid_configs(grid)),
        "trees": n_trees,
    }


def run_backend(disable_numba: bool, n_configs: int, n_trees: int) -> dict:
    env = dict(os.environ)
    if disable_numba:
        env["LEAGUEWIN_NO_NUMBA"] = "1"
    else:
        env.pop("LEAGUEWIN_NO_NUMBA", None)
    code = (
        "import json, sys; sys.path.insert(0, {path!r}); "
        "from bench_kernels import workload; "
        "print(json.dumps(workload({c}, {t})))"
    ).format(path=os.path.dirname(os.path.abspath(__file__)), c=n_configs, t=n_trees)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    if out.returncode != 0:
        raise RuntimeError(out.stderr)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--configs", type=int, default=40, help="scope grid size")
    parser.add_argument("--trees", type=int, default=30, help="forest size")
    args = parser.parse_args()

    rows = [run_backend(False, args.configs, args.trees), run_backend(True, args.configs, args.trees)]
    print(f"{'backend':<14} {'scope grid':>12} {'forest train':>14}")
    for r in rows:
        print(f"{r['backend']:<14} {r['scope_grid_s']:>11.3f}s {r['forest_train_s']:>13.3f}s")
    jit, py = rows
    print(
        f"speedup: scope x{py['scope_grid_s'] / max(jit['scope_grid_s'], 1e-9):.1f}, "
        f"forest x{py['forest_train_s'] / max(jit['forest_train_s'], 1e-9):.1f} "
        f"({jit['grid_configs']} configs, {jit['trees']} trees)"
    )


if __name__ == "__main__":
    main()
