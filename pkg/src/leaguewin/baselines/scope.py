"""SCOPE-style Elo: cutoff-reduced K, margin-of-victory scaling, preseason regression.

Ratings start at 1500, updates follow expected-score Elo with an effective K
of base_k * (1 - reduction) above the cutoff, scaled by a margin-of-victory
multiplier g(d) = 1 + f(d)/f(w90) (so K doubles at a margin of w90).  The
margin is the winner's kill count minus the loser's.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .. import kernels
from ..ingest import TeamGameRecord

MOV_CODES = {
    "none": kernels.MOV_NONE,
    "lin": kernels.MOV_LIN,
    "exp": kernels.MOV_EXP,
    "log": kernels.MOV_LOG,
    "sqrt": kernels.MOV_SQRT,
}

# Lattice order doubles as the deterministic tie-break order in grid search.
GRID_FIELDS = ("base_k", "cutoff", "reduction", "mov_func", "w90", "regression")


@dataclass(frozen=True)
class ScopeConfig:
    base_k: float = 40.0
    cutoff: float = 1700.0
    reduction: float = 0.5
    mov_func: str = "none"
    w90: float = 100.0
    regression: float = 0.0
    initial_rating: float = 1500.0

    def __post_init__(self):
        if self.base_k < 0:
            raise ValueError("base_k must be >= 0")
        if not 0.0 <= self.reduction < 1.0:
            raise ValueError("reduction must lie in [0, 1)")
        if self.mov_func not in MOV_CODES:
            raise ValueError(f"mov_func must be one of {sorted(MOV_CODES)}")
        if self.mov_func != "none" and self.w90 <= 0:
            raise ValueError("w90 must be positive when a MoV function is set")
        if not 0.0 <= self.regression <= 1.0:
            raise ValueError("regression must lie in [0, 1]")


@dataclass
class ScopeState:
    ratings: dict[str, float] = field(default_factory=dict)
    games_processed: int = 0

    def rating(self, team: str, config: ScopeConfig) -> float:
        return self.ratings.get(team, config.initial_rating)


@dataclass(frozen=True)
class GameResult:
    game_id: str
    team: str  # first-listed side, used to break prediction ties
    opponent: str
    winner: str
    kill_diff: int


@dataclass
class ScopeEvalResult:
    accuracy: float
    n_games: int
    correct: np.ndarray
    state: ScopeState
    trace: list[tuple[str, float, float]]  # (game_id, team rating, opponent rating)


def elo_expected(r_a: float, r_b: float) -> float:
    """Win probability of the first team under the 400-point logistic rule."""
    return 1.0 / (1.0 + 10.0 ** ((r_b - r_a) / 400.0))


def mov_multiplier(kill_diff: float, config: ScopeConfig) -> float:
    if kill_diff < 0:
        raise ValueError("kill_diff must be >= 0")
    if config.mov_func != "none" and config.w90 <= 0:
        raise ValueError("w90 must be positive when a MoV function is set")
    return kernels._mov_multiplier(float(kill_diff), MOV_CODES[config.mov_func], config.w90)


def scope_update(state: ScopeState, game: GameResult, config: ScopeConfig) -> ScopeState:
    """Apply one game's rating update; teams enter at the initial rating."""
    r_t = state.rating(game.team, config)
    r_o = state.rating(game.opponent, config)
    expected_t = elo_expected(r_t, r_o)
    g = mov_multiplier(game.kill_diff, config)
    k_t = config.base_k * g * ((1.0 - config.reduction) if r_t > config.cutoff else 1.0)
    k_o = config.base_k * g * ((1.0 - config.reduction) if r_o > config.cutoff else 1.0)
    outcome_t = 1.0 if game.winner == game.team else 0.0
    ratings = dict(state.ratings)
    ratings[game.team] = r_t + k_t * (outcome_t - expected_t)
    ratings[game.opponent] = r_o + k_o * ((1.0 - outcome_t) - (1.0 - expected_t))
    return ScopeState(ratings=ratings, games_processed=state.games_processed + 1)


def scope_season_regress(state: ScopeState, config: ScopeConfig) -> ScopeState:
    """Pull every rating toward the initial rating at a season boundary."""
    return ScopeState(
        ratings={
            t: r + config.regression * (config.initial_rating - r)
            for t, r in state.ratings.items()
        },
        games_processed=state.games_processed,
    )


def games_from_records(records: list[TeamGameRecord]) -> list[GameResult]:
    """Collapse paired records to one chronological game result per game."""
    games: list[GameResult] = []
    seen: set[str] = set()
    for r in records:
        if r.game_id in seen:
            continue
        seen.add(r.game_id)
        games.append(
            GameResult(
                game_id=r.game_id,
                team=r.team,
                opponent=r.opponent,
                winner=r.team if r.won else r.opponent,
                kill_diff=abs(r.kills - r.opponent_kills),
            )
        )
    return games


def _encode(games: list[GameResult], state: ScopeState, config: ScopeConfig):
    teams: dict[str, int] = {}
    for g in games:
        for t in (g.team, g.opponent):
            teams.setdefault(t, len(teams))
    for t in state.ratings:
        teams.setdefault(t, len(teams))
    ratings = np.full(len(teams), config.initial_rating, dtype=np.float64)
    for t, r in state.ratings.items():
        ratings[teams[t]] = r
    team_idx = np.array([teams[g.team] for g in games], dtype=np.int64)
    opp_idx = np.array([teams[g.opponent] for g in games], dtype=np.int64)
    team_won = np.array([1 if g.winner == g.team else 0 for g in games], dtype=np.uint8)
    kill_diff = np.array([g.kill_diff for g in games], dtype=np.float64)
    return teams, ratings, team_idx, opp_idx, team_won, kill_diff


def _run_pass(
    games: list[GameResult],
    config: ScopeConfig,
    state: ScopeState,
    threshold: float,
    score_from: int,
) -> ScopeEvalResult:
    teams, ratings, team_idx, opp_idx, team_won, kill_diff = _encode(games, state, config)
    n = len(games)
    correct = np.zeros(n, dtype=np.uint8)
    trace_team = np.zeros(n, dtype=np.float64)
    trace_opp = np.zeros(n, dtype=np.float64)
    n_correct = kernels.scope_pass(
        team_idx,
        opp_idx,
        team_won,
        kill_diff,
        ratings,
        float(config.base_k),
        float(config.cutoff),
        float(config.reduction),
        MOV_CODES[config.mov_func],
        float(config.w90),
        float(threshold),
        score_from,
        correct,
        trace_team,
        trace_opp,
    )
    scored = n - score_from
    new_state = ScopeState(
        ratings={t: float(ratings[i]) for t, i in teams.items()},
        games_processed=state.games_processed + n,
    )
    return ScopeEvalResult(
        accuracy=(float(n_correct) / scored) if scored > 0 else float("nan"),
        n_games=scored,
        correct=correct[score_from:],
        state=new_state,
        trace=[(g.game_id, float(trace_team[i]), float(trace_opp[i])) for i, g in enumerate(games)],
    )


def scope_advance(games: list[GameResult], config: ScopeConfig, state: ScopeState | None = None) -> ScopeState:
    """Update ratings over a span without scoring it (initialization seasons)."""
    if state is None:
        state = ScopeState()
    if not games:
        return state
    return _run_pass(games, config, state, 0.5, len(games)).state


def scope_evaluate(
    games: list[GameResult],
    config: ScopeConfig,
    predict_threshold: float = 0.5,
    state: ScopeState | None = None,
) -> ScopeEvalResult:
    """Predict-then-update over a chronological span; returns accuracy and trace.

    Prediction is the higher-rated team (expected score >= threshold);
    exact ties go to the first-listed team.
    """
    if not games:
        raise ValueError("empty test span")
    if state is None:
        state = ScopeState()
    return _run_pass(games, config, state, predict_threshold, 0)


def default_scope_grid() -> dict[str, list]:
    return {
        "base_k": [5, 10, 20, 30, 40, 50],
        "cutoff": [1600, 1650, 1700, 1750],
        "reduction": [0.1, 0.2, 0.3, 0.4, 0.5],
        "mov_func": ["none", "lin", "exp", "log"],
        "w90": [100, 200, 300, 400, 500],
        "regression": [0, 0.1, 0.2, 0.3, 0.4],
    }


def grid_size(grid: dict[str, list]) -> int:
    n = 1
    for f in GRID_FIELDS:
        n *= len(grid.get(f, [1]))
    return n


def grid_configs(grid: dict[str, list]) -> list[ScopeConfig]:
    defaults = ScopeConfig()
    axes = [grid[f] if f in grid else [getattr(defaults, f)] for f in GRID_FIELDS]
    return [ScopeConfig(**dict(zip(GRID_FIELDS, combo))) for combo in product(*axes)]


def scope_grid_search(
    train_games: list[GameResult],
    val_games: list[GameResult],
    grid: dict[str, list] | None = None,
    predict_threshold: float = 0.5,
    threads: int = 1,
) -> tuple[ScopeConfig, list[tuple[ScopeConfig, float]]]:
    """Exhaustive lattice search scored on the validation span.

    Each configuration initializes on the training span, regresses at the
    season boundary, then predicts the validation span.  Ties keep the
    lexicographically first configuration (lattice enumeration order).
    """
    if grid is None:
        grid = default_scope_grid()
    configs = grid_configs(grid)
    if not configs:
        raise ValueError("empty grid")

    def evaluate(cfg: ScopeConfig) -> float:
        state = scope_advance(train_games, cfg)
        state = scope_season_regress(state, cfg)
        return scope_evaluate(val_games, cfg, predict_threshold, state).accuracy

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            accs = list(pool.map(evaluate, configs))
    else:
        accs = [evaluate(cfg) for cfg in configs]
    table = list(zip(configs, accs))
    best = max(range(len(configs)), key=lambda i: accs[i])  # ties -> lowest index
    return configs[best], table


@dataclass
class ScopeProtocolResult:
    best_config: ScopeConfig
    validation_accuracy: float
    test_accuracy: float
    table: list[tuple[ScopeConfig, float]]
    final_state: ScopeState


def scope_protocol(
    init_games: list[GameResult],
    val_games: list[GameResult],
    test_games: list[GameResult],
    grid: dict[str, list] | None = None,
    predict_threshold: float = 0.5,
    threads: int = 1,
) -> ScopeProtocolResult:
    """Three-season protocol: initialize, grid-search on validation, score test."""
    best, table = scope_grid_search(init_games, val_games, grid, predict_threshold, threads)
    state = scope_advance(init_games, best)
    state = scope_season_regress(state, best)
    val_result = scope_evaluate(val_games, best, predict_threshold, state)
    state = scope_season_regress(val_result.state, best)
    test_result = scope_evaluate(test_games, best, predict_threshold, state)
    return ScopeProtocolResult(
        best_config=best,
        validation_accuracy=val_result.accuracy,
        test_accuracy=test_result.accuracy,
        table=table,
        final_state=test_result.state,
    )


def config_to_dict(config: ScopeConfig) -> dict:
    return {f: getattr(config, f) for f in GRID_FIELDS + ("initial_rating",)}


def grid_from_json(text: str) -> dict[str, list]:
    doc = json.loads(text)
    unknown = set(doc) - set(GRID_FIELDS)
    if unknown:
        raise ValueError(f"unknown grid fields: {sorted(unknown)}")
    return {k: list(v) for k, v in doc.items()}
