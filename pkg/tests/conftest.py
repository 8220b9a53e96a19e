import pytest

from leaguewin import synth
from leaguewin.ingest import FeatureSpec


@pytest.fixture
def default_spec():
    return FeatureSpec.default()


@pytest.fixture
def small_season():
    # 4 teams, double round robin: 12 games / 24 records, one season.
    cfg = synth.SynthConfig(n_teams=4, games_per_pair=2, seed=42, latent_skill_std=1.0)
    return synth.generate_league(cfg)


@pytest.fixture
def medium_season():
    cfg = synth.SynthConfig(n_teams=8, games_per_pair=2, seed=7, latent_skill_std=1.5)
    return synth.generate_league(cfg)


def make_csv(rows, header=None):
    """Tiny hand-rolled CSV builder for schema-level tests."""
    if header is None:
        header = (
            "gameid,league,season,date,team,opponent,result,kills,opponent_kills,"
            + ",".join(n for n in FeatureSpec.default().names if n != "kills")
        )
    return ("\n".join([header] + rows) + "\n").encode("utf-8")


def minimal_row(gameid, team, opponent, result, kills, opp_kills, league="LPL", season=2020, date="2020-01-05T10:00:00+00:00"):
    n_features = len([n for n in FeatureSpec.default().names if n != "kills"])
    feats = ",".join(["1.0"] * n_features)
    return f"{gameid},{league},{season},{date},{team},{opponent},{result},{kills},{opp_kills},{feats}"
