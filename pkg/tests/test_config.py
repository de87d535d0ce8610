import sys

import pytest
from hypothesis import given, settings, strategies as st

from notrade.config import ConfigError, ExperimentSection, GridSection, RunConfig, dump_config, load_config, parse_config
from notrade.market import MarketModel, SpreadModel
from notrade.preferences import Preferences

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def roundtrip(cfg):
    return parse_config(tomllib.loads(dump_config(cfg)))


def test_defaults_roundtrip():
    cfg = RunConfig()
    assert roundtrip(cfg) == cfg
    assert cfg.preferences == Preferences.power(5.0)


def test_full_roundtrip():
    cfg = RunConfig(
        market=MarketModel("MeanRevertingDrift", mu=0.03, sigma=0.25, kappa_factor=2.0, nu_factor=0.01, rho=-0.3),
        spread=SpreadModel("ProportionalStochastic", eta0=0.004, ou_speed=1.5, ou_vol=0.2),
        preferences=Preferences.log(beta=0.5, delta=0.01),
        grid=GridSection(2.0, 500, 123),
        experiment=ExperimentSection(eps_grid=(0.02, 0.01), initial_position="stationary", overshoot=0.1),
        tolerances={"ce_loss": 0.3},
        output_dir="out/x",
        seed=42,
    )
    assert roundtrip(cfg) == cfg


@settings(max_examples=50, deadline=None)
@given(
    mu=st.floats(-1, 1, allow_nan=False),
    sigma=st.floats(0.01, 2),
    eta=st.floats(0, 0.5),
    gamma=st.floats(0.1, 50),
    steps=st.integers(1, 10**6),
    seed=st.one_of(st.none(), st.integers(0, 2**63 - 1)),
    grid=st.lists(st.floats(1e-6, 0.5), min_size=1, max_size=6, unique=True).map(lambda v: tuple(sorted(v))),
)
def test_roundtrip_is_identity(mu, sigma, eta, gamma, steps, seed, grid):
    cfg = RunConfig(
        market=MarketModel(mu=mu, sigma=sigma),
        spread=SpreadModel(eta0=eta),
        preferences=Preferences.power(gamma),
        grid=GridSection(n_steps=steps),
        experiment=ExperimentSection(eps_grid=grid),
        seed=seed,
    )
    assert roundtrip(cfg) == cfg


def test_power_section_without_gamma_keeps_default():
    cfg = parse_config({"preferences": {"family": "Power"}})
    assert cfg.preferences.gamma == 5.0
    assert parse_config({"preferences": {"family": "Log"}}).preferences == Preferences.log()


@pytest.mark.parametrize(
    "data, msg",
    [
        ({"markets": {}}, "unknown top-level key"),
        ({"market": {"muu": 0.1}}, "[market]: unknown key(s) muu"),
        ({"grid": {"n_steps": 1.5}}, "[grid].n_steps: expected an integer"),
        ({"grid": {"n_steps": True}}, "[grid].n_steps: expected an integer"),
        ({"market": {"mu": "high"}}, "[market].mu: expected a number"),
        ({"experiment": {"eps_grid": 0.01}}, "expected a list"),
        ({"experiment": {"liquidate_at_T": 1}}, "expected true/false"),
        ({"market": {"sigma": -1.0}}, "[market]: sigma must be positive"),
        ({"market": {"kind": "Heston"}}, "[market]"),
        ({"tolerances": {"speed": 1.0}}, "[tolerances]: unknown key(s) speed"),
        ({"seed": -3}, "seed must lie in"),
        ({"market": 3}, "[market] must be a table"),
    ],
)
def test_invalid_configs(data, msg):
    with pytest.raises(ConfigError) as e:
        parse_config(data)
    assert msg in str(e.value)


def test_missing_file_message_names_path(tmp_path):
    p = tmp_path / "nope.toml"
    with pytest.raises(ConfigError, match="nope.toml"):
        load_config(p)


def test_malformed_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[market\nmu = 1")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(p)


def test_load_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('seed = 3\n[spread]\neta0 = 0.02\n[tolerances]\nce_loss = 0.3\n')
    cfg = load_config(p)
    assert cfg.seed == 3 and cfg.spread.eta0 == 0.02
    assert cfg.resolved_tolerances()["ce_loss"] == 0.3
    assert cfg.resolved_tolerances()["turnover"] == 0.10


def test_options_and_base_config():
    cfg = parse_config({"experiment": {"initial_position": "stationary", "liquidate_at_T": False}})
    opts = cfg.experiment.options()
    assert opts.initial_position.value == "stationary" and not opts.liquidate_at_T
    base = cfg.base_config(9)
    assert base.grid.seed == 9 and base.options == opts
