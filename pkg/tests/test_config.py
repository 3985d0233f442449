import json

import numpy as np
import pytest

from latgauss.config import load_config, parse_config
from latgauss.errors import ConfigError

BASE = {"generator": {"builtin": "identity"}, "d": 2, "beta": 0.1}


def test_minimal_config_defaults():
    cfg = parse_config(dict(BASE))
    assert cfg.d == 2 and cfg.beta == 0.1
    assert cfg.epsilon == 0.1
    assert np.array_equal(cfg.x, [0.9, 0.9])
    assert cfg.seed == 0
    assert cfg.constants is None
    assert cfg.constants_samples == 4096
    assert cfg.max_gd_steps == 10**6 and cfg.max_langevin_steps == 10**7
    assert cfg.chains == 1000 and cfg.samples == 10_000
    assert cfg.jobs == 1 and cfg.out_dir == "out"
    assert cfg.experiments == [] and cfg.lowerbound_opts == {}


@pytest.mark.parametrize("missing", ["generator", "d", "beta"])
def test_required_fields(missing):
    raw = dict(BASE)
    del raw[missing]
    with pytest.raises(ConfigError, match=missing):
        parse_config(raw)


def test_unknown_key_rejected_at_each_level():
    for raw in [
        {**BASE, "bogus": 1},
        {**BASE, "generator": {"builtin": "identity", "bogus": 1}},
        {**BASE, "constants": {"m": 1, "M": 1, "M2": 0, "M3": 0, "bogus": 1}},
        {**BASE, "caps": {"bogus": 1}},
        {**BASE, "compile": {"bogus": 1}},
        {**BASE, "lowerbound": {"bogus": 1}},
    ]:
        with pytest.raises(ConfigError, match="bogus"):
            parse_config(raw)


@pytest.mark.parametrize("epsilon", [0.0, 1.0, 2, -0.5])
def test_epsilon_range(epsilon):
    with pytest.raises(ConfigError, match="epsilon"):
        parse_config({**BASE, "epsilon": epsilon})


def test_beta_must_be_positive():
    with pytest.raises(ConfigError, match="beta"):
        parse_config({**BASE, "beta": 0})


def test_x_length_checked():
    with pytest.raises(ConfigError, match="x must"):
        parse_config({**BASE, "x": [1.0, 2.0, 3.0]})


def test_constants_require_all_four():
    with pytest.raises(ConfigError, match="M3"):
        parse_config({**BASE, "constants": {"m": 1, "M": 1, "M2": 0}})
    cfg = parse_config({**BASE, "constants": {"m": 1, "M": 2, "M2": 0.5, "M3": 1}})
    assert cfg.constants.M2 == 0.5


def test_overrides_win():
    cfg = parse_config(
        {**BASE, "seed": 5, "out_dir": "a", "jobs": 2},
        seed_override=9,
        out_override="b",
        jobs_override=4,
    )
    assert cfg.seed == 9 and cfg.out_dir == "b" and cfg.jobs == 4


def test_builtin_generators_build():
    for gen, d in [
        ({"builtin": "identity"}, 3),
        ({"builtin": "scale", "scale": 3.0}, 2),
        ({"builtin": "tanh-residual", "alpha": 0.25}, 2),
        ({"builtin": "random-residual", "seed": 7, "alpha": 0.3}, 2),
    ]:
        cfg = parse_config({"generator": gen, "d": d, "beta": 0.1})
        net = cfg.build_generator()
        assert net.eval_batch(np.zeros((2, d))).shape == (2, d)


def test_unknown_builtin_rejected():
    with pytest.raises(ConfigError, match="builtin"):
        parse_config({**BASE, "generator": {"builtin": "mystery"}})


def test_generator_path_round_trip(tmp_path):
    from latgauss.nets import tanh_residual_net

    net = tanh_residual_net(2, 0.5)
    p = tmp_path / "net.json"
    p.write_text(net.to_json())
    cfg = parse_config({**BASE, "generator": {"path": str(p)}})
    loaded = cfg.build_generator()
    Z = np.random.default_rng(0).normal(size=(5, 2))
    assert np.array_equal(loaded.eval_batch(Z), net.eval_batch(Z))


def test_load_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "none.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="valid JSON"):
        load_config(str(bad))


def test_load_config_parses_file(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({**BASE, "seed": 3}))
    cfg = load_config(str(p))
    assert cfg.seed == 3
    assert cfg.raw["seed"] == 3
