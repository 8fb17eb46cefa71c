import pytest

from relay_sim.experiments import ACCEPTANCE, REGISTRY, config_hash, resolve_config, run_experiment
from relay_sim.validation import ConfigError


def test_acceptance_list_complete():
    assert [k for k, _ in ACCEPTANCE] == list(range(1, 15))
    assert all(name in REGISTRY for _, name in ACCEPTANCE)


def test_unknown_config_rejected():
    with pytest.raises(ConfigError):
        resolve_config({"experiment": "zone_cdf", "bogus": 1})
    with pytest.raises(ConfigError):
        resolve_config({"experiment": "nope"})
    with pytest.raises(ConfigError):
        resolve_config({"experiment": "zone_cdf", "lam": -1})


def test_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


def test_report_carries_provenance():
    res = run_experiment({"experiment": "zone_cdf", "seed": 11, "n_reps": 20_000})
    d = res.to_dict()
    assert d["seed"] == 11 and len(d["config_hash"]) == 16


def test_worker_count_does_not_change_report():
    a = run_experiment({"experiment": "zone_count", "seed": 2, "n_reps": 10_000, "workers": 1}).to_json()
    b = run_experiment({"experiment": "zone_count", "seed": 2, "n_reps": 10_000, "workers": 2}).to_json()
    assert a == b


@pytest.mark.parametrize("name", ["g1", "zone_cdf", "stoppage"])
def test_sabotage_is_caught(name):
    assert not run_experiment({"experiment": name, "seed": 1, "sabotage": True}).passed
