import json

import pytest

from recurrence.errors import SchemaError
from recurrence.io import ingest_observation, observation_to_dict, params_from_dict


def write(tmp_path, payload):
    path = tmp_path / "obs.json"
    path.write_text(json.dumps(payload))
    return path


def test_sizes_round_trip(tmp_path):
    payload = {"n": 1000, "gamma": 6.5, "z0": 40, "clones": [5, 3, 1]}
    obs = ingest_observation(write(tmp_path, payload))
    assert obs.clone_sizes == (5, 3, 1)
    assert observation_to_dict(obs) == payload


def test_fractions_converted(tmp_path):
    obs = ingest_observation(write(tmp_path, {"n": 100, "gamma": 1.0, "z0": 5,
                                              "clones": [0.5, 0.5], "total_resistant": 10}))
    assert obs.clone_sizes == (5, 5)


def test_tiny_fractions_dropped_with_warning(tmp_path):
    path = write(tmp_path, {"n": 100, "gamma": 1.0, "z0": 5, "clones": [0.99, 0.01],
                            "total_resistant": 10})
    with pytest.warns(UserWarning, match="dropped"):
        obs = ingest_observation(path)
    assert obs.clone_sizes == (10,)


@pytest.mark.parametrize("payload", [
    {"n": 100, "gamma": 1.0, "z0": 5, "clones": [0.5, 0.3], "total_resistant": 10},
    {"n": 100, "gamma": 1.0, "z0": 5, "clones": [3, -1]},
    {"n": 100, "gamma": 1.0, "z0": -5, "clones": [3]},
    {"n": 100, "gamma": 0.0, "z0": 5, "clones": [3]},
    {"n": 100, "gamma": 1.0, "clones": [3]},
    {"n": 100, "gamma": 1.0, "z0": 5, "clones": "3"},
    {"n": 100, "gamma": 1.0, "z0": 5, "clones": [1.5]},
])
def test_schema_violations(tmp_path, payload):
    with pytest.raises(SchemaError):
        ingest_observation(write(tmp_path, payload))


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        ingest_observation(path)


def test_params_from_dict():
    p = params_from_dict({"n": 10, "alpha": 0.5, "r0": 0.5, "d0": 1, "r1": 1.5, "d1": 1})
    assert p.beta == 1.0 and p.lambda0 == -0.5
    with pytest.raises(SchemaError):
        params_from_dict({"n": 10})
