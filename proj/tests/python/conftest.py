# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The dgd-lab Authors

import json

import pytest


TINY = {
    "name": "tiny",
    "world": {"input_dim": 10, "identity_rank": 6, "nuisance_rank": 2, "nuisance_scale": 1.0, "seed": 3},
    "domains": [
        {"id": 1, "identities": 6, "test_identities": 4, "samples_per_identity": 5,
         "bias_strength": 0.3, "noise_sigma": 0.3},
        {"id": 2, "identities": 3, "test_identities": 4, "samples_per_identity": 5,
         "bias_strength": 0.3, "noise_sigma": 0.3},
    ],
    "encoder": {"hidden": [12], "feature_dim": 8},
    "stages": [
        {"stage": "individual", "epochs": 3, "batch_size": 8,
         "schedule": {"type": "step", "initial": 0.02}},
        {"stage": "jstl", "epochs": 10, "batch_size": 8,
         "schedule": {"type": "step", "initial": 0.02}},
        {"stage": "jstl_dgd", "epochs": 2, "batch_size": 8},
        {"stage": "ft_jstl", "epochs": 2, "batch_size": 8},
        {"stage": "ft_jstl_dgd", "epochs": 2, "batch_size": 8},
    ],
    "seeds": 2,
    "eval": {"max_rank": 4},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY, indent=2))
    return path
