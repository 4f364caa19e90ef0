"""Shared fixtures.

The expensive session fixtures (the default dataset and the library of
default-configuration training runs) are built once and shared by every test
that needs them; the acceptance tests in test_acceptance.py are the main
consumers.  Run times on one commodity core:

* ``dataset_root``      ~ 1 minute (2800 synthetic 64x64 images)
* ``small_dataset_root``~ seconds (tiny 32x32 dataset for fast paths)
* ``desk_library``      ~ 2 hours (30 default-config trainings: seeds 1-5,
                          three training domains, full objective + ablation)

Deselect test_acceptance.py for a quick development loop.
"""

import numpy as np
import pytest

from rcdn.data import DatasetSpec, build_dataset
from rcdn.model import ModelConfig
from rcdn.train_eval import (TRAIN_DOMAINS, TrainConfig, cross_matrix,
                             summarize, train)

SEED_SET = (1, 2, 3, 4, 5)


@pytest.fixture(scope="session")
def dataset_root(tmp_path_factory):
    """The default dataset: 4 domains x (500 train + 200 test), 64x64, seed 0."""
    root = tmp_path_factory.mktemp("dataset") / "default"
    build_dataset(DatasetSpec(), str(root))
    return str(root)


@pytest.fixture(scope="session")
def small_dataset_root(tmp_path_factory):
    """A tiny dataset (24/8 per domain, 32x32) for fast end-to-end paths."""
    root = tmp_path_factory.mktemp("dataset_small") / "small"
    build_dataset(DatasetSpec(per_domain_train=24, per_domain_test=8,
                              image_size=32, seed=7), str(root))
    return str(root)


def _default_config(seed, lambda_c, lambda_s):
    """The library's one knob is the seed; everything else is the default."""
    return TrainConfig(seed=seed,
                       model=ModelConfig(seed=seed, lambda_c=lambda_c,
                                         lambda_s=lambda_s))


@pytest.fixture(scope="session")
def desk_library(dataset_root):
    """Default-config training runs over the seed set, full loss and ablation.

    Returns {(kind, seed): {"cells": 3x3 ndarray, "traces": {domain: trace}}}
    with kind in {"rcdn", "ablation"}.
    """
    library = {}
    for seed in SEED_SET:
        for kind, lam in (("rcdn", 0.5), ("ablation", 0.0)):
            models, traces = {}, {}
            for domain in TRAIN_DOMAINS:
                cfg = _default_config(seed, lam, lam)
                models[domain], traces[domain] = train(cfg, dataset_root, domain)
            matrix, _ = cross_matrix(models, dataset_root)
            library[(kind, seed)] = {
                "cells": matrix.cells,
                "summary": summarize(matrix),
                "traces": traces,
            }
    return library


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
