# -*- coding: utf-8 -*-
"""
Общие фикстуры тестов.
"""

from __future__ import annotations

import numpy as np
import pytest

from builders import TOY_TAXONOMY, toy_dataset_document, write_json
from hiereval.config import DATA_DIR
from hiereval.dataset_io import load_dataset
from hiereval.taxonomy import load_taxonomy, load_taxonomy_file


@pytest.fixture(scope="session")
def spin_taxonomy():
    return load_taxonomy_file(DATA_DIR / "spin_taxonomy.json")


@pytest.fixture
def toy_taxonomy():
    return load_taxonomy(TOY_TAXONOMY)


@pytest.fixture
def toy_dataset_path(tmp_path):
    return write_json(toy_dataset_document(), tmp_path / "dataset.json")


@pytest.fixture
def toy_dataset(toy_dataset_path):
    return load_dataset(toy_dataset_path)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
