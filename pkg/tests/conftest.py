"""Shared fixtures: one toy bundle and the synthetic datasets per session."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

import synth
from zsmad.bundle import load_bundle, make_toy_bundle

GOLDENS = Path(__file__).parent / "goldens"

TOY_SEED, TOY_DIM = 1, 16
DATASET_SEED = 7


def load_golden(name: str):
    with open(GOLDENS / name, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def toy_bundle_dir(tmp_path_factory) -> Path:
    return make_toy_bundle(TOY_SEED, TOY_DIM, tmp_path_factory.mktemp("bundle"))


@pytest.fixture(scope="session")
def toy_bundle(toy_bundle_dir):
    return load_bundle(toy_bundle_dir)


@pytest.fixture(scope="session")
def dataset12(tmp_path_factory) -> Path:
    """12 synthetic samples (3 mediums x 2 bona fide + 2 morphs), absolute paths."""
    root = tmp_path_factory.mktemp("ds12")
    synth.write_dataset(root, synth.TWELVE, seed=DATASET_SEED, absolute=True)
    return root


@pytest.fixture(scope="session")
def manifest12(dataset12) -> Path:
    return dataset12 / "manifest.csv"


@pytest.fixture(scope="session")
def manifest6(dataset12) -> Path:
    """First six rows of the 12-sample dataset (digital + first ps-1 pair)."""
    return synth.write_subset_manifest(dataset12, synth.TWELVE, count=6,
                                       name="manifest6.csv", absolute=True)


@pytest.fixture(scope="session")
def grid_dataset(tmp_path_factory) -> Path:
    """All 5 generators x 3 mediums plus a shared bona fide pool per medium."""
    root = tmp_path_factory.mktemp("grid")
    synth.write_dataset(root, synth.GRID, seed=11, absolute=True)
    return root


@pytest.fixture(scope="session")
def grid_manifest(grid_dataset) -> Path:
    return grid_dataset / "manifest.csv"


@pytest.fixture(scope="session")
def reference_dataset(tmp_path_factory) -> Path:
    """Bona fide pool with ids disjoint from the grid, for baseline prototypes."""
    root = tmp_path_factory.mktemp("refs")
    synth.write_dataset(root, synth.REFERENCE, seed=23, absolute=True)
    return root
