"""Shared fixtures over the dataset_fixtures helpers."""

from __future__ import annotations

from pathlib import Path

import pytest

from dataset_fixtures import tiny_components, write_dataset


@pytest.fixture
def tiny_dataset(tmp_path: Path) -> Path:
    meta, records, image_feats, text_feats = tiny_components()
    return write_dataset(tmp_path / "tiny", meta, records, image_feats, text_feats)


@pytest.fixture
def dataset_writer(tmp_path: Path):
    """Factory: mutate the tiny components, then write them to a fresh directory."""
    counter = {"n": 0}

    def build(mutate=None, **kwargs) -> Path:
        meta, records, image_feats, text_feats = tiny_components(**kwargs)
        parts = {"meta": meta, "records": records,
                 "image_feats": image_feats, "text_feats": text_feats}
        if mutate is not None:
            mutate(parts)
        counter["n"] += 1
        return write_dataset(tmp_path / f"ds{counter['n']}", parts["meta"], parts["records"],
                             parts["image_feats"], parts["text_feats"])

    return build


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory) -> Path:
    """A small planted-structure dataset shared by read-only tests."""
    from cosground import generate_synthetic

    root = tmp_path_factory.mktemp("synth")
    generate_synthetic(root, n_train=300, n_test=100, p=8,
                       d_img=16, d_txt=8, noise_sigma=0.05, seed=5)
    return root
