"""Labeled datasets for export runs.

Only the built-in synthetic dataset is provided: Gaussian feature
vectors with uniform random labels, generated deterministically from
(seed, split) so the same job always sees the same samples in the same
order. Each split draws from its own stream, so train/val/test never
overlap.
"""

from __future__ import annotations

import torch

SPLITS = ("train", "val", "test")
DATASETS = ("synthetic",)


class DataError(Exception):
    """Unknown dataset or split, or invalid sizing."""


def load_dataset(
    name: str,
    split: str,
    n_samples: int,
    input_dim: int,
    n_classes: int,
    seed: int,
) -> tuple[torch.Tensor, torch.Tensor]:
    """(features [N, D] float32, labels [N] int64) in dataset order."""
    if name not in DATASETS:
        raise DataError(f"unknown dataset {name!r}, available: {DATASETS}")
    if split not in SPLITS:
        raise DataError(f"unknown split {split!r}, available: {SPLITS}")
    if n_samples < 1:
        raise DataError("n_samples must be positive")
    gen = torch.Generator(device="cpu")
    gen.manual_seed(seed * len(SPLITS) + SPLITS.index(split))
    features = torch.randn(n_samples, input_dim, generator=gen)
    labels = torch.randint(0, n_classes, (n_samples,), generator=gen)
    return features, labels
