"""Deterministic synthetic trace generator with a miscalibration knob.

Each sample draws one latent difficulty d ~ Uniform(0, 1). Layer i has a
skill level s_i; the layer resolves the sample with probability
p = sigmoid(steepness * (s_i - d)), so deeper (higher-skill) layers are
more accurate. The reported confidence is c = clamp(p ** (1/gamma)) with
clamp bounds [1/K + eps, 1 - eps]; correctness is drawn with probability
c ** gamma, which keeps the identity E[correct | c] = c ** gamma exact
even where the clamp binds. gamma = 1 yields calibrated confidences,
gamma > 1 overconfident ones, gamma < 1 underconfident ones.

The probability vector places c on the predicted class (the true label
when correct, otherwise a uniformly drawn wrong class) and spreads the
remainder evenly; logits are the elementwise log. Every random draw comes
from a counter-based SplitMix64 stream with a fixed per-sample layout, so
generation is reproducible bit-for-bit and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from exitkit.rng import float_stream
from exitkit.trace import TraceDataset, TraceHeader

DEFAULT_SKILL_RANGE = (0.3, 0.9)
DEFAULT_COST_STEP = 6.5e6


def default_skills(n_layers: int) -> tuple[float, ...]:
    lo, hi = DEFAULT_SKILL_RANGE
    if n_layers == 1:
        return (hi,)
    return tuple(
        lo + (hi - lo) * i / (n_layers - 1) for i in range(n_layers)
    )


def default_costs(n_layers: int) -> tuple[float, ...]:
    return tuple(DEFAULT_COST_STEP * (i + 1) for i in range(n_layers))


@dataclass(frozen=True)
class GeneratorConfig:
    n_samples: int
    n_layers: int = 4
    n_classes: int = 10
    seed: int = 0
    layer_skills: tuple[float, ...] | None = None
    steepness: float = 8.0
    gamma: float = 1.0
    layer_costs: tuple[float, ...] | None = None
    confidence_floor_eps: float = 1e-3

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.n_layers < 1:
            raise ValueError("n_layers must be at least 1")
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if not self.steepness > 0.0:
            raise ValueError("steepness must be positive")
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive")
        skills = (
            tuple(float(s) for s in self.layer_skills)
            if self.layer_skills is not None
            else default_skills(self.n_layers)
        )
        costs = (
            tuple(float(c) for c in self.layer_costs)
            if self.layer_costs is not None
            else default_costs(self.n_layers)
        )
        object.__setattr__(self, "layer_skills", skills)
        object.__setattr__(self, "layer_costs", costs)
        if len(skills) != self.n_layers:
            raise ValueError("layer_skills length must equal n_layers")
        if not all(math.isfinite(s) for s in skills):
            raise ValueError("layer_skills must be finite")
        if any(b <= a for a, b in zip(skills, skills[1:])):
            raise ValueError("layer_skills must be strictly increasing")
        if len(costs) != self.n_layers:
            raise ValueError("layer_costs length must equal n_layers")
        eps = float(self.confidence_floor_eps)
        if not 0.0 < eps < 0.5:
            raise ValueError("confidence_floor_eps must lie in (0, 0.5)")
        if 1.0 / self.n_classes + eps >= 1.0 - eps:
            raise ValueError(
                "confidence clamp bounds are empty for this class count"
            )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    t = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))


def generate(config: GeneratorConfig) -> TraceDataset:
    """Produce a fully materialized synthetic trace for the config."""
    n = config.n_samples
    n_layers = config.n_layers
    n_classes = config.n_classes
    # fixed per-sample draw layout: label, difficulty, then per layer a
    # correctness draw and a wrong-class draw (consumed even when correct,
    # so the stride never depends on outcomes)
    stride = 2 + 2 * n_layers
    draws = float_stream(config.seed, n * stride).reshape(n, stride)
    labels = np.minimum(
        (draws[:, 0] * n_classes).astype(np.int64), n_classes - 1
    )
    difficulty = draws[:, 1]
    lo = 1.0 / n_classes + config.confidence_floor_eps
    hi = 1.0 - config.confidence_floor_eps
    logits = np.empty((n, n_layers, n_classes), dtype=np.float32)
    rows = np.arange(n)
    for layer in range(n_layers):
        p = _sigmoid(
            config.steepness * (config.layer_skills[layer] - difficulty)
        )
        conf = np.clip(p ** (1.0 / config.gamma), lo, hi)
        correct = draws[:, 2 + 2 * layer] < conf**config.gamma
        wrong = np.minimum(
            (draws[:, 3 + 2 * layer] * (n_classes - 1)).astype(np.int64),
            n_classes - 2,
        )
        wrong = np.where(wrong < labels, wrong, wrong + 1)
        predicted = np.where(correct, labels, wrong)
        probs = np.empty((n, n_classes), dtype=np.float64)
        probs[:] = ((1.0 - conf) / (n_classes - 1))[:, None]
        probs[rows, predicted] = conf
        logits[:, layer, :] = np.log(probs).astype(np.float32)
    header = TraceHeader(
        n_layers=n_layers,
        n_classes=n_classes,
        layer_costs=config.layer_costs,
    )
    return TraceDataset(
        header=header,
        ids=np.arange(n, dtype=np.uint64),
        labels=labels.astype(np.uint32),
        logits=logits,
    )
