"""Multi-exit toy classifier and checkpoint round-tripping.

The model is an MLP backbone with one linear exit head after every
block. forward returns the raw logits of every head, shallowest first,
with no softmax or temperature applied; probability semantics live in
the analysis side.
"""

from __future__ import annotations

import torch
from torch import nn


class ModelError(Exception):
    """Invalid architecture parameters or a malformed checkpoint."""


class MultiExitClassifier(nn.Module):
    def __init__(
        self, input_dim: int, hidden_dim: int, n_exits: int, n_classes: int
    ) -> None:
        if input_dim < 1 or hidden_dim < 1:
            raise ModelError("input_dim and hidden_dim must be positive")
        if n_exits < 1:
            raise ModelError("model needs at least one exit head")
        if n_classes < 2:
            raise ModelError("n_classes must be at least 2")
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.n_exits = n_exits
        self.n_classes = n_classes
        blocks = []
        for i in range(n_exits):
            width_in = input_dim if i == 0 else hidden_dim
            blocks.append(
                nn.Sequential(nn.Linear(width_in, hidden_dim), nn.ReLU())
            )
        self.blocks = nn.ModuleList(blocks)
        self.heads = nn.ModuleList(
            nn.Linear(hidden_dim, n_classes) for _ in range(n_exits)
        )

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        logits = []
        for block, head in zip(self.blocks, self.heads):
            x = block(x)
            logits.append(head(x))
        return logits

    def arch(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "n_exits": self.n_exits,
            "n_classes": self.n_classes,
        }


def new_model(
    input_dim: int, hidden_dim: int, n_exits: int, n_classes: int, seed: int
) -> MultiExitClassifier:
    """Freshly initialized model; seeding is isolated from the global RNG."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = MultiExitClassifier(input_dim, hidden_dim, n_exits, n_classes)
    model.eval()
    return model


def save_checkpoint(model: MultiExitClassifier, path: str) -> None:
    torch.save({"arch": model.arch(), "state_dict": model.state_dict()}, path)


def load_checkpoint(path: str) -> MultiExitClassifier:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ModelError(f"cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or set(payload) != {"arch", "state_dict"}:
        raise ModelError(f"checkpoint {path} is not an exporter checkpoint")
    arch = payload["arch"]
    expected = {"input_dim", "hidden_dim", "n_exits", "n_classes"}
    if not isinstance(arch, dict) or set(arch) != expected:
        raise ModelError(f"checkpoint {path} has a malformed architecture block")
    model = MultiExitClassifier(**arch)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise ModelError(f"checkpoint {path} weights do not fit: {exc}") from exc
    model.eval()
    return model
