"""Classifier abstraction: small torch networks with value-semantics operations.

Every operation that changes parameters returns a new model and leaves its
input untouched, so callers can treat models like values and run independent
experiments on copies. All randomness flows through explicit integer seeds;
results are reproducible on one machine.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import LabeledExample, examples_to_arrays

CHECKPOINT_VERSION = 1
_FIM_CHUNK = 512


@dataclass(frozen=True)
class Architecture:
    """Network shape: an MLP (hidden = layer widths) or a small CNN (hidden = conv channels).

    Inputs are always flat feature vectors; the CNN unflattens them to
    ``input_shape`` = (channels, height, width) internally.
    """

    kind: str = "mlp"
    input_shape: tuple[int, ...] = (2,)
    num_classes: int = 2
    hidden: tuple[int, ...] = (32,)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "hidden", tuple(int(v) for v in self.hidden))
        if self.kind not in ("mlp", "cnn"):
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not self.input_shape or any(v <= 0 for v in self.input_shape):
            raise ValueError(f"invalid input_shape {self.input_shape}")
        if any(v <= 0 for v in self.hidden):
            raise ValueError(f"invalid hidden sizes {self.hidden}")
        if self.kind == "cnn" and len(self.input_shape) != 3:
            raise ValueError("cnn input_shape must be (channels, height, width)")

    @property
    def input_size(self) -> int:
        return int(np.prod(self.input_shape))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "hidden": list(self.hidden),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Architecture":
        return cls(
            kind=raw.get("kind", "mlp"),
            input_shape=tuple(raw["input_shape"]),
            num_classes=int(raw["num_classes"]),
            hidden=tuple(raw.get("hidden", ())),
        )


def _build_module(arch: Architecture) -> nn.Module:
    if arch.kind == "mlp":
        layers: list[nn.Module] = []
        width = arch.input_size
        for h in arch.hidden:
            layers += [nn.Linear(width, h), nn.ReLU()]
            width = h
        layers.append(nn.Linear(width, arch.num_classes))
        return nn.Sequential(*layers)

    channels, height, width = arch.input_shape
    layers = [nn.Unflatten(1, arch.input_shape)]
    for out_channels in arch.hidden:
        layers += [nn.Conv2d(channels, out_channels, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2)]
        channels = out_channels
        height //= 2
        width //= 2
        if height == 0 or width == 0:
            raise ValueError("input too small for the configured conv stack")
    layers += [nn.Flatten(), nn.Linear(channels * height * width, arch.num_classes)]
    return nn.Sequential(*layers)


def _construct(arch: Architecture) -> nn.Module:
    # Module construction consumes torch's global RNG; fork it so building a
    # model never perturbs unrelated random state.
    with torch.random.fork_rng(devices=[]):
        module = _build_module(arch)
    module.eval()
    return module


class ClassifierModel:
    """A classifier plus its architecture descriptor.

    Parameters are addressed in ``named_parameters`` order; the flat vector
    views used by diagnostics follow the same ordering.
    """

    def __init__(self, architecture: Architecture, module: nn.Module, seed: int | None = None):
        self.architecture = architecture
        self.module = module
        self.seed = seed

    def clone(self) -> "ClassifierModel":
        return ClassifierModel(self.architecture, copy.deepcopy(self.module), self.seed)

    @property
    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.module.parameters())

    def parameter_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.module.named_parameters())

    def parameter_vector(self) -> np.ndarray:
        """Flat float32 copy of all parameters."""
        with torch.no_grad():
            return nn.utils.parameters_to_vector(self.module.parameters()).numpy().copy()


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "optimizer": self.optimizer,
        }


@dataclass
class FimDiagonal:
    """Per-parameter empirical Fisher values, aligned with the flat parameter vector."""

    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def _as_tensors(
    data: Sequence[LabeledExample], arch: Architecture
) -> tuple[torch.Tensor, torch.Tensor]:
    feats, labels = examples_to_arrays(data)
    if feats.shape[1] != arch.input_size:
        raise ValueError(
            f"feature size {feats.shape[1]} does not match architecture input {arch.input_size}"
        )
    return torch.from_numpy(feats), torch.from_numpy(labels)


def _make_optimizer(module: nn.Module, config: TrainConfig) -> torch.optim.Optimizer:
    if config.optimizer == "sgd":
        return torch.optim.SGD(module.parameters(), lr=config.learning_rate)
    return torch.optim.Adam(module.parameters(), lr=config.learning_rate)


def random_init(architecture: Architecture, seed: int) -> ClassifierModel:
    """Untrained model with parameters drawn deterministically from ``seed``."""
    module = _construct(architecture)
    generator = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Linear, nn.Conv2d)):
                nn.init.kaiming_uniform_(m.weight, a=math.sqrt(5), generator=generator)
                if m.bias is not None:
                    fan_in = m.weight[0].numel()
                    bound = 1.0 / math.sqrt(fan_in)
                    nn.init.uniform_(m.bias, -bound, bound, generator=generator)
    return ClassifierModel(architecture, module, seed=int(seed))


def train(
    model: ClassifierModel, data: Sequence[LabeledExample], config: TrainConfig
) -> ClassifierModel:
    """Cross-entropy training; returns a new model, the input stays untouched."""
    if not data:
        raise ValueError("training data is empty")
    X, y = _as_tensors(data, model.architecture)
    if int(y.max()) >= model.architecture.num_classes:
        raise ValueError(
            f"label {int(y.max())} out of range for {model.architecture.num_classes} classes"
        )
    out = model.clone()
    if config.epochs == 0:
        return out
    module = out.module
    optimizer = _make_optimizer(module, config)
    generator = torch.Generator().manual_seed(int(config.seed))
    module.train()
    for _ in range(config.epochs):
        order = torch.randperm(len(data), generator=generator)
        for start in range(0, len(data), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss = F.cross_entropy(module(X[idx]), y[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    module.eval()
    return out


def predict_logits(model: ClassifierModel, data: Sequence[LabeledExample]) -> np.ndarray:
    if not data:
        raise ValueError("no examples to predict")
    X, _ = _as_tensors(data, model.architecture)
    with torch.no_grad():
        return model.module(X).numpy()


def predict_probabilities(model: ClassifierModel, data: Sequence[LabeledExample]) -> np.ndarray:
    """Row-wise class distributions, float64, each row summing to 1 (within fp error)."""
    X, _ = _as_tensors(data, model.architecture)
    with torch.no_grad():
        return F.softmax(model.module(X), dim=1).numpy().astype(np.float64)


def predict_distribution(model: ClassifierModel, example: LabeledExample) -> np.ndarray:
    """Class distribution for one example."""
    feats = np.asarray(example.features, dtype=np.float32).reshape(-1)
    if feats.size != model.architecture.input_size:
        raise ValueError(
            f"feature size {feats.size} does not match architecture input "
            f"{model.architecture.input_size}"
        )
    with torch.no_grad():
        logits = model.module(torch.from_numpy(feats).unsqueeze(0))
        return F.softmax(logits, dim=1)[0].numpy().astype(np.float64)


def evaluate_accuracy(model: ClassifierModel, data: Sequence[LabeledExample]) -> float:
    """Fraction of argmax-correct predictions; argmax ties go to the lowest class index."""
    if not data:
        raise ValueError("evaluation data is empty")
    logits = predict_logits(model, data)
    predictions = logits.argmax(axis=1)
    _, labels = examples_to_arrays(data)
    return float((predictions == labels).mean())


def per_sample_losses(model: ClassifierModel, data: Sequence[LabeledExample]) -> np.ndarray:
    """Cross-entropy of each example under the model (natural log)."""
    if not data:
        raise ValueError("no examples to score")
    X, y = _as_tensors(data, model.architecture)
    with torch.no_grad():
        losses = F.cross_entropy(model.module(X), y, reduction="none")
    return losses.numpy().astype(np.float64)


def fim_diagonal(model: ClassifierModel, data: Sequence[LabeledExample]) -> FimDiagonal:
    """Empirical Fisher diagonal: mean over samples of the squared loss gradient.

    The loss is cross-entropy against each sample's true label; entry i is
    ``mean_j (d loss_j / d theta_i)^2`` accumulated in float64.
    """
    if not data:
        raise ValueError("cannot estimate sensitivities from empty data")
    X, y = _as_tensors(data, model.architecture)
    module = model.module
    params = {name: p.detach() for name, p in module.named_parameters()}

    def sample_loss(p: dict, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        logits = torch.func.functional_call(module, p, (x.unsqueeze(0),))
        return F.cross_entropy(logits, t.unsqueeze(0))

    grad_fn = torch.func.vmap(torch.func.grad(sample_loss), in_dims=(None, 0, 0))
    total = torch.zeros(sum(p.numel() for p in params.values()), dtype=torch.float64)
    for start in range(0, len(X), _FIM_CHUNK):
        grads = grad_fn(params, X[start : start + _FIM_CHUNK], y[start : start + _FIM_CHUNK])
        flat = torch.cat([g.reshape(g.shape[0], -1) for g in grads.values()], dim=1)
        total += flat.double().pow(2).sum(dim=0)
    return FimDiagonal(values=(total / len(X)).numpy())


def save_checkpoint(model: ClassifierModel, path: str | os.PathLike) -> None:
    """Write architecture + named parameter arrays; parameters round-trip bit-exactly."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "architecture": model.architecture.to_dict(),
        "seed": model.seed,
    }
    arrays = {
        f"param:{name}": p.detach().numpy()
        for name, p in model.module.named_parameters()
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> ClassifierModel:
    with np.load(path, allow_pickle=False) as bundle:
        meta = json.loads(str(bundle["__meta__"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {meta.get('format_version')!r}, "
                f"expected {CHECKPOINT_VERSION}"
            )
        arch = Architecture.from_dict(meta["architecture"])
        state = {
            key[len("param:") :]: torch.from_numpy(bundle[key].copy())
            for key in bundle.files
            if key.startswith("param:")
        }
    module = _construct(arch)
    module.load_state_dict(state, strict=True)
    return ClassifierModel(arch, module, seed=meta.get("seed"))
