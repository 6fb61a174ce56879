"""The six unlearning procedures behind one interface.

Each method maps (model, ForgetSplit, config) to an UnlearnResult holding the
unlearned model and the wall-clock time of the procedure itself (metric
computation is never included). Methods always work on a copy; the input model
is never modified. None of them ever descends a true-labeled forget-set
gradient: retrain drops the forget data entirely, mislabel rewrites the
labels, the distillation methods optimize divergences, selective dampening
takes no gradient steps at all, and the noise method replaces forget inputs
with adversarial noise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .data import ForgetSplit, LabeledExample, Scenario
from .models import (
    Architecture,
    ClassifierModel,
    TrainConfig,
    _as_tensors,
    fim_diagonal,
    random_init,
    train,
)

METHOD_NAMES = ("retrain", "ssd", "teacher", "scrub", "unsir", "mislabel")


class ScenarioMismatchError(ValueError):
    """Raised when a method is called on a forgetting scenario it does not support."""


@dataclass
class UnlearnResult:
    model: ClassifierModel
    wall_time_seconds: float


@dataclass(frozen=True)
class SSDConfig:
    """Selection threshold multiplier and dampening constant."""

    alpha: float = 15.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.gamma <= 0:
            raise ValueError("alpha and gamma must be positive")


@dataclass(frozen=True)
class MislabelConfig:
    epochs: int = 1
    learning_rate: float = 1e-4
    relabel_seed: int = 0
    batch_size: int = 32
    mix_retain: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("invalid mislabel config")


@dataclass(frozen=True)
class TeacherConfig:
    epochs: int = 1
    learning_rate: float = 0.1
    incompetent_seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("invalid teacher config")


@dataclass(frozen=True)
class ScrubConfig:
    learning_rate: float = 1e-4
    alpha_weight: float = 0.001
    gamma_weight: float = 0.99
    unlearn_epochs: int = 4
    extra_min_epochs: int = 0
    batch_size: int = 32
    # The student starts as an exact copy of the teacher, where the KL term
    # has a zero gradient; momentum + weight decay (the cited defaults) break
    # that tie so max-steps can ascend at all.
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("invalid scrub config")
        if self.alpha_weight < 0 or self.gamma_weight < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.unlearn_epochs < 0 or self.extra_min_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("momentum and weight_decay must be nonnegative")


@dataclass(frozen=True)
class UnsirConfig:
    impair_lr: float = 1e-4
    repair_lr: float = 1e-4
    noise_lambda: float = 0.0
    noise_steps: int = 100
    impair_repair_rounds: int = 1
    noise_lr: float = 0.1
    noise_batch_size: int | None = None
    retain_subsample: int | None = None
    noise_seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if self.impair_lr <= 0 or self.repair_lr <= 0 or self.noise_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.noise_lambda < 0:
            raise ValueError("noise_lambda must be nonnegative")
        if self.noise_steps < 1:
            raise ValueError("noise_steps must be >= 1")
        if self.impair_repair_rounds < 0:
            raise ValueError("impair_repair_rounds must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


CONFIG_TYPES = {
    "retrain": TrainConfig,
    "ssd": SSDConfig,
    "teacher": TeacherConfig,
    "scrub": ScrubConfig,
    "unsir": UnsirConfig,
    "mislabel": MislabelConfig,
}


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------


def _batch_starts(n: int, batch_size: int) -> range:
    return range(0, n, batch_size)


def _kl_to_target(student_logits: torch.Tensor, target_logits: torch.Tensor) -> torch.Tensor:
    """Mean KL(student || target) over the batch; target logits are constants."""
    log_p = F.log_softmax(student_logits, dim=1)
    log_q = F.log_softmax(target_logits, dim=1)
    return (log_p.exp() * (log_p - log_q)).sum(dim=1).mean()


def _sgd_epoch_ce(
    module: torch.nn.Module,
    X: torch.Tensor,
    y: torch.Tensor,
    lr: float,
    batch_size: int,
    order: np.ndarray | None = None,
) -> None:
    """One cross-entropy epoch of plain SGD over (X, y) in a fixed order."""
    optimizer = torch.optim.SGD(module.parameters(), lr=lr)
    idx = np.arange(len(X)) if order is None else order
    for start in _batch_starts(len(idx), batch_size):
        sel = torch.from_numpy(idx[start : start + batch_size])
        loss = F.cross_entropy(module(X[sel]), y[sel])
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()


# ---------------------------------------------------------------------------
# Retrain
# ---------------------------------------------------------------------------


def retrain(architecture: Architecture, split: ForgetSplit, config: TrainConfig) -> UnlearnResult:
    """Gold-standard baseline: train a fresh model on the retain set only.

    Equivalent to ``train(random_init(architecture, config.seed), retain,
    config)``; the forget set is never touched.
    """
    if not split.retain:
        raise ValueError("retain set is empty; nothing to retrain on")
    start = time.perf_counter()
    model = train(random_init(architecture, config.seed), split.retain, config)
    return UnlearnResult(model, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Selective synaptic dampening
# ---------------------------------------------------------------------------


def _ssd_select(
    fim_full: np.ndarray, fim_forget: np.ndarray, alpha: float, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    """Dampening rule on Fisher diagonals.

    Parameter i is selected iff forget-sensitivity exceeds alpha times the
    full-data sensitivity; selected parameters are scaled by
    min(gamma * full_i / forget_i, 1) so dampening never amplifies a weight.
    Returns (selection mask, per-parameter scale for selected entries).
    """
    selected = fim_forget > alpha * fim_full
    scale = np.ones_like(fim_full)
    if selected.any():
        scale[selected] = np.minimum(gamma * fim_full[selected] / fim_forget[selected], 1.0)
    return selected, scale


def ssd(model: ClassifierModel, split: ForgetSplit, config: SSDConfig) -> UnlearnResult:
    """Dampen parameters that matter far more to the forget set than to all data.

    Takes no gradient steps; with an empty selection the returned parameters
    are bitwise identical to the input's.
    """
    full_data = list(split.retain) + list(split.forget)
    if not split.forget:
        raise ValueError("forget set is empty")
    if not full_data:
        raise ValueError("training data is empty")
    start = time.perf_counter()
    fim_full = fim_diagonal(model, full_data)
    fim_forget = fim_diagonal(model, split.forget)
    selected, scale = _ssd_select(fim_full.values, fim_forget.values, config.alpha, config.gamma)
    out = model.clone()
    if selected.any():
        with torch.no_grad():
            vector = torch.nn.utils.parameters_to_vector(out.module.parameters())
            idx = torch.from_numpy(np.flatnonzero(selected))
            vector[idx] = vector[idx] * torch.from_numpy(scale[selected]).float()
            torch.nn.utils.vector_to_parameters(vector, out.module.parameters())
    return UnlearnResult(out, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Mislabel fine-tuning
# ---------------------------------------------------------------------------


def relabel_away(
    forget: Sequence[LabeledExample], num_classes: int, seed: int
) -> list[LabeledExample]:
    """Give every forget example a label drawn uniformly from the other classes."""
    if num_classes < 2:
        raise ValueError("relabeling needs at least 2 classes")
    rng = np.random.default_rng(seed)
    relabeled = []
    for example in forget:
        draw = int(rng.integers(num_classes - 1))
        new_label = draw + 1 if draw >= example.label else draw
        relabeled.append(LabeledExample(example.features, new_label))
    return relabeled


def mislabel(model: ClassifierModel, split: ForgetSplit, config: MislabelConfig) -> UnlearnResult:
    """Fine-tune on the forget set with randomly changed labels."""
    if not split.forget:
        raise ValueError("forget set is empty")
    num_classes = model.architecture.num_classes
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    start = time.perf_counter()
    out = model.clone()
    if config.epochs > 0:
        data = relabel_away(split.forget, num_classes, config.relabel_seed)
        if config.mix_retain:
            data = data + list(split.retain)
        X, y = _as_tensors(data, model.architecture)
        rng = np.random.default_rng(config.relabel_seed)
        out.module.train()
        for _ in range(config.epochs):
            _sgd_epoch_ce(
                out.module, X, y, config.learning_rate, config.batch_size,
                order=rng.permutation(len(data)),
            )
        out.module.eval()
    return UnlearnResult(out, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Incompetent teacher
# ---------------------------------------------------------------------------


def incompetent_teacher(
    model: ClassifierModel, split: ForgetSplit, config: TeacherConfig
) -> UnlearnResult:
    """Distill toward a random teacher on forget data and toward the original on retain data.

    Per epoch, forget and retain batches are interleaved; forget batches
    minimize KL(student || incompetent teacher) and retain batches minimize
    KL(student || competent teacher), with equal weighting.
    """
    if not split.forget or not split.retain:
        raise ValueError("teacher unlearning needs nonempty forget and retain sets")
    start = time.perf_counter()
    student = model.clone()
    if config.epochs > 0:
        competent = model.clone().module
        incompetent = random_init(model.architecture, config.incompetent_seed).module
        Xf, _ = _as_tensors(split.forget, model.architecture)
        Xr, _ = _as_tensors(split.retain, model.architecture)
        with torch.no_grad():
            forget_targets = incompetent(Xf)
            retain_targets = competent(Xr)
        optimizer = torch.optim.SGD(student.module.parameters(), lr=config.learning_rate)
        forget_batches = [
            (Xf[s : s + config.batch_size], forget_targets[s : s + config.batch_size])
            for s in _batch_starts(len(Xf), config.batch_size)
        ]
        retain_batches = [
            (Xr[s : s + config.batch_size], retain_targets[s : s + config.batch_size])
            for s in _batch_starts(len(Xr), config.batch_size)
        ]
        student.module.train()
        for _ in range(config.epochs):
            for step in range(max(len(forget_batches), len(retain_batches))):
                batches = []
                if step < len(forget_batches):
                    batches.append(forget_batches[step])
                if step < len(retain_batches):
                    batches.append(retain_batches[step])
                for x, target in batches:
                    loss = _kl_to_target(student.module(x), target)
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
        student.module.eval()
    return UnlearnResult(student, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# SCRUB
# ---------------------------------------------------------------------------


def _scrub_optimizer(student: torch.nn.Module, config: ScrubConfig) -> torch.optim.Optimizer:
    return torch.optim.SGD(
        student.parameters(),
        lr=config.learning_rate,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
    )


def _scrub_max_epoch(
    student: torch.nn.Module,
    teacher: torch.nn.Module,
    forget_X: torch.Tensor,
    optimizer: torch.optim.Optimizer,
    batch_size: int,
) -> None:
    """One max-step epoch: gradient ascent on KL(student || teacher) over the forget set."""
    with torch.no_grad():
        targets = teacher(forget_X)
    for start in _batch_starts(len(forget_X), batch_size):
        logits = student(forget_X[start : start + batch_size])
        loss = -_kl_to_target(logits, targets[start : start + batch_size])
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()


def _scrub_min_epoch(
    student: torch.nn.Module,
    teacher: torch.nn.Module,
    retain_X: torch.Tensor,
    retain_y: torch.Tensor,
    optimizer: torch.optim.Optimizer,
    config: ScrubConfig,
) -> None:
    """One min-step epoch over the retain set.

    Loss per batch: alpha_weight * KL(student || teacher)
                    + gamma_weight * cross_entropy(student, labels).
    """
    with torch.no_grad():
        targets = teacher(retain_X)
    for start in _batch_starts(len(retain_X), config.batch_size):
        sel = slice(start, start + config.batch_size)
        logits = student(retain_X[sel])
        loss = config.alpha_weight * _kl_to_target(logits, targets[sel]) + (
            config.gamma_weight * F.cross_entropy(logits, retain_y[sel])
        )
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()


def scrub(model: ClassifierModel, split: ForgetSplit, config: ScrubConfig) -> UnlearnResult:
    """Alternate forgetting max-steps and retaining min-steps against a frozen teacher.

    Each unlearn epoch runs a max-step epoch (ascend KL to the teacher on the
    forget set) followed by a min-step epoch on the retain set; afterwards,
    ``extra_min_epochs`` additional min-step epochs restore retain performance.
    One optimizer carries momentum across all epochs.
    """
    if not split.forget or not split.retain:
        raise ValueError("scrub needs nonempty forget and retain sets")
    start = time.perf_counter()
    student = model.clone()
    if config.unlearn_epochs > 0 or config.extra_min_epochs > 0:
        teacher = model.clone().module
        Xf, _ = _as_tensors(split.forget, model.architecture)
        Xr, yr = _as_tensors(split.retain, model.architecture)
        optimizer = _scrub_optimizer(student.module, config)
        student.module.train()
        for _ in range(config.unlearn_epochs):
            _scrub_max_epoch(student.module, teacher, Xf, optimizer, config.batch_size)
            _scrub_min_epoch(student.module, teacher, Xr, yr, optimizer, config)
        for _ in range(config.extra_min_epochs):
            _scrub_min_epoch(student.module, teacher, Xr, yr, optimizer, config)
        student.module.eval()
    return UnlearnResult(student, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# UNSIR
# ---------------------------------------------------------------------------


def optimize_error_noise(
    model: ClassifierModel,
    target_class: int,
    config: UnsirConfig,
    batch_count: int,
) -> tuple[torch.Tensor, float, float]:
    """Learn a noise batch the frozen model misreads maximally as ``target_class``.

    Ascends cross_entropy(model(noise), target_class) - noise_lambda * ||noise||^2
    by gradient steps on the noise. Returns (noise, loss at init, loss after),
    where the losses are the raw cross-entropy terms.
    """
    generator = torch.Generator().manual_seed(int(config.noise_seed))
    noise = torch.randn(
        (batch_count, model.architecture.input_size), generator=generator, requires_grad=True
    )
    labels = torch.full((batch_count,), int(target_class), dtype=torch.int64)
    module = model.clone().module
    for parameter in module.parameters():
        parameter.requires_grad_(False)
    with torch.no_grad():
        loss_start = float(F.cross_entropy(module(noise), labels))
    optimizer = torch.optim.SGD([noise], lr=config.noise_lr)
    for _ in range(config.noise_steps):
        objective = F.cross_entropy(module(noise), labels) - config.noise_lambda * noise.pow(2).sum()
        loss = -objective
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    with torch.no_grad():
        loss_end = float(F.cross_entropy(module(noise), labels))
    return noise.detach(), loss_start, loss_end


def unsir(model: ClassifierModel, split: ForgetSplit, config: UnsirConfig) -> UnlearnResult:
    """Impair recall of the target class with error-maximizing noise, then repair.

    Full-class scenario only. Each round fine-tunes one epoch on the noise
    batch (labeled as the target class) mixed with the retain subsample at
    ``impair_lr``, then one epoch on the retain subsample at ``repair_lr``.
    """
    if split.scenario is not Scenario.FULL_CLASS or split.target_class is None:
        raise ScenarioMismatchError("unsir requires a full-class split with a target class")
    if not split.retain:
        raise ValueError("retain set is empty")
    start = time.perf_counter()
    out = model.clone()
    if config.impair_repair_rounds > 0:
        rng = np.random.default_rng(config.noise_seed)
        retain_pool = list(split.retain)
        if config.retain_subsample is not None and config.retain_subsample < len(retain_pool):
            keep = rng.choice(len(retain_pool), size=config.retain_subsample, replace=False)
            retain_pool = [retain_pool[i] for i in sorted(keep)]
        batch_count = config.noise_batch_size
        if batch_count is None:
            batch_count = min(config.batch_size, max(len(split.forget), 1))
        noise, _, _ = optimize_error_noise(model, split.target_class, config, batch_count)

        Xr, yr = _as_tensors(retain_pool, model.architecture)
        impair_X = torch.cat([noise, Xr])
        impair_y = torch.cat(
            [torch.full((len(noise),), int(split.target_class), dtype=torch.int64), yr]
        )
        out.module.train()
        for _ in range(config.impair_repair_rounds):
            _sgd_epoch_ce(
                out.module, impair_X, impair_y, config.impair_lr, config.batch_size,
                order=rng.permutation(len(impair_X)),
            )
            _sgd_epoch_ce(out.module, Xr, yr, config.repair_lr, config.batch_size)
        out.module.eval()
    return UnlearnResult(out, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


def run_method(
    name: str,
    *,
    split: ForgetSplit,
    model: ClassifierModel | None = None,
    architecture: Architecture | None = None,
    config=None,
) -> UnlearnResult:
    """Dispatch a method by its stable identifier.

    ``retrain`` needs ``architecture``; every other method needs ``model``.
    ``config`` defaults to the method's config type with default values.
    """
    if name not in METHOD_NAMES:
        raise KeyError(f"unknown method {name!r}; expected one of {', '.join(METHOD_NAMES)}")
    if config is None:
        config = CONFIG_TYPES[name]()
    if name == "retrain":
        if architecture is None:
            raise ValueError("retrain needs the architecture descriptor")
        return retrain(architecture, split, config)
    if model is None:
        raise ValueError(f"{name} needs the model to unlearn from")
    fn = {
        "ssd": ssd,
        "teacher": incompetent_teacher,
        "scrub": scrub,
        "unsir": unsir,
        "mislabel": mislabel,
    }[name]
    return fn(model, split, config)
