"""Evaluation suite: relative accuracies, divergence metrics, ZRF, and the MIA probe."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.linear_model import LogisticRegression

from .data import ForgetSplit, LabeledExample, Scenario
from .models import (
    ClassifierModel,
    evaluate_accuracy,
    per_sample_losses,
    predict_probabilities,
)

_EPS = 1e-12
_NORM_TOL = 1e-6


@dataclass
class MetricsReport:
    """The six-column evaluation record of one unlearning run.

    ``acc_*`` are percentages relative to the baseline model (they may exceed
    100 when unlearning improves accuracy); ``zrf`` and ``mia`` lie in [0, 1].
    """

    acc_t: float
    acc_r: float
    acc_f: float
    zrf: float
    mia: float
    time_seconds: float

    def to_dict(self) -> dict:
        return {
            "acc_t": self.acc_t,
            "acc_r": self.acc_r,
            "acc_f": self.acc_f,
            "zrf": self.zrf,
            "mia": self.mia,
            "time_seconds": self.time_seconds,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "MetricsReport":
        return cls(**{k: float(raw[k]) for k in ("acc_t", "acc_r", "acc_f", "zrf", "mia", "time_seconds")})


def relative_accuracy(a_u: float, a_b: float) -> float:
    """Accuracy of the evaluated model as a percentage of the baseline's."""
    if a_b == 0:
        raise ValueError("baseline accuracy is zero; relative accuracy undefined")
    return a_u / a_b * 100.0


def _check_distribution_pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if p.shape != q.shape:
        raise ValueError(f"distribution length mismatch: {p.shape} vs {q.shape}")
    for v in (p, q):
        if (v < -_NORM_TOL).any() or abs(v.sum() - 1.0) > _NORM_TOL:
            raise ValueError("input is not a normalized probability distribution")
    return p, q


def _kl_bits(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log2(p[mask] / np.clip(q[mask], _EPS, None))))


def kl_divergence(p, q) -> float:
    """KL(p || q) in bits; 0 * log(0/q) counts as 0 and q is clipped at 1e-12."""
    p, q = _check_distribution_pair(p, q)
    return _kl_bits(p, q)


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in bits: symmetric and bounded to [0, 1]."""
    p, q = _check_distribution_pair(p, q)
    m = 0.5 * (p + q)
    return 0.5 * _kl_bits(p, m) + 0.5 * _kl_bits(q, m)


def zrf(
    model: ClassifierModel,
    incompetent: ClassifierModel,
    forget: Sequence[LabeledExample],
) -> float:
    """One minus the mean JS divergence to the incompetent reference over the forget pool.

    Values near 1 mean the model predicts as randomly as an untrained network
    on the forgotten examples.
    """
    if not forget:
        raise ValueError("forget set is empty")
    if model.architecture.num_classes != incompetent.architecture.num_classes:
        raise ValueError("models disagree on the number of classes")
    p = predict_probabilities(model, forget)
    q = predict_probabilities(incompetent, forget)
    divergences = [js_divergence(pi, qi) for pi, qi in zip(p, q)]
    return float(1.0 - np.mean(divergences))


@dataclass
class AttackDataset:
    """Per-sample loss pools the membership attacker learns from."""

    member_features: np.ndarray
    nonmember_features: np.ndarray

    def __post_init__(self):
        self.member_features = np.asarray(self.member_features, dtype=np.float64).reshape(-1)
        self.nonmember_features = np.asarray(self.nonmember_features, dtype=np.float64).reshape(-1)
        if len(self.member_features) == 0 or len(self.nonmember_features) == 0:
            raise ValueError("attack dataset needs nonempty member and nonmember pools")


def membership_attack(attack_data: AttackDataset, eval_losses, seed: int) -> float:
    """Loss-thresholding attacker: mean membership probability over ``eval_losses``.

    A logistic regression is fit on a balanced, seed-shuffled half of the
    member/nonmember loss pools (the other halves stay held out); it then
    scores how member-like each evaluation loss looks.
    """
    evaluation = np.asarray(eval_losses, dtype=np.float64).reshape(-1)
    if len(evaluation) == 0:
        raise ValueError("no losses to score")
    size = min(len(attack_data.member_features), len(attack_data.nonmember_features))
    if size < 2:
        raise ValueError("need at least 2 member and 2 nonmember losses to fit the attacker")
    rng = np.random.default_rng(seed)
    member = rng.permutation(attack_data.member_features)[:size]
    nonmember = rng.permutation(attack_data.nonmember_features)[:size]
    half = size // 2
    X = np.concatenate([member[:half], nonmember[:half]]).reshape(-1, 1)
    y = np.concatenate([np.ones(half), np.zeros(half)])
    attacker = LogisticRegression()
    attacker.fit(X, y)
    probabilities = attacker.predict_proba(evaluation.reshape(-1, 1))[:, 1]
    return float(probabilities.mean())


def membership_attack_from_losses(
    member_losses, nonmember_losses, eval_losses, seed: int
) -> float:
    """Convenience wrapper over :func:`membership_attack` for raw loss arrays."""
    return membership_attack(AttackDataset(member_losses, nonmember_losses), eval_losses, seed)


def mia_score(
    model: ClassifierModel,
    forget: Sequence[LabeledExample],
    test: Sequence[LabeledExample],
    *,
    retain: Sequence[LabeledExample],
    seed: int,
) -> float:
    """Membership probability the attacker assigns to the forget pool.

    The attacker never trains on forget samples: it learns to separate known
    training members (retain losses) from nonmembers (test losses) and is then
    asked how member-like the forget samples look. Near the baseline's score
    means the forget data still reads as training data; a drop means the model
    treats it like unseen data.
    """
    for name, pool in (("forget", forget), ("test", test), ("retain", retain)):
        if len(pool) < 10:
            raise ValueError(f"{name} pool too small for a stable attacker (need >= 10)")
    attack_data = AttackDataset(
        member_features=per_sample_losses(model, retain),
        nonmember_features=per_sample_losses(model, test),
    )
    return membership_attack(attack_data, per_sample_losses(model, forget), seed)


def evaluate_all(
    unlearned: ClassifierModel,
    baseline: ClassifierModel,
    split: ForgetSplit,
    test: Sequence[LabeledExample],
    incompetent: ClassifierModel,
    time_seconds: float,
    seed: int,
) -> MetricsReport:
    """Assemble the full six-column report for one unlearning run.

    Test accuracy is restricted to retained-class test samples in the
    full-class scenario (a perfect unlearner cannot score on a class it was
    asked to forget); other scenarios use the whole test set.
    """
    if split.scenario is Scenario.FULL_CLASS:
        test_pool = [e for e in test if e.label != split.target_class]
    else:
        test_pool = list(test)
    acc_t = relative_accuracy(
        evaluate_accuracy(unlearned, test_pool), evaluate_accuracy(baseline, test_pool)
    )
    acc_r = relative_accuracy(
        evaluate_accuracy(unlearned, split.retain), evaluate_accuracy(baseline, split.retain)
    )
    acc_f = relative_accuracy(
        evaluate_accuracy(unlearned, split.forget), evaluate_accuracy(baseline, split.forget)
    )
    return MetricsReport(
        acc_t=acc_t,
        acc_r=acc_r,
        acc_f=acc_f,
        zrf=zrf(unlearned, incompetent, split.forget),
        mia=mia_score(unlearned, split.forget, test, retain=split.retain, seed=seed),
        time_seconds=float(time_seconds),
    )
