"""Acceptance suite: one test per exit criterion, each printing a pass/fail line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion lines.
The desk-scale task is handwritten-digit classification (10 classes, 8x8
images, 1437 train samples) with a 64-128-10 MLP, forgetting class 3.
"""

from __future__ import annotations

import time
from types import SimpleNamespace

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from scipy.spatial.distance import jensenshannon

import forgetbench as fb
from forgetbench.metrics import membership_attack_from_losses


def criterion(number: int, description: str, passed: bool) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[criterion {number}] {status}: {description}")
    assert passed, f"criterion {number} failed: {description}"


# ---------------------------------------------------------------------------
# Desk-scale task (shared by criteria 3-7)
# ---------------------------------------------------------------------------

DESK_ARCH = fb.Architecture(kind="mlp", input_shape=(64,), num_classes=10, hidden=(128,))
DESK_TRAIN = fb.TrainConfig(epochs=30, learning_rate=1e-3, batch_size=32, seed=1, optimizer="adam")
DESK_TARGET = 3

DESK_METHOD_CONFIGS = {
    "ssd": fb.SSDConfig(alpha=5.0, gamma=0.1),
    "teacher": fb.TeacherConfig(epochs=2, learning_rate=0.3, incompetent_seed=2),
    "scrub": fb.ScrubConfig(learning_rate=0.01, unlearn_epochs=2, extra_min_epochs=2),
    "mislabel": fb.MislabelConfig(epochs=2, learning_rate=0.02, relabel_seed=1),
    "unsir": fb.UnsirConfig(
        impair_lr=0.05, repair_lr=0.05, noise_steps=100, noise_lr=0.5,
        impair_repair_rounds=1, noise_seed=3, noise_batch_size=64,
    ),
}


@pytest.fixture(scope="module")
def desk():
    started = time.perf_counter()
    partition = fb.load_dataset("digits")
    assert len(partition.train) <= 5000
    baseline = fb.train(fb.random_init(DESK_ARCH, 1), partition.train, DESK_TRAIN)
    split = fb.make_full_class_split(partition, DESK_TARGET)
    retrained = fb.retrain(DESK_ARCH, split, DESK_TRAIN)
    results = {
        name: fb.run_method(name, split=split, model=baseline, config=config)
        for name, config in DESK_METHOD_CONFIGS.items()
    }
    results["retrain"] = retrained
    baseline_forget = fb.evaluate_accuracy(baseline, split.forget)
    baseline_retain = fb.evaluate_accuracy(baseline, split.retain)
    relative = {
        name: (
            fb.relative_accuracy(fb.evaluate_accuracy(r.model, split.forget), baseline_forget),
            fb.relative_accuracy(fb.evaluate_accuracy(r.model, split.retain), baseline_retain),
        )
        for name, r in results.items()
    }
    return SimpleNamespace(
        partition=partition,
        baseline=baseline,
        split=split,
        results=results,
        relative=relative,
        elapsed=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# 1. Metric oracles
# ---------------------------------------------------------------------------


def test_criterion_1_metric_oracles():
    started = time.perf_counter()
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(1000):
        dim = int(rng.integers(2, 12))
        p = rng.dirichlet(rng.uniform(0.2, 3.0, dim))
        q = rng.dirichlet(rng.uniform(0.2, 3.0, dim))
        expected = jensenshannon(p, q, base=2) ** 2
        worst = max(worst, abs(fb.js_divergence(p, q) - expected))
    exact_one = fb.js_divergence([1.0, 0.0], [0.0, 1.0]) == 1.0

    incompetent = fb.random_init(DESK_ARCH, 5)
    sample = [fb.LabeledExample(np.random.default_rng(0).normal(size=64).astype(np.float32), 0)
              for _ in range(8)]
    zrf_self = fb.zrf(incompetent, incompetent, sample)
    elapsed = time.perf_counter() - started
    criterion(
        1,
        f"js matches direct evaluation on 1000 pairs (max err {worst:.2e} <= 1e-9), "
        f"JS([1,0],[0,1]) == 1.0 exactly, zrf(self)-1 = {zrf_self - 1.0:.2e}, "
        f"runtime {elapsed:.2f}s < 10s",
        worst <= 1e-9 and exact_one and abs(zrf_self - 1.0) <= 1e-6 and elapsed < 10.0,
    )


# ---------------------------------------------------------------------------
# 2. FIM oracle
# ---------------------------------------------------------------------------


def test_criterion_2_fim_oracle():
    arch = fb.Architecture(kind="mlp", input_shape=(2,), num_classes=2, hidden=(4,))
    partition = fb.load_dataset(
        "synthetic-blobs", {"classes": 2, "per_class": 10, "dim": 2, "seed": 12}
    )
    model = fb.train(fb.random_init(arch, 4), partition.train, fb.TrainConfig(epochs=2, seed=4))
    sample = partition.train[:20]
    fim = fb.fim_diagonal(model, sample)

    X = torch.from_numpy(np.stack([e.features for e in sample]))
    y = torch.tensor([e.label for e in sample])
    total = torch.zeros(model.num_parameters, dtype=torch.float64)
    for i in range(len(sample)):
        model.module.zero_grad()
        F.cross_entropy(model.module(X[i : i + 1]), y[i : i + 1]).backward()
        flat = torch.cat([p.grad.reshape(-1) for p in model.module.parameters()])
        total += flat.double().pow(2)
    model.module.zero_grad()
    expected = (total / len(sample)).numpy()
    worst = float(np.max(np.abs(fim.values - expected)))
    criterion(
        2,
        f"{model.num_parameters}-parameter model, {len(sample)} samples: "
        f"max |fim - per-sample oracle| = {worst:.2e} <= 1e-6",
        model.num_parameters <= 50 and worst <= 1e-6,
    )


# ---------------------------------------------------------------------------
# 3. No-op configurations are exact identities
# ---------------------------------------------------------------------------


def test_criterion_3_noop_identities(desk):
    noop_configs = {
        "ssd": fb.SSDConfig(alpha=1e12, gamma=1.0),
        "teacher": fb.TeacherConfig(epochs=0),
        "mislabel": fb.MislabelConfig(epochs=0),
        "scrub": fb.ScrubConfig(unlearn_epochs=0, extra_min_epochs=0),
        "unsir": fb.UnsirConfig(impair_repair_rounds=0),
    }
    reference = desk.baseline.parameter_vector()
    bitwise = {
        name: np.array_equal(
            fb.run_method(name, split=desk.split, model=desk.baseline, config=config)
            .model.parameter_vector(),
            reference,
        )
        for name, config in noop_configs.items()
    }
    criterion(
        3,
        "bitwise-identity no-ops: "
        + ", ".join(f"{name}={'ok' if ok else 'CHANGED'}" for name, ok in bitwise.items()),
        all(bitwise.values()),
    )


# ---------------------------------------------------------------------------
# 4. Desk-scale full-class forgetting
# ---------------------------------------------------------------------------


def test_criterion_4_desk_scale_forgetting(desk):
    checks = []
    for name in ("ssd", "mislabel", "teacher", "scrub"):
        acc_f, acc_r = desk.relative[name]
        checks.append((name, acc_f <= 10.0 and acc_r >= 85.0, acc_f, acc_r))
    chance_equivalent = fb.relative_accuracy(
        1.0 / DESK_ARCH.num_classes, fb.evaluate_accuracy(desk.baseline, desk.split.forget)
    )
    retrain_acc_f = desk.relative["retrain"][0]
    retrain_ok = retrain_acc_f <= chance_equivalent
    detail = ", ".join(f"{n}: Acc_f={f:.2f} Acc_r={r:.2f}" for n, ok, f, r in checks)
    criterion(
        4,
        f"{detail}; retrain Acc_f={retrain_acc_f:.2f} <= chance {chance_equivalent:.1f}; "
        f"total desk runtime {desk.elapsed:.1f}s < 900s",
        all(ok for _, ok, _, _ in checks) and retrain_ok and desk.elapsed < 900,
    )


# ---------------------------------------------------------------------------
# 5. Speed finding
# ---------------------------------------------------------------------------


def test_criterion_5_speedup_vs_retrain(desk):
    retrain_time = desk.results["retrain"].wall_time_seconds
    timings = {
        name: result.wall_time_seconds
        for name, result in desk.results.items()
        if name != "retrain"
    }
    ok = all(t < 0.5 * retrain_time for t in timings.values())
    detail = ", ".join(f"{n}={t:.2f}s" for n, t in timings.items())
    criterion(
        5,
        f"every method < 0.5 x retrain ({retrain_time:.2f}s): {detail}",
        ok,
    )


# ---------------------------------------------------------------------------
# 6. MIA behavior
# ---------------------------------------------------------------------------


def test_criterion_6_mia_behavior(desk):
    rng = np.random.default_rng(23)
    member = rng.normal(1.0, 0.5, 400)
    nonmember = rng.normal(1.0, 0.5, 400)
    evaluation = rng.normal(1.0, 0.5, 200)
    synthetic = membership_attack_from_losses(member, nonmember, evaluation, seed=0)

    kwargs = dict(retain=desk.split.retain, seed=11)
    mia_baseline = fb.mia_score(desk.baseline, desk.split.forget, desk.partition.test, **kwargs)
    mia_unlearned = fb.mia_score(
        desk.results["retrain"].model, desk.split.forget, desk.partition.test, **kwargs
    )
    criterion(
        6,
        f"identical loss distributions -> {synthetic:.3f} (0.5 +/- 0.05); "
        f"mia after unlearning {mia_unlearned:.4f} < baseline {mia_baseline:.4f}",
        abs(synthetic - 0.5) <= 0.05 and mia_unlearned < mia_baseline,
    )


# ---------------------------------------------------------------------------
# 7. UNSIR noise ascent
# ---------------------------------------------------------------------------


def test_criterion_7_noise_ascent(desk):
    increases = []
    for seed in range(10):
        config = fb.UnsirConfig(noise_steps=50, noise_lr=0.5, noise_seed=seed)
        _, loss_start, loss_end = fb.optimize_error_noise(
            desk.baseline, DESK_TARGET, config, batch_count=32
        )
        increases.append(loss_end > loss_start)
    criterion(
        7,
        f"noise loss strictly increased in {sum(increases)}/10 seeded trials",
        sum(increases) == 10,
    )


# ---------------------------------------------------------------------------
# 8. Determinism of the harness
# ---------------------------------------------------------------------------


def _quick_config(method, params):
    return fb.ExperimentConfig(
        dataset_name="synthetic-blobs",
        dataset_options={"classes": 3, "per_class": 40, "test_per_class": 20},
        architecture=fb.Architecture(kind="mlp", input_shape=(4,), num_classes=3, hidden=(16,)),
        baseline_train=fb.TrainConfig(epochs=8, learning_rate=1e-3, seed=1),
        scenario=fb.ScenarioSpec(kind="full_class", target_class=0, seed=3),
        method=method,
        method_params=params,
        metric_seed=7,
    )


def _comparable(record):
    fields = record.report.to_dict()
    fields.pop("time_seconds")
    return fields


def test_criterion_8_determinism(tmp_path):
    config = _quick_config("ssd", {"alpha": 1.0, "gamma": 0.5})
    first = fb.run_experiment(config, cache_dir=tmp_path / "one")
    second = fb.run_experiment(config, cache_dir=tmp_path / "one")
    repeat_err = max(
        abs(value - _comparable(second)[key]) for key, value in _comparable(first).items()
    )

    grid = [
        _quick_config("baseline", {}),
        _quick_config("ssd", {"alpha": 1.0, "gamma": 0.5}),
        _quick_config("mislabel", {"epochs": 1, "learning_rate": 0.05}),
        _quick_config("retrain", {}),
    ]
    serial = fb.run_grid(grid, parallelism=1, cache_dir=tmp_path / "serial")
    parallel = fb.run_grid(grid, parallelism=4, cache_dir=tmp_path / "parallel")
    grid_err = max(
        abs(value - _comparable(right)[key])
        for left, right in zip(serial, parallel)
        for key, value in _comparable(left).items()
    )
    criterion(
        8,
        f"repeat-run max field delta {repeat_err:.2e} <= 1e-9; "
        f"parallelism 1 vs 4 max delta {grid_err:.2e} <= 1e-9",
        repeat_err <= 1e-9 and grid_err <= 1e-9,
    )


# ---------------------------------------------------------------------------
# 9. Report fidelity
# ---------------------------------------------------------------------------


def test_criterion_9_report_fidelity(tmp_path):
    import csv as csv_module
    import io

    records = fb.run_grid(
        [_quick_config("baseline", {}), _quick_config("ssd", {"alpha": 1.0, "gamma": 0.5})],
        cache_dir=tmp_path,
    )
    markdown = fb.emit_report(records, format="markdown")
    header_ok = markdown.splitlines()[0] == "| Method | Acc_t | Acc_r | Acc_f | ZRF | MIA | Time |"

    ssd_cells = [c.strip() for c in markdown.splitlines()[3].strip("|").split("|")]
    precision_ok = (
        all(len(cell.split(".")[1]) == 2 for cell in ssd_cells[1:4])
        and all(len(cell.split(".")[1]) == 4 for cell in ssd_cells[4:6])
        and ssd_cells[6].isdigit()
    )

    csv_text = fb.emit_report(records, format="csv")
    parsed = list(csv_module.reader(io.StringIO(csv_text)))
    reparsed = list(csv_module.reader(io.StringIO(fb.emit_report(records, format="csv"))))
    round_trip_ok = (
        parsed == reparsed
        and parsed[0] == list(fb.REPORT_COLUMNS)
        and all(
            float(row[i]) == float(again[i])
            for row, again in zip(parsed[1:], reparsed[1:])
            for i in range(1, 6)
        )
    )
    criterion(
        9,
        f"header exact: {header_ok}; precision 2/2/2/4/4/whole-seconds: {precision_ok}; "
        f"csv lossless round-trip: {round_trip_ok}",
        header_ok and precision_ok and round_trip_ok,
    )
