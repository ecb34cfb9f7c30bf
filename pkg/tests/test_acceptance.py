"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
(run with ``pytest tests/test_acceptance.py -v -s`` to see them)."""
import time

import numpy as np
import pytest

from conftest import make_dataset
from oracles import conv2d_same, median_filter_oracle, recount_confusion
from tdcnn import gradcheck
from tdcnn import layers as L
from tdcnn import preprocess as P
from tdcnn.arch import (
    HiddenArch,
    ModelSpec,
    build_model,
    hidden_sizes,
    load_checkpoint,
    model_forward,
    save_checkpoint,
)
from tdcnn.data import (
    Dataset,
    SynthConfig,
    generate_synthetic,
    normalize_batch,
    prepare_dataset,
    write_curves_svg,
    write_metrics_csv,
)
from tdcnn.layers import softmax
from tdcnn.losses import FocalLossConfig, focal_loss
from tdcnn.tensor import SeededRng
from tdcnn.train import (
    CvMode,
    TrainConfig,
    cross_validate,
    evaluate,
    metrics,
    split_kfold,
    train_model,
)


def _report(number: int, name: str, ok: bool) -> None:
    print(f"\nACCEPTANCE {number} {name}: {'PASS' if ok else 'FAIL'}")
    assert ok, f"criterion {number} ({name}) failed"


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    """Criterion 5 artifacts, shared with criterion 9: synthesize 2000 train
    and 500 test images, train the recto-triangular model, evaluate."""
    base = tmp_path_factory.mktemp("e2e")
    t0 = time.perf_counter()
    train_manifest = generate_synthetic(
        SynthConfig(size=(64, 64), healthy_count=1000, tumor_count=1000, seed=100),
        base / "train",
    )
    test_manifest = generate_synthetic(
        SynthConfig(size=(64, 64), healthy_count=250, tumor_count=250, seed=200),
        base / "test",
    )
    train_ds = prepare_dataset(train_manifest, (64, 64))
    test_ds = prepare_dataset(test_manifest, (64, 64))
    spec = ModelSpec(input_size=(64, 64), hidden=HiddenArch.RECTO_TRIANGULAR)
    model = build_model(spec, SeededRng(7))
    cfg = TrainConfig(epochs=3, batch_size=16, lr=0.001, gamma=2.0, seed=7)
    model, logs = train_model(model, train_ds, Dataset.empty((64, 64)), cfg)
    report = metrics(evaluate(model, test_ds))
    probs, _ = model_forward(model, normalize_batch(test_ds.images, np.float32))
    checkpoint = base / "model.ckpt"
    save_checkpoint(model, checkpoint)
    return {
        "logs": logs,
        "report": report,
        "probs": probs,
        "seconds": time.perf_counter() - t0,
        "train_size": len(train_ds),
        "test_size": len(test_ds),
        "checkpoint": checkpoint,
        "tumor_image": test_manifest.samples[-1].path,  # a tumor-class file
    }


def test_criterion_1_gradient_correctness():
    t0 = time.perf_counter()
    results = gradcheck.run_all()
    elapsed = time.perf_counter() - t0
    by_name = {r.name: r for r in results}
    layer_ok = all(
        by_name[name].max_rel_error < 1e-5
        for name in ("conv2d", "maxpool", "dense", "relu", "softmax+focal")
    )
    model_ok = by_name["full-model"].max_rel_error < 1e-4
    for r in results:
        print(f"  {r.name}: {r.max_rel_error:.3e}")
    _report(1, "gradient correctness", layer_ok and model_ok and elapsed < 60.0)


def test_criterion_2_architecture_fidelity():
    lists_ok = (
        hidden_sizes(HiddenArch.TRIANGULAR) == [256, 512, 256, 128, 64, 32, 16]
        and hidden_sizes(HiddenArch.RECTANGULAR) == [256, 256, 256, 256, 256, 256]
        and hidden_sizes(HiddenArch.RECTO_TRIANGULAR) == [512, 256, 128, 128, 256, 512]
    )
    cfg = TrainConfig()
    spec = ModelSpec()
    defaults_ok = (
        cfg.batch_size == 16
        and cfg.lr == 0.001
        and spec.input_size == (300, 300)
        and spec.conv_filters[:2] == (16, 32)
    )
    _report(2, "architecture fidelity", lists_ok and defaults_ok)


def test_criterion_3_oracle_equivalence():
    rng = np.random.default_rng(33)
    img = rng.integers(0, 256, size=(17, 23), dtype=np.uint8)
    median_ok = np.array_equal(P.median_filter_3x3(img), median_filter_oracle(img))

    x = rng.standard_normal((2, 3, 6, 7))
    w = rng.standard_normal((4, 3, 3, 3))
    bias = rng.standard_normal(4)
    y, _ = L.conv2d_forward(x, L.Conv2DLayer("conv", w, bias))
    conv_ok = np.array_equal(y, conv2d_same(x, w, bias))

    model = build_model(gradcheck.tiny_model_spec(), SeededRng(34))
    ds = make_dataset([0, 1] * 20, size=(32, 32), seed=35)
    cm = evaluate(model, ds)
    probs, _ = model_forward(model, normalize_batch(ds.images, np.float64))
    counts = recount_confusion(np.argmax(probs, axis=1), ds.labels)
    evaluate_ok = (cm.tp, cm.tn, cm.fp, cm.fn) == counts

    tp, tn, fp, fn = 37, 22, 9, 4
    r = metrics(type(cm)(tp=tp, tn=tn, fp=fp, fn=fn))
    prec = tp / (tp + fp)
    rec = tp / (tp + fn)
    metrics_ok = (
        abs(r.accuracy - (tp + tn) / (tp + fp + fn + tn)) < 1e-12
        and abs(r.precision - prec) < 1e-12
        and abs(r.recall - rec) < 1e-12
        and abs(r.f1 - 2 * prec * rec / (prec + rec)) < 1e-12
    )
    _report(3, "oracle equivalence", median_ok and conv_ok and evaluate_ok and metrics_ok)


def test_criterion_4_loss_identities():
    rng = np.random.default_rng(44)
    gamma0_ok = True
    dominance_ok = True
    for _ in range(1000):
        probs = softmax(rng.standard_normal((3, 2)))
        targets = np.zeros((3, 2))
        targets[np.arange(3), rng.integers(0, 2, 3)] = 1.0
        p_true = np.clip((probs * targets).sum(axis=1), 1e-12, None)
        ce = float(np.mean(-np.log(p_true)))
        loss0, _ = focal_loss(probs, targets, FocalLossConfig(gamma=0.0))
        loss2, _ = focal_loss(probs, targets, FocalLossConfig(gamma=2.0))
        gamma0_ok &= abs(loss0 - ce) < 1e-12
        dominance_ok &= loss2 <= ce + 1e-15
    certain, _ = focal_loss(
        np.array([[0.0, 1.0]]), np.array([[0.0, 1.0]]), FocalLossConfig(gamma=2.0)
    )
    _report(4, "loss identities", gamma0_ok and dominance_ok and certain == 0.0)


def test_criterion_5_end_to_end_training(e2e):
    report = e2e["report"]
    logs = e2e["logs"]
    ratio = logs[-1].train_loss / logs[0].train_loss
    print(
        f"  {e2e['train_size']} train / {e2e['test_size']} test, "
        f"{len(logs)} epochs, accuracy={report.accuracy:.4f}, "
        f"loss ratio={ratio:.5f}, wall={e2e['seconds']:.0f}s"
    )
    ok = (
        e2e["train_size"] == 2000
        and e2e["test_size"] == 500
        and len(logs) <= 40
        and report.accuracy >= 0.95
        and ratio < 0.25
        and e2e["seconds"] < 600.0
    )
    _report(5, "end-to-end synthetic training", ok)


def test_criterion_6_cross_validation_invariants(tmp_path):
    manifest = generate_synthetic(
        SynthConfig(size=(16, 16), healthy_count=500, tumor_count=500, seed=66),
        tmp_path / "subjects",
    )
    ds = prepare_dataset(manifest, (16, 16))
    random_plan = split_kfold(ds, 10, CvMode.RANDOM, seed=1)
    sizes = [len(f) for f in random_plan.folds]
    all_random = np.concatenate(random_plan.folds)
    random_ok = (
        max(sizes) - min(sizes) <= 1
        and sorted(all_random.tolist()) == list(range(len(ds)))
    )

    subject_plan = split_kfold(ds, 10, CvMode.SUBJECT, seed=1)
    assignment = {}
    subject_ok = True
    for fold_index, fold in enumerate(subject_plan.folds):
        for i in fold:
            subject_ok &= assignment.setdefault(ds.subjects[i], fold_index) == fold_index
    subject_ok &= len({s for s in ds.subjects}) == 100
    subject_ok &= sorted(np.concatenate(subject_plan.folds).tolist()) == list(range(len(ds)))

    # a real run validates each sample exactly once across the k folds
    small = make_dataset([0, 1] * 25, size=(32, 32), seed=67)
    plan = split_kfold(small, 10, CvMode.RANDOM, seed=2)
    result = cross_validate(
        gradcheck.tiny_model_spec(),
        small,
        TrainConfig(epochs=1, batch_size=8, seed=3, dtype_name="float64"),
        plan,
    )
    run_ok = sum(r.matrix.total for r in result.reports) == len(small)
    _report(6, "cross-validation invariants", random_ok and subject_ok and run_ok)


def test_criterion_7_augmentation_algebra():
    rng = np.random.default_rng(77)
    img = rng.integers(0, 256, size=(24, 24), dtype=np.uint8)
    rotated = img
    for _ in range(4):
        rotated = P.augment(rotated)[1]
    rot_ok = np.array_equal(rotated, img)
    flip_ok = np.array_equal(P.augment(P.augment(img)[4])[4], img)
    count_ok = len(P.augment(img)) == 5
    from tdcnn.data import augment_dataset

    ds = make_dataset([0, 1, 1], size=(16, 16), seed=78)
    cardinality_ok = len(augment_dataset(ds)) == 5 * len(ds)
    _report(7, "augmentation algebra", rot_ok and flip_ok and count_ok and cardinality_ok)


def test_criterion_8_determinism_and_persistence(tmp_path, small_synth):
    def train_once():
        model = build_model(gradcheck.tiny_model_spec(), SeededRng(88))
        cfg = TrainConfig(epochs=2, batch_size=8, seed=88, dtype_name="float64")
        model, logs = train_model(model, small_synth, Dataset.empty((32, 32)), cfg)
        return model, logs

    m1, logs1 = train_once()
    m2, _ = train_once()
    train_ok = all(
        np.array_equal(p, m2.parameters()[name]) for name, p in m1.parameters().items()
    )

    cfg = SynthConfig(size=(16, 16), healthy_count=5, tumor_count=5, seed=89)
    a = generate_synthetic(cfg, tmp_path / "a")
    b = generate_synthetic(cfg, tmp_path / "b")
    synth_ok = all(
        s1.path.read_bytes() == s2.path.read_bytes() for s1, s2 in zip(a.samples, b.samples)
    )
    synth_ok &= (tmp_path / "a/manifest.csv").read_bytes() == (
        tmp_path / "b/manifest.csv"
    ).read_bytes()

    report = metrics(evaluate(m1, small_synth))
    write_metrics_csv([report], tmp_path / "r1.csv")
    write_metrics_csv([report], tmp_path / "r2.csv")
    write_curves_svg(logs1, tmp_path / "c1.svg")
    write_curves_svg(logs1, tmp_path / "c2.svg")
    reports_ok = (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()
    reports_ok &= (tmp_path / "c1.svg").read_bytes() == (tmp_path / "c2.svg").read_bytes()

    f32 = build_model(ModelSpec(input_size=(32, 32), conv_filters=(2, 2, 2, 2, 2), hidden=(4,)),
                      SeededRng(90))
    save_checkpoint(f32, tmp_path / "m.ckpt")
    restored = load_checkpoint(tmp_path / "m.ckpt")
    ckpt_ok = all(
        np.array_equal(p, restored.parameters()[name]) for name, p in f32.parameters().items()
    )
    _report(8, "determinism and persistence", train_ok and synth_ok and reports_ok and ckpt_ok)


def test_predict_identifies_tumor_with_trained_model(e2e, capsys):
    # end-to-end check of the predict surface on the well-trained model
    from tdcnn import cli

    code = cli.main(
        ["predict", "--checkpoint", str(e2e["checkpoint"]), str(e2e["tumor_image"])]
    )
    assert code == 0
    line = [
        l for l in capsys.readouterr().out.splitlines() if l.startswith(str(e2e["tumor_image"]))
    ][0]
    _, verdict, prob = line.split("\t")
    assert verdict == "tumor"
    assert float(prob) > 0.5


def test_criterion_9_probability_hygiene(e2e):
    probs = e2e["probs"]
    rows_ok = bool(np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-5)
    finite_ok = bool(np.all(np.isfinite(probs)))
    logs_ok = all(
        np.isfinite(log.train_loss)
        and np.isfinite(log.train_accuracy)
        and (log.val_loss is None or np.isfinite(log.val_loss))
        for log in e2e["logs"]
    )
    report = e2e["report"]
    range_ok = all(
        0.0 <= v <= 1.0
        for v in (report.accuracy, report.precision, report.recall, report.f1)
    )
    _report(9, "probability hygiene", rows_ok and finite_ok and logs_ok and range_ok)
