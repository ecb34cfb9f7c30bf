"""Dataset plumbing: PGM image files, CSV manifests, the synthetic image
generator used for desk-scale training, and report writers.

The native image format is binary PGM ("P5", maxval 255) because it
round-trips bit-exactly with no decoder dependency. Manifests are CSV with
header ``path,label,subject_id``; subject ids drive subject-wise
cross-validation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .preprocess import augment, check_gray, pipeline
from .tensor import SeededRng

CLASS_NAMES = ("healthy", "tumor")
_LABEL_TOKENS = {"0": 0, "1": 1, "healthy": 0, "tumor": 1}
_SUBJECT_BLOCK = 10  # consecutive synthetic images sharing a subject id


def write_pgm(img: np.ndarray, path) -> None:
    img = check_gray(img)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise DataFormatError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval, then a single whitespace byte
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataFormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # the single whitespace separating header and payload
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise DataFormatError(f"{path}: malformed PGM header") from exc
    if maxval != 255:
        raise DataFormatError(f"{path}: unsupported maxval {maxval} (must be 255)")
    payload = data[pos : pos + h * w]
    if len(payload) != h * w:
        raise DataFormatError(
            f"{path}: truncated payload ({len(payload)} of {h * w} bytes)"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


@dataclass(frozen=True)
class Sample:
    path: Path
    label: int  # 0 = healthy, 1 = tumor
    subject_id: str


@dataclass
class Manifest:
    samples: list[Sample]
    class_names: tuple[str, str] = CLASS_NAMES
    source: str = ""

    def __len__(self) -> int:
        return len(self.samples)

    def require_both_classes(self) -> None:
        labels = {s.label for s in self.samples}
        if labels != {0, 1}:
            raise DataFormatError(
                f"training needs samples of both classes, manifest has labels {sorted(labels)}"
            )


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read manifest {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows or [c.strip() for c in rows[0]] != ["path", "label", "subject_id"]:
        raise DataFormatError(f"{path}: manifest header must be 'path,label,subject_id'")
    samples: list[Sample] = []
    seen: dict[str, int] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise DataFormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        raw_path, raw_label, subject = (c.strip() for c in row)
        if raw_label.lower() not in _LABEL_TOKENS:
            raise DataFormatError(
                f"{path}:{lineno}: unknown label {raw_label!r} "
                f"(expected 0, 1, healthy or tumor)"
            )
        if not subject:
            raise DataFormatError(f"{path}:{lineno}: empty subject_id")
        if raw_path in seen:
            raise DataFormatError(
                f"{path}:{lineno}: duplicate path {raw_path!r} (first at line {seen[raw_path]})"
            )
        seen[raw_path] = lineno
        resolved = (path.parent / raw_path).resolve()
        if not resolved.is_file():
            raise DataFormatError(f"{path}:{lineno}: referenced file {resolved} is unreadable")
        samples.append(Sample(resolved, _LABEL_TOKENS[raw_label.lower()], subject))
    return Manifest(samples, source=str(path))


def write_manifest(manifest: Manifest, path) -> None:
    lines = ["path,label,subject_id"]
    base = Path(path).parent
    for s in manifest.samples:
        rel = s.path.relative_to(base) if s.path.is_absolute() else s.path
        lines.append(f"{rel},{manifest.class_names[s.label]},{s.subject_id}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


@dataclass(frozen=True)
class SynthConfig:
    size: tuple[int, int] = (64, 64)
    healthy_count: int = 0
    tumor_count: int = 0
    noise_std: float = 10.0
    delta: float = 70.0  # added intensity inside the lesion ellipse
    radius_range: tuple[float, float] = (0.10, 0.22)  # fractions of min extent
    seed: int = 0

    def __post_init__(self):
        if self.healthy_count < 0 or self.tumor_count < 0:
            raise ValueError("image counts must be nonnegative")
        lo, hi = self.radius_range
        if not (0 < lo <= hi) or hi > 0.35:
            raise ValueError(
                f"radius range {self.radius_range} must satisfy 0 < lo <= hi <= 0.35 "
                f"so the ellipse fits inside the image"
            )


def _synth_image(cfg: SynthConfig, index: int, with_tumor: bool) -> np.ndarray:
    h, w = cfg.size
    rng = SeededRng(cfg.seed ^ index)  # per-image stream, order-independent
    ys = np.arange(h)[:, None] - (h - 1) / 2.0
    xs = np.arange(w)[None, :] - (w - 1) / 2.0
    r = np.hypot(ys, xs)
    r0 = 0.42 * min(h, w)
    img = 20.0 + 110.0 * np.clip((r0 - r) / 3.0, 0.0, 1.0)
    img += rng.normals(h * w, 0.0, cfg.noise_std).reshape(h, w)
    if with_tumor:
        u = rng.uniforms(5)
        cy = (u[0] - 0.5) * r0
        cx = (u[1] - 0.5) * r0
        lo, hi = cfg.radius_range
        a = (lo + (hi - lo) * u[2]) * min(h, w)
        b = (lo + (hi - lo) * u[3]) * min(h, w)
        theta = np.pi * u[4]
        dy = ys - cy
        dx = xs - cx
        rot_x = dx * np.cos(theta) + dy * np.sin(theta)
        rot_y = -dx * np.sin(theta) + dy * np.cos(theta)
        img += cfg.delta * (((rot_x / a) ** 2 + (rot_y / b) ** 2) <= 1.0)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def generate_synthetic(cfg: SynthConfig, out_dir) -> Manifest:
    """Write PGMs plus a manifest.csv; byte-identical for identical configs.

    Healthy images are a smooth "brain" disc plus seeded Gaussian noise;
    tumor images add one brighter ellipse. Subject ids cover consecutive
    blocks of 10 images so subject-wise splitting has something to group.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples: list[Sample] = []
    index = 0
    for label, count in ((0, cfg.healthy_count), (1, cfg.tumor_count)):
        for j in range(count):
            img = _synth_image(cfg, index, with_tumor=label == 1)
            name = f"{CLASS_NAMES[label]}_{j:04d}.pgm"
            write_pgm(img, out_dir / name)
            samples.append(Sample(Path(name), label, f"s{index // _SUBJECT_BLOCK:03d}"))
            index += 1
    manifest = Manifest(samples, source="synthetic")
    write_manifest(manifest, out_dir / "manifest.csv")
    return Manifest(
        [replace(s, path=(out_dir / s.path).resolve()) for s in samples],
        source="synthetic",
    )


@dataclass
class Dataset:
    """Preprocessed images ready for batching."""

    images: np.ndarray  # uint8 [N, H, W]
    labels: np.ndarray  # int64 [N]
    subjects: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.images)

    def select(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], [self.subjects[i] for i in idx])

    @staticmethod
    def empty(size: tuple[int, int]) -> "Dataset":
        return Dataset(
            np.zeros((0, size[0], size[1]), dtype=np.uint8), np.zeros(0, dtype=np.int64), []
        )


def prepare_dataset(manifest: Manifest, input_size: tuple[int, int]) -> Dataset:
    """Load every sample and run the full image pipeline at the network size."""
    images = np.empty((len(manifest), input_size[0], input_size[1]), dtype=np.uint8)
    labels = np.empty(len(manifest), dtype=np.int64)
    subjects = []
    for i, sample in enumerate(manifest.samples):
        images[i] = pipeline(read_pgm(sample.path), input_size[0], input_size[1])
        labels[i] = sample.label
        subjects.append(sample.subject_id)
    return Dataset(images, labels, subjects)


def augment_dataset(ds: Dataset) -> Dataset:
    """Five variants per image (original, three rotations, flip), labels and
    subjects carried along. Requires square images so rotations keep shape."""
    if len(ds) == 0:
        return ds
    if ds.images.shape[1] != ds.images.shape[2]:
        raise DataFormatError(
            f"augmentation needs square images, got {ds.images.shape[1]}x{ds.images.shape[2]}"
        )
    images = np.concatenate([np.stack(augment(img)) for img in ds.images])
    labels = np.repeat(ds.labels, 5)
    subjects = [s for s in ds.subjects for _ in range(5)]
    return Dataset(images, labels, subjects)


def normalize_batch(images: np.ndarray, dtype) -> np.ndarray:
    """uint8 [N, H, W] -> [N, 1, H, W] in [0, 1], same arithmetic as
    preprocess.normalize."""
    return (images[:, None, :, :].astype(dtype) / dtype(255))


def _fmt(value: float) -> str:
    return f"{value:.5f}"


def write_metrics_csv(reports, path) -> None:
    """One row per fold plus mean/stddev footer rows, 5 decimal places."""
    if not reports:
        raise ValueError("no metric reports to write")
    lines = ["fold,accuracy,precision,recall,f1"]
    table = np.array([[r.accuracy, r.precision, r.recall, r.f1] for r in reports])
    for i, row in enumerate(table, start=1):
        lines.append(f"{i}," + ",".join(_fmt(v) for v in row))
    lines.append("mean," + ",".join(_fmt(v) for v in table.mean(axis=0)))
    lines.append("stddev," + ",".join(_fmt(v) for v in table.std(axis=0)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_comparison_csv(named_reports, path) -> None:
    """One row per architecture: arch,accuracy,precision,recall,f1."""
    if not named_reports:
        raise ValueError("no architecture reports to write")
    lines = ["arch,accuracy,precision,recall,f1"]
    for name, r in named_reports:
        lines.append(
            f"{name}," + ",".join(_fmt(v) for v in (r.accuracy, r.precision, r.recall, r.f1))
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


_SVG_W, _SVG_H, _SVG_PAD = 420, 260, 40


def _polyline(xs, ys, color) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'


def _panel(x_off, title, series, y_label) -> list[str]:
    """series: list of (name, color, values); values may be empty."""
    parts = [
        f'<rect x="{x_off + _SVG_PAD}" y="{_SVG_PAD}" width="{_SVG_W - 2 * _SVG_PAD}" '
        f'height="{_SVG_H - 2 * _SVG_PAD}" fill="none" stroke="#888"/>',
        f'<text x="{x_off + _SVG_W / 2:.0f}" y="{_SVG_PAD - 12}" text-anchor="middle" '
        f'font-size="13">{title}</text>',
        f'<text x="{x_off + 8}" y="{_SVG_H / 2:.0f}" font-size="11" '
        f'transform="rotate(-90 {x_off + 8} {_SVG_H / 2:.0f})" '
        f'text-anchor="middle">{y_label}</text>',
    ]
    populated = [vals for _, _, vals in series if len(vals)]
    if not populated:
        return parts
    lo = min(min(v) for v in populated)
    hi = max(max(v) for v in populated)
    span = (hi - lo) or 1.0
    n = max(len(v) for v in populated)
    for name, color, vals in series:
        if not len(vals):
            continue
        xs = [
            x_off + _SVG_PAD + (_SVG_W - 2 * _SVG_PAD) * (i / max(n - 1, 1))
            for i in range(len(vals))
        ]
        ys = [_SVG_H - _SVG_PAD - (_SVG_H - 2 * _SVG_PAD) * ((v - lo) / span) for v in vals]
        parts.append(_polyline(xs, ys, color))
        parts.append(
            f'<text x="{xs[-1]:.2f}" y="{ys[-1]:.2f}" font-size="10" fill="{color}">{name}</text>'
        )
    return parts


def write_curves_svg(logs, path) -> None:
    """Two polyline charts over epochs: loss and accuracy, train + validation."""
    if not logs:
        raise ValueError("no epoch logs to plot")
    train_loss = [log.train_loss for log in logs]
    train_acc = [log.train_accuracy for log in logs]
    val_loss = [log.val_loss for log in logs if log.val_loss is not None]
    val_acc = [log.val_accuracy for log in logs if log.val_accuracy is not None]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * _SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {2 * _SVG_W} {_SVG_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    parts += _panel(
        0,
        "loss",
        [("train", "#d62728", train_loss), ("validation", "#1f77b4", val_loss)],
        "loss",
    )
    parts += _panel(
        _SVG_W,
        "accuracy",
        [("train", "#d62728", train_acc), ("validation", "#1f77b4", val_acc)],
        "accuracy",
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8", newline="\n")
