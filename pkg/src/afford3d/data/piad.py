"""Reading and writing the canonical on-disk sample layout.

Layout::

    <root>/<setting>/<train|test>/<sample_id>/
        points.xyz   one "x y z" per line
        mask.txt     one float per line
        image.ppm    binary P6
        meta.txt     key=value lines (label, category, box_subject, box_object[, cloud_id])
"""

import logging
from pathlib import Path

import numpy as np
from PIL import Image

from .types import (
    AFFORDANCES, CANONICAL_POINTS, OBJECT_CATEGORIES, AffordanceSample, DatasetSplit,
    IngestError, InteractionImage, PointCloud, ValidationError, is_normalized,
    normalize_coords, validate_sample,
)

log = logging.getLogger(__name__)

SETTINGS = ("seen", "unseen")
PARTS = ("train", "test")


def read_xyz(path):
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"missing file: {path}")
    coords = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if coords.shape[1] != 3:
        raise ValidationError(f"{path}: expected 3 columns, got {coords.shape[1]}")
    return coords


def write_xyz(path, coords):
    np.savetxt(path, np.asarray(coords, dtype=np.float64), fmt="%.17g")


def read_ppm(path):
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"missing file: {path}")
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr.transpose(2, 0, 1) / 255.0


def write_ppm(path, pixels):
    arr = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path, format="PPM")


def read_meta(path):
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"missing file: {path}")
    meta = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise IngestError(f"{path}: malformed line {line!r}")
        meta[key.strip()] = value.strip()
    return meta


def _parse_box(text, path):
    try:
        box = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ValidationError(f"{path}: bad box {text!r}") from None
    return box


def read_sample(sample_dir, n_points=CANONICAL_POINTS, normalize=True):
    sample_dir = Path(sample_dir)
    if not sample_dir.is_dir():
        raise IngestError(f"missing sample directory: {sample_dir}")
    meta = read_meta(sample_dir / "meta.txt")
    for key in ("label", "category", "box_subject", "box_object"):
        if key not in meta:
            raise IngestError(f"{sample_dir / 'meta.txt'}: missing key {key!r}")
    coords = read_xyz(sample_dir / "points.xyz")
    mask_path = sample_dir / "mask.txt"
    if not mask_path.is_file():
        raise IngestError(f"missing file: {mask_path}")
    mask = np.loadtxt(mask_path, dtype=np.float64, ndmin=1)
    pixels = read_ppm(sample_dir / "image.ppm")
    # already-normalized clouds are kept as-is so that export/load is bitwise
    if normalize and not is_normalized(coords):
        coords = normalize_coords(coords)
    try:
        label = int(meta["label"])
    except ValueError:
        raise ValidationError(f"{sample_dir}: label {meta['label']!r} is not an integer") from None
    sample = AffordanceSample(
        cloud=PointCloud(coords),
        image=InteractionImage(
            pixels,
            _parse_box(meta["box_subject"], sample_dir),
            _parse_box(meta["box_object"], sample_dir),
        ),
        gt_mask=mask,
        label=label,
        category=meta["category"],
        sample_id=sample_dir.name,
        cloud_id=meta.get("cloud_id", ""),
    )
    return validate_sample(sample, n_points=n_points)


def write_sample(sample_dir, sample):
    sample_dir = Path(sample_dir)
    sample_dir.mkdir(parents=True, exist_ok=True)
    write_xyz(sample_dir / "points.xyz", sample.cloud.coords)
    np.savetxt(sample_dir / "mask.txt", np.asarray(sample.gt_mask, dtype=np.float64), fmt="%.17g")
    write_ppm(sample_dir / "image.ppm", sample.image.pixels)
    lines = [
        f"label={int(sample.label)}",
        f"category={sample.category}",
        "box_subject=" + ",".join(str(int(v)) for v in sample.image.box_subject),
        "box_object=" + ",".join(str(int(v)) for v in sample.image.box_object),
    ]
    if sample.cloud_id and sample.cloud_id != sample.sample_id:
        lines.append(f"cloud_id={sample.cloud_id}")
    (sample_dir / "meta.txt").write_text("\n".join(lines) + "\n")


def load_piad(root, setting="seen", n_points=CANONICAL_POINTS, normalize=True):
    """Load the train and test parts of one setting from the canonical layout."""
    if setting not in SETTINGS:
        raise ValueError(f"setting must be one of {SETTINGS}, got {setting!r}")
    base = Path(root) / setting
    if not base.is_dir():
        raise IngestError(f"missing setting directory: {base}")
    parts = {}
    for part in PARTS:
        part_dir = base / part
        if not part_dir.is_dir():
            parts[part] = []
            continue
        parts[part] = [
            read_sample(d, n_points=n_points, normalize=normalize)
            for d in sorted(part_dir.iterdir()) if d.is_dir()
        ]
    if not parts["train"] and not parts["test"]:
        raise IngestError(f"no samples found under {base}")
    split = DatasetSplit(parts["train"], parts["test"], setting=setting)
    unknown = {s.category for s in split.samples} - set(OBJECT_CATEGORIES)
    if unknown:
        log.warning("categories outside the PIAD vocabulary: %s", sorted(unknown))
        split.categories = tuple(OBJECT_CATEGORIES) + tuple(sorted(unknown))
    if setting == "unseen" and split.train_categories() & split.test_categories():
        raise ValidationError("unseen split shares object categories between train and test")
    log.info("loaded %s: %d train / %d test samples, %d clouds, %d images", base,
             len(split.train), len(split.test), split.n_clouds, split.n_images)
    return split


def export_split(split, root):
    """Write a split in the canonical layout (inverse of ``load_piad``)."""
    base = Path(root) / split.setting
    for part, samples in (("train", split.train), ("test", split.test)):
        for sample in samples:
            write_sample(base / part / sample.sample_id, sample)
    return base


def write_ply(path, coords, colors):
    """ASCII PLY with float xyz and uchar rgb per vertex."""
    coords = np.asarray(coords)
    colors = np.asarray(colors, dtype=np.int64)
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {coords.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    body = [
        f"{x:.9g} {y:.9g} {z:.9g} {r:d} {g:d} {b:d}"
        for (x, y, z), (r, g, b) in zip(coords.tolist(), colors.tolist())
    ]
    Path(path).write_text("\n".join(header + body) + "\n")


def read_ply(path):
    """Parse an ASCII PLY written by :func:`write_ply`; returns (coords, colors)."""
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"missing file: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise IngestError(f"{path}: not a PLY file")
    n_vertex, props, start = None, [], None
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise IngestError(f"{path}: only ascii PLY is supported")
        if tok[:2] == ["element", "vertex"]:
            n_vertex = int(tok[2])
        elif tok[0] == "property":
            props.append(tok[-1])
        elif tok[0] == "end_header":
            start = i + 1
            break
    if n_vertex is None or start is None:
        raise IngestError(f"{path}: incomplete header")
    data = np.loadtxt(lines[start:start + n_vertex], dtype=np.float64, ndmin=2)
    if data.shape[0] != n_vertex:
        raise IngestError(f"{path}: expected {n_vertex} vertices, found {data.shape[0]}")
    cols = {name: data[:, j] for j, name in enumerate(props)}
    coords = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    colors = np.stack([cols["red"], cols["green"], cols["blue"]], axis=1).astype(np.int64)
    return coords, colors


def load_cloud(path, normalize=True):
    """Raw ``points.xyz`` input for inference on clouds from other sources."""
    coords = read_xyz(path)
    if not np.isfinite(coords).all():
        raise ValidationError(f"{path}: non-finite coordinates")
    if normalize and not is_normalized(coords):
        coords = normalize_coords(coords)
    return PointCloud(coords)


def load_image(ppm_path, box_subject, box_object):
    pixels = read_ppm(ppm_path)
    return InteractionImage(pixels, tuple(box_subject), tuple(box_object))


__all__ = [
    "AFFORDANCES", "load_piad", "export_split", "read_sample", "write_sample",
    "write_ply", "read_ply", "load_cloud", "load_image",
]
