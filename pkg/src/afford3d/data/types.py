"""Core sample containers and their validation rules."""

from dataclasses import dataclass, field

import numpy as np

AFFORDANCES = (
    "grasp", "contain", "lift", "open", "lay", "sit", "support", "wrapgrasp", "pour",
    "move", "display", "push", "listen", "wear", "press", "cut", "stab",
)

OBJECT_CATEGORIES = (
    "Earphone", "Bag", "Chair", "Refrigerator", "Knife", "Dishwasher", "Keyboard",
    "Scissors", "Table", "StorageFurniture", "Bottle", "Bowl", "Microwave", "Display",
    "TrashCan", "Hat", "Clock", "Door", "Mug", "Faucet", "Vase", "Laptop", "Bed",
)

NUM_AFFORDANCES = len(AFFORDANCES)
CANONICAL_POINTS = 2048

# full PIAD release, train + test
PIAD_N_CLOUDS = 7012
PIAD_N_IMAGES = 5162


class IngestError(Exception):
    """Raised when on-disk data is missing or unreadable."""


class ValidationError(ValueError):
    """Raised when a sample violates its invariants."""


def normalize_coords(coords):
    """Center on the centroid and scale to unit max-radius."""
    coords = np.asarray(coords, dtype=np.float64)
    centered = coords - coords.mean(axis=0)
    radius = np.sqrt((centered ** 2).sum(axis=1)).max()
    if radius > 0:
        centered = centered / radius
    return centered


def is_normalized(coords, atol=1e-5):
    coords = np.asarray(coords)
    if np.abs(coords.mean(axis=0)).max() > atol:
        return False
    radius = np.sqrt((coords ** 2).sum(axis=1)).max()
    return abs(radius - 1.0) <= 1e-6


@dataclass
class PointCloud:
    coords: np.ndarray  # (N, 3)

    @property
    def n(self):
        return self.coords.shape[0]


@dataclass
class InteractionImage:
    pixels: np.ndarray  # (3, H, W) in [0, 1]
    box_subject: tuple
    box_object: tuple

    @property
    def height(self):
        return self.pixels.shape[1]

    @property
    def width(self):
        return self.pixels.shape[2]

    @property
    def scene_mask(self):
        """1 outside the union of the subject and object boxes, 0 inside."""
        mask = np.ones((self.height, self.width), dtype=np.float64)
        for x0, y0, x1, y1 in (self.box_subject, self.box_object):
            mask[y0:y1, x0:x1] = 0.0
        return mask


@dataclass
class AffordanceSample:
    cloud: PointCloud
    image: InteractionImage
    gt_mask: np.ndarray  # (N,)
    label: int
    category: str = ""
    sample_id: str = ""
    cloud_id: str = ""

    def __post_init__(self):
        if not self.cloud_id:
            self.cloud_id = self.sample_id


@dataclass
class DatasetSplit:
    train: list
    test: list
    setting: str = "seen"
    categories: tuple = OBJECT_CATEGORIES
    affordances: tuple = AFFORDANCES
    meta: dict = field(default_factory=dict)

    @property
    def samples(self):
        return list(self.train) + list(self.test)

    @property
    def n_clouds(self):
        return len({s.cloud_id for s in self.samples})

    @property
    def n_images(self):
        return len({s.sample_id for s in self.samples})

    def train_categories(self):
        return {s.category for s in self.train}

    def test_categories(self):
        return {s.category for s in self.test}


def validate_box(box, width, height, name="box"):
    if len(box) != 4:
        raise ValidationError(f"{name} must have 4 coordinates, got {box!r}")
    x0, y0, x1, y1 = box
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise ValidationError(f"{name} {tuple(box)} outside {width}x{height} image or empty")


def validate_sample(sample, n_points=CANONICAL_POINTS, n_classes=NUM_AFFORDANCES):
    coords = sample.cloud.coords
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValidationError(f"{sample.sample_id}: coords must be N x 3, got {coords.shape}")
    if n_points is not None and coords.shape[0] != n_points:
        raise ValidationError(
            f"{sample.sample_id}: expected {n_points} points, got {coords.shape[0]}")
    if not np.isfinite(coords).all():
        raise ValidationError(f"{sample.sample_id}: non-finite coordinates")
    mask = sample.gt_mask
    if mask.shape != (coords.shape[0],):
        raise ValidationError(f"{sample.sample_id}: mask length {mask.shape} != point count")
    if not np.isfinite(mask).all() or mask.min() < 0 or mask.max() > 1:
        raise ValidationError(f"{sample.sample_id}: mask values outside [0, 1]")
    if not (0 <= int(sample.label) < n_classes):
        raise ValidationError(f"{sample.sample_id}: label {sample.label} outside vocabulary")
    img = sample.image
    if img.pixels.ndim != 3 or img.pixels.shape[0] != 3:
        raise ValidationError(f"{sample.sample_id}: image must be 3 x H x W")
    if img.pixels.min() < 0 or img.pixels.max() > 1:
        raise ValidationError(f"{sample.sample_id}: pixel values outside [0, 1]")
    validate_box(img.box_subject, img.width, img.height, "box_subject")
    validate_box(img.box_object, img.width, img.height, "box_object")
    return sample
