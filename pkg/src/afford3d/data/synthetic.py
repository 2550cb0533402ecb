"""Procedural stand-in for PIAD: composite primitive objects, part masks, silhouettes.

Every object is assembled from a few surface primitives (boxes, cylinders, spheres,
torus arcs). One part carries the sampled affordance; its points get mask value 1 and
nearby points receive a Gaussian falloff. The paired image is a front orthographic
silhouette with a colored "subject" blob next to the affordance part, whose hue encodes
the affordance class.
"""

import colorsys
import math

import numpy as np
from scipy.spatial import cKDTree

from .types import (
    AFFORDANCES, AffordanceSample, DatasetSplit, InteractionImage, PointCloud,
    normalize_coords,
)

FALLOFF_SIGMA = 0.04
FALLOFF_FLOOR = 0.01
IMAGE_SIZE = 64
MIN_PART_POINTS = 8


# -- surface primitives; each returns (sampler(rng, n) -> (n, 3), area) ---------------

def _box(center, size):
    center, size = np.asarray(center, float), np.asarray(size, float)
    sx, sy, sz = size
    face_area = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])

    def sample(rng, n):
        face = rng.choice(6, size=n, p=face_area / face_area.sum())
        pts = rng.uniform(-0.5, 0.5, (n, 3)) * size
        axis = face // 2
        pts[np.arange(n), axis] = np.where(face % 2 == 0, 0.5, -0.5) * size[axis]
        return pts + center

    return sample, float(face_area.sum())


def _orient(pts, axis):
    # local frames are built along y; rotate onto x or z as requested
    if axis == 0:
        return pts[:, [1, 0, 2]]
    if axis == 2:
        return pts[:, [0, 2, 1]]
    return pts


def _cylinder(center, radius, height, axis=1, caps=True):
    side = 2 * math.pi * radius * height
    cap = math.pi * radius ** 2 if caps else 0.0

    def sample(rng, n):
        which = rng.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2 * cap))
        theta = rng.uniform(0, 2 * math.pi, n)
        r = np.where(which == 0, radius, radius * np.sqrt(rng.uniform(0, 1, n)))
        h = np.where(which == 0, rng.uniform(-0.5, 0.5, n) * height,
                     np.where(which == 1, 0.5, -0.5) * height)
        pts = np.stack([r * np.cos(theta), h, r * np.sin(theta)], axis=1)
        return _orient(pts, axis) + np.asarray(center, float)

    return sample, side + 2 * cap


def _sphere(center, radius, upper_only=False):
    def sample(rng, n):
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        if upper_only:
            v[:, 1] = np.abs(v[:, 1])
        return v * radius + np.asarray(center, float)

    area = 4 * math.pi * radius ** 2
    return sample, area / 2 if upper_only else area


def _torus_arc(center, major, minor, start, stop, axis=2):
    """Tube of radius ``minor`` along a circular arc in the plane normal to ``axis``."""
    def sample(rng, n):
        u = rng.uniform(start, stop, n)
        v = rng.uniform(0, 2 * math.pi, n)
        ring = major + minor * np.cos(v)
        pts = np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], axis=1)
        if axis == 1:
            pts = pts[:, [0, 2, 1]]
        return pts + np.asarray(center, float)

    return sample, (stop - start) * major * 2 * math.pi * minor


def _union(*prims):
    areas = np.array([a for _, a in prims])

    def sample(rng, n):
        counts = _allocate(n, areas, minimum=0)
        return np.concatenate([s(rng, c) for (s, _), c in zip(prims, counts)], axis=0)

    return sample, float(areas.sum())


# -- object templates -------------------------------------------------------------------
# each returns ({part: primitive}, {affordance: part})

def _mug(j):
    r, h = 0.4 * j(), 0.9 * j()
    return ({"body": _cylinder((0, 0, 0), r, h),
             "handle": _torus_arc((r, 0, 0), 0.25 * j(), 0.05, -math.pi / 2, math.pi / 2)},
            {"contain": "body", "wrapgrasp": "body", "grasp": "handle"})


def _bottle(j):
    r, h = 0.3 * j(), 1.0 * j()
    neck_h = 0.3 * j()
    return ({"body": _cylinder((0, 0, 0), r, h),
             "neck": _cylinder((0, h / 2 + neck_h / 2, 0), 0.12, neck_h, caps=False),
             "cap": _cylinder((0, h / 2 + neck_h + 0.06, 0), 0.14, 0.12)},
            {"open": "cap", "pour": "neck", "wrapgrasp": "body"})


def _bag(j):
    w, h = 1.0 * j(), 0.8 * j()
    return ({"body": _box((0, 0, 0), (w, h, 0.35 * j())),
             "handle": _torus_arc((0, h / 2, 0), 0.3 * j(), 0.04, 0.0, math.pi)},
            {"lift": "handle", "grasp": "handle", "contain": "body"})


def _knife(j):
    blade = 1.2 * j()
    return ({"blade": _box((blade / 2 - 0.2, 0, 0), (blade, 0.25 * j(), 0.03)),
             "tip": _box((blade - 0.05, 0, 0), (0.3, 0.15, 0.03)),
             "handle": _cylinder((-0.45, 0, 0), 0.08, 0.5 * j(), axis=0)},
            {"cut": "blade", "stab": "tip", "grasp": "handle"})


def _legs(x, z, y, height, radius=0.04):
    return _union(*[_cylinder((sx * x, y, sz * z), radius, height, caps=False)
                    for sx in (-1, 1) for sz in (-1, 1)])


def _chair(j):
    w = 0.9 * j()
    return ({"seat": _box((0, 0, 0), (w, 0.1, w)),
             "back": _box((0, 0.5, -w / 2), (w, 0.9 * j(), 0.1)),
             "legs": _legs(w / 2 - 0.05, w / 2 - 0.05, -0.4, 0.8)},
            {"sit": "seat", "move": "back"})


def _table(j):
    w, d = 1.4 * j(), 0.9 * j()
    return ({"top": _box((0, 0.4, 0), (w, 0.08, d)),
             "legs": _legs(w / 2 - 0.08, d / 2 - 0.08, 0.0, 0.8)},
            {"support": "top", "move": "legs"})


def _bed(j):
    length = 1.8 * j()
    return ({"mattress": _box((0, 0.15, 0), (1.0, 0.25, length)),
             "frame": _box((0, -0.08, 0), (1.1, 0.2, length + 0.1)),
             "headboard": _box((0, 0.25, -length / 2 - 0.05), (1.1, 0.7 * j(), 0.08))},
            {"lay": "mattress", "sit": "frame"})


def _hat(j):
    r = 0.5 * j()
    return ({"dome": _sphere((0, 0, 0), r, upper_only=True),
             "brim": _cylinder((0, 0, 0), r * 1.6, 0.02)},
            {"wear": "dome", "grasp": "brim"})


def _earphone(j):
    span = 0.6 * j()
    return ({"cups": _union(_cylinder((-span, 0, 0), 0.25, 0.12, axis=0),
                            _cylinder((span, 0, 0), 0.25, 0.12, axis=0)),
             "band": _torus_arc((0, 0.1, 0), span, 0.04, 0.0, math.pi)},
            {"listen": "cups", "wear": "band"})


def _laptop(j):
    w, d = 1.2 * j(), 0.8 * j()
    return ({"base": _box((0, 0, 0), (w, 0.05, d)),
             "screen": _box((0, 0.4, -d / 2), (w, 0.8 * j(), 0.04))},
            {"press": "base", "display": "screen", "open": "screen"})


def _door(j):
    w = 0.9 * j()
    return ({"panel": _box((0, 0, 0), (w, 1.8 * j(), 0.06)),
             "knob": _sphere((w / 2 - 0.1, 0, 0.09), 0.06)},
            {"push": "panel", "open": "knob"})


def _vase(j):
    r = 0.45 * j()
    return ({"body": _sphere((0, 0, 0), r),
             "neck": _cylinder((0, r + 0.2, 0), 0.15, 0.5 * j(), caps=False)},
            {"contain": "body", "pour": "neck", "wrapgrasp": "neck"})


def _scissors(j):
    return ({"blades": _box((0.45, 0, 0), (0.9 * j(), 0.12, 0.02)),
             "handles": _union(_torus_arc((-0.2, 0.15, 0), 0.12, 0.03, 0, 2 * math.pi),
                               _torus_arc((-0.2, -0.15, 0), 0.12, 0.03, 0, 2 * math.pi))},
            {"cut": "blades", "grasp": "handles"})


def _keyboard(j):
    return ({"base": _box((0, 0, 0), (1.6 * j(), 0.06, 0.5 * j())),
             "keys": _box((0, 0.05, 0), (1.4, 0.04, 0.4))},
            {"press": "keys"})


TEMPLATES = {
    "Mug": _mug, "Bottle": _bottle, "Bag": _bag, "Knife": _knife, "Chair": _chair,
    "Table": _table, "Bed": _bed, "Hat": _hat, "Earphone": _earphone, "Laptop": _laptop,
    "Door": _door, "Vase": _vase, "Scissors": _scissors, "Keyboard": _keyboard,
}


# -- generation -------------------------------------------------------------------------

def _allocate(n, areas, minimum):
    """Split ``n`` points over parts proportionally to area (largest remainder)."""
    areas = np.asarray(areas, float)
    k = len(areas)
    rest = n - minimum * k
    if rest < 0:
        raise ValueError(f"{n} points cannot cover {k} parts with {minimum} each")
    share = rest * areas / areas.sum()
    counts = np.floor(share).astype(int)
    order = np.argsort(-(share - counts), kind="stable")
    counts[order[: rest - counts.sum()]] += 1
    return counts + minimum


def _rotation_y(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def falloff_mask(coords, part):
    """1 on the part, Gaussian in distance to the part elsewhere, floored to 0."""
    mask = part.astype(np.float64)
    if part.all():
        return mask
    dist, _ = cKDTree(coords[part]).query(coords[~part])
    soft = np.exp(-dist ** 2 / (2 * FALLOFF_SIGMA ** 2))
    soft[soft < FALLOFF_FLOOR] = 0.0
    mask[~part] = soft
    return mask


def label_color(label):
    return colorsys.hsv_to_rgb(label / len(AFFORDANCES), 0.85, 0.95)


def render_view(coords, part, label, rng, size=IMAGE_SIZE):
    """Front orthographic silhouette plus a subject blob next to the part.

    Returns (pixels uint8 HxWx3, box_subject, box_object).
    """
    top, bottom = rng.uniform(0.55, 0.95, 3), rng.uniform(0.55, 0.95, 3)
    t = np.linspace(0, 1, size)[:, None, None]
    img = (1 - t) * top + t * bottom
    img = np.broadcast_to(img, (size, size, 3)).copy()

    margin = size * 0.12
    scale = (size - 2 * margin) / 2
    cols = np.clip(((coords[:, 0] + 1) * scale + margin).astype(int), 0, size - 2)
    rows = np.clip(((1 - coords[:, 1]) * scale + margin).astype(int), 0, size - 2)
    shade = 0.25 + 0.3 * (coords[:, 2] + 1) / 2
    for i in np.argsort(coords[:, 2], kind="stable"):
        img[rows[i]:rows[i] + 2, cols[i]:cols[i] + 2] = shade[i]
    box_object = (int(cols.min()), int(rows.min()), int(cols.max()) + 2, int(rows.max()) + 2)

    center = np.array([cols.mean(), rows.mean()])
    target = np.array([cols[part].mean(), rows[part].mean()]) + 1
    away = target - center
    norm = np.linalg.norm(away)
    offset = away / norm * 4 if norm > 1e-9 else np.zeros(2)
    cx, cy = np.clip(target + offset, 0, size - 1)
    radius = rng.uniform(5, 7)
    yy, xx = np.mgrid[0:size, 0:size]
    disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2
    img[disc] = label_color(label)
    ys, xs = np.nonzero(disc)
    box_subject = (int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)
    pixels = np.clip(np.rint(img * 255), 0, 255).astype(np.uint8)
    return pixels, box_subject, box_object


def make_object(category, affordance, rng, n_points):
    """Sample one object; returns (coords (N,3) normalized, part membership (N,) bool)."""
    def jitter():
        return rng.uniform(0.85, 1.15)

    parts, aff_map = TEMPLATES[category](jitter)
    names = list(parts)
    counts = _allocate(n_points, [parts[k][1] for k in names], MIN_PART_POINTS)
    chunks, member = [], []
    for name, count in zip(names, counts):
        chunks.append(parts[name][0](rng, count))
        member.append(np.full(count, name == aff_map[affordance]))
    coords = np.concatenate(chunks) @ _rotation_y(rng.uniform(-0.5, 0.5)).T
    return normalize_coords(coords), np.concatenate(member)


def generate_synthetic(seed, n_samples, n_points, setting="seen", test_fraction=0.0,
                       image_size=IMAGE_SIZE):
    """Deterministic synthetic dataset; a pure function of its arguments."""
    if n_points < 64:
        raise ValueError(f"n_points must be >= 64, got {n_points}")
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    categories = sorted(TEMPLATES)
    samples, parts = [], {}
    for i in range(n_samples):
        category = categories[rng.integers(len(categories))]
        affordances = sorted(TEMPLATES[category](lambda: 1.0)[1])
        affordance = affordances[rng.integers(len(affordances))]
        label = AFFORDANCES.index(affordance)
        coords, part = make_object(category, affordance, rng, n_points)
        pixels, box_sub, box_obj = render_view(coords, part, label, rng, image_size)
        sample_id = f"syn{seed:04d}_{i:05d}"
        samples.append(AffordanceSample(
            cloud=PointCloud(coords),
            image=InteractionImage(pixels.transpose(2, 0, 1) / 255.0, box_sub, box_obj),
            gt_mask=falloff_mask(coords, part),
            label=label,
            category=category,
            sample_id=sample_id,
        ))
        parts[sample_id] = part

    if setting == "unseen":
        held_out = set(categories[3::4])
        train = [s for s in samples if s.category not in held_out]
        test = [s for s in samples if s.category in held_out]
    elif setting == "seen":
        n_test = int(math.ceil(n_samples * test_fraction))
        train, test = samples[:n_samples - n_test], samples[n_samples - n_test:]
    else:
        raise ValueError(f"unknown setting {setting!r}")
    return DatasetSplit(train, test, setting=setting,
                        meta={"part_membership": parts, "seed": seed})
