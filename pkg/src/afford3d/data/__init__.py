from .types import (
    AFFORDANCES, CANONICAL_POINTS, NUM_AFFORDANCES, OBJECT_CATEGORIES, PIAD_N_CLOUDS,
    PIAD_N_IMAGES, AffordanceSample, DatasetSplit, IngestError, InteractionImage,
    PointCloud, ValidationError, normalize_coords, validate_sample,
)
from .piad import (
    export_split, load_cloud, load_image, load_piad, read_ply, read_sample, write_ply,
    write_sample,
)
from .synthetic import generate_synthetic
from .pairing import pair_for_training

__all__ = [
    "AFFORDANCES", "CANONICAL_POINTS", "NUM_AFFORDANCES", "OBJECT_CATEGORIES", "PIAD_N_CLOUDS",
    "PIAD_N_IMAGES", "AffordanceSample", "DatasetSplit", "IngestError", "InteractionImage",
    "PointCloud", "ValidationError", "normalize_coords", "validate_sample", "export_split",
    "load_cloud", "load_image", "load_piad", "read_ply", "read_sample", "write_ply",
    "write_sample", "generate_synthetic", "pair_for_training",
]
