from .augment import (
    AugRealization,
    ImageAugSpace,
    VectorAugSpace,
    apply_realization,
    draw_aug_params,
    get_aug,
)
from .corpus import load_corpus
from .splits import DatasetSplit, read_split_manifest, split_dataset, write_split_manifest
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    "AugRealization",
    "ImageAugSpace",
    "VectorAugSpace",
    "apply_realization",
    "draw_aug_params",
    "get_aug",
    "load_corpus",
    "DatasetSplit",
    "split_dataset",
    "write_split_manifest",
    "read_split_manifest",
    "SyntheticSpec",
    "generate_synthetic",
]
