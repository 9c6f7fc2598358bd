"""Loading labeled corpora from disk.

Two layouts are recognized: a directory of class subdirectories holding
image files, and an .npz archive with ``images``/``labels`` (or ``x``/``y``)
arrays.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DataError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


def load_image_folder(root):
    """Load ``root/<class_name>/*.png`` into (images, labels, class_names).

    Classes are the sorted subdirectory names; all images must share one
    shape.
    """
    root = Path(root)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DataError(f"no class subdirectories under {root}")
    images, labels = [], []
    for cls_idx, cls_dir in enumerate(class_dirs):
        files = sorted(p for p in cls_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        for path in files:
            with Image.open(path) as img:
                arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
            images.append(arr)
            labels.append(cls_idx)
    if not images:
        raise DataError(f"no image files under {root}")
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise DataError(f"images must share one shape, found {sorted(shapes)}")
    return np.stack(images), np.asarray(labels, dtype=np.int64), [d.name for d in class_dirs]


def load_npz(path):
    """Load an archive with images/labels (or x/y) arrays."""
    path = Path(path)
    with np.load(path) as archive:
        keys = set(archive.files)
        if {"images", "labels"} <= keys:
            x, y = archive["images"], archive["labels"]
        elif {"x", "y"} <= keys:
            x, y = archive["x"], archive["y"]
        else:
            raise DataError(
                f"{path} must contain images/labels or x/y arrays, found {sorted(keys)}"
            )
    if len(x) != len(y):
        raise DataError(f"{path}: {len(x)} samples but {len(y)} labels")
    return np.asarray(x), np.asarray(y, dtype=np.int64), None


def load_corpus(path):
    """Dispatch on path type: directory tree or .npz archive.

    Returns (samples, labels, class_names-or-None).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset path does not exist: {path}")
    if path.is_dir():
        return load_image_folder(path)
    if path.suffix == ".npz":
        return load_npz(path)
    raise DataError(f"unrecognized corpus layout: {path}")
