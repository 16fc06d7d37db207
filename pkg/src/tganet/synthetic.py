"""Synthetic blob dataset for smoke tests and pipeline demos.

Generates endoscopy-like images: one or more bright elliptical blobs on a
dark noisy background, cycling through small/medium/large total areas and
alternating single/multiple blobs so every attribute bucket is populated.
"""

from __future__ import annotations

import math
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

SIZE_FRACTION_RANGES = {
    "small": (0.010, 0.040),
    "medium": (0.070, 0.120),
    "large": (0.180, 0.280),
}


def _draw_ellipse(mask, center, axes, angle_deg):
    cv2.ellipse(
        mask,
        (int(center[0]), int(center[1])),
        (max(1, int(axes[0])), max(1, int(axes[1]))),
        angle_deg,
        0,
        360,
        1,
        thickness=-1,
    )


def _blob_mask(size, n_blobs, target_fraction, rng, attempts=50):
    """Binary mask with exactly `n_blobs` 8-connected blobs near the target area."""
    area_total = target_fraction * size * size
    structure = np.ones((3, 3), dtype=int)
    for _ in range(attempts):
        mask = np.zeros((size, size), dtype=np.uint8)
        for _ in range(n_blobs):
            area = area_total / n_blobs
            ratio = rng.uniform(0.6, 1.6)
            a = max(1.0, math.sqrt(area * ratio / math.pi))
            b = max(1.0, area / (math.pi * a))
            margin = int(math.ceil(max(a, b))) + 1
            if 2 * margin >= size:
                margin = size // 4
            cx = rng.integers(margin, size - margin)
            cy = rng.integers(margin, size - margin)
            _draw_ellipse(mask, (cx, cy), (a, b), float(rng.uniform(0, 180)))
        _, components = ndimage.label(mask, structure=structure)
        if components == n_blobs and mask.any():
            return mask
    # Fall back to a single centered blob; callers only need a non-empty mask.
    mask = np.zeros((size, size), dtype=np.uint8)
    radius = max(1.0, math.sqrt(area_total / math.pi))
    _draw_ellipse(mask, (size // 2, size // 2), (radius, radius), 0.0)
    return mask


def _render_image(mask, rng):
    size = mask.shape[0]
    bg = rng.uniform(30, 70, size=3)
    fg = rng.uniform(160, 220, size=3)
    image = np.tile(bg, (size, size, 1))
    image[mask > 0] = fg
    image += rng.normal(0.0, 6.0, size=image.shape)
    return np.clip(image, 0, 255).astype(np.uint8)


def make_synthetic_dataset(root, n_samples: int, image_size: int = 256, seed: int = 0):
    """Write `n_samples` image/mask pairs under `<root>/images` and `<root>/masks`.

    Sample i cycles size class (small/medium/large) and alternates blob
    count (1 / 2), so attribute labels stay balanced. Returns the root path.
    """
    root = Path(root)
    images_dir = root / "images"
    masks_dir = root / "masks"
    images_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    size_names = list(SIZE_FRACTION_RANGES)
    for i in range(n_samples):
        lo, hi = SIZE_FRACTION_RANGES[size_names[i % 3]]
        fraction = float(rng.uniform(lo, hi))
        n_blobs = 1 if i % 2 == 0 else int(rng.integers(2, 4))
        mask = _blob_mask(image_size, n_blobs, fraction, rng)
        image = _render_image(mask, rng)
        stem = f"sample_{i:04d}"
        cv2.imwrite(str(images_dir / f"{stem}.png"), cv2.cvtColor(image, cv2.COLOR_RGB2BGR))
        cv2.imwrite(str(masks_dir / f"{stem}.png"), mask * 255)
    return root
