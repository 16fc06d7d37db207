"""Dataset indexing, deterministic splits, preprocessing, and paired augmentation."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from pathlib import Path

import cv2
import numpy as np

from .attributes import SizeThresholds
from .errors import (
    CorruptImage,
    EmptyDataset,
    InvalidConfig,
    MissingDirectory,
    ShapeMismatch,
    UnpairedSample,
)

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
SPLIT_FORMAT_VERSION = 1

ROTATE_LIMIT_DEG = 35.0
DROPOUT_MAX_HOLES = 8
DROPOUT_MAX_HOLE_SIDE = 32

OFFICIAL_TRAIN_LIST = "train.txt"
OFFICIAL_TEST_LIST = "test.txt"
OFFICIAL_VALID_FRACTION = 0.1


@dataclasses.dataclass(frozen=True)
class DatasetEntry:
    sample_id: str
    image_path: Path
    mask_path: Path


@dataclasses.dataclass
class DatasetIndex:
    entries: list
    source_name: str

    def __len__(self):
        return len(self.entries)

    def ids(self) -> list:
        return [e.sample_id for e in self.entries]

    def entry(self, sample_id: str) -> DatasetEntry:
        for e in self.entries:
            if e.sample_id == sample_id:
                return e
        raise UnpairedSample(f"sample_id {sample_id!r} not present in index {self.source_name!r}")


@dataclasses.dataclass
class SplitManifest:
    train: list
    valid: list
    test: list
    seed: int
    ratios: tuple
    dataset_name: str = ""
    official: bool = False
    size_thresholds: SizeThresholds | None = None

    def split_ids(self, name: str) -> list:
        if name not in ("train", "valid", "test"):
            raise InvalidConfig(f"unknown split {name!r}")
        return getattr(self, name)

    def save(self, path):
        payload = {
            "format_version": SPLIT_FORMAT_VERSION,
            "dataset_name": self.dataset_name,
            "seed": self.seed,
            "ratios": list(self.ratios),
            "official": self.official,
            "train": list(self.train),
            "valid": list(self.valid),
            "test": list(self.test),
            "size_thresholds": (
                None
                if self.size_thresholds is None
                else [self.size_thresholds.t_small_max, self.size_thresholds.t_medium_max]
            ),
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SplitManifest":
        payload = json.loads(Path(path).read_text())
        version = payload.get("format_version")
        if version != SPLIT_FORMAT_VERSION:
            raise InvalidConfig(f"split manifest format {version!r} unsupported")
        thresholds = payload.get("size_thresholds")
        return cls(
            train=payload["train"],
            valid=payload["valid"],
            test=payload["test"],
            seed=payload["seed"],
            ratios=tuple(payload["ratios"]),
            dataset_name=payload.get("dataset_name", ""),
            official=payload.get("official", False),
            size_thresholds=None if thresholds is None else SizeThresholds(*thresholds),
        )


def _stem_map(directory: Path) -> dict:
    found: dict = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in IMAGE_EXTENSIONS:
            continue
        if path.stem in found:
            raise UnpairedSample(f"duplicate stem {path.stem!r} in {directory}")
        found[path.stem] = path
    return found


def index_dataset(root, source_name: str | None = None) -> DatasetIndex:
    """Pair images with masks by filename stem, dropping empty-mask samples.

    Expects `<root>/images/` and `<root>/masks/` with matching stems; the
    index is sorted by stem so it is deterministic across filesystems.
    """
    root = Path(root)
    images_dir = root / "images"
    masks_dir = root / "masks"
    for d in (images_dir, masks_dir):
        if not d.is_dir():
            raise MissingDirectory(f"expected directory {d}")
    images = _stem_map(images_dir)
    masks = _stem_map(masks_dir)
    only_images = sorted(set(images) - set(masks))
    only_masks = sorted(set(masks) - set(images))
    if only_images or only_masks:
        raise UnpairedSample(
            f"unpaired stems in {root}: images-only={only_images}, masks-only={only_masks}"
        )

    entries = []
    for stem in sorted(images):
        mask = load_mask(masks[stem])
        if not binarize_mask(mask).any():
            logger.info("excluding sample %r: empty mask", stem)
            continue
        entries.append(DatasetEntry(sample_id=stem, image_path=images[stem], mask_path=masks[stem]))
    return DatasetIndex(entries=entries, source_name=source_name or root.name)


def split_dataset(index: DatasetIndex, ratios, seed: int) -> SplitManifest:
    """Seeded shuffle followed by a contiguous train/valid/test cut.

    Non-train counts are floored; the remainder goes to train.
    """
    if len(index) == 0:
        raise EmptyDataset(f"index {index.source_name!r} has no samples")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidConfig(f"ratios must be 3 non-negative reals summing to 1, got {ratios}")
    ids = index.ids()
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(order)
    n_valid = math.floor(n * ratios[1])
    n_test = math.floor(n * ratios[2])
    n_train = n - n_valid - n_test
    return SplitManifest(
        train=order[:n_train],
        valid=order[n_train : n_train + n_valid],
        test=order[n_train + n_valid :],
        seed=seed,
        ratios=ratios,
        dataset_name=index.source_name,
    )


def read_official_lists(root):
    """(train_stems, test_stems) from `train.txt`/`test.txt`, or None if absent."""
    root = Path(root)
    train_file = root / OFFICIAL_TRAIN_LIST
    test_file = root / OFFICIAL_TEST_LIST
    if not (train_file.is_file() and test_file.is_file()):
        return None

    def read(path):
        stems = []
        for line in path.read_text().splitlines():
            line = line.strip()
            if line:
                stems.append(Path(line).stem)
        return stems

    return read(train_file), read(test_file)


def official_split(index: DatasetIndex, train_stems, test_stems, seed: int = 0) -> SplitManifest:
    """Fixed-list split; validation is carved off the tail of the train list."""
    known = set(index.ids())
    missing = [s for s in list(train_stems) + list(test_stems) if s not in known]
    if missing:
        raise UnpairedSample(f"official list stems missing from index: {missing}")
    train_stems = list(train_stems)
    n_valid = math.floor(len(train_stems) * OFFICIAL_VALID_FRACTION)
    valid = train_stems[len(train_stems) - n_valid :]
    train = train_stems[: len(train_stems) - n_valid]
    if not train:
        raise EmptyDataset("official train list is empty after carving validation")
    return SplitManifest(
        train=train,
        valid=valid,
        test=list(test_stems),
        seed=seed,
        ratios=(0.0, 0.0, 0.0),
        dataset_name=index.source_name,
        official=True,
    )


# ----- image loading and preprocessing ----------------------------------


def load_image(path) -> np.ndarray:
    """RGB uint8 array from disk."""
    raw = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if raw is None:
        raise CorruptImage(f"could not decode image {path}")
    return cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)


def load_mask(path) -> np.ndarray:
    """Single-channel uint8 array from disk."""
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise CorruptImage(f"could not decode mask {path}")
    return raw


def binarize_mask(mask: np.ndarray) -> np.ndarray:
    """{0, 1} uint8 mask. 8-bit intensity masks threshold at >127; masks that
    are already {0, 1}-valued pass through unchanged."""
    mask = np.asarray(mask)
    if mask.max(initial=0) <= 1:
        return (mask > 0).astype(np.uint8)
    return (mask > 127).astype(np.uint8)


def preprocess_pair(image: np.ndarray, mask: np.ndarray, size: int = 256):
    """Resize to `size` x `size` (bilinear image, nearest mask), scale the
    image to [0, 1] float32, and binarize the mask."""
    image = np.asarray(image)
    mask = np.asarray(mask)
    if image.ndim != 3 or image.shape[2] != 3:
        raise CorruptImage(f"expected (H, W, 3) image, got shape {image.shape}")
    if mask.ndim != 2:
        raise CorruptImage(f"expected (H, W) mask, got shape {mask.shape}")
    if image.shape[:2] != (size, size):
        image = cv2.resize(image, (size, size), interpolation=cv2.INTER_LINEAR)
    if mask.shape != (size, size):
        mask = cv2.resize(mask, (size, size), interpolation=cv2.INTER_NEAREST)
    if image.dtype == np.uint8:
        image = image.astype(np.float32) / 255.0
    else:
        image = image.astype(np.float32)
    return image, binarize_mask(mask)


# ----- augmentation ------------------------------------------------------


def make_augment_rng(global_seed: int, epoch: int, sample_index: int) -> np.random.Generator:
    """Deterministic per-sample generator; independent of worker scheduling."""
    return np.random.default_rng((global_seed, epoch, sample_index))


def _rotate(image, mask, angle):
    h, w = mask.shape
    matrix = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle, 1.0)
    image = cv2.warpAffine(
        image, matrix, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0
    )
    mask = cv2.warpAffine(
        mask, matrix, (w, h), flags=cv2.INTER_NEAREST, borderMode=cv2.BORDER_CONSTANT, borderValue=0
    )
    return image, binarize_mask(mask)


def augment_pair(image: np.ndarray, mask: np.ndarray, rng: np.random.Generator):
    """Random rotation, vertical flip, horizontal flip, and coarse dropout.

    Each transform fires independently with probability 0.5. Geometric
    transforms hit image and mask identically (mask via nearest neighbour,
    re-binarized); coarse dropout blanks patches of the image only. Fully
    deterministic given the generator state.
    """
    if image.shape[:2] != mask.shape:
        raise ShapeMismatch(f"image {image.shape[:2]} vs mask {mask.shape}")
    do_rotate, do_vflip, do_hflip, do_dropout = rng.random(4) < 0.5
    image = np.array(image, copy=True)
    mask = np.array(mask, copy=True)
    if do_rotate:
        angle = float(rng.uniform(-ROTATE_LIMIT_DEG, ROTATE_LIMIT_DEG))
        image, mask = _rotate(image, mask, angle)
    if do_vflip:
        image = np.flip(image, axis=0).copy()
        mask = np.flip(mask, axis=0).copy()
    if do_hflip:
        image = np.flip(image, axis=1).copy()
        mask = np.flip(mask, axis=1).copy()
    if do_dropout:
        h, w = mask.shape
        max_side = max(1, min(DROPOUT_MAX_HOLE_SIDE, h, w))
        n_holes = int(rng.integers(1, DROPOUT_MAX_HOLES + 1))
        for _ in range(n_holes):
            hole_h = int(rng.integers(1, max_side + 1))
            hole_w = int(rng.integers(1, max_side + 1))
            y = int(rng.integers(0, h - hole_h + 1))
            x = int(rng.integers(0, w - hole_w + 1))
            image[y : y + hole_h, x : x + hole_w] = 0
    return image, mask
