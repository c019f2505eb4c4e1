"""Dataset manifests, image/mask preprocessing and mini-batch iteration.

Expected layout::

    <root>/images/<id>.png|jpg
    <root>/masks/<id>.png
    <root>/split.txt          optional, lines "train <id>" / "test <id>"
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .model import IMAGE_SIZE

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
MASK_THRESHOLD = 128

# (train, test) sizes of the published splits
STANDARD_SPLITS = {"drishti-gs1": (50, 51), "rim-one": (100, 69)}
DATASET_KINDS = ("drishti-gs1", "rim-one", "custom")


class DatasetError(ValueError):
    pass


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class FundusSample:
    id: str
    image_path: Path
    mask_path: Path | None
    original_size: tuple[int, int]


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    root: Path
    train: tuple[FundusSample, ...] = field(default_factory=tuple)
    test: tuple[FundusSample, ...] = field(default_factory=tuple)

    def split(self, which: str) -> tuple[FundusSample, ...]:
        if which not in ("train", "test"):
            raise ValueError(f"unknown split {which!r}")
        return getattr(self, which)


def _index_dir(directory: Path, suffixes) -> dict[str, Path]:
    found: dict[str, Path] = {}
    if not directory.is_dir():
        return found
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() not in suffixes:
            continue
        if p.stem in found:
            raise DatasetError(f"duplicate id {p.stem!r} in {directory}")
        found[p.stem] = p
    return found


def read_split_file(path: Path) -> dict[str, list[str]]:
    splits: dict[str, list[str]] = {"train": [], "test": []}
    seen: set[str] = set()
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in splits:
            raise DatasetError(f"{path}:{lineno}: expected 'train <id>' or 'test <id>', got {raw!r}")
        if parts[1] in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate id {parts[1]!r}")
        seen.add(parts[1])
        splits[parts[0]].append(parts[1])
    return splits


def write_split_file(path: Path, train_ids, test_ids) -> None:
    lines = [f"train {i}" for i in train_ids] + [f"test {i}" for i in test_ids]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_manifest(root, dataset_kind: str = "custom", split_file=None) -> DatasetManifest:
    """Index a dataset directory into train/test sample lists.

    Without a split file, named datasets fall back to their published split
    sizes taken in sorted id order, and custom trees put everything in train.
    """
    root = Path(root)
    if dataset_kind not in DATASET_KINDS:
        raise DatasetError(f"unknown dataset kind {dataset_kind!r}; choose from {DATASET_KINDS}")
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    images = _index_dir(root / "images", IMAGE_SUFFIXES)
    masks = _index_dir(root / "masks", (".png",))
    if not images:
        raise DatasetError(f"no images found under {root / 'images'}")

    if split_file is None and (root / "split.txt").is_file():
        split_file = root / "split.txt"

    ids = sorted(images)
    if split_file is not None:
        spec = read_split_file(Path(split_file))
        for i in spec["train"] + spec["test"]:
            if i not in images:
                raise DatasetError(f"split file lists {i!r}, which has no image")
        train_ids, test_ids = sorted(spec["train"]), sorted(spec["test"])
    elif dataset_kind in STANDARD_SPLITS:
        n_train, n_test = STANDARD_SPLITS[dataset_kind]
        if len(ids) != n_train + n_test:
            raise DatasetError(
                f"{dataset_kind} should hold {n_train + n_test} images, found {len(ids)}; "
                f"pass a split file for non-standard trees"
            )
        train_ids, test_ids = ids[:n_train], ids[n_train:]
    else:
        log.warning("no split file for %s: all %d samples assigned to train", root, len(ids))
        train_ids, test_ids = ids, []

    if not train_ids and not test_ids:
        raise DatasetError("split file assigns no samples")
    if dataset_kind in STANDARD_SPLITS and (len(train_ids), len(test_ids)) != STANDARD_SPLITS[dataset_kind]:
        log.warning(
            "%s split has %d/%d train/test samples; the standard split is %d/%d",
            dataset_kind, len(train_ids), len(test_ids), *STANDARD_SPLITS[dataset_kind],
        )

    def sample(i: str, need_mask: bool) -> FundusSample:
        mask = masks.get(i)
        if need_mask and mask is None:
            raise DatasetError(f"training sample {i!r} has no mask in {root / 'masks'}")
        with Image.open(images[i]) as im:
            w, h = im.size
        return FundusSample(i, images[i], mask, (h, w))

    return DatasetManifest(
        name=dataset_kind,
        root=root,
        train=tuple(sample(i, True) for i in train_ids),
        test=tuple(sample(i, False) for i in test_ids),
    )


def read_image(path) -> np.ndarray:
    """Decode an image file to an HxWx3 uint8 array."""
    with Image.open(path) as im:
        if im.mode in ("L", "I", "I;16", "F", "1"):
            raise ChannelError(f"{path}: expected a colour image, got mode {im.mode}")
        return np.asarray(im.convert("RGB"))


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def preprocess_image(raw) -> torch.Tensor:
    """Bilinear resize to 256x256 and scale to [0, 1]; returns 3x256x256 float32."""
    arr = np.asarray(raw)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ChannelError(f"expected an HxWx3 RGB image, got shape {arr.shape}")
    t = torch.from_numpy(arr.astype(np.float32)).permute(2, 0, 1)[None]
    if tuple(t.shape[2:]) != (IMAGE_SIZE, IMAGE_SIZE):
        t = F.interpolate(t, size=(IMAGE_SIZE, IMAGE_SIZE), mode="bilinear",
                          align_corners=False, antialias=False)
    return (t[0] / 255.0).clamp(0.0, 1.0)


def binarize_mask(raw, threshold: int = MASK_THRESHOLD) -> torch.Tensor:
    """Nearest-neighbour resize to 256x256, then ``value >= threshold`` -> 1."""
    arr = np.asarray(raw)
    if arr.ndim == 3:
        if arr.shape[2] == 1:
            arr = arr[..., 0]
        else:
            arr = np.asarray(Image.fromarray(arr[..., :3].astype(np.uint8)).convert("L"))
    if arr.ndim != 2:
        raise ChannelError(f"mask must be single-channel, got shape {arr.shape}")
    ambiguous = np.mean((arr > 32) & (arr < 224))
    if ambiguous > 0.05:
        log.warning("mask is not cleanly bimodal: %.1f%% of pixels are mid-grey", 100 * ambiguous)
    t = torch.from_numpy(arr.astype(np.float32))[None, None]
    if tuple(t.shape[2:]) != (IMAGE_SIZE, IMAGE_SIZE):
        t = F.interpolate(t, size=(IMAGE_SIZE, IMAGE_SIZE), mode="nearest-exact")
    return (t[0] >= threshold).float()


class Batch(NamedTuple):
    ids: list[str]
    images: torch.Tensor
    masks: torch.Tensor


@dataclass
class SplitTensors:
    """Preprocessed images (Nx3x256x256) and masks (Nx1x256x256) of one split."""

    ids: list[str]
    images: torch.Tensor
    masks: torch.Tensor | None

    @classmethod
    def load(cls, samples, require_masks: bool = True) -> "SplitTensors":
        if not samples:
            raise DatasetError("split is empty")
        ids, images, masks = [], [], []
        for s in samples:
            ids.append(s.id)
            images.append(preprocess_image(read_image(s.image_path)))
            if s.mask_path is not None:
                masks.append(binarize_mask(read_mask(s.mask_path)))
            elif require_masks:
                raise DatasetError(f"sample {s.id!r} has no ground-truth mask")
        stacked_masks = torch.stack(masks) if len(masks) == len(ids) else None
        return cls(ids, torch.stack(images), stacked_masks)

    def __len__(self) -> int:
        return len(self.ids)


def epoch_order(n: int, shuffle: bool, seed: int, epoch: int = 0) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


def num_batches(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def iterate_batches(split: SplitTensors, batch_size: int = 4, shuffle: bool = True,
                    seed: int = 0, epoch: int = 0) -> Iterator[Batch]:
    """Yield batches over one epoch; the final partial batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if len(split) == 0:
        raise DatasetError("split is empty")
    if split.masks is None:
        raise DatasetError("split has no masks to train on")
    order = epoch_order(len(split), shuffle, seed, epoch)
    for start in range(0, len(order), batch_size):
        idx = torch.from_numpy(order[start:start + batch_size].copy())
        yield Batch([split.ids[i] for i in idx.tolist()], split.images[idx], split.masks[idx])


def synthetic_fundus(rng: np.random.Generator, size: int = 512):
    """Draw a toy fundus photograph and its disc mask as uint8 arrays.

    The image is an orange retina on a black field with a few dark vessels
    and a bright, slightly elliptical disc; the mask is the disc at 0/255.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    c = size / 2
    img = np.zeros((size, size, 3), np.float32)
    retina = (yy - c) ** 2 + (xx - c) ** 2 < (0.47 * size) ** 2
    shade = 1.0 - 0.35 * np.sqrt((yy - c) ** 2 + (xx - c) ** 2) / size
    img[retina] = np.array([170, 70, 30], np.float32) * shade[retina, None]

    cy, cx = rng.uniform(0.3, 0.7, 2) * size
    ry = rng.uniform(0.07, 0.11) * size
    rx = ry * rng.uniform(0.85, 1.15)
    disc = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0

    for _ in range(4):
        angle = rng.uniform(0, 2 * np.pi)
        dist = np.abs(np.sin(angle) * (xx - cx) - np.cos(angle) * (yy - cy))
        vessel = (dist < size * 0.006) & retina
        img[vessel] *= 0.55

    img[disc] = 0.5 * img[disc] + 0.5 * np.array([250, 225, 150], np.float32)
    img += rng.normal(0, 4.0, img.shape).astype(np.float32)
    img = np.clip(img, 0, 255).astype(np.uint8)
    return img, (disc * 255).astype(np.uint8)


def make_synthetic_dataset(root, n: int, seed: int = 0, size: int = 512,
                           n_test: int = 0) -> Path:
    """Write ``n`` synthetic samples in the expected layout; the last
    ``n_test`` go to the test split."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ids = [f"synth_{i:03d}" for i in range(n)]
    for i in ids:
        img, mask = synthetic_fundus(rng, size)
        Image.fromarray(img).save(root / "images" / f"{i}.png")
        Image.fromarray(mask).save(root / "masks" / f"{i}.png")
    write_split_file(root / "split.txt", ids[: n - n_test], ids[n - n_test:])
    return root
