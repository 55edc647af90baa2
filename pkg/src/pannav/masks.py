"""Panoptic frames, confidence thresholding and mask sources.

A :class:`PanopticFrame` is what a segmentation model would hand over: a per-pixel
probability vector over the registry classes plus instance ids. Probability mass is
allowed to be missing (the model abstains), which is how ambiguous terrain ends up
with no class clearing the confidence threshold.

On-disk layout read by :class:`FileMaskSource` (and written by :func:`write_mask`)::

    index.csv                 frame,stamp    (one row per frame, in stream order)
    <frame>.class.png         8-bit grayscale, pixel value = class id
    <frame>.instance.png      16-bit grayscale, pixel value = instance id
    <frame>.conf.png          optional 8-bit, value / 255 = max-class probability
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image

from .errors import CorruptMaskFile, EndOfStream
from .taxonomy import UNKNOWN_ID, ClassRegistry, default_registry

DEFAULT_TAU = 0.5


@dataclass
class PanopticFrame:
    probs: np.ndarray  # (H, W, K) float32
    class_ids: np.ndarray  # (K,) class id of each probability channel
    instance: np.ndarray  # (H, W) int32, 0 = no instance
    stamp: float = 0.0

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    @property
    def width(self) -> int:
        return self.probs.shape[1]

    def validate(self, registry: ClassRegistry | None = None):
        registry = registry or default_registry()
        if self.probs.ndim != 3 or self.probs.shape[2] != len(self.class_ids):
            raise ValueError("probs must be (H, W, K) with one channel per class id")
        if self.instance.shape != self.probs.shape[:2]:
            raise ValueError("instance raster shape does not match probs")
        if np.any(self.probs < 0) or np.any(self.probs > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any(self.probs.sum(axis=2) > 1 + 1e-6):
            raise ValueError("per-pixel probability mass exceeds 1")
        top = self.class_ids[np.argmax(self.probs, axis=2)]
        things = registry.thing_lut()[top] & (self.probs.max(axis=2) > 0)
        if np.any((self.instance != 0) & ~things):
            raise ValueError("instance ids are only allowed on thing pixels")


@dataclass
class PanopticMask:
    class_id: np.ndarray  # (H, W) uint8, 0 = unknown
    instance: np.ndarray  # (H, W) int32
    stamp: float = 0.0

    @property
    def height(self) -> int:
        return self.class_id.shape[0]

    @property
    def width(self) -> int:
        return self.class_id.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, PanopticMask)
            and self.stamp == other.stamp
            and np.array_equal(self.class_id, other.class_id)
            and np.array_equal(self.instance, other.instance)
        )


def threshold_frame(frame: PanopticFrame, tau: float = DEFAULT_TAU, registry: ClassRegistry | None = None) -> PanopticMask:
    """Discretise a frame: argmax class where its probability reaches ``tau``, else unknown.

    Pixels with no probability mass at all are unknown even for ``tau == 0``.
    Instance ids survive only on pixels that keep a thing class.
    """
    registry = registry or default_registry()
    best = frame.probs.max(axis=2)
    arg = np.argmax(frame.probs, axis=2)
    known = (best >= tau) & (best > 0)
    cls = np.where(known, frame.class_ids[arg], UNKNOWN_ID).astype(np.uint8)
    keep_inst = known & registry.thing_lut()[cls] & (cls != UNKNOWN_ID)
    inst = np.where(keep_inst, frame.instance, 0).astype(np.int32)
    return PanopticMask(cls, inst, frame.stamp)


def mask_to_frame(mask: PanopticMask, registry: ClassRegistry | None = None, confidence=None) -> PanopticFrame:
    """One-hot re-encoding of a discrete mask (unknown pixels carry no mass).

    ``confidence`` optionally scales the one-hot value per pixel.
    """
    registry = registry or default_registry()
    ids = registry.ids
    lut = np.full(256, -1, dtype=np.int64)
    lut[ids] = np.arange(len(ids))
    chan = lut[mask.class_id]
    if np.any(chan < 0):
        raise ValueError("mask contains class ids missing from the registry")
    h, w = mask.class_id.shape
    probs = np.zeros((h, w, len(ids)), dtype=np.float32)
    value = np.ones((h, w), dtype=np.float32) if confidence is None else np.asarray(confidence, dtype=np.float32)
    rr, cc = np.nonzero(mask.class_id != UNKNOWN_ID)
    probs[rr, cc, chan[rr, cc]] = value[rr, cc]
    return PanopticFrame(probs, ids.copy(), mask.instance.astype(np.int32).copy(), mask.stamp)


class MaskSource(Protocol):
    def next_mask(self, stamp: float | None = None) -> PanopticFrame: ...


def write_mask(directory, name: str, mask: PanopticMask, confidence=None):
    """Append one frame to a mask directory (see module docstring for the layout)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.class_id.astype(np.uint8), mode="L").save(d / f"{name}.class.png")
    inst = mask.instance
    if inst.min(initial=0) < 0 or inst.max(initial=0) > 65535:
        raise ValueError("instance ids must fit in 16 bits")
    Image.fromarray(inst.astype(np.uint16)).save(d / f"{name}.instance.png")
    if confidence is not None:
        conf8 = np.clip(np.round(np.asarray(confidence) * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(conf8, mode="L").save(d / f"{name}.conf.png")
    index = d / "index.csv"
    new = not index.exists()
    with index.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["frame", "stamp"])
        w.writerow([name, repr(float(mask.stamp))])


def _read_png(path: Path, bits: int) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except (OSError, ValueError) as exc:
        raise CorruptMaskFile(path, str(exc)) from None
    if arr.ndim != 2:
        raise CorruptMaskFile(path, f"expected a single-channel image, got shape {arr.shape}")
    if bits == 8 and arr.dtype != np.uint8:
        raise CorruptMaskFile(path, f"expected 8-bit pixels, got {arr.dtype}")
    return arr


class FileMaskSource:
    """Sequential reader over a mask directory.

    ``next_mask(stamp)`` skips frames older than ``stamp - period`` and returns the
    next one; frames are otherwise delivered in index order.
    """

    def __init__(self, directory, registry: ClassRegistry | None = None, period: float = 0.1):
        self.directory = Path(directory)
        self.registry = registry or default_registry()
        self.period = period
        index = self.directory / "index.csv"
        try:
            with index.open(newline="") as fh:
                rows = list(csv.DictReader(fh))
            self._frames = [(r["frame"], float(r["stamp"])) for r in rows]
        except FileNotFoundError:
            raise CorruptMaskFile(index, "missing index") from None
        except (KeyError, ValueError, TypeError) as exc:
            raise CorruptMaskFile(index, str(exc)) from None
        self._pos = 0

    def __len__(self):
        return len(self._frames)

    def read_discrete(self, stamp: float | None = None) -> PanopticMask:
        """Next frame as a discrete mask without the probability re-encoding."""
        name, fstamp = self._advance(stamp)
        cls = _read_png(self.directory / f"{name}.class.png", 8)
        inst = _read_png(self.directory / f"{name}.instance.png", 16).astype(np.int32)
        if inst.shape != cls.shape:
            raise CorruptMaskFile(self.directory / f"{name}.instance.png", "shape differs from class raster")
        unknown_ids = set(np.unique(cls).tolist()) - {int(i) for i in self.registry.ids}
        if unknown_ids:
            raise CorruptMaskFile(self.directory / f"{name}.class.png", f"class ids {sorted(unknown_ids)} not in registry")
        self._last_conf = None
        conf_path = self.directory / f"{name}.conf.png"
        if conf_path.exists():
            conf = _read_png(conf_path, 8)
            if conf.shape != cls.shape:
                raise CorruptMaskFile(conf_path, "shape differs from class raster")
            self._last_conf = conf.astype(np.float32) / 255.0
        return PanopticMask(cls.copy(), inst, fstamp)

    def next_mask(self, stamp: float | None = None) -> PanopticFrame:
        mask = self.read_discrete(stamp)
        return mask_to_frame(mask, self.registry, self._last_conf)

    def _advance(self, stamp):
        while True:
            if self._pos >= len(self._frames):
                raise EndOfStream(str(self.directory))
            name, fstamp = self._frames[self._pos]
            self._pos += 1
            if stamp is None or fstamp >= stamp - self.period - 1e-9:
                return name, fstamp
