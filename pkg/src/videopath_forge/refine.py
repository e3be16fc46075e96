"""Visual refinement: pathology-region cropping, human masking, and
overlay-text removal via neighborhood inpainting.

Frames are numpy uint8 arrays, HxW or HxWxC. Pipeline order is fixed:
mask humans, crop pathology, then (optionally) remove text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import NoTissue

LABELS = ("pathology", "human", "text")


@dataclass(frozen=True)
class DetectionBox:
    label: str
    x0: int
    y0: int
    x1: int
    y1: int
    confidence: float = 1.0

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise ValueError("degenerate box")

    def clamp(self, width: int, height: int) -> "DetectionBox":
        return DetectionBox(
            self.label,
            max(0, self.x0), max(0, self.y0),
            min(width, self.x1), min(height, self.y1),
            self.confidence,
        )

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass
class RefineReport:
    frames_processed: int = 0
    humans_masked: int = 0
    text_boxes_inpainted: int = 0
    frames_dropped_no_tissue: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RefineConfig:
    crop_policy: str = "largest"  # largest | union
    text_removal: bool = False  # test split only
    min_detector_conf: float = 0.5
    inpaint_radius: int = 3


class DetectionBackend(Protocol):
    def detect(self, image: np.ndarray) -> list[dict]: ...


class OCRBackend(Protocol):
    def detect_text(self, image: np.ndarray) -> list[tuple[int, int, int, int]]: ...


def detect_regions(frame: np.ndarray, detector: DetectionBackend,
                   min_conf: float = 0.5) -> list[DetectionBox]:
    """Backend detections at or above min_conf, clamped to frame bounds."""
    if not (0.0 <= min_conf <= 1.0):
        raise ValueError("min_conf must be in [0,1]")
    h, w = frame.shape[:2]
    out = []
    for det in detector.detect(frame):
        conf = float(det.get("confidence", 1.0))
        if conf < min_conf:
            continue
        x0, y0, x1, y1 = det["bbox"]
        box = DetectionBox(det["label"], int(x0), int(y0), int(x1), int(y1), conf)
        out.append(box.clamp(w, h))
    return out


def _white(frame: np.ndarray) -> int | tuple:
    if frame.ndim == 2:
        return 255
    return (255,) * frame.shape[2]


def mask_humans(frame: np.ndarray, boxes: list[DetectionBox]) -> np.ndarray:
    """Paint every pixel inside a human box pure white; all others untouched."""
    out = frame.copy()
    for box in boxes:
        if box.label != "human":
            continue
        out[box.y0:box.y1, box.x0:box.x1] = _white(frame)
    return out


def crop_pathology(frame: np.ndarray, boxes: list[DetectionBox],
                   policy: str = "largest") -> np.ndarray:
    """Crop to the max-area pathology box (largest) or to the bounding hull
    of all pathology boxes (union)."""
    if policy not in ("largest", "union"):
        raise ValueError(f"unknown crop policy {policy!r}")
    tissue = [b for b in boxes if b.label == "pathology"]
    if not tissue:
        raise NoTissue("no pathology box in frame")
    if policy == "largest":
        box = max(tissue, key=lambda b: (b.area, -b.y0, -b.x0))
        x0, y0, x1, y1 = box.x0, box.y0, box.x1, box.y1
    else:
        x0 = min(b.x0 for b in tissue)
        y0 = min(b.y0 for b in tissue)
        x1 = max(b.x1 for b in tissue)
        y1 = max(b.y1 for b in tissue)
    return frame[y0:y1, x0:x1].copy()


def inpaint_box(frame: np.ndarray, box: tuple[int, int, int, int]) -> None:
    """Fill a rectangular region in place with an inverse-distance-weighted
    average of the pixel ring just outside the box (Telea-flavored
    neighborhood fill, exact algorithm pluggable)."""
    h, w = frame.shape[:2]
    x0, y0, x1, y1 = box
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(w, x1), min(h, y1)
    if x0 >= x1 or y0 >= y1:
        return

    ring = []
    if y0 > 0:
        ring += [(x, y0 - 1) for x in range(max(0, x0 - 1), min(w, x1 + 1))]
    if y1 < h:
        ring += [(x, y1) for x in range(max(0, x0 - 1), min(w, x1 + 1))]
    if x0 > 0:
        ring += [(x0 - 1, y) for y in range(y0, y1)]
    if x1 < w:
        ring += [(x1, y) for y in range(y0, y1)]
    if not ring:
        return

    rx = np.array([p[0] for p in ring], dtype=np.float64)
    ry = np.array([p[1] for p in ring], dtype=np.float64)
    vals = frame[ry.astype(int), rx.astype(int)].astype(np.float64)

    ys, xs = np.mgrid[y0:y1, x0:x1]
    # d2: (n_pixels, n_ring) squared distances, weights ~ 1/d^2
    d2 = (xs.reshape(-1, 1) - rx) ** 2 + (ys.reshape(-1, 1) - ry) ** 2
    wgt = 1.0 / np.maximum(d2, 1.0)
    filled = (wgt @ vals.reshape(len(ring), -1)) / wgt.sum(axis=1, keepdims=True)
    shape = (y1 - y0, x1 - x0) + frame.shape[2:]
    frame[y0:y1, x0:x1] = np.clip(np.rint(filled.reshape(shape)), 0, 255).astype(frame.dtype)


def median_fill_box(frame: np.ndarray, box: tuple[int, int, int, int]) -> None:
    """Trivial fallback fill: boundary-ring median."""
    h, w = frame.shape[:2]
    x0, y0, x1, y1 = box
    x0, y0, x1, y1 = max(0, x0), max(0, y0), min(w, x1), min(h, y1)
    if x0 >= x1 or y0 >= y1:
        return
    ry0, ry1 = max(0, y0 - 1), min(h, y1 + 1)
    rx0, rx1 = max(0, x0 - 1), min(w, x1 + 1)
    region = frame[ry0:ry1, rx0:rx1]
    mask = np.ones(region.shape[:2], bool)
    mask[y0 - ry0:y0 - ry0 + (y1 - y0), x0 - rx0:x0 - rx0 + (x1 - x0)] = False
    if not mask.any():
        return
    frame[y0:y1, x0:x1] = np.median(region[mask], axis=0).astype(frame.dtype)


def remove_text(frame: np.ndarray, ocr: OCRBackend,
                inpaint_radius: int = 3, fill=inpaint_box) -> tuple[np.ndarray, int]:
    """Inpaint every OCR-detected text box; returns (frame, boxes_filled).

    Pixels outside all text boxes are bit-identical to the input.
    """
    boxes = ocr.detect_text(frame)
    if not boxes:
        return frame.copy(), 0
    out = frame.copy()
    for box in boxes:
        fill(out, tuple(int(v) for v in box))
    return out, len(boxes)


def refine_segment(frames: list[np.ndarray], detector: DetectionBackend,
                   ocr: OCRBackend | None, config: RefineConfig,
                   ) -> tuple[list[np.ndarray], RefineReport]:
    """Per frame: detect, mask humans, crop pathology (drop on NoTissue),
    then remove text when the config says so (test split)."""
    report = RefineReport()
    out = []
    for frame in frames:
        report.frames_processed += 1
        boxes = detect_regions(frame, detector, config.min_detector_conf)
        humans = [b for b in boxes if b.label == "human"]
        if humans:
            frame = mask_humans(frame, humans)
            report.humans_masked += len(humans)
        try:
            frame = crop_pathology(frame, boxes, config.crop_policy)
        except NoTissue:
            report.frames_dropped_no_tissue += 1
            continue
        if config.text_removal and ocr is not None:
            frame, n = remove_text(frame, ocr, config.inpaint_radius)
            report.text_boxes_inpainted += n
        out.append(frame)
    return out, report


def append_report(report: RefineReport, path: str | Path, video_id: str,
                  segment_idx: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        fh.write(json.dumps({"video_id": video_id, "segment_idx": segment_idx,
                             **report.to_dict()}) + "\n")
