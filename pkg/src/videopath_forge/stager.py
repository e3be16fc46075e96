"""Stage-specific dataset assembly, tuning-schedule compilation, and
toy-model verification of the compiled plans."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CompositionViolation,
    CountMismatch,
    DegenerateSegment,
    InsufficientVideos,
    UnknownStage,
)
from .toymodel import COMPONENTS, ToyBatch, ToyModel

FRAME_COUNT = 32
FRAME_SIDE = 384
STAGE_IDS = (0, 1, 2, 3)
STAGE_BATCH_SIZES = {0: 4, 1: 1, 2: 2, 3: 2}
DEFAULT_LORA_RANK = 128

# which corpus kinds each stage accepts (and must contain)
CORPUS_KINDS = ("image_caption", "image_instruct", "clip_instruct", "video_instruct")
STAGE_COMPOSITION = {
    0: {"image_caption"},
    1: {"image_instruct"},
    2: {"image_instruct", "clip_instruct"},
    3: {"video_instruct"},
}


@dataclass(frozen=True)
class CorpusSource:
    corpus_tag: str  # human-readable name, e.g. "quilt-1m"
    kind: str  # one of CORPUS_KINDS
    path: str
    sample_count: int


@dataclass
class StageManifest:
    stage_id: int
    sources: list[CorpusSource]
    total: int

    def to_dict(self) -> dict:
        return {
            "stage_id": self.stage_id,
            "sources": [
                {"corpus_tag": s.corpus_tag, "kind": s.kind, "path": s.path,
                 "sample_count": s.sample_count} for s in self.sources
            ],
            "total": self.total,
        }


@dataclass(frozen=True)
class TuningMode:
    mode: str  # frozen | full | lora
    lora_rank: int | None = None

    def __str__(self):
        return f"lora(r={self.lora_rank})" if self.mode == "lora" else self.mode


FROZEN = TuningMode("frozen")
FULL = TuningMode("full")


@dataclass
class StagePlan:
    stage_id: int
    tuning: dict[str, TuningMode]
    batch_size: int
    epochs: int = 1
    frame_count: int = FRAME_COUNT
    frame_side: int = FRAME_SIDE

    def to_dict(self) -> dict:
        return {
            "stage_id": self.stage_id,
            "tuning": {k: str(v) for k, v in self.tuning.items()},
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "frame_policy": {"count": self.frame_count, "side": self.frame_side},
        }


@dataclass
class Split:
    train: list[str]
    test: list[str]
    policy: str
    seed: int = 0


@dataclass(frozen=True)
class FramePlan:
    timestamps: tuple[float, ...]
    side: int


# --- frame sampling -----------------------------------------------------------

def sample_frames(start_s: float, end_s: float, count: int = FRAME_COUNT,
                  side: int = FRAME_SIDE) -> FramePlan:
    """Uniform-interval midpoint timestamps: t_i = start + (i + 0.5) dur/count."""
    duration = end_s - start_s
    if duration <= 0:
        raise DegenerateSegment(f"segment [{start_s}, {end_s}] has no duration")
    step = duration / count
    return FramePlan(
        timestamps=tuple(start_s + (i + 0.5) * step for i in range(count)),
        side=side,
    )


# --- splitting ------------------------------------------------------------------

def split_by_video(records: list, test_video_count: int, seed: int = 0) -> Split:
    """Seeded shuffle of distinct video ids; the last test_video_count ids'
    records form the test side. No video id ever appears on both sides."""
    video_of = {}
    for r in records:
        rid = r.record_id if hasattr(r, "record_id") else r["id"]
        vid = r.video_id if hasattr(r, "video_id") else r["video"]
        video_of[rid] = vid
    videos = sorted(set(video_of.values()))
    if test_video_count >= len(videos):
        raise InsufficientVideos(
            f"need more than {test_video_count} distinct videos, have {len(videos)}")
    rng = random.Random(seed)
    rng.shuffle(videos)
    test_videos = set(videos[len(videos) - test_video_count:])
    train, test = [], []
    for rid, vid in video_of.items():
        (test if vid in test_videos else train).append(rid)
    return Split(train=sorted(train), test=sorted(test),
                 policy=f"seeded-shuffle-last-{test_video_count}", seed=seed)


def subsample_fraction(items: list, fraction: float, seed: int = 0) -> list:
    """Seeded subsample used for the fractional-data ablation runs."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must be in (0, 1]")
    if not items:
        return []
    k = max(1, round(len(items) * fraction))
    rng = random.Random(seed)
    keep = sorted(rng.sample(range(len(items)), k))
    return [items[i] for i in keep]


# --- manifests --------------------------------------------------------------------

def _count_lines(path: Path) -> int:
    n = 0
    with open(path, "rb") as fh:
        for line in fh:
            if line.strip():
                n += 1
    return n


def build_stage_manifest(stage_id: int, sources: list[CorpusSource],
                         verify_counts: bool = True) -> StageManifest:
    """Manifest for one training stage, enforcing composition invariants and
    (optionally) verifying declared counts against jsonl line counts."""
    if stage_id not in STAGE_IDS:
        raise UnknownStage(f"stage {stage_id}")
    allowed = STAGE_COMPOSITION[stage_id]
    kinds = {s.kind for s in sources}
    bad = kinds - allowed
    if bad:
        raise CompositionViolation(
            f"stage {stage_id} cannot contain {sorted(bad)} corpora")
    missing = allowed - kinds
    if missing:
        raise CompositionViolation(
            f"stage {stage_id} requires {sorted(missing)} corpora")
    if verify_counts:
        for s in sources:
            p = Path(s.path)
            if not p.is_file():
                raise CountMismatch(f"missing corpus file {s.path}")
            actual = _count_lines(p)
            if actual != s.sample_count:
                raise CountMismatch(
                    f"{s.corpus_tag}: declared {s.sample_count}, found {actual}")
    return StageManifest(stage_id=stage_id, sources=list(sources),
                         total=sum(s.sample_count for s in sources))


# --- stage plans ------------------------------------------------------------------

def compile_stage_plan(stage_id: int, batch_size: int | None = None,
                       lora_rank: int | None = None,
                       unsafe_topology: dict[str, TuningMode] | None = None,
                       ) -> StagePlan:
    """The four-stage schedule: alignment trains only the projector, the two
    SFT stages train everything, and the final video stage trains the LLM
    through a rank-128 low-rank adapter while the projector and vision
    encoder stay fully tuned.

    Overrides may change the batch size or adapter rank; changing the
    frozen/tuned topology requires the explicit unsafe_topology escape hatch.
    """
    if stage_id not in STAGE_IDS:
        raise UnknownStage(f"stage {stage_id}")
    if stage_id == 0:
        tuning = {"vision_encoder": FROZEN, "projector": FULL, "llm": FROZEN}
    elif stage_id in (1, 2):
        tuning = {c: FULL for c in COMPONENTS}
    else:
        tuning = {
            "vision_encoder": FULL,
            "projector": FULL,
            "llm": TuningMode("lora", lora_rank or DEFAULT_LORA_RANK),
        }
    if unsafe_topology:
        tuning.update(unsafe_topology)
    return StagePlan(
        stage_id=stage_id,
        tuning=tuning,
        batch_size=batch_size or STAGE_BATCH_SIZES[stage_id],
    )


@dataclass
class StageDiffReport:
    changed: list[str]
    unchanged: list[str]
    lora_base_unchanged: bool | None = None

    def to_dict(self) -> dict:
        return {"changed": self.changed, "unchanged": self.unchanged,
                "lora_base_unchanged": self.lora_base_unchanged}


def run_toy_stage(plan: StagePlan, model: ToyModel, batch: ToyBatch,
                  lr: float = 0.1) -> StageDiffReport:
    """One gradient step on the toy model under the plan; reports which
    parameter blocks moved. Frozen blocks must stay bit-identical; in
    adapter mode the base LLM weights must stay bit-identical while the
    adapter factors move."""
    llm_mode = plan.tuning["llm"]
    use_lora = llm_mode.mode == "lora"
    before = model.snapshot()
    grads = model.gradients(batch, use_lora=use_lora)

    if plan.tuning["vision_encoder"].mode == "full":
        model.Wg -= lr * grads["vision_encoder"]
    if plan.tuning["projector"].mode == "full":
        model.Wp -= lr * grads["projector"]
    if llm_mode.mode == "full":
        model.Wf -= lr * grads["llm"]
    elif use_lora:
        model.A -= lr * grads["llm_adapter_a"]
        model.B -= lr * grads["llm_adapter_b"]

    after = model.snapshot()
    changed, unchanged = [], []
    for name in ("vision_encoder", "projector"):
        (changed if before[name] != after[name] else unchanged).append(name)
    lora_base_unchanged = None
    if use_lora:
        lora_base_unchanged = before["llm"] == after["llm"]
        adapters_moved = (before["llm_adapter_a"] != after["llm_adapter_a"]
                          or before["llm_adapter_b"] != after["llm_adapter_b"])
        (changed if adapters_moved else unchanged).append("llm-adapters")
        (unchanged if lora_base_unchanged else changed).append("llm")
    else:
        (changed if before["llm"] != after["llm"] else unchanged).append("llm")
    return StageDiffReport(changed=changed, unchanged=unchanged,
                           lora_base_unchanged=lora_base_unchanged)


# --- artifact IO ---------------------------------------------------------------------

def write_manifest(manifest: StageManifest, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"stage{manifest.stage_id}.manifest.json"
    target.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    return target


def write_plan(plan: StagePlan, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"stage{plan.stage_id}.plan.json"
    target.write_text(json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n")
    return target


def write_split(split: Split, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(
        {"train": split.train, "test": split.test, "seed": split.seed,
         "policy": split.policy}, indent=2) + "\n")
    return path
