"""Temporal segmentation: caption-to-subtitle alignment (clip corpus) and
shot-boundary candidates refined by human review decisions (video corpus)."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .errors import ConflictingDecisions, InvalidDecision, NoMatch
from .ingest import Transcript, VideoMeta

log = logging.getLogger(__name__)

DEDUP_WINDOW_S = 0.25


@dataclass(frozen=True)
class ClipSegment:
    video_id: str
    start_s: float
    end_s: float
    subtitle_text: str
    match_score: float
    source_caption_id: str

    def __post_init__(self):
        if self.start_s >= self.end_s:
            raise ValueError("start_s must precede end_s")
        if not (0.0 <= self.match_score <= 1.0):
            raise ValueError("match_score must be in [0,1]")


@dataclass(frozen=True)
class CandidateBoundary:
    time_s: float
    confidence: float
    detector_tag: str = "unknown"


@dataclass(frozen=True)
class ReviewDecision:
    action: str  # accept | reject | merge | split | adjust
    targets: tuple[int, ...] = ()
    new_time_s: float | None = None
    reviewer_id: str = ""
    ts: str = ""

    def __post_init__(self):
        if self.action not in ("accept", "reject", "merge", "split", "adjust"):
            raise ValueError(f"unknown review action {self.action!r}")
        if self.action in ("adjust", "split") and self.new_time_s is None:
            raise ValueError(f"{self.action} requires new_time_s")


@dataclass(frozen=True)
class DiagnosticSegment:
    video_id: str
    start_s: float
    end_s: float
    subtitle_text: str
    review_status: str = "auto"  # auto | reviewed
    split_tag: str = "unassigned"  # train | test | unassigned


@dataclass(frozen=True)
class Caption:
    caption_id: str
    text: str


@dataclass
class AlignParams:
    min_score: float = 0.5
    # cap on window length in segments; None = exhaustive over all windows
    max_window_segments: int | None = None


@dataclass(frozen=True)
class AlignmentResult:
    start_s: float
    end_s: float
    score: float
    first_idx: int
    last_idx: int


class ShotBackend(Protocol):
    def propose(self, media_path: str) -> list[dict]: ...


_WORD = re.compile(r"[\w']+")


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens, punctuation stripped."""
    return _WORD.findall(text.lower())


def align_caption(caption: str, transcript: Transcript,
                  params: AlignParams | None = None) -> AlignmentResult:
    """Find the contiguous window of transcript segments maximizing the
    bag-of-tokens F1 against the caption.

    Ties break toward the earliest, shortest window (scan order). Raises
    NoMatch when the best F1 falls below params.min_score.
    """
    params = params or AlignParams()
    cap_counts = Counter(tokenize(caption))
    cap_total = sum(cap_counts.values())
    if cap_total == 0:
        raise ValueError("caption has no tokens")
    if not transcript.segments:
        raise ValueError("transcript is empty")

    seg_tokens = [tokenize(s.text) for s in transcript.segments]
    n = len(seg_tokens)
    limit = params.max_window_segments or n

    best_f1 = -1.0
    best = (0, 0)
    for i in range(n):
        window: Counter = Counter()
        window_total = 0
        overlap = 0
        for j in range(i, min(n, i + limit)):
            for tok in seg_tokens[j]:
                if window[tok] < cap_counts.get(tok, 0):
                    overlap += 1
                window[tok] += 1
                window_total += 1
            if overlap == 0:
                continue
            prec = overlap / window_total
            rec = overlap / cap_total
            f1 = 2 * prec * rec / (prec + rec)
            if f1 > best_f1 + 1e-12:
                best_f1 = f1
                best = (i, j)
    if best_f1 < params.min_score:
        raise NoMatch(f"best F1 {max(best_f1, 0.0):.3f} below {params.min_score}")
    i, j = best
    return AlignmentResult(
        start_s=transcript.segments[i].start_s,
        end_s=transcript.segments[j].end_s,
        score=best_f1,
        first_idx=i,
        last_idx=j,
    )


def build_clip_segments(captions: list[Caption], transcript: Transcript,
                        params: AlignParams | None = None) -> list[ClipSegment]:
    """One ClipSegment per alignable caption; unalignable captions are
    dropped and logged (drop-and-log contract, never raises NoMatch)."""
    params = params or AlignParams()
    out = []
    for cap in captions:
        try:
            res = align_caption(cap.text, transcript, params)
        except NoMatch as exc:
            log.info("dropped caption %s: %s", cap.caption_id, exc)
            continue
        out.append(ClipSegment(
            video_id=transcript.video_id,
            start_s=res.start_s,
            end_s=res.end_s,
            subtitle_text=slice_transcript(transcript, res.start_s, res.end_s),
            match_score=min(res.score, 1.0),
            source_caption_id=cap.caption_id,
        ))
    return out


def propose_boundaries(video: VideoMeta, detector: ShotBackend,
                       dedup_window_s: float = DEDUP_WINDOW_S) -> list[CandidateBoundary]:
    """Sorted, deduplicated shot-boundary candidates from the detector."""
    raw = detector.propose(video.source_uri)
    tag = getattr(detector, "tag", type(detector).__name__)
    cands = sorted(
        (CandidateBoundary(float(r["time_s"]), float(r.get("confidence", 1.0)), tag)
         for r in raw
         if 0.0 <= float(r["time_s"]) <= video.duration_s),
        key=lambda c: c.time_s,
    )
    out: list[CandidateBoundary] = []
    for c in cands:
        if out and c.time_s - out[-1].time_s < dedup_window_s:
            continue
        out.append(c)
    return out


def slice_transcript(transcript: Transcript, start_s: float, end_s: float) -> str:
    """Space-joined text of all segments whose midpoint lies in [start_s, end_s]."""
    if start_s >= end_s:
        raise ValueError("start_s must precede end_s")
    return " ".join(
        s.text for s in transcript.segments
        if start_s <= (s.start_s + s.end_s) / 2 <= end_s
    )


def apply_review(candidates: list[CandidateBoundary],
                 decisions: list[ReviewDecision],
                 transcript: Transcript,
                 video_id: str | None = None,
                 duration_s: float | None = None) -> list[DiagnosticSegment]:
    """Replay review decisions over the candidate boundary set.

    Boundaries carry stable indices: candidate order for the initial set,
    then increasing ids for boundaries inserted by `split`. Decisions are
    replayed in timestamp order. Semantics:

    - accept: confirms boundaries (no structural change)
    - reject / merge: removes the targeted boundaries, fusing neighbors
    - split: inserts a boundary at new_time_s
    - adjust: moves one boundary to new_time_s (two adjusts of the same
      boundary conflict)

    The surviving boundaries, sorted, delimit the output segments; each
    segment's subtitle text is the transcript slice over its span.
    """
    video_id = video_id or transcript.video_id
    if duration_s is None:
        duration_s = transcript.duration_s
    boundaries: dict[int, float] = {i: c.time_s for i, c in enumerate(candidates)}
    next_id = len(candidates)
    adjusted: set[int] = set()

    for decision in sorted(decisions, key=lambda d: d.ts):
        for t in decision.targets:
            if t not in boundaries:
                raise InvalidDecision(t)
        if decision.action == "accept":
            continue
        if decision.action in ("reject", "merge"):
            if decision.action == "merge" and not decision.targets:
                raise InvalidDecision(None, "merge requires targets")
            for t in decision.targets:
                boundaries.pop(t)
        elif decision.action == "split":
            if not (0 <= decision.new_time_s <= duration_s):
                raise InvalidDecision(None, f"split time {decision.new_time_s} outside video")
            boundaries[next_id] = float(decision.new_time_s)
            next_id += 1
        elif decision.action == "adjust":
            if len(decision.targets) != 1:
                raise InvalidDecision(None, "adjust takes exactly one target")
            t = decision.targets[0]
            if t in adjusted:
                raise ConflictingDecisions(f"boundary {t} adjusted twice")
            if not (0 <= decision.new_time_s <= duration_s):
                raise InvalidDecision(t, f"adjust time {decision.new_time_s} outside video")
            boundaries[t] = float(decision.new_time_s)
            adjusted.add(t)

    times = sorted(boundaries.values())
    segments = []
    for a, b in zip(times, times[1:]):
        if b - a <= 1e-9:
            continue
        segments.append(DiagnosticSegment(
            video_id=video_id,
            start_s=a,
            end_s=b,
            subtitle_text=slice_transcript(transcript, a, b) if transcript.segments else "",
            review_status="reviewed" if decisions else "auto",
        ))
    return segments


# --- artifact IO -------------------------------------------------------------

def write_boundaries(video_id: str, candidates: list[CandidateBoundary],
                     out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{video_id}.json"
    payload = {"candidates": [
        {"time_s": c.time_s, "confidence": c.confidence} for c in candidates
    ]}
    target.write_text(json.dumps(payload, indent=2) + "\n")
    return target


def read_boundaries(path: str | Path, detector_tag: str = "file") -> list[CandidateBoundary]:
    data = json.loads(Path(path).read_text())
    return [CandidateBoundary(float(c["time_s"]), float(c.get("confidence", 1.0)),
                              detector_tag)
            for c in data["candidates"]]


def write_decisions(video_id: str, decisions: list[ReviewDecision],
                    out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{video_id}.json"
    payload = {"decisions": [decision_to_dict(d) for d in decisions]}
    target.write_text(json.dumps(payload, indent=2) + "\n")
    return target


def decision_to_dict(d: ReviewDecision) -> dict:
    return {"action": d.action, "targets": list(d.targets),
            "new_time_s": d.new_time_s, "reviewer_id": d.reviewer_id, "ts": d.ts}


def decision_from_dict(d: dict) -> ReviewDecision:
    return ReviewDecision(
        action=d["action"],
        targets=tuple(d.get("targets") or ()),
        new_time_s=d.get("new_time_s"),
        reviewer_id=d.get("reviewer_id", ""),
        ts=d.get("ts", ""),
    )


def read_decisions(path: str | Path) -> list[ReviewDecision]:
    data = json.loads(Path(path).read_text())
    return [decision_from_dict(d) for d in data["decisions"]]


def clip_segment_to_dict(s: ClipSegment) -> dict:
    return {"video_id": s.video_id, "start_s": s.start_s, "end_s": s.end_s,
            "subtitle_text": s.subtitle_text, "match_score": s.match_score,
            "source_caption_id": s.source_caption_id}


def diagnostic_segment_to_dict(s: DiagnosticSegment) -> dict:
    return {"video_id": s.video_id, "start_s": s.start_s, "end_s": s.end_s,
            "subtitle_text": s.subtitle_text, "review_status": s.review_status,
            "split_tag": s.split_tag}


def write_segment_manifest(segments: list, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for s in segments:
            d = (clip_segment_to_dict(s) if isinstance(s, ClipSegment)
                 else diagnostic_segment_to_dict(s))
            fh.write(json.dumps(d, ensure_ascii=False) + "\n")
    return path
