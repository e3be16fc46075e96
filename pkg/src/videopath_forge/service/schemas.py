"""Pydantic request/response models for the review service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class BoundaryOut(BaseModel):
    index: int
    time_s: float
    confidence: float


class TranscriptSegmentOut(BaseModel):
    start_s: float
    end_s: float
    text: str


class DecisionIn(BaseModel):
    action: str
    targets: list[int] = Field(default_factory=list)
    new_time_s: float | None = None
    reviewer_id: str = ""
    ts: str = ""


class SegmentOut(BaseModel):
    video_id: str
    start_s: float
    end_s: float
    subtitle_text: str
    review_status: str


class SessionOut(BaseModel):
    video_id: str
    duration_s: float
    candidates: list[BoundaryOut]
    transcript: list[TranscriptSegmentOut]
    decisions: list[DecisionIn]
    preview_segments: list[SegmentOut]
    dirty: bool


class DecisionResult(BaseModel):
    ok: bool
    preview_segments: list[SegmentOut]
    decisions: list[DecisionIn]


class ExportResult(BaseModel):
    path: str
    decision_count: int
