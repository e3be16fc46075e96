"""Loopback review service: serves review sessions to the browser tool and
persists exported decision files in the exact format segmenter consumes.

Preview segments are computed by the same apply_review replay the batch
pipeline uses, so what the reviewer sees is what `segment video` produces.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from .. import ingest, segmenter
from ..errors import ForgeError
from .schemas import (
    BoundaryOut,
    DecisionIn,
    DecisionResult,
    ExportResult,
    SegmentOut,
    SessionOut,
    TranscriptSegmentOut,
)


class ReviewStore:
    """In-memory sessions over the artifact directory; appends are
    serialized per video."""

    def __init__(self, artifact_root: str | Path):
        self.root = Path(artifact_root)
        self.sessions: dict[str, dict] = {}
        self.locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock(self, video_id: str) -> threading.Lock:
        with self._guard:
            return self.locks.setdefault(video_id, threading.Lock())

    def load(self, video_id: str) -> dict:
        if video_id in self.sessions:
            return self.sessions[video_id]
        bpath = self.root / "boundaries" / f"{video_id}.json"
        tpath = self.root / "transcripts" / f"{video_id}.jsonl"
        if not bpath.is_file() or not tpath.is_file():
            raise FileNotFoundError(video_id)
        candidates = segmenter.read_boundaries(bpath)
        transcript = ingest.read_transcript(tpath, video_id)
        index = json.loads((self.root / "videos.json").read_text()) \
            if (self.root / "videos.json").exists() else {}
        duration = index.get(video_id, {}).get("duration_s", transcript.duration_s)
        decisions = []
        rpath = self.root / "reviews" / f"{video_id}.json"
        if rpath.is_file():
            decisions = segmenter.read_decisions(rpath)
        session = {
            "video_id": video_id,
            "duration_s": float(duration),
            "candidates": candidates,
            "transcript": transcript,
            "decisions": decisions,
            "dirty": False,
        }
        self.sessions[video_id] = session
        return session

    def preview(self, session: dict) -> list[segmenter.DiagnosticSegment]:
        return segmenter.apply_review(
            session["candidates"], session["decisions"], session["transcript"],
            session["video_id"], duration_s=session["duration_s"])

    def append(self, video_id: str, decision: segmenter.ReviewDecision) -> dict:
        with self._lock(video_id):
            session = self.load(video_id)
            trial = session["decisions"] + [decision]
            # legality check: replay must succeed before the append commits
            segmenter.apply_review(session["candidates"], trial,
                                   session["transcript"], video_id,
                                   duration_s=session["duration_s"])
            session["decisions"] = trial
            session["dirty"] = True
            return session

    def export(self, video_id: str) -> Path:
        with self._lock(video_id):
            session = self.load(video_id)
            path = segmenter.write_decisions(
                video_id, session["decisions"], self.root / "reviews")
            session["dirty"] = False
            return path


def _decision_out(d: segmenter.ReviewDecision) -> DecisionIn:
    return DecisionIn(action=d.action, targets=list(d.targets),
                      new_time_s=d.new_time_s, reviewer_id=d.reviewer_id, ts=d.ts)


def _segments_out(segments) -> list[SegmentOut]:
    return [SegmentOut(video_id=s.video_id, start_s=s.start_s, end_s=s.end_s,
                       subtitle_text=s.subtitle_text,
                       review_status=s.review_status) for s in segments]


def create_app(artifact_root: str | Path) -> FastAPI:
    app = FastAPI(title="videopath-forge review service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    store = ReviewStore(artifact_root)
    app.state.store = store

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/videos")
    def videos():
        index_path = store.root / "videos.json"
        if not index_path.exists():
            return {"videos": []}
        return {"videos": sorted(json.loads(index_path.read_text()))}

    @app.get("/session/{video_id}", response_model=SessionOut)
    def get_session(video_id: str):
        try:
            session = store.load(video_id)
        except FileNotFoundError:
            raise HTTPException(404, f"no artifacts for video {video_id}")
        return SessionOut(
            video_id=video_id,
            duration_s=session["duration_s"],
            candidates=[BoundaryOut(index=i, time_s=c.time_s,
                                    confidence=c.confidence)
                        for i, c in enumerate(session["candidates"])],
            transcript=[TranscriptSegmentOut(start_s=s.start_s, end_s=s.end_s,
                                             text=s.text)
                        for s in session["transcript"].segments],
            decisions=[_decision_out(d) for d in session["decisions"]],
            preview_segments=_segments_out(store.preview(session)),
            dirty=session["dirty"],
        )

    @app.post("/session/{video_id}/decision", response_model=DecisionResult)
    def post_decision(video_id: str, decision: DecisionIn):
        try:
            d = segmenter.ReviewDecision(
                action=decision.action, targets=tuple(decision.targets),
                new_time_s=decision.new_time_s,
                reviewer_id=decision.reviewer_id, ts=decision.ts)
            session = store.append(video_id, d)
        except FileNotFoundError:
            raise HTTPException(404, f"no artifacts for video {video_id}")
        except (ForgeError, ValueError) as exc:
            raise HTTPException(422, f"illegal decision: {exc}")
        return DecisionResult(
            ok=True,
            preview_segments=_segments_out(store.preview(session)),
            decisions=[_decision_out(d) for d in session["decisions"]],
        )

    @app.post("/session/{video_id}/export", response_model=ExportResult)
    def post_export(video_id: str):
        try:
            path = store.export(video_id)
        except FileNotFoundError:
            raise HTTPException(404, f"no artifacts for video {video_id}")
        session = store.load(video_id)
        return ExportResult(path=str(path),
                            decision_count=len(session["decisions"]))

    return app
