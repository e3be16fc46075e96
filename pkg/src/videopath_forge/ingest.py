"""Video and narration ingest: subtitle parsing, ASR routing, video probing.

Produces the normalized timestamped transcript every downstream module
consumes. Transcripts are written as one JSON object per segment to
``transcripts/<video_id>.jsonl``.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import cv2

from .errors import (
    DecodeFailure,
    EmptyInput,
    EmptyTranscript,
    IOFailure,
    MalformedCue,
    NotAVideo,
)

OVERLAP_SLACK_S = 0.05


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    duration_s: float
    fps: float
    width: int
    height: int
    source_uri: str

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError("duration_s must be >= 0")
        if self.fps <= 0:
            raise ValueError("fps must be > 0")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("dimensions must be positive")


@dataclass(frozen=True)
class TranscriptSegment:
    start_s: float
    end_s: float
    text: str
    language: str = "en"

    def __post_init__(self):
        if not (0 <= self.start_s < self.end_s):
            raise ValueError(f"bad segment span [{self.start_s}, {self.end_s}]")
        if not self.text.strip():
            raise ValueError("segment text empty after trim")


@dataclass
class Transcript:
    video_id: str
    segments: list[TranscriptSegment] = field(default_factory=list)
    backend_tag: str = "subtitles"

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if a.start_s > b.start_s:
                raise ValueError("segments not sorted by start_s")
            if a.end_s > b.start_s + OVERLAP_SLACK_S:
                raise ValueError("segments overlap beyond slack")

    @property
    def duration_s(self) -> float:
        return self.segments[-1].end_s if self.segments else 0.0

    def full_text(self) -> str:
        return " ".join(s.text for s in self.segments)


class ASRBackend(Protocol):
    """Speech-to-text adapter: mode is "transcribe" or "translate"."""

    def transcribe(self, media_path: str, mode: str) -> list[dict]: ...


# --- subtitle parsing -------------------------------------------------------

_SRT_TIME = re.compile(
    r"(\d{1,2}):(\d{2}):(\d{2})[,.](\d{1,3})\s*-->\s*(\d{1,2}):(\d{2}):(\d{2})[,.](\d{1,3})"
)


def _parse_timing(line: str, line_no: int) -> tuple[float, float]:
    m = _SRT_TIME.search(line)
    if not m:
        raise MalformedCue(line_no, f"bad timestamp line {line_no}: {line.strip()!r}")
    h1, m1, s1, ms1, h2, m2, s2, ms2 = m.groups()
    start = int(h1) * 3600 + int(m1) * 60 + int(s1) + int(ms1.ljust(3, "0")) / 1000.0
    end = int(h2) * 3600 + int(m2) * 60 + int(s2) + int(ms2.ljust(3, "0")) / 1000.0
    return start, end


def _iter_cues(raw: str, fmt: str) -> Iterable[tuple[float, float, str]]:
    lines = raw.splitlines()
    i = 0
    if fmt == "vtt":
        # skip the WEBVTT header block (up to first blank line)
        while i < len(lines) and lines[i].strip():
            i += 1
    n = len(lines)
    while i < n:
        if not lines[i].strip():
            i += 1
            continue
        line_no = i + 1
        # optional numeric cue index (SRT) or cue identifier (VTT)
        if "-->" not in lines[i]:
            i += 1
            if i >= n or "-->" not in lines[i]:
                raise MalformedCue(line_no, f"expected timing line near line {line_no}")
        start, end = _parse_timing(lines[i], i + 1)
        i += 1
        text_lines = []
        while i < n and lines[i].strip():
            text_lines.append(lines[i].strip())
            i += 1
        text = " ".join(text_lines).strip()
        if text:
            yield start, end, text


def parse_subtitles(raw: str, format: str = "srt", language: str = "en") -> list[TranscriptSegment]:
    """Parse SRT or WebVTT text into ordered, non-overlapping segments.

    Overlapping cues are clip-merged: a later cue's start is clipped to the
    previous cue's end; cues with identical spans are folded into one segment.
    """
    if format not in ("srt", "vtt"):
        raise ValueError(f"unknown subtitle format {format!r}")
    cues = sorted(_iter_cues(raw, format), key=lambda c: (c[0], c[1]))
    if not cues:
        raise EmptyInput("no cues found")

    merged: list[list] = []  # [start, end, text]
    for start, end, text in cues:
        if end <= start:
            end = start + 0.001
        if merged:
            prev = merged[-1]
            if abs(start - prev[0]) < 1e-9 and abs(end - prev[1]) < 1e-9:
                prev[2] += " " + text  # identical timestamps: fold
                continue
            if start < prev[1]:
                start = prev[1]  # clip later cue's start to previous end
            if end <= start:
                prev[2] += " " + text  # fully contained: fold
                continue
        merged.append([start, end, text])
    return [TranscriptSegment(s, e, t, language) for s, e, t in merged]


# --- ASR routing -------------------------------------------------------------

ENGLISH_TAGS = ("en",)


def _is_english(tag: str | None) -> bool:
    return tag is not None and tag.lower().split("-")[0] in ENGLISH_TAGS


def transcribe(
    video: VideoMeta,
    backend: ASRBackend,
    language_hint: str | None = None,
    detect_language=None,
) -> Transcript:
    """Run the ASR backend, routing English audio to transcription and
    everything else to translate-to-English.

    `detect_language` is an optional callable(media_path) -> BCP-47 tag used
    when no hint is given.
    """
    tag = language_hint
    if tag is None and detect_language is not None:
        tag = detect_language(video.source_uri)
    mode = "transcribe" if _is_english(tag or "en") else "translate"
    raw = backend.transcribe(video.source_uri, mode)
    if not raw:
        raise EmptyTranscript(f"backend returned no segments for {video.video_id}")
    segs = [
        TranscriptSegment(
            float(r["start_s"]), float(r["end_s"]), str(r["text"]),
            r.get("language", "en"),
        )
        for r in sorted(raw, key=lambda r: float(r["start_s"]))
    ]
    # normalize tiny overlaps the same way subtitle parsing does
    fixed: list[TranscriptSegment] = []
    for s in segs:
        if fixed and s.start_s < fixed[-1].end_s:
            if s.end_s <= fixed[-1].end_s:
                continue
            s = TranscriptSegment(fixed[-1].end_s, s.end_s, s.text, s.language)
        fixed.append(s)
    return Transcript(video_id=video.video_id, segments=fixed, backend_tag=mode)


# --- video probing -----------------------------------------------------------

_HEADER_BYTES = 1 << 16


def probe_video(source_uri: str) -> VideoMeta:
    """Decode container metadata; video_id is a content hash of the header."""
    path = Path(source_uri)
    if not path.is_file():
        raise IOFailure(f"no such file: {source_uri}")
    try:
        with open(path, "rb") as fh:
            header = fh.read(_HEADER_BYTES)
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    cap = cv2.VideoCapture(str(path))
    try:
        if not cap.isOpened():
            raise NotAVideo(f"cannot decode {source_uri}")
        fps = cap.get(cv2.CAP_PROP_FPS)
        frames = cap.get(cv2.CAP_PROP_FRAME_COUNT)
        width = int(cap.get(cv2.CAP_PROP_FRAME_WIDTH))
        height = int(cap.get(cv2.CAP_PROP_FRAME_HEIGHT))
    finally:
        cap.release()
    if fps <= 0 or width <= 0 or height <= 0 or frames <= 0:
        raise NotAVideo(f"no decodable video stream in {source_uri}")
    video_id = hashlib.sha256(header).hexdigest()[:16]
    return VideoMeta(
        video_id=video_id,
        duration_s=frames / fps,
        fps=fps,
        width=width,
        height=height,
        source_uri=str(path),
    )


# --- artifact IO -------------------------------------------------------------

def write_transcript(transcript: Transcript, out_dir: str | Path) -> Path:
    """Write transcripts/<video_id>.jsonl atomically (temp file + rename)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{transcript.video_id}.jsonl"
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        for s in transcript.segments:
            fh.write(json.dumps(
                {"start_s": s.start_s, "end_s": s.end_s, "text": s.text,
                 "language": s.language}, ensure_ascii=False) + "\n")
    os.replace(tmp, target)
    return target


def read_transcript(path: str | Path, video_id: str | None = None,
                    backend_tag: str = "subtitles") -> Transcript:
    path = Path(path)
    segs = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            segs.append(TranscriptSegment(d["start_s"], d["end_s"], d["text"],
                                          d.get("language", "en")))
    return Transcript(video_id=video_id or path.stem, segments=segs,
                      backend_tag=backend_tag)


def serialize_segments(segments: list[TranscriptSegment]) -> str:
    """Render segments back to SRT (used for the parse/serialize round-trip)."""
    def fmt(t: float) -> str:
        ms = round(t * 1000)
        return f"{ms // 3600000:02d}:{ms // 60000 % 60:02d}:{ms // 1000 % 60:02d},{ms % 1000:03d}"

    out = []
    for i, s in enumerate(segments, 1):
        out.append(f"{i}\n{fmt(s.start_s)} --> {fmt(s.end_s)}\n{s.text}\n")
    return "\n".join(out)
