"""Instruction-record generation: quality-gated clip descriptions and
chain-of-thought diagnostic Q&A, via a pluggable LLM client."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol

from .errors import JudgeMalformed, MissingDiagnosisLine
from .ingest import Transcript
from .segmenter import ClipSegment, DiagnosticSegment, tokenize

log = logging.getLogger(__name__)

QUALITY_THRESHOLD = 3
DEFAULT_RETRIES = 3
GROUNDING_OVERLAP = 0.5
DIAGNOSIS_PREFIX = "Diagnosis:"

# deterministic default so reruns produce byte-identical records; callers
# wanting wall-clock provenance pass their own value
DEFAULT_CREATED_AT = "1970-01-01T00:00:00Z"


class LLMClient(Protocol):
    def complete(self, system: str, user: str, max_tokens: int = 1024,
                 temperature: float = 0.0) -> str: ...


@dataclass(frozen=True)
class QualityScore:
    value: int
    rationale: str = ""

    def __post_init__(self):
        if not (0 <= self.value <= 5):
            raise ValueError("quality score must be in 0..5")


@dataclass
class Turn:
    role: str  # user | assistant
    text: str


@dataclass
class InstructionRecord:
    record_id: str
    video_id: str
    start_s: float
    end_s: float
    kind: str  # clip_detail | clip_concise | cot_diagnosis
    conversations: list[Turn]
    quality: QualityScore | None = None
    llm_tag: str = ""
    prompt_version: str = ""
    created_at: str = DEFAULT_CREATED_AT


class Discarded:
    """Sentinel result for clips failing both gate stages."""

    def __init__(self, reason: str):
        self.reason = reason

    def __repr__(self):
        return f"Discarded({self.reason!r})"


# --- prompt templates --------------------------------------------------------

def load_prompt(name: str) -> str:
    return resources.files("videopath_forge.prompts").joinpath(f"{name}.txt").read_text()


def prompt_version(*names: str) -> str:
    h = hashlib.sha256()
    for name in sorted(names):
        h.update(load_prompt(name).encode())
    return h.hexdigest()[:12]


SYSTEM_GENERATOR = "You are a pathology instruction-data generator."
SYSTEM_JUDGE = "You are a strict pathology narration quality judge."


# --- score parsing -----------------------------------------------------------

_SLASH_FIVE = re.compile(r"\b([0-5])\s*/\s*5\b")
_BARE_SCORE = re.compile(r"(?:score\s*:?\s*)?\b([0-5])\b", re.IGNORECASE)


def parse_quality_reply(text: str) -> int:
    """First integer 0-5 after an optional "Score:" prefix, or "k/5"."""
    m = _SLASH_FIVE.search(text)
    if m:
        return int(m.group(1))
    m = _BARE_SCORE.search(text)
    if m:
        return int(m.group(1))
    raise JudgeMalformed(f"no 0-5 score in judge reply: {text!r}")


def _with_retries(call, parse, retries: int, backoff_s: float, error_cls):
    last = None
    for attempt in range(retries):
        reply = call()
        try:
            return parse(reply), reply
        except Exception as exc:  # noqa: BLE001 - retried, re-raised below
            last = exc
            if attempt < retries - 1 and backoff_s:
                time.sleep(backoff_s * (2 ** attempt))
    raise error_cls(str(last))


def score_transcript_quality(subtitle_text: str, judge: LLMClient,
                             retries: int = DEFAULT_RETRIES,
                             backoff_s: float = 0.0) -> QualityScore:
    """0-5 quality score for a clip narration, parsed from the judge reply."""
    if not subtitle_text.strip():
        raise ValueError("subtitle_text is empty")
    prompt = load_prompt("quality_rubric").format(subtitle=subtitle_text)
    value, reply = _with_retries(
        lambda: judge.complete(SYSTEM_JUDGE, prompt, max_tokens=128),
        parse_quality_reply, retries, backoff_s, JudgeMalformed,
    )
    return QualityScore(value=value, rationale=reply.strip())


# --- clip records ------------------------------------------------------------

def _record_id(video_id: str, start_s: float, end_s: float, kind: str) -> str:
    key = f"{video_id}:{start_s:.3f}:{end_s:.3f}:{kind}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def gen_clip_record(clip: ClipSegment, llm: LLMClient, judge: LLMClient,
                    llm_tag: str = "llm", retries: int = DEFAULT_RETRIES,
                    created_at: str = DEFAULT_CREATED_AT,
                    ) -> InstructionRecord | Discarded:
    """Two-stage gated clip description.

    Stage one scores the raw subtitle; at >= 3 the detailed description is
    retained. Below 3, a concise description is generated and the subtitle
    re-scored with the concise context; at >= 3 the concise record is
    retained, otherwise the clip is discarded.
    """
    if not clip.subtitle_text.strip():
        raise ValueError("clip has empty subtitle_text")

    score1 = score_transcript_quality(clip.subtitle_text, judge, retries)
    if score1.value >= QUALITY_THRESHOLD:
        question = "Describe this image in detail."
        prompt = load_prompt("clip_detail").format(subtitle=clip.subtitle_text)
        answer = llm.complete(SYSTEM_GENERATOR, prompt)
        kind, quality = "clip_detail", score1
        version = prompt_version("quality_rubric", "clip_detail")
    else:
        question = "Provide a concise description of this image."
        prompt = load_prompt("clip_concise").format(subtitle=clip.subtitle_text)
        answer = llm.complete(SYSTEM_GENERATOR, prompt)
        score2 = score_transcript_quality(clip.subtitle_text, judge, retries)
        if score2.value < QUALITY_THRESHOLD:
            log.info("discarded clip %s (scores %d, %d)", clip.source_caption_id,
                     score1.value, score2.value)
            return Discarded(f"scores {score1.value}/{score2.value} below threshold")
        kind, quality = "clip_concise", score2
        version = prompt_version("quality_rubric", "clip_concise")

    return InstructionRecord(
        record_id=_record_id(clip.video_id, clip.start_s, clip.end_s, kind),
        video_id=clip.video_id,
        start_s=clip.start_s,
        end_s=clip.end_s,
        kind=kind,
        conversations=[Turn("user", question), Turn("assistant", answer.strip())],
        quality=quality,
        llm_tag=llm_tag,
        prompt_version=version,
        created_at=created_at,
    )


# --- key features ------------------------------------------------------------

def _grounding_overlap(feature_tokens: list[str], transcript_tokens: list[str]) -> float:
    """Best token-overlap fraction of the feature against equal-length
    sliding windows of the transcript."""
    k = len(feature_tokens)
    if k == 0 or len(transcript_tokens) < 1:
        return 0.0
    from collections import Counter
    feat = Counter(feature_tokens)
    best = 0.0
    n = len(transcript_tokens)
    width = min(k, n)
    for i in range(n - width + 1):
        window = Counter(transcript_tokens[i:i + width])
        overlap = sum(min(c, window[t]) for t, c in feat.items())
        best = max(best, overlap / k)
        if best == 1.0:
            break
    return best


def extract_key_features(subtitle_text: str, llm: LLMClient,
                         min_overlap: float = GROUNDING_OVERLAP) -> list[str]:
    """LLM-extracted feature phrases, kept only when grounded in the
    narration (token overlap >= min_overlap with some narration window)."""
    if not subtitle_text.strip():
        raise ValueError("subtitle_text is empty")
    prompt = load_prompt("key_features").format(subtitle=subtitle_text)
    reply = llm.complete(SYSTEM_GENERATOR, prompt, max_tokens=256)
    transcript_tokens = tokenize(subtitle_text)
    kept = []
    for line in reply.splitlines():
        phrase = line.strip(" -*\t")
        if not phrase:
            continue
        if _grounding_overlap(tokenize(phrase), transcript_tokens) >= min_overlap:
            kept.append(phrase)
        else:
            log.info("dropped ungrounded feature %r", phrase)
    return kept


# --- CoT records --------------------------------------------------------------

def _check_diagnosis_format(answer: str) -> str:
    lines = [ln for ln in answer.strip().splitlines() if ln.strip()]
    diag = [ln for ln in lines if ln.strip().startswith(DIAGNOSIS_PREFIX)]
    if len(diag) != 1 or not lines[-1].strip().startswith(DIAGNOSIS_PREFIX):
        raise MissingDiagnosisLine("expected exactly one terminal Diagnosis: line")
    return answer.strip()


def cot_question(tissue: str | None = None) -> str:
    slot = tissue if tissue else "this image"
    return (f"What is your diagnosis for {slot}? "
            "First, describe the relevant details, then provide your answer.")


def gen_cot_record(segment: DiagnosticSegment, llm: LLMClient,
                   tissue: str | None = None, llm_tag: str = "llm",
                   retries: int = DEFAULT_RETRIES,
                   created_at: str = DEFAULT_CREATED_AT) -> InstructionRecord:
    """Chain-of-thought diagnostic record: description paragraphs ending in a
    single "Diagnosis: <term>" line, grounded by extracted key features."""
    if not segment.subtitle_text.strip():
        raise ValueError("segment has empty subtitle_text")

    features = extract_key_features(segment.subtitle_text, llm)
    prompt = load_prompt("cot_diagnosis").format(
        tissue=tissue or "this image",
        features="\n".join(f"- {f}" for f in features) or "- (none extracted)",
        subtitle=segment.subtitle_text,
    )
    answer, _ = _with_retries(
        lambda: llm.complete(SYSTEM_GENERATOR, prompt),
        _check_diagnosis_format, retries, 0.0, MissingDiagnosisLine,
    )
    return InstructionRecord(
        record_id=_record_id(segment.video_id, segment.start_s, segment.end_s,
                             "cot_diagnosis"),
        video_id=segment.video_id,
        start_s=segment.start_s,
        end_s=segment.end_s,
        kind="cot_diagnosis",
        conversations=[Turn("user", cot_question(tissue)), Turn("assistant", answer)],
        llm_tag=llm_tag,
        prompt_version=prompt_version("key_features", "cot_diagnosis"),
        created_at=created_at,
    )


# --- validation ----------------------------------------------------------------

def validate_record(record: InstructionRecord) -> list[str]:
    """List of violated invariants; empty means valid."""
    violations = []
    if not record.conversations:
        violations.append("empty conversation")
        return violations
    for i, turn in enumerate(record.conversations):
        expected = "user" if i % 2 == 0 else "assistant"
        if turn.role != expected:
            violations.append("turn order")
            break
    if record.kind in ("clip_detail", "clip_concise"):
        if record.quality is None:
            violations.append("missing quality score")
        elif record.quality.value < QUALITY_THRESHOLD:
            violations.append("quality below threshold")
    if record.kind == "cot_diagnosis":
        answer = record.conversations[-1].text if record.conversations[-1].role == "assistant" else ""
        lines = [ln for ln in answer.splitlines() if ln.strip()]
        diag = [ln for ln in lines if ln.strip().startswith(DIAGNOSIS_PREFIX)]
        if len(diag) > 1:
            violations.append("multiple diagnosis lines")
        elif len(diag) == 0:
            violations.append("missing diagnosis line")
        elif not lines[-1].strip().startswith(DIAGNOSIS_PREFIX):
            violations.append("diagnosis line not terminal")
    return violations


# --- artifact IO -----------------------------------------------------------------

_ROLE_OUT = {"user": "human", "assistant": "gpt"}
_ROLE_IN = {"human": "user", "gpt": "assistant"}


def record_to_dict(record: InstructionRecord) -> dict:
    """Conversation schema compatible with common visual-instruction corpora."""
    d = {
        "id": record.record_id,
        "video": record.video_id,
        "span": [record.start_s, record.end_s],
        "kind": record.kind,
        "conversations": [
            {"from": _ROLE_OUT[t.role], "value": t.text} for t in record.conversations
        ],
        "provenance": {
            "llm_tag": record.llm_tag,
            "prompt_version": record.prompt_version,
            "created_at": record.created_at,
        },
    }
    if record.quality is not None:
        d["quality"] = {"value": record.quality.value,
                        "rationale": record.quality.rationale}
    return d


def record_from_dict(d: dict) -> InstructionRecord:
    q = d.get("quality")
    prov = d.get("provenance", {})
    return InstructionRecord(
        record_id=d["id"],
        video_id=d["video"],
        start_s=float(d["span"][0]),
        end_s=float(d["span"][1]),
        kind=d.get("kind", "clip_detail"),
        conversations=[Turn(_ROLE_IN[c["from"]], c["value"])
                       for c in d["conversations"]],
        quality=QualityScore(q["value"], q.get("rationale", "")) if q else None,
        llm_tag=prov.get("llm_tag", ""),
        prompt_version=prov.get("prompt_version", ""),
        created_at=prov.get("created_at", DEFAULT_CREATED_AT),
    )


def write_records(records: list[InstructionRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(record_to_dict(r), ensure_ascii=False) + "\n")
    return path


def read_records(path: str | Path) -> list[InstructionRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(record_from_dict(json.loads(line)))
    return out
