"""Three-axis LLM-judge scoring of model predictions and the Avg/Norm-Avg
corpus aggregates, plus a plain-text leaderboard."""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyInput, JudgeMalformed, ParseFailure
from .instructgen import LLMClient

AXES = ("context", "correctness", "detail")
DEFAULT_RETRIES = 3

SYSTEM_EVAL = ("You compare a predicted answer against a reference answer "
               "for a pathology video question.")

_AXIS_PROMPT = (
    "Rate the {axis} of the predicted answer against the reference on a 0-5 "
    "scale. Reply with a single number.\n\nQuestion: {question}\n"
    "Reference answer: {reference}\nPredicted answer: {prediction}\n"
)
_COMBINED_PROMPT = (
    "Rate the predicted answer against the reference on three 0-5 axes: "
    "context, correctness, detail. Reply with three numbers.\n\n"
    "Question: {question}\nReference answer: {reference}\n"
    "Predicted answer: {prediction}\n"
)


@dataclass(frozen=True)
class EvalItem:
    item_id: str
    question: str
    reference_answer: str
    predicted_answer: str

    def __post_init__(self):
        for name in ("item_id", "question", "reference_answer", "predicted_answer"):
            if not getattr(self, name):
                raise ValueError(f"EvalItem.{name} must be non-empty")


@dataclass(frozen=True)
class JudgeScore:
    context: float
    correctness: float
    detail: float

    def __post_init__(self):
        for axis in AXES:
            v = getattr(self, axis)
            if not (0.0 <= v <= 5.0):
                raise ValueError(f"{axis} score {v} outside [0,5]")

    @property
    def mean(self) -> float:
        return (self.context + self.correctness + self.detail) / 3.0


@dataclass
class EvalReport:
    per_item: list[JudgeScore]
    axis_means: dict[str, float]
    avg: float
    norm_avg: float

    def to_dict(self) -> dict:
        return {
            "per_item": [
                {"context": s.context, "correctness": s.correctness,
                 "detail": s.detail} for s in self.per_item
            ],
            "axis_means": self.axis_means,
            "avg": self.avg,
            "norm_avg": self.norm_avg,
        }


# --- reply parsing --------------------------------------------------------------

_NUM = r"\d+(?:\.\d+)?"
_LABELED = {axis: re.compile(rf"{axis}\s*:?\s*({_NUM})", re.IGNORECASE)
            for axis in AXES}
_ALL_NUMS = re.compile(_NUM)


def _check_range(values: list[float]) -> list[float]:
    for v in values:
        if not (0.0 <= v <= 5.0):
            raise ParseFailure(f"score {v} outside [0,5]")
    return values


def parse_judge_reply(text: str, protocol: str = "combined") -> JudgeScore:
    """Extract a (context, correctness, detail) triple from a judge reply.

    Grammar: either every axis keyword followed by an optional colon and a
    number (any order), or a bare whitespace-separated numeric triple. Any
    value outside [0,5] is a ParseFailure.
    """
    labeled = {}
    for axis, rx in _LABELED.items():
        m = rx.search(text)
        if m:
            labeled[axis] = float(m.group(1))
    if len(labeled) == 3:
        vals = _check_range([labeled[a] for a in AXES])
        return JudgeScore(*vals)
    nums = [float(n) for n in _ALL_NUMS.findall(text)]
    if len(nums) == 3:
        return JudgeScore(*_check_range(nums))
    raise ParseFailure(f"cannot extract a score triple from {text!r}")


def parse_axis_reply(text: str) -> float:
    nums = [float(n) for n in _ALL_NUMS.findall(text)]
    if len(nums) != 1:
        raise ParseFailure(f"expected a single number, got {text!r}")
    return _check_range(nums)[0]


# --- judging -----------------------------------------------------------------------

class ReplyCache:
    """File-backed raw-reply cache keyed by (prompt hash, judge tag).

    Writes use atomic create-if-absent so concurrent judges never clobber
    each other; a hit replays the original reply byte-for-byte.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, prompt: str, tag: str) -> Path:
        key = hashlib.sha256(f"{tag}\x00{prompt}".encode()).hexdigest()
        return self.root / f"{key}.txt"

    def get(self, prompt: str, tag: str) -> str | None:
        p = self._path(prompt, tag)
        return p.read_text() if p.exists() else None

    def put(self, prompt: str, tag: str, reply: str) -> None:
        p = self._path(prompt, tag)
        if p.exists():
            return
        fd, tmp = tempfile.mkstemp(dir=self.root)
        with os.fdopen(fd, "w") as fh:
            fh.write(reply)
        try:
            os.link(tmp, p)  # fails if another writer got there first
        except FileExistsError:
            pass
        finally:
            os.unlink(tmp)


def _ask(judge: LLMClient, prompt: str, parse, retries: int,
         cache: ReplyCache | None, tag: str):
    if cache is not None:
        hit = cache.get(prompt, tag)
        if hit is not None:
            return parse(hit)
    last = None
    for _ in range(retries):
        reply = judge.complete(SYSTEM_EVAL, prompt, max_tokens=64)
        try:
            value = parse(reply)
        except ParseFailure as exc:
            last = exc
            continue
        if cache is not None:
            cache.put(prompt, tag, reply)
        return value
    raise JudgeMalformed(str(last))


def judge_sample(item: EvalItem, judge: LLMClient, protocol: str = "per-axis",
                 retries: int = DEFAULT_RETRIES, cache: ReplyCache | None = None,
                 judge_tag: str = "judge") -> JudgeScore:
    """Score one prediction on the three axes.

    protocol "per-axis" sends one prompt per axis (Video-ChatGPT style);
    "combined" sends a single prompt and parses the triple.
    """
    fields = dict(question=item.question, reference=item.reference_answer,
                  prediction=item.predicted_answer)
    if protocol == "combined":
        prompt = _COMBINED_PROMPT.format(**fields)
        return _ask(judge, prompt, parse_judge_reply, retries, cache, judge_tag)
    if protocol != "per-axis":
        raise ValueError(f"unknown judge protocol {protocol!r}")
    values = {}
    for axis in AXES:
        prompt = _AXIS_PROMPT.format(axis=axis, **fields)
        values[axis] = _ask(judge, prompt, parse_axis_reply, retries, cache, judge_tag)
    return JudgeScore(values["context"], values["correctness"], values["detail"])


# --- aggregation ---------------------------------------------------------------------

def aggregate(scores: list[JudgeScore]) -> EvalReport:
    """Axis means, Avg (mean over items of the per-item axis mean), and
    Norm-Avg = Avg / 5 * 100, computed from unrounded values."""
    if not scores:
        raise EmptyInput("no scores to aggregate")
    n = len(scores)
    axis_means = {axis: sum(getattr(s, axis) for s in scores) / n for axis in AXES}
    avg = sum(s.mean for s in scores) / n
    return EvalReport(per_item=list(scores), axis_means=axis_means,
                      avg=avg, norm_avg=avg / 5.0 * 100.0)


def render_leaderboard(reports: dict[str, EvalReport]) -> str:
    """Plain-text table sorted by Norm-Avg descending, names break ties."""
    if not reports:
        raise EmptyInput("no reports")
    rows = sorted(reports.items(), key=lambda kv: (-kv[1].norm_avg, kv[0]))
    width = max(len("Method"), max(len(name) for name in reports))
    header = (f"{'Method'.ljust(width)} | Context | Correct | Detail |  Avg  "
              "| Norm-Avg")
    lines = [header, "-" * len(header)]
    for name, r in rows:
        lines.append(
            f"{name.ljust(width)} | {r.axis_means['context']:7.2f} "
            f"| {r.axis_means['correctness']:7.2f} | {r.axis_means['detail']:6.2f} "
            f"| {r.avg:5.2f} | {r.norm_avg:8.2f}"
        )
    return "\n".join(lines) + "\n"


# --- artifact IO -----------------------------------------------------------------------

def read_predictions(path: str | Path) -> dict[str, str]:
    preds = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                preds[d["id"]] = d["prediction"]
    return preds


def write_report(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
