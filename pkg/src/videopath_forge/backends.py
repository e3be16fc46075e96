"""Backend adapters: ASR, shot detection, region detection, OCR, and LLM
clients. Every real model is out of scope here; deterministic mocks make the
whole pipeline runnable offline, and the registry lets configs bind adapters
by name. All adapters count their calls so resumability tests can assert
that cached reruns hit no backend at all.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import cv2
import numpy as np

from .errors import BackendUnavailable


def _stable_rng(*parts: str) -> np.random.Generator:
    digest = hashlib.sha256("\x00".join(parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class CallCounter:
    def __init__(self):
        self.calls = 0


# --- ASR ---------------------------------------------------------------------

_PATHOLOGY_WORDS = (
    "low power view shows glandular tissue with mild atypia",
    "at higher magnification the nuclei are enlarged and hyperchromatic",
    "there is desmoplastic stroma surrounding the nests of tumor cells",
    "mitotic figures are frequent consistent with a high grade lesion",
    "the final diagnosis here is invasive carcinoma",
)


class MockASR(CallCounter):
    """Deterministic fake ASR: emits a fixed narration cadence seeded by the
    media path, so repeated runs transcribe identically."""

    def __init__(self, segment_s: float = 4.0, duration_s: float = 20.0):
        super().__init__()
        self.segment_s = segment_s
        self.duration_s = duration_s

    def transcribe(self, media_path: str, mode: str) -> list[dict]:
        self.calls += 1
        rng = _stable_rng("asr", media_path, mode)
        out = []
        t = 0.0
        i = 0
        while t < self.duration_s:
            end = min(t + self.segment_s, self.duration_s)
            text = _PATHOLOGY_WORDS[int(rng.integers(len(_PATHOLOGY_WORDS)))]
            out.append({"start_s": t, "end_s": end, "text": f"{text} ({i})",
                        "language": "en"})
            t = end
            i += 1
        return out


class ScriptedASR(CallCounter):
    """Returns a fixed segment list (tests use this for routing checks)."""

    def __init__(self, segments: list[dict]):
        super().__init__()
        self.segments = segments
        self.modes: list[str] = []

    def transcribe(self, media_path: str, mode: str) -> list[dict]:
        self.calls += 1
        self.modes.append(mode)
        return self.segments


# --- shot detection -------------------------------------------------------------

class MockShotDetector(CallCounter):
    """Deterministic boundary times derived from the media path."""

    tag = "mock-shot"

    def __init__(self, n_boundaries: int = 4, duration_s: float = 20.0):
        super().__init__()
        self.n_boundaries = n_boundaries
        self.duration_s = duration_s

    def _duration(self, media_path: str) -> float:
        cap = cv2.VideoCapture(str(media_path))
        try:
            fps = cap.get(cv2.CAP_PROP_FPS)
            frames = cap.get(cv2.CAP_PROP_FRAME_COUNT)
        finally:
            cap.release()
        return frames / fps if fps > 0 and frames > 0 else self.duration_s

    def propose(self, media_path: str) -> list[dict]:
        self.calls += 1
        rng = _stable_rng("shot", media_path)
        duration = self._duration(media_path)
        times = np.sort(rng.uniform(0.05, 0.95, self.n_boundaries)) * duration
        return [{"time_s": round(float(t), 2),
                 "confidence": round(float(rng.uniform(0.6, 1.0)), 3)}
                for t in times]


class FrameDiffDetector(CallCounter):
    """Simple reference detector: mean absolute frame difference above a
    threshold marks a cut."""

    tag = "frame-diff"

    def __init__(self, threshold: float = 30.0, stride: int = 1):
        super().__init__()
        self.threshold = threshold
        self.stride = stride

    def propose(self, media_path: str) -> list[dict]:
        self.calls += 1
        cap = cv2.VideoCapture(str(media_path))
        if not cap.isOpened():
            raise BackendUnavailable(f"cannot open {media_path}")
        fps = cap.get(cv2.CAP_PROP_FPS) or 30.0
        prev = None
        idx = 0
        out = []
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            if idx % self.stride == 0:
                gray = cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY).astype(np.float64)
                if prev is not None:
                    diff = float(np.abs(gray - prev).mean())
                    if diff > self.threshold:
                        out.append({"time_s": idx / fps,
                                    "confidence": min(1.0, diff / 255.0 * 4)})
                prev = gray
            idx += 1
        cap.release()
        return out


# --- region detection / OCR -------------------------------------------------------

class MockDetector(CallCounter):
    """Deterministic pathology/human boxes derived from frame content."""

    def __init__(self, human_every: int = 3, tissue_miss_every: int = 0):
        super().__init__()
        self.human_every = human_every
        self.tissue_miss_every = tissue_miss_every

    def detect(self, image: np.ndarray) -> list[dict]:
        self.calls += 1
        h, w = image.shape[:2]
        seed = int(image.sum()) & 0xFFFF
        boxes = []
        if not (self.tissue_miss_every and seed % self.tissue_miss_every == 0):
            boxes.append({"label": "pathology",
                          "bbox": [w // 8, h // 8, w * 7 // 8, h * 7 // 8],
                          "confidence": 0.9})
        if self.human_every and seed % self.human_every == 0:
            boxes.append({"label": "human", "bbox": [0, 0, w // 4, h // 2],
                          "confidence": 0.8})
        return boxes


class ScriptedDetector(CallCounter):
    def __init__(self, boxes: list[dict]):
        super().__init__()
        self.boxes = boxes

    def detect(self, image: np.ndarray) -> list[dict]:
        self.calls += 1
        return self.boxes


class MockOCR(CallCounter):
    """Pretends there is an overlay caption strip along the bottom of every
    other frame."""

    def __init__(self, fire_every: int = 2):
        super().__init__()
        self.fire_every = fire_every

    def detect_text(self, image: np.ndarray) -> list[tuple[int, int, int, int]]:
        self.calls += 1
        h, w = image.shape[:2]
        if self.fire_every and int(image.sum()) % self.fire_every == 0 and h >= 8:
            return [(w // 4, h - h // 8, w * 3 // 4, h - 1)]
        return []


class ScriptedOCR(CallCounter):
    def __init__(self, boxes: list[tuple[int, int, int, int]]):
        super().__init__()
        self.boxes = boxes

    def detect_text(self, image: np.ndarray) -> list[tuple[int, int, int, int]]:
        self.calls += 1
        return self.boxes


# --- LLM clients ----------------------------------------------------------------------

class MockLLM(CallCounter):
    """Deterministic offline LLM: synthesizes plausible replies from the
    prompt text alone. Quality scores and judge triples are stable hashes of
    the material being scored, so pipeline runs are reproducible."""

    tag = "mock-llm"

    def __init__(self, score_floor: int = 0):
        super().__init__()
        self.score_floor = score_floor

    @staticmethod
    def _extract(block: str, prompt: str) -> str:
        m = re.search(rf"{block}:\n(.*)", prompt, re.DOTALL)
        return m.group(1).strip() if m else prompt

    def complete(self, system: str, user: str, max_tokens: int = 1024,
                 temperature: float = 0.0) -> str:
        self.calls += 1
        if "Rate the narration" in user:
            subject = self._extract("Narration", user)
            score = max(self.score_floor,
                        int(_stable_rng("score", subject).integers(0, 6)))
            return f"Score: {score} - deterministic mock rating"
        if "Rate the predicted answer" in user or "Rate the" in user and "0-5" in user:
            rng = _stable_rng("judge", user)
            nums = rng.integers(1, 6, 3)
            if "three 0-5 axes" in user:
                return f"{nums[0]} {nums[1]} {nums[2]}"
            return str(int(nums[0]))
        if "key visual features" in user:
            narration = self._extract("Narration", user)
            words = narration.split()
            feats = []
            for i in range(0, max(len(words) - 2, 1), 7):
                feats.append(" ".join(words[i:i + 3]))
                if len(feats) == 3:
                    break
            return "\n".join(feats)
        if "What is your diagnosis" in user:
            narration = self._extract("Narration", user)
            rng = _stable_rng("diagnosis", narration)
            term = ["invasive carcinoma", "high-grade serous carcinoma",
                    "benign leiomyoma"][int(rng.integers(3))]
            return (f"The sections show {narration[:160]}...\n"
                    f"These features support a malignant process.\n"
                    f"Diagnosis: {term}")
        # description prompts (detailed or concise)
        narration = self._extract("Narration", user)
        style = "detailed" if "detail" in user.lower() else "concise"
        return f"A {style} histopathological description: {narration[:200]}"


class ReplayLLM(CallCounter):
    """Deterministic replay client backed by a recorded fixtures file:
    a JSON object mapping sha256(system + "\\x00" + user) to the reply."""

    tag = "replay-llm"

    def __init__(self, fixtures_path: str):
        super().__init__()
        self.path = Path(fixtures_path)
        if not self.path.is_file():
            raise BackendUnavailable(f"no fixtures file at {fixtures_path}")
        self.fixtures = json.loads(self.path.read_text())

    @staticmethod
    def key(system: str, user: str) -> str:
        return hashlib.sha256(f"{system}\x00{user}".encode()).hexdigest()

    def complete(self, system: str, user: str, max_tokens: int = 1024,
                 temperature: float = 0.0) -> str:
        self.calls += 1
        k = self.key(system, user)
        if k not in self.fixtures:
            raise BackendUnavailable(f"no recorded reply for prompt key {k[:12]}")
        return self.fixtures[k]


class ScriptedLLM(CallCounter):
    """Cycles through canned replies; optionally routes by prompt substring."""

    tag = "scripted-llm"

    def __init__(self, replies: list[str] | None = None,
                 by_substring: dict[str, list[str]] | None = None):
        super().__init__()
        self.replies = list(replies or [])
        self.by_substring = {k: list(v) for k, v in (by_substring or {}).items()}
        self.prompts: list[str] = []

    def complete(self, system: str, user: str, max_tokens: int = 1024,
                 temperature: float = 0.0) -> str:
        self.calls += 1
        self.prompts.append(user)
        for needle, queue in self.by_substring.items():
            if needle in user:
                return queue.pop(0) if len(queue) > 1 else queue[0]
        if not self.replies:
            raise BackendUnavailable("scripted client exhausted")
        return self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]


# --- registry -----------------------------------------------------------------------

_REGISTRY = {
    "asr": {"mock": MockASR},
    "shot": {"mock": MockShotDetector, "frame-diff": FrameDiffDetector},
    "detector": {"mock": MockDetector},
    "ocr": {"mock": MockOCR},
    "llm": {"mock": MockLLM, "replay": ReplayLLM},
    "judge": {"mock": MockLLM, "replay": ReplayLLM},
}


def make_backend(role: str, name: str, **params):
    try:
        cls = _REGISTRY[role][name]
    except KeyError:
        raise BackendUnavailable(f"no {role} adapter named {name!r}") from None
    return cls(**params)


def register_backend(role: str, name: str, cls) -> None:
    _REGISTRY.setdefault(role, {})[name] = cls
