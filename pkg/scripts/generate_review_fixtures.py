"""Regenerate the review-ui golden fixtures.

Emits frontend/tests/fixtures/replay_cases.json: 50 random review sessions
(candidate boundaries, transcript, a legal decision log) together with the
segments the core replay produces and the exact bytes the core decision
writer emits. The TypeScript tests replay the same logs and must match both.

Usage: python3 scripts/generate_review_fixtures.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from videopath_forge.ingest import Transcript, TranscriptSegment
from videopath_forge.segmenter import (
    CandidateBoundary,
    ReviewDecision,
    apply_review,
    decision_to_dict,
    write_decisions,
)

WORDS = ("tumor stroma gland nuclei mitosis necrosis margin lesion biopsy "
         "carcinoma benign atypia invasive cohesive papillary mucinous").split()


def random_case(rng, idx):
    video_id = f"fixture{idx:02d}"
    duration = round(float(rng.uniform(20, 60)), 2)
    n_seg = int(rng.integers(4, 10))
    seg_dur = duration / n_seg
    transcript = Transcript(video_id, [
        TranscriptSegment(round(k * seg_dur, 3), round((k + 1) * seg_dur, 3),
                          " ".join(WORDS[int(rng.integers(len(WORDS)))]
                                   for _ in range(5)))
        for k in range(n_seg)
    ])
    n_bounds = int(rng.integers(2, 7))
    times = sorted(round(float(t), 2)
                   for t in rng.uniform(0.5, duration - 0.5, n_bounds))
    candidates = [CandidateBoundary(t, round(float(rng.uniform(0.5, 1.0)), 3))
                  for t in times]

    decisions = []
    alive = set(range(n_bounds))
    moved = set()
    for k in range(int(rng.integers(0, 6))):
        action = ("accept", "reject", "merge", "split", "adjust")[int(rng.integers(5))]
        ts = f"2024-01-01T00:00:{k:02d}Z"
        if action in ("reject", "merge", "adjust"):
            pool = sorted(alive - moved) if action == "adjust" else sorted(alive)
            if not pool:
                continue
            t = int(pool[int(rng.integers(len(pool)))])
            if action == "adjust":
                decisions.append(ReviewDecision(
                    "adjust", (t,), round(float(rng.uniform(0, duration)), 2),
                    "fixture-bot", ts))
                moved.add(t)
            else:
                decisions.append(ReviewDecision(action, (t,),
                                                reviewer_id="fixture-bot", ts=ts))
                alive.discard(t)
        elif action == "split":
            decisions.append(ReviewDecision(
                "split", (), round(float(rng.uniform(0, duration)), 2),
                "fixture-bot", ts))
        else:
            targets = tuple(sorted(alive))[:2]
            decisions.append(ReviewDecision("accept", targets,
                                            reviewer_id="fixture-bot", ts=ts))

    segments = apply_review(candidates, decisions, transcript, video_id,
                            duration_s=duration)
    with tempfile.TemporaryDirectory() as td:
        export_bytes = write_decisions(video_id, decisions, td).read_text()

    return {
        "video_id": video_id,
        "duration_s": duration,
        "candidates": [{"time_s": c.time_s, "confidence": c.confidence}
                       for c in candidates],
        "transcript": [{"start_s": s.start_s, "end_s": s.end_s, "text": s.text}
                       for s in transcript.segments],
        "decisions": [decision_to_dict(d) for d in decisions],
        "expected_segments": [
            {"video_id": s.video_id, "start_s": s.start_s, "end_s": s.end_s,
             "subtitle_text": s.subtitle_text, "review_status": s.review_status}
            for s in segments],
        "export_text": export_bytes,
    }


def main():
    rng = np.random.default_rng(2025)
    cases = [random_case(rng, i) for i in range(50)]
    out = Path(__file__).resolve().parents[1] / "frontend" / "tests" / \
        "fixtures" / "replay_cases.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(cases, indent=1) + "\n")
    print(f"wrote {len(cases)} cases to {out}")


if __name__ == "__main__":
    main()
