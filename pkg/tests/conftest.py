import json
from pathlib import Path

import cv2
import numpy as np
import pytest

from videopath_forge.ingest import Transcript, TranscriptSegment

_BASE_WORDS = (
    "tumor cells nuclei stroma gland epithelium mitotic atypia chromatin "
    "nucleoli invasion margin necrosis papillary serous carcinoma benign "
    "malignant lesion biopsy section stain power magnification field view "
    "pattern architecture pleomorphism figure spindle clear basement membrane"
).split()
# expanded synthetic vocabulary: enough distinct tokens that unrelated
# transcript segments rarely collide
VOCAB = _BASE_WORDS + [f"{w}{suffix}" for w in _BASE_WORDS
                       for suffix in ("oid", "ish", "al", "ic", "ous", "iform")]


def make_transcript(rng, video_id="vid", n_segments=12, words_per_segment=6,
                    seg_dur=4.0):
    segs = []
    t = 0.0
    for _ in range(n_segments):
        words = [VOCAB[rng.integers(len(VOCAB))] for _ in range(words_per_segment)]
        segs.append(TranscriptSegment(t, t + seg_dur, " ".join(words)))
        t += seg_dur
    return Transcript(video_id=video_id, segments=segs)


def write_video(path: Path, duration_s=10.0, fps=30, size=(64, 48), cuts=()):
    """Synthetic video; hard color cuts at the given times (seconds)."""
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"),
                             fps, size)
    assert writer.isOpened()
    n = int(duration_s * fps)
    palette = [(40, 40, 40), (200, 120, 60), (60, 200, 120), (120, 60, 200)]
    shot = 0
    cut_frames = {int(t * fps) for t in cuts}
    for i in range(n):
        if i in cut_frames:
            shot += 1
        color = palette[shot % len(palette)]
        frame = np.full((size[1], size[0], 3), color, np.uint8)
        # small per-frame texture so frames are not byte-identical
        frame[0, i % size[0]] = (255, 255, 255)
        writer.write(frame)
    writer.release()
    return path


SRT_TEMPLATE = """1
00:00:00,000 --> 00:00:04,000
low power view shows glandular tissue

2
00:00:04,000 --> 00:00:08,000
the nuclei are enlarged and hyperchromatic with atypia

3
00:00:08,000 --> 00:00:10,000
final diagnosis is invasive carcinoma
"""


@pytest.fixture
def corpus(tmp_path):
    """Three-video synthetic corpus with subtitles and captions."""
    root = tmp_path / "corpus"
    (root / "videos").mkdir(parents=True)
    (root / "subs").mkdir()
    (root / "captions").mkdir()
    for i in range(3):
        name = f"case{i}"
        write_video(root / "videos" / f"{name}.avi", duration_s=10.0 + i,
                    cuts=(3.0 + 0.4 * i, 7.0 - 0.4 * i))
        (root / "subs" / f"{name}.srt").write_text(SRT_TEMPLATE)
        captions = {"captions": [
            {"id": f"{name}-c0", "text": "low power view of glandular tissue"},
            {"id": f"{name}-c1", "text": "enlarged hyperchromatic nuclei with atypia"},
        ]}
        (root / "captions" / f"{name}.json").write_text(json.dumps(captions))
    return root
