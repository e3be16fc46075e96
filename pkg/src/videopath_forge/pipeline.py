"""End-to-end orchestration over a corpus directory, with resumable
content-addressed steps.

Corpus layout (inputs):
    videos/<name>.<ext>        decodable video containers
    subs/<name>.srt|.vtt       uploaded subtitles (preferred over ASR)
    captions/<name>.json       {"captions": [{"id": str, "text": str}]}
    corpora/*.jsonl            external stage corpora, bound via config

Artifacts land under the artifact root (corpus root unless VPF_CACHE_DIR or
config says otherwise): transcripts/, boundaries/, reviews/, segments/,
refined/, instruct/, stages/, splits/, eval/, preds/.

Each step records a hash of its inputs in .vpf_state.json; reruns with
unchanged inputs skip the step entirely (zero backend calls).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import yaml

from . import evalharness, ingest, instructgen, refine, segmenter, stager
from .backends import make_backend
from .errors import ForgeError
from .toymodel import ToyModel, make_batch

log = logging.getLogger(__name__)

VIDEO_EXTS = (".avi", ".mp4", ".mkv", ".mov", ".webm")
SUB_EXTS = (".srt", ".vtt")


@dataclass
class PipelineConfig:
    corpus_root: Path
    artifact_root: Path
    seed: int = 0
    jobs: int = 1
    min_align_score: float = 0.5
    test_video_count: int = 1
    refine_frame_count: int = 4
    judge_protocol: str = "per-axis"
    backends: dict = field(default_factory=dict)
    corpora: list = field(default_factory=list)

    @classmethod
    def load(cls, path: str | Path | None = None, **overrides) -> "PipelineConfig":
        data = {}
        if path:
            data = yaml.safe_load(Path(path).read_text()) or {}
        data.update({k: v for k, v in overrides.items() if v is not None})
        corpus_root = Path(data.get("corpus_root", ".")).resolve()
        artifact_root = data.get("artifact_root") or os.environ.get("VPF_CACHE_DIR")
        artifact_root = Path(artifact_root).resolve() if artifact_root else corpus_root
        return cls(
            corpus_root=corpus_root,
            artifact_root=artifact_root,
            seed=int(data.get("seed", 0)),
            jobs=int(data.get("jobs", 1)),
            min_align_score=float(data.get("min_align_score", 0.5)),
            test_video_count=int(data.get("test_video_count", 1)),
            refine_frame_count=int(data.get("refine_frame_count", 4)),
            judge_protocol=data.get("judge_protocol", "per-axis"),
            backends=data.get("backends", {}),
            corpora=data.get("corpora", []),
        )

    def backend(self, role: str):
        spec = self.backends.get(role, {})
        return make_backend(role, spec.get("name", "mock"), **spec.get("params", {}))


class Pipeline:
    def __init__(self, config: PipelineConfig, backends: dict | None = None):
        self.cfg = config
        self.root = config.artifact_root
        self.root.mkdir(parents=True, exist_ok=True)
        self._state_path = self.root / ".vpf_state.json"
        self._state = (json.loads(self._state_path.read_text())
                       if self._state_path.exists() else {})
        self._backends = backends or {}

    # --- step machinery -------------------------------------------------------

    def backend(self, role: str):
        if role not in self._backends:
            self._backends[role] = self.cfg.backend(role)
        return self._backends[role]

    def _hash_inputs(self, paths: list[Path], params: dict) -> str:
        h = hashlib.sha256()
        for p in sorted(set(map(Path, paths))):
            h.update(str(p.name).encode())
            if p.is_file():
                h.update(p.read_bytes())
        h.update(json.dumps(params, sort_keys=True, default=str).encode())
        return h.hexdigest()

    def _fresh(self, step: str, inputs_hash: str, outputs: list[Path]) -> bool:
        return (self._state.get(step) == inputs_hash
                and all(p.exists() for p in outputs))

    def _record(self, step: str, inputs_hash: str) -> None:
        self._state[step] = inputs_hash
        self._state_path.write_text(json.dumps(self._state, indent=2, sort_keys=True))

    # --- input discovery --------------------------------------------------------

    def _videos(self) -> list[Path]:
        vdir = self.cfg.corpus_root / "videos"
        if not vdir.is_dir():
            return []
        return sorted(p for p in vdir.iterdir() if p.suffix.lower() in VIDEO_EXTS)

    def _subtitle_for(self, video: Path) -> Path | None:
        for ext in SUB_EXTS:
            p = self.cfg.corpus_root / "subs" / (video.stem + ext)
            if p.is_file():
                return p
        return None

    def _captions_for(self, video: Path) -> Path | None:
        p = self.cfg.corpus_root / "captions" / (video.stem + ".json")
        return p if p.is_file() else None

    def _index(self) -> dict:
        p = self.root / "videos.json"
        return json.loads(p.read_text()) if p.exists() else {}

    # --- steps ---------------------------------------------------------------------

    def ingest(self) -> dict:
        """Probe every video and produce its transcript (subtitles preferred,
        ASR fallback). Returns the video index."""
        videos = self._videos()
        inputs = list(videos) + [s for v in videos if (s := self._subtitle_for(v))]
        ih = self._hash_inputs(inputs, {"step": "ingest"})
        index_path = self.root / "videos.json"
        tdir = self.root / "transcripts"
        if self._fresh("ingest", ih, [index_path]):
            log.info("ingest up to date")
            return self._index()
        index = {}
        for video in videos:
            meta = ingest.probe_video(str(video))
            sub = self._subtitle_for(video)
            if sub:
                segs = ingest.parse_subtitles(sub.read_text(), sub.suffix[1:])
                transcript = ingest.Transcript(meta.video_id, segs, "subtitles")
            else:
                transcript = ingest.transcribe(meta, self.backend("asr"))
            ingest.write_transcript(transcript, tdir)
            index[meta.video_id] = {
                "source_uri": str(video),
                "stem": video.stem,
                "duration_s": meta.duration_s,
                "fps": meta.fps,
                "width": meta.width,
                "height": meta.height,
                "backend_tag": transcript.backend_tag,
            }
        index_path.write_text(json.dumps(index, indent=2, sort_keys=True))
        self._record("ingest", ih)
        return index

    def _transcript(self, video_id: str) -> ingest.Transcript:
        return ingest.read_transcript(self.root / "transcripts" / f"{video_id}.jsonl",
                                      video_id)

    def segment_clip(self) -> Path:
        """Caption-to-subtitle alignment over every video with captions."""
        index = self.ingest()
        cap_files = [self._captions_for(Path(info["source_uri"]))
                     for info in index.values()]
        inputs = [self.root / "videos.json"] + [p for p in cap_files if p]
        inputs += [self.root / "transcripts" / f"{vid}.jsonl" for vid in index]
        ih = self._hash_inputs(inputs, {"min_score": self.cfg.min_align_score})
        out = self.root / "segments" / "clip.jsonl"
        if self._fresh("segment-clip", ih, [out]):
            log.info("segment clip up to date")
            return out
        params = segmenter.AlignParams(min_score=self.cfg.min_align_score)
        segments = []
        for vid, info in sorted(index.items()):
            cap_path = self._captions_for(Path(info["source_uri"]))
            if not cap_path:
                continue
            captions = [segmenter.Caption(c["id"], c["text"])
                        for c in json.loads(cap_path.read_text())["captions"]]
            segments += segmenter.build_clip_segments(
                captions, self._transcript(vid), params)
        segmenter.write_segment_manifest(segments, out)
        self._record("segment-clip", ih)
        return out

    def segment_video(self) -> Path:
        """Shot-boundary proposal plus (when present) review-decision replay."""
        index = self.ingest()
        rdir = self.root / "reviews"
        review_files = sorted(rdir.glob("*.json")) if rdir.is_dir() else []
        inputs = [self.root / "videos.json"] + review_files
        inputs += [self.root / "transcripts" / f"{vid}.jsonl" for vid in index]
        ih = self._hash_inputs(inputs, {"step": "segment-video"})
        out = self.root / "segments" / "video.jsonl"
        if self._fresh("segment-video", ih, [out]):
            log.info("segment video up to date")
            return out
        segments = []
        for vid, info in sorted(index.items()):
            meta = ingest.VideoMeta(vid, info["duration_s"], info["fps"],
                                    info["width"], info["height"],
                                    info["source_uri"])
            candidates = segmenter.propose_boundaries(meta, self.backend("shot"))
            segmenter.write_boundaries(vid, candidates, self.root / "boundaries")
            review_path = rdir / f"{vid}.json"
            decisions = (segmenter.read_decisions(review_path)
                         if review_path.exists() else [])
            segments += segmenter.apply_review(
                candidates, decisions, self._transcript(vid), vid,
                duration_s=info["duration_s"])
        segmenter.write_segment_manifest(segments, out)
        self._record("segment-video", ih)
        return out

    def refine_videos(self, split: str = "train") -> Path:
        """Visual refinement of sampled frames for every video segment.
        Text removal runs only for the test split."""
        seg_path = self.segment_video()
        index = self._index()
        ih = self._hash_inputs([seg_path], {
            "split": split, "frames": self.cfg.refine_frame_count})
        report_path = self.root / "refined" / "report.jsonl"
        done_marker = self.root / "refined" / f".{split}.done"
        if self._fresh(f"refine-{split}", ih, [done_marker]):
            log.info("refine %s up to date", split)
            return report_path
        report_path.parent.mkdir(parents=True, exist_ok=True)
        if report_path.exists():
            report_path.unlink()
        config = refine.RefineConfig(text_removal=(split == "test"))
        detector = self.backend("detector")
        ocr = self.backend("ocr") if config.text_removal else None
        for seg_idx, line in enumerate(seg_path.read_text().splitlines()):
            seg = json.loads(line)
            info = index[seg["video_id"]]
            frames = _decode_frames(info["source_uri"], seg["start_s"],
                                    seg["end_s"], self.cfg.refine_frame_count)
            refined, report = refine.refine_segment(frames, detector, ocr, config)
            out_dir = self.root / "refined" / seg["video_id"] / str(seg_idx)
            out_dir.mkdir(parents=True, exist_ok=True)
            for i, frame in enumerate(refined):
                cv2.imwrite(str(out_dir / f"{i}.png"), frame)
            refine.append_report(report, report_path, seg["video_id"], seg_idx)
        done_marker.write_text("ok\n")
        self._record(f"refine-{split}", ih)
        return report_path

    def gen_instruct_clip(self) -> Path:
        seg_path = self.segment_clip()
        ih = self._hash_inputs([seg_path], {"step": "gen-clip"})
        out = self.root / "instruct" / "clip.jsonl"
        if self._fresh("gen-clip", ih, [out]):
            log.info("gen-instruct clip up to date")
            return out
        llm, judge = self.backend("llm"), self.backend("judge")
        records = []
        for line in seg_path.read_text().splitlines():
            d = json.loads(line)
            clip = segmenter.ClipSegment(**d)
            result = instructgen.gen_clip_record(
                clip, llm, judge, llm_tag=getattr(llm, "tag", "llm"))
            if isinstance(result, instructgen.InstructionRecord):
                records.append(result)
        instructgen.write_records(records, out)
        self._record("gen-clip", ih)
        return out

    def gen_instruct_video(self) -> Path:
        seg_path = self.segment_video()
        ih = self._hash_inputs([seg_path], {"step": "gen-video"})
        out = self.root / "instruct" / "video.jsonl"
        if self._fresh("gen-video", ih, [out]):
            log.info("gen-instruct video up to date")
            return out
        llm = self.backend("llm")
        records = []
        for line in seg_path.read_text().splitlines():
            d = json.loads(line)
            seg = segmenter.DiagnosticSegment(**d)
            if not seg.subtitle_text.strip():
                continue
            records.append(instructgen.gen_cot_record(
                seg, llm, llm_tag=getattr(llm, "tag", "llm")))
        instructgen.write_records(records, out)
        self._record("gen-video", ih)
        return out

    def split(self) -> stager.Split:
        rec_path = self.gen_instruct_video()
        records = instructgen.read_records(rec_path)
        n_videos = len({r.video_id for r in records})
        test_count = min(self.cfg.test_video_count, max(1, n_videos - 1))
        result = stager.split_by_video(records, test_count, seed=self.cfg.seed)
        stager.write_split(result, self.root / "splits" / "videopath.json")
        return result

    def _configured_sources(self, kinds: set[str]) -> list[stager.CorpusSource]:
        out = []
        for c in self.cfg.corpora:
            if c["kind"] in kinds:
                path = Path(c["path"])
                if not path.is_absolute():
                    path = self.cfg.corpus_root / path
                out.append(stager.CorpusSource(
                    c["tag"], c["kind"], str(path),
                    int(c.get("sample_count", _safe_count(path)))))
        return out

    def assemble(self, stage_id: int, fraction: float = 1.0) -> Path:
        """Build and write the stage manifest; stages 2 and 3 pull in the
        generated clip/video instruction corpora automatically."""
        kinds = stager.STAGE_COMPOSITION[stage_id] if stage_id in stager.STAGE_IDS \
            else set()
        sources = self._configured_sources(kinds)
        have = {s.kind for s in sources}
        if stage_id == 2 and "clip_instruct" not in have:
            clip = self.gen_instruct_clip()
            sources.append(stager.CorpusSource(
                "clippath-instruct", "clip_instruct", str(clip), _safe_count(clip)))
        if stage_id == 3 and "video_instruct" not in have:
            rec_path = self.gen_instruct_video()
            split = self.split()
            records = [r for r in instructgen.read_records(rec_path)
                       if r.record_id in set(split.train)]
            if fraction < 1.0:
                records = stager.subsample_fraction(records, fraction, self.cfg.seed)
            data = self.root / "stages" / "stage3.data.jsonl"
            instructgen.write_records(records, data)
            sources.append(stager.CorpusSource(
                "videopath-instruct-train", "video_instruct", str(data), len(records)))
        manifest = stager.build_stage_manifest(stage_id, sources)
        return stager.write_manifest(manifest, self.root / "stages")

    def plan(self, stage_id: int, batch_size: int | None = None,
             lora_rank: int | None = None) -> Path:
        plan = stager.compile_stage_plan(stage_id, batch_size, lora_rank)
        return stager.write_plan(plan, self.root / "stages")

    def toy_verify(self, stage_id: int) -> stager.StageDiffReport:
        plan = stager.compile_stage_plan(stage_id)
        model = ToyModel(seed=self.cfg.seed)
        return stager.run_toy_stage(plan, model, make_batch(self.cfg.seed, model))

    def eval_model(self, model_name: str) -> Path:
        """Judge preds/<model>.jsonl against the test-side CoT references."""
        rec_path = self.gen_instruct_video()
        split = self.split()
        preds_path = self.root / "preds" / f"{model_name}.jsonl"
        if not preds_path.is_file():
            raise ForgeError(f"no predictions at {preds_path}")
        ih = self._hash_inputs([rec_path, preds_path], {
            "protocol": self.cfg.judge_protocol, "seed": self.cfg.seed})
        out = self.root / "eval" / f"{model_name}.report.json"
        if self._fresh(f"eval-{model_name}", ih, [out]):
            log.info("eval %s up to date", model_name)
        else:
            preds = evalharness.read_predictions(preds_path)
            test_ids = set(split.test)
            judge = self.backend("judge")
            cache = evalharness.ReplyCache(self.root / "eval" / ".cache")
            scores = []
            for r in instructgen.read_records(rec_path):
                if r.record_id not in test_ids or r.record_id not in preds:
                    continue
                item = evalharness.EvalItem(
                    item_id=r.record_id,
                    question=r.conversations[0].text,
                    reference_answer=r.conversations[-1].text,
                    predicted_answer=preds[r.record_id],
                )
                scores.append(evalharness.judge_sample(
                    item, judge, protocol=self.cfg.judge_protocol, cache=cache,
                    judge_tag=getattr(judge, "tag", "judge")))
            report = evalharness.aggregate(scores)
            evalharness.write_report(report, out)
            self._record(f"eval-{model_name}", ih)
        self._leaderboard()
        return out

    def _leaderboard(self) -> Path:
        reports = {}
        for p in sorted((self.root / "eval").glob("*.report.json")):
            d = json.loads(p.read_text())
            scores = [evalharness.JudgeScore(**s) for s in d["per_item"]]
            reports[p.name.replace(".report.json", "")] = evalharness.aggregate(scores)
        out = self.root / "eval" / "leaderboard.txt"
        if reports:
            out.write_text(evalharness.render_leaderboard(reports))
        return out

    def run_all(self) -> None:
        """Full fixture-scale pipeline, review-ui and eval aside."""
        self.ingest()
        self.segment_clip()
        self.segment_video()
        self.gen_instruct_clip()
        self.gen_instruct_video()
        self.split()


def _safe_count(path: Path) -> int:
    if not path.is_file():
        return 0
    return sum(1 for line in path.read_text().splitlines() if line.strip())


def _decode_frames(source_uri: str, start_s: float, end_s: float,
                   count: int) -> list[np.ndarray]:
    plan = stager.sample_frames(start_s, end_s, count=count)
    cap = cv2.VideoCapture(source_uri)
    frames = []
    try:
        for t in plan.timestamps:
            cap.set(cv2.CAP_PROP_POS_MSEC, t * 1000.0)
            ok, frame = cap.read()
            if ok:
                frames.append(frame)
    finally:
        cap.release()
    return frames
