/** Client-side replay of review decisions over candidate boundaries.
 *
 * This mirrors the server's replay exactly so the timeline preview shown in
 * the browser is the same segmentation the batch `segment video` step
 * produces from the exported decision file: boundaries carry stable ids
 * (candidate order, then insertion order for splits), decisions are replayed
 * in timestamp order, and the surviving boundaries, sorted, delimit the
 * segments. Subtitle text is the midpoint-membership transcript slice.
 */

import type { Decision, Segment, TranscriptSegment } from "./types.js";

export interface Candidate {
  time_s: number;
  confidence: number;
}

export class ReplayError extends Error {}

/** Space-joined text of segments whose midpoint lies within [start, end]. */
export function sliceTranscript(
  segments: readonly TranscriptSegment[],
  startS: number,
  endS: number,
): string {
  if (startS >= endS) throw new ReplayError("start_s must precede end_s");
  return segments
    .filter((s) => {
      const mid = (s.start_s + s.end_s) / 2;
      return startS <= mid && mid <= endS;
    })
    .map((s) => s.text)
    .join(" ");
}

export function applyReview(
  candidates: readonly Candidate[],
  decisions: readonly Decision[],
  transcript: readonly TranscriptSegment[],
  videoId: string,
  durationS: number,
): Segment[] {
  const boundaries = new Map<number, number>();
  candidates.forEach((c, i) => boundaries.set(i, c.time_s));
  let nextId = candidates.length;
  const adjusted = new Set<number>();

  const ordered = [...decisions].sort((a, b) =>
    a.ts < b.ts ? -1 : a.ts > b.ts ? 1 : 0,
  );
  for (const d of ordered) {
    for (const t of d.targets) {
      if (!boundaries.has(t)) throw new ReplayError(`unknown boundary ${t}`);
    }
    if (d.action === "accept") continue;
    if (d.action === "reject" || d.action === "merge") {
      if (d.action === "merge" && d.targets.length === 0) {
        throw new ReplayError("merge requires targets");
      }
      for (const t of d.targets) boundaries.delete(t);
    } else if (d.action === "split") {
      if (d.new_time_s === null || d.new_time_s < 0 || d.new_time_s > durationS) {
        throw new ReplayError(`split time ${d.new_time_s} outside video`);
      }
      boundaries.set(nextId, d.new_time_s);
      nextId += 1;
    } else if (d.action === "adjust") {
      if (d.targets.length !== 1) {
        throw new ReplayError("adjust takes exactly one target");
      }
      const t = d.targets[0]!;
      if (adjusted.has(t)) {
        throw new ReplayError(`boundary ${t} adjusted twice`);
      }
      if (d.new_time_s === null || d.new_time_s < 0 || d.new_time_s > durationS) {
        throw new ReplayError(`adjust time ${d.new_time_s} outside video`);
      }
      boundaries.set(t, d.new_time_s);
      adjusted.add(t);
    }
  }

  const times = [...boundaries.values()].sort((a, b) => a - b);
  const out: Segment[] = [];
  for (let k = 0; k + 1 < times.length; k++) {
    const a = times[k]!;
    const b = times[k + 1]!;
    if (b - a <= 1e-9) continue;
    out.push({
      video_id: videoId,
      start_s: a,
      end_s: b,
      subtitle_text: transcript.length ? sliceTranscript(transcript, a, b) : "",
      review_status: decisions.length ? "reviewed" : "auto",
    });
  }
  return out;
}
