/** Golden equivalence against the core pipeline.
 *
 * replay_cases.json is generated by scripts/generate_review_fixtures.py:
 * 50 random sessions whose expected segments and export bytes come from the
 * Python replay/writer. The browser replay and serializer must match both
 * exactly, so what the reviewer previews is what `segment video` produces
 * from the exported file.
 */

import { describe, expect, it } from "vitest";

import { applyReview } from "../src/replay.js";
import { parseDecisions, serializeDecisions } from "../src/exportFormat.js";
import { decisionSchema, segmentSchema } from "../src/types.js";
import rawCases from "./fixtures/replay_cases.json";

interface Case {
  video_id: string;
  duration_s: number;
  candidates: { time_s: number; confidence: number }[];
  transcript: { start_s: number; end_s: number; text: string }[];
  decisions: unknown[];
  expected_segments: unknown[];
  export_text: string;
}

const cases = rawCases as Case[];

describe("golden replay equivalence (50 random decision logs)", () => {
  it("loads all 50 fixture cases", () => {
    expect(cases).toHaveLength(50);
  });

  for (const c of cases) {
    it(`preview equals core replay for ${c.video_id}`, () => {
      const decisions = c.decisions.map((d) => decisionSchema.parse(d));
      const expected = c.expected_segments.map((s) => segmentSchema.parse(s));
      const got = applyReview(
        c.candidates,
        decisions,
        c.transcript,
        c.video_id,
        c.duration_s,
      );
      expect(got).toEqual(expected);
    });
  }
});

describe("export format parity with the core writer", () => {
  for (const c of cases) {
    it(`serializes ${c.video_id} byte-identically`, () => {
      const decisions = c.decisions.map((d) => decisionSchema.parse(d));
      expect(serializeDecisions(decisions)).toBe(c.export_text);
    });
  }

  it("round-trips export -> import -> export byte-identically", () => {
    for (const c of cases) {
      const once = c.export_text;
      const twice = serializeDecisions(parseDecisions(once));
      expect(twice).toBe(once);
    }
  });

  it("exported file replays to the segments shown in the UI", () => {
    for (const c of cases) {
      const fromFile = parseDecisions(c.export_text);
      const expected = c.expected_segments.map((s) => segmentSchema.parse(s));
      const got = applyReview(
        c.candidates,
        fromFile,
        c.transcript,
        c.video_id,
        c.duration_s,
      );
      expect(got).toEqual(expected);
    }
  });

  it("serializes an empty log the way the core writer does", () => {
    expect(serializeDecisions([])).toBe('{\n  "decisions": []\n}\n');
  });
});
