/** Wire types for the review service, validated at the boundary with zod. */

import { z } from "zod";

export const decisionActionSchema = z.enum([
  "accept",
  "reject",
  "merge",
  "split",
  "adjust",
]);

export const decisionSchema = z.object({
  action: decisionActionSchema,
  targets: z.array(z.number().int()),
  new_time_s: z.number().nullable(),
  reviewer_id: z.string(),
  ts: z.string(),
});

export const boundarySchema = z.object({
  index: z.number().int(),
  time_s: z.number(),
  confidence: z.number(),
});

export const transcriptSegmentSchema = z.object({
  start_s: z.number(),
  end_s: z.number(),
  text: z.string(),
});

export const segmentSchema = z.object({
  video_id: z.string(),
  start_s: z.number(),
  end_s: z.number(),
  subtitle_text: z.string(),
  review_status: z.string(),
});

export const sessionSchema = z.object({
  video_id: z.string(),
  duration_s: z.number(),
  candidates: z.array(boundarySchema),
  transcript: z.array(transcriptSegmentSchema),
  decisions: z.array(decisionSchema),
  preview_segments: z.array(segmentSchema),
  dirty: z.boolean(),
});

export const decisionResultSchema = z.object({
  ok: z.boolean(),
  preview_segments: z.array(segmentSchema),
  decisions: z.array(decisionSchema),
});

export const exportResultSchema = z.object({
  path: z.string(),
  decision_count: z.number().int(),
});

export const videoListSchema = z.object({ videos: z.array(z.string()) });

export type DecisionAction = z.infer<typeof decisionActionSchema>;
export type Decision = z.infer<typeof decisionSchema>;
export type Boundary = z.infer<typeof boundarySchema>;
export type TranscriptSegment = z.infer<typeof transcriptSegmentSchema>;
export type Segment = z.infer<typeof segmentSchema>;
export type Session = z.infer<typeof sessionSchema>;
export type DecisionResult = z.infer<typeof decisionResultSchema>;
