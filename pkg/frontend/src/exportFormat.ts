/** Serialization of decision logs in the exact byte format the batch
 * pipeline's reviews/<video_id>.json reader consumes.
 *
 * The server writes this file with a 2-space-indented JSON dump where float
 * values keep a trailing ".0" even when integral (e.g. `"new_time_s": 16.0`).
 * JSON.stringify would drop that, so the payload is rendered by hand:
 * `targets` entries are integers, `new_time_s` is a float.
 */

import { type Decision, decisionSchema } from "./types.js";

function floatRepr(v: number): string {
  return Number.isInteger(v) ? v.toFixed(1) : String(v);
}

function decisionLines(d: Decision, pad: string): string {
  const targets =
    d.targets.length === 0
      ? "[]"
      : `[\n${d.targets.map((t) => `${pad}    ${t}`).join(",\n")}\n${pad}  ]`;
  const newTime = d.new_time_s === null ? "null" : floatRepr(d.new_time_s);
  return [
    `${pad}{`,
    `${pad}  "action": ${JSON.stringify(d.action)},`,
    `${pad}  "targets": ${targets},`,
    `${pad}  "new_time_s": ${newTime},`,
    `${pad}  "reviewer_id": ${JSON.stringify(d.reviewer_id)},`,
    `${pad}  "ts": ${JSON.stringify(d.ts)}`,
    `${pad}}`,
  ].join("\n");
}

export function serializeDecisions(decisions: readonly Decision[]): string {
  if (decisions.length === 0) {
    return '{\n  "decisions": []\n}\n';
  }
  const body = decisions.map((d) => decisionLines(d, "    ")).join(",\n");
  return `{\n  "decisions": [\n${body}\n  ]\n}\n`;
}

export function parseDecisions(text: string): Decision[] {
  const raw: unknown = JSON.parse(text);
  if (typeof raw !== "object" || raw === null || !("decisions" in raw)) {
    throw new Error("not a decision file: missing decisions key");
  }
  const items = (raw as { decisions: unknown }).decisions;
  if (!Array.isArray(items)) {
    throw new Error("not a decision file: decisions is not a list");
  }
  return items.map((d) => decisionSchema.parse(d));
}
