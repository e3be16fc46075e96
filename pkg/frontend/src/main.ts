/** Review timeline UI.
 *
 * The preview is recomputed locally with the same replay the pipeline uses,
 * then cross-checked against the server's preview whenever a decision is
 * committed — any divergence is surfaced instead of silently trusted.
 */

import { ReviewClient, ApiError } from "./api.js";
import { applyReview } from "./replay.js";
import type { Decision, DecisionAction, Segment, Session } from "./types.js";

const client = new ReviewClient("");

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function fmt(t: number): string {
  return t.toFixed(2) + "s";
}

class ReviewApp {
  private session: Session | null = null;
  private root: HTMLElement;

  constructor(root: HTMLElement) {
    this.root = root;
  }

  async start(): Promise<void> {
    const videos = await client.listVideos();
    this.root.replaceChildren();
    const picker = el("select", { id: "video-picker" });
    picker.append(el("option", { value: "" }, "choose a video…"));
    for (const v of videos) picker.append(el("option", { value: v }, v));
    picker.addEventListener("change", () => {
      if (picker.value) void this.load(picker.value);
    });
    this.root.append(el("h1", {}, "Boundary review"), picker,
      el("div", { id: "session" }));
    if (videos.length === 1 && videos[0] !== undefined) {
      picker.value = videos[0];
      await this.load(videos[0]);
    }
  }

  private async load(videoId: string): Promise<void> {
    this.session = await client.getSession(videoId);
    this.render();
  }

  private localPreview(): Segment[] {
    const s = this.session!;
    return applyReview(s.candidates, s.decisions, s.transcript, s.video_id,
      s.duration_s);
  }

  private render(): void {
    const s = this.session;
    const host = this.root.querySelector("#session");
    if (!s || !host) return;
    host.replaceChildren();

    // timeline with boundary markers
    const timeline = el("div", { class: "timeline" });
    for (const c of s.candidates) {
      const pct = (c.time_s / s.duration_s) * 100;
      const marker = el("span", {
        class: "marker",
        style: `left:${pct}%`,
        title: `#${c.index} @ ${fmt(c.time_s)} (conf ${c.confidence})`,
      }, String(c.index));
      timeline.append(marker);
    }
    host.append(el("h2", {}, `${s.video_id} — ${fmt(s.duration_s)}`), timeline);

    // preview segments (locally replayed)
    const table = el("table", { class: "segments" });
    table.append(el("caption", {},
      `preview segments${s.dirty ? " (unexported changes)" : ""}`));
    const head = el("tr");
    for (const h of ["start", "end", "status", "narration"]) {
      head.append(el("th", {}, h));
    }
    table.append(head);
    for (const seg of this.localPreview()) {
      const row = el("tr");
      row.append(el("td", {}, fmt(seg.start_s)), el("td", {}, fmt(seg.end_s)),
        el("td", {}, seg.review_status), el("td", {}, seg.subtitle_text));
      table.append(row);
    }
    host.append(table);

    // decision form
    const form = el("form", { class: "decision-form" });
    const action = el("select", { name: "action" });
    for (const a of ["accept", "reject", "merge", "split", "adjust"]) {
      action.append(el("option", { value: a }, a));
    }
    const targets = el("input", {
      name: "targets", placeholder: "targets e.g. 0,2",
    });
    const newTime = el("input", {
      name: "new_time_s", placeholder: "new time (s)", type: "number",
      step: "0.01",
    });
    const submit = el("button", { type: "submit" }, "apply");
    const exportBtn = el("button", { type: "button" }, "export");
    const status = el("p", { class: "status" });
    form.append(action, targets, newTime, submit, exportBtn, status);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.commit(
        action.value as DecisionAction,
        targets.value.split(",").map((t) => t.trim()).filter(Boolean)
          .map(Number),
        newTime.value === "" ? null : Number(newTime.value),
        status,
      );
    });
    exportBtn.addEventListener("click", () => void this.export(status));
    host.append(form);

    // transcript
    const list = el("ol", { class: "transcript" });
    for (const t of s.transcript) {
      list.append(el("li", {}, `[${fmt(t.start_s)}–${fmt(t.end_s)}] ${t.text}`));
    }
    host.append(el("h3", {}, "transcript"), list);
  }

  private async commit(
    action: DecisionAction,
    targets: number[],
    newTimeS: number | null,
    status: HTMLElement,
  ): Promise<void> {
    const s = this.session;
    if (!s) return;
    const decision: Decision = {
      action,
      targets,
      new_time_s: newTimeS,
      reviewer_id: "browser",
      ts: new Date().toISOString(),
    };
    try {
      const result = await client.postDecision(s.video_id, decision);
      this.session = { ...s, decisions: result.decisions, dirty: true };
      const local = this.localPreview();
      const same =
        JSON.stringify(local) === JSON.stringify(result.preview_segments);
      status.textContent = same
        ? `applied ${action}`
        : "warning: local preview diverges from server preview";
      this.render();
    } catch (err) {
      status.textContent =
        err instanceof ApiError ? err.message : String(err);
    }
  }

  private async export(status: HTMLElement): Promise<void> {
    const s = this.session;
    if (!s) return;
    try {
      const res = await client.exportDecisions(s.video_id);
      this.session = { ...s, dirty: false };
      status.textContent =
        `exported ${res.decision_count} decisions to ${res.path}`;
      this.render();
    } catch (err) {
      status.textContent = err instanceof ApiError ? err.message : String(err);
    }
  }
}

const mount = document.getElementById("app");
if (mount) {
  void new ReviewApp(mount).start();
}
