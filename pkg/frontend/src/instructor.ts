/**
 * Instructor dashboard: posterior bars per skill (point or interval with a
 * midpoint marker), the per-candidate score table sorted by gain, and the
 * pick/answer timeline. Everything is rendered verbatim from /trace.
 */

import { ApiClient, CandidateScore, TracePayload } from "./api.js";

export class InstructorView {
  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {}

  async show(sessionId: string, token: string): Promise<void> {
    const payload = await this.api.trace(sessionId, token);
    this.render(payload);
  }

  private render(payload: TracePayload): void {
    this.root.innerHTML = "";

    const heading = document.createElement("h2");
    heading.textContent = `Session ${payload.session.session_id} (${payload.session.status})`;
    this.root.appendChild(heading);

    this.root.appendChild(this.posteriorBars(payload.posterior));

    const picks = payload.trace.filter((r) => r.type === "pick");
    if (picks.length) {
      const latest = picks[picks.length - 1] as { scores: CandidateScore[] };
      this.root.appendChild(this.scoreTable(latest.scores));
    }
    this.root.appendChild(this.timeline(payload.trace));
  }

  private posteriorBars(
    posterior: Record<string, Record<string, number[]>>,
  ): HTMLElement {
    const wrap = document.createElement("div");
    wrap.className = "posteriors";
    for (const [skill, snapshot] of Object.entries(posterior)) {
      const row = document.createElement("div");
      row.className = "posterior-row";
      row.dataset.skill = skill;
      const label = document.createElement("span");
      label.textContent = skill;
      row.appendChild(label);

      const bar = document.createElement("div");
      bar.className = "bar";
      if ("p" in snapshot) {
        const p = snapshot.p[snapshot.p.length - 1];
        const fill = document.createElement("div");
        fill.className = "bar-fill";
        fill.style.width = `${(p * 100).toFixed(1)}%`;
        fill.dataset.value = p.toFixed(3);
        bar.appendChild(fill);
      } else {
        const lower = snapshot.lower[snapshot.lower.length - 1];
        const upper = snapshot.upper[snapshot.upper.length - 1];
        const band = document.createElement("div");
        band.className = "bar-interval";
        band.style.marginLeft = `${(lower * 100).toFixed(1)}%`;
        band.style.width = `${((upper - lower) * 100).toFixed(1)}%`;
        band.dataset.lower = lower.toFixed(3);
        band.dataset.upper = upper.toFixed(3);
        const marker = document.createElement("div");
        marker.className = "bar-midpoint";
        marker.dataset.value = ((lower + upper) / 2).toFixed(3);
        band.appendChild(marker);
        bar.appendChild(band);
      }
      row.appendChild(bar);
      wrap.appendChild(row);
    }
    return wrap;
  }

  private scoreTable(scores: CandidateScore[]): HTMLElement {
    const table = document.createElement("table");
    table.className = "score-table";
    const thead = document.createElement("thead");
    const head = document.createElement("tr");
    for (const column of ["question", "gain", "conditional", "bounds"]) {
      const cell = document.createElement("th");
      cell.textContent = column;
      head.appendChild(cell);
    }
    thead.appendChild(head);
    table.appendChild(thead);
    const body = document.createElement("tbody");
    const sorted = [...scores].sort((a, b) => b.gain - a.gain);
    for (const score of sorted) {
      const row = document.createElement("tr");
      const cells = [
        score.question,
        score.gain.toFixed(4),
        score.conditional.toFixed(4),
        score.bounds
          ? `[${score.bounds[0].toFixed(3)}, ${score.bounds[1].toFixed(3)}]`
          : "",
      ];
      for (const text of cells) {
        const cell = document.createElement("td");
        cell.textContent = text;
        row.appendChild(cell);
      }
      body.appendChild(row);
    }
    table.appendChild(body);
    return table;
  }

  private timeline(records: Record<string, unknown>[]): HTMLElement {
    const list = document.createElement("ol");
    list.className = "timeline";
    for (const record of records) {
      const item = document.createElement("li");
      item.className = `event event-${record.type}`;
      if (record.type === "pick") {
        item.textContent = `picked ${record.question} (${record.policy})`;
      } else {
        item.textContent = `answered ${record.question} = ${record.answer}`;
      }
      list.appendChild(item);
    }
    return list;
  }
}
