// @vitest-environment happy-dom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { InstructorView } from "../src/instructor.js";
import { TakerView } from "../src/taker.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/** Minimal scripted service: two questions, grade 0.818 after both. */
function scriptedFetch() {
  const state = { answered: 0 };
  const questions = [
    { id: "Q1", text: "10 x 5?", options: ["0", "1"] },
    { id: "Q2", text: "13 x 14?", options: ["0", "1"] },
  ];
  const fetchMock = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
    const path = String(url);
    if (path.endsWith("/sessions") && init?.method === "POST") {
      return jsonResponse({ session_id: "s1", model_id: "fig1", status: "active" }, 201);
    }
    if (path.endsWith("/next")) {
      if (state.answered >= 2) {
        return jsonResponse({ finished: true });
      }
      return jsonResponse({
        finished: false,
        question: questions[state.answered],
        sequence: state.answered,
        progress: { answered: state.answered, remaining: 2 - state.answered },
      });
    }
    if (path.endsWith("/answers")) {
      state.answered += 1;
      return jsonResponse({
        accepted: true,
        duplicate: false,
        answered: state.answered,
        sequence: state.answered,
        finished: state.answered >= 2,
        evaluation_midpoint: state.answered >= 2 ? 0.818 : 0.75,
      });
    }
    if (path.endsWith("/evaluation")) {
      return jsonResponse({
        session: { session_id: "s1", model_id: "fig1", status: "finished" },
        grades: { S: { value: 0.818, midpoint: 0.818 } },
      });
    }
    throw new Error(`unexpected ${path}`);
  });
  return fetchMock;
}

describe("TakerView", () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = "<div id='root'></div>";
    root = document.getElementById("root")!;
  });

  it("disables submit until an option is selected", async () => {
    const api = new ApiClient("", scriptedFetch() as unknown as typeof fetch);
    const taker = new TakerView(root, api);
    await taker.start("fig1");
    const submit = root.querySelector<HTMLButtonElement>("button.submit")!;
    expect(submit.disabled).toBe(true);
    const radio = root.querySelector<HTMLInputElement>("input[type=radio]")!;
    radio.click();
    expect(submit.disabled).toBe(false);
  });

  it("shows exactly one active question at a time", async () => {
    const api = new ApiClient("", scriptedFetch() as unknown as typeof fetch);
    const taker = new TakerView(root, api);
    await taker.start("fig1");
    expect(root.querySelectorAll(".question-text").length).toBe(1);
    expect(root.querySelector(".question-text")!.textContent).toBe("10 x 5?");
  });

  it("walks the full flow and displays the final grade", async () => {
    const api = new ApiClient("", scriptedFetch() as unknown as typeof fetch);
    const taker = new TakerView(root, api);
    await taker.start("fig1");
    for (const expected of ["10 x 5?", "13 x 14?"]) {
      expect(root.querySelector(".question-text")!.textContent).toBe(expected);
      const correct = root.querySelectorAll<HTMLInputElement>("input[type=radio]")[1];
      correct.click();
      root.querySelector<HTMLButtonElement>("button.submit")!.click();
      await new Promise((resolve) => setTimeout(resolve, 0));
    }
    const grade = root.querySelector<HTMLElement>(".grade")!;
    expect(grade.textContent).toContain("0.818");
  });

  it("renders the expired screen on a dead session", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ detail: "gone" }, 404));
    const api = new ApiClient("", fetchMock as unknown as typeof fetch);
    const taker = new TakerView(root, api);
    await taker.resume("dead");
    expect(root.querySelector(".expired")).not.toBeNull();
  });
});

describe("InstructorView", () => {
  beforeEach(() => {
    document.body.innerHTML = "<div id='root'></div>";
  });

  it("sorts the score table by gain and draws interval bars", async () => {
    const payload = {
      session: { session_id: "s1", model_id: "fig1", status: "active" },
      answers: [],
      trace: [
        {
          type: "pick",
          question: "Q1",
          policy: "entropy_gain",
          scores: [
            { question: "Q2", conditional: 0.97, gain: 0.03, bounds: null },
            { question: "Q1", conditional: 0.70, gain: 0.30, bounds: null },
          ],
        },
      ],
      posterior: {
        S: { lower: [0.2, 0.748], upper: [0.252, 0.8] },
      },
    };
    const fetchMock = vi.fn(async () => jsonResponse(payload));
    const api = new ApiClient("", fetchMock as unknown as typeof fetch);
    const root = document.getElementById("root")!;
    const view = new InstructorView(root, api);
    await view.show("s1", "token");
    const rows = root.querySelectorAll(".score-table tbody tr");
    expect(rows[0].children[0].textContent).toBe("Q1");
    expect(rows[1].children[0].textContent).toBe("Q2");
    const band = root.querySelector<HTMLElement>(".bar-interval")!;
    expect(band.dataset.lower).toBe("0.748");
    expect(root.querySelector(".bar-midpoint")).not.toBeNull();
  });

  it("renders point posterior bars for Bayesian sessions", async () => {
    const payload = {
      session: { session_id: "s2", model_id: "fig1", status: "active" },
      answers: [],
      trace: [],
      posterior: { S: { p: [0.25, 0.75] } },
    };
    const fetchMock = vi.fn(async () => jsonResponse(payload));
    const api = new ApiClient("", fetchMock as unknown as typeof fetch);
    const root = document.getElementById("root")!;
    await new InstructorView(root, api).show("s2", "token");
    const fill = root.querySelector<HTMLElement>(".bar-fill")!;
    expect(fill.dataset.value).toBe("0.750");
  });
});
