import { describe, expect, it, vi } from "vitest";

import {
  ApiClient,
  ConflictError,
  SessionExpiredError,
  formatGrade,
} from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("creates sessions against the documented endpoint", async () => {
    const fetchMock = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      expect(String(url)).toBe("http://svc/sessions");
      const body = JSON.parse(String(init?.body));
      expect(body.model_id).toBe("fig1");
      return jsonResponse({ session_id: "abc", model_id: "fig1", status: "active" }, 201);
    });
    const api = new ApiClient("http://svc", fetchMock as unknown as typeof fetch);
    const descriptor = await api.createSession("fig1");
    expect(descriptor.session_id).toBe("abc");
  });

  it("sends the sequence token with answers", async () => {
    const fetchMock = vi.fn(async (_url: RequestInfo | URL, init?: RequestInit) => {
      const body = JSON.parse(String(init?.body));
      expect(body.sequence).toBe(3);
      return jsonResponse({
        accepted: true,
        duplicate: false,
        answered: 4,
        sequence: 4,
        finished: false,
        evaluation_midpoint: 0.6,
      });
    });
    const api = new ApiClient("", fetchMock as unknown as typeof fetch);
    const result = await api.submitAnswer("s", "Q1", "1", 3);
    expect(result.answered).toBe(4);
  });

  it("retries transient failures with the same sequence", async () => {
    let calls = 0;
    const fetchMock = vi.fn(async (_url: RequestInfo | URL, init?: RequestInit) => {
      calls += 1;
      if (calls === 1) throw new TypeError("network down");
      const body = JSON.parse(String(init?.body));
      expect(body.sequence).toBe(0);
      return jsonResponse({
        accepted: true,
        duplicate: true,
        answered: 1,
        sequence: 1,
        finished: false,
        evaluation_midpoint: 0.75,
      });
    });
    const api = new ApiClient("", fetchMock as unknown as typeof fetch);
    const result = await api.submitAnswerWithRetry("s", "Q1", "1", 0);
    expect("conflict" in result).toBe(false);
    expect(calls).toBe(2);
  });

  it("reports conflicts for the caller to refetch", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ detail: "stale sequence" }, 409),
    );
    const api = new ApiClient("", fetchMock as unknown as typeof fetch);
    const result = await api.submitAnswerWithRetry("s", "Q1", "1", 0);
    expect(result).toEqual({ conflict: true });
  });

  it("maps 409 and 404 onto typed errors", async () => {
    const api409 = new ApiClient(
      "",
      vi.fn(async () => jsonResponse({ detail: "conflict" }, 409)) as unknown as typeof fetch,
    );
    await expect(api409.submitAnswer("s", "Q", "1", 0)).rejects.toBeInstanceOf(
      ConflictError,
    );
    const api404 = new ApiClient(
      "",
      vi.fn(async () => jsonResponse({ detail: "gone" }, 404)) as unknown as typeof fetch,
    );
    await expect(api404.next("s")).rejects.toBeInstanceOf(SessionExpiredError);
  });

  it("formats point and interval grades", () => {
    expect(formatGrade({ value: 0.818, midpoint: 0.818 })).toBe("0.818");
    expect(formatGrade({ lower: 0.784, upper: 0.852, midpoint: 0.818 })).toBe(
      "0.818 [0.784, 0.852]",
    );
  });
});
