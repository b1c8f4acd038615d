// API client: retry queue semantics under network failure, validation
// surfacing, and idempotency-token stability.

import { beforeEach, describe, expect, it, vi } from "vitest";
import { SurveyApi, ValidationError, submissionToken } from "../../src/api.js";

function body(question = "q000") {
  return {
    participant: "p1",
    question_id: question,
    chosen_image: "/static/a.png",
    clicks: [{ x: 1, y: 2, property: "object" },
             { x: 3, y: 4, property: "color" },
             { x: 5, y: 6, property: "light" }],
    dwell_ms: 12_000,
    token: submissionToken("p1", question),
  };
}

const fetchMock = vi.fn();

beforeEach(() => {
  fetchMock.mockReset();
  vi.stubGlobal("fetch", fetchMock);
});

describe("submitResponse", () => {
  it("stores on success", async () => {
    fetchMock.mockResolvedValue(new Response(JSON.stringify({ id: "r000001" }),
      { status: 201 }));
    const api = new SurveyApi("");
    const out = await api.submitResponse(body());
    expect(out).toEqual({ status: "stored", id: "r000001" });
    expect(api.pendingCount).toBe(0);
  });

  it("queues on network failure and keeps the payload", async () => {
    fetchMock.mockRejectedValue(new TypeError("network down"));
    const api = new SurveyApi("");
    const out = await api.submitResponse(body());
    expect(out.status).toBe("queued");
    expect(api.pendingCount).toBe(1);
  });

  it("surfaces validation errors instead of queueing", async () => {
    fetchMock.mockResolvedValue(new Response(
      JSON.stringify({ detail: { field: "clicks", error: "expected 3" } }),
      { status: 422 }));
    const api = new SurveyApi("");
    await expect(api.submitResponse(body())).rejects.toThrow(ValidationError);
    expect(api.pendingCount).toBe(0);
  });
});

describe("flushQueue", () => {
  it("delivers queued items exactly once on reconnect", async () => {
    fetchMock.mockRejectedValueOnce(new TypeError("offline"));
    const api = new SurveyApi("");
    await api.submitResponse(body());
    expect(api.pendingCount).toBe(1);

    fetchMock.mockResolvedValue(new Response(JSON.stringify({ id: "r000002" }),
      { status: 201 }));
    const delivered = await api.flushQueue();
    expect(delivered).toBe(1);
    expect(api.pendingCount).toBe(0);
    // one failed attempt + one successful delivery; no duplicates
    expect(fetchMock).toHaveBeenCalledTimes(2);
    const sent = JSON.parse(fetchMock.mock.calls[1]![1].body as string);
    expect(sent.token).toBe(submissionToken("p1", "q000"));
  });

  it("keeps items that fail again", async () => {
    fetchMock.mockRejectedValue(new TypeError("offline"));
    const api = new SurveyApi("");
    await api.submitResponse(body("q001"));
    await api.submitResponse(body("q002"));
    const delivered = await api.flushQueue();
    expect(delivered).toBe(0);
    expect(api.pendingCount).toBe(2);
  });
});

describe("submissionToken", () => {
  it("is stable per participant and question", () => {
    expect(submissionToken("p", "q")).toBe(submissionToken("p", "q"));
    expect(submissionToken("p", "q1")).not.toBe(submissionToken("p", "q2"));
  });
});
