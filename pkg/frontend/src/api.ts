// Survey API client: typed wrappers over the JSON endpoints plus an
// offline retry queue so a submission is never lost and never duplicated
// (the server dedups on the idempotency token).

export interface QuestionPayload {
  done: boolean;
  question_id?: string;
  panorama_url?: string;
  control_url?: string;
  choice_urls?: string[];
  rotation_ms?: number;
  image_width?: number;
  image_height?: number;
}

export interface ClickPayload {
  x: number;
  y: number;
  property: string;
}

export interface ResponsePayload {
  participant: string;
  question_id: string;
  chosen_image: string;
  clicks: ClickPayload[];
  dwell_ms: number;
  token: string;
}

export const PROPERTIES = [
  "object", "material", "color", "light", "geometry", "texture", "other",
] as const;

interface QueueItem {
  url: string;
  body: ResponsePayload;
}

export class SurveyApi {
  private queue: QueueItem[] = [];
  private flushing = false;

  constructor(private baseUrl: string = "") {}

  async nextQuestion(participant: string): Promise<QuestionPayload> {
    const res = await fetch(
      `${this.baseUrl}/api/question?participant=${encodeURIComponent(participant)}`,
    );
    if (!res.ok) throw new Error(`question fetch failed: HTTP ${res.status}`);
    return (await res.json()) as QuestionPayload;
  }

  /**
   * Submit a response. Validation failures (HTTP 422) surface as errors;
   * network failures queue the submission for a later flush and report
   * `queued`. The token makes redelivery safe.
   */
  async submitResponse(
    body: ResponsePayload,
  ): Promise<{ status: "stored" | "queued"; id?: string }> {
    const url = `${this.baseUrl}/api/response`;
    try {
      const res = await fetch(url, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
      if (res.status === 422) {
        const detail = await res.json();
        throw new ValidationError(JSON.stringify(detail));
      }
      if (!res.ok) throw new Error(`HTTP ${res.status}`);
      const data = (await res.json()) as { id: string };
      return { status: "stored", id: data.id };
    } catch (err) {
      if (err instanceof ValidationError) throw err;
      this.queue.push({ url, body });
      return { status: "queued" };
    }
  }

  get pendingCount(): number {
    return this.queue.length;
  }

  /** Drain the retry queue sequentially; items that fail again stay queued. */
  async flushQueue(): Promise<number> {
    if (this.flushing) return 0;
    this.flushing = true;
    let delivered = 0;
    try {
      const remaining: QueueItem[] = [];
      for (const item of this.queue) {
        try {
          const res = await fetch(item.url, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(item.body),
          });
          if (res.ok || res.status === 422) {
            delivered += 1; // 422 will never succeed later; drop it
          } else {
            remaining.push(item);
          }
        } catch {
          remaining.push(item);
        }
      }
      this.queue = remaining;
    } finally {
      this.flushing = false;
    }
    return delivered;
  }
}

export class ValidationError extends Error {}

/** Idempotency token: stable per (participant, question). */
export function submissionToken(participant: string, questionId: string): string {
  return `${participant}:${questionId}`;
}
