/**
 * Typed client for the adaptive-test session service.
 *
 * Answer submissions carry a monotone sequence token, so a retried request
 * that already landed is acknowledged as a duplicate instead of double
 * applying. On a conflict the caller is expected to refetch the session
 * state; `submitAnswerWithRetry` bundles that loop.
 */

export interface SessionPolicy {
  kind?: string;
  model_kind?: string;
  credal_bound?: string;
}

export interface SessionRule {
  kind?: string;
  threshold?: number;
  max_questions?: number;
}

export interface SessionDescriptor {
  session_id: string;
  model_id: string;
  status: string;
}

export interface QuestionPayload {
  id: string;
  text: string;
  options: string[];
}

export interface CandidateScore {
  question: string;
  conditional: number;
  gain: number;
  bounds: [number, number] | null;
}

export interface NextPayload {
  finished: boolean;
  question?: QuestionPayload;
  sequence?: number;
  progress?: { answered: number; remaining: number };
  scores?: CandidateScore[];
  evaluation?: GradeMap;
}

export interface GradeEntry {
  value?: number;
  lower?: number;
  upper?: number;
  midpoint: number;
}

export type GradeMap = Record<string, GradeEntry>;

export interface AnswerResult {
  accepted: boolean;
  duplicate: boolean;
  answered: number;
  sequence: number;
  finished: boolean;
  evaluation_midpoint: number;
}

export interface TracePayload {
  session: SessionDescriptor & Record<string, unknown>;
  answers: { seq: number; question_id: string; state: string }[];
  trace: Record<string, unknown>[];
  posterior: Record<string, Record<string, number[]>>;
}

export interface ModelInfo {
  model_id: string;
  kind: string;
  skills: string[];
  questions: string[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class ConflictError extends ApiError {}
export class SessionExpiredError extends ApiError {}

type FetchLike = typeof fetch;

async function parseError(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && body.detail) detail = JSON.stringify(body.detail);
  } catch {
    /* non-JSON error body */
  }
  if (response.status === 404) throw new SessionExpiredError(404, detail);
  if (response.status === 409) throw new ConflictError(409, detail);
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  listModels(): Promise<ModelInfo[]> {
    return this.request<ModelInfo[]>("/models");
  }

  createSession(
    modelId: string,
    policy?: SessionPolicy,
    rule?: SessionRule,
  ): Promise<SessionDescriptor> {
    return this.request<SessionDescriptor>("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ model_id: modelId, policy, rule }),
    });
  }

  next(sessionId: string, instructorToken?: string): Promise<NextPayload> {
    const headers: Record<string, string> = {};
    if (instructorToken) headers["X-Instructor-Token"] = instructorToken;
    return this.request<NextPayload>(`/sessions/${sessionId}/next`, { headers });
  }

  submitAnswer(
    sessionId: string,
    questionId: string,
    state: string,
    sequence: number,
  ): Promise<AnswerResult> {
    return this.request<AnswerResult>(`/sessions/${sessionId}/answers`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ question_id: questionId, state, sequence }),
    });
  }

  /**
   * Submit with retries: transient network failures are retried with the
   * same sequence token (the server treats an exact repeat as a duplicate),
   * and a conflict resolves by refetching the current question.
   */
  async submitAnswerWithRetry(
    sessionId: string,
    questionId: string,
    state: string,
    sequence: number,
    attempts = 3,
  ): Promise<AnswerResult | { conflict: true }> {
    for (let attempt = 0; attempt < attempts; attempt += 1) {
      try {
        return await this.submitAnswer(sessionId, questionId, state, sequence);
      } catch (error) {
        if (error instanceof ConflictError) return { conflict: true };
        if (error instanceof ApiError) throw error;
        if (attempt === attempts - 1) throw error;
      }
    }
    throw new Error("unreachable");
  }

  evaluation(sessionId: string): Promise<{ session: SessionDescriptor; grades: GradeMap }> {
    return this.request(`/sessions/${sessionId}/evaluation`);
  }

  trace(sessionId: string, instructorToken: string): Promise<TracePayload> {
    return this.request(`/sessions/${sessionId}/trace`, {
      headers: { "X-Instructor-Token": instructorToken },
    });
  }
}

export function formatGrade(entry: GradeEntry): string {
  if (entry.value !== undefined && entry.value !== null) {
    return entry.value.toFixed(3);
  }
  return `${entry.midpoint.toFixed(3)} [${entry.lower!.toFixed(3)}, ${entry.upper!.toFixed(3)}]`;
}
