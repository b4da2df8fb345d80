/** Typed client for the curation API.
 *
 * Responses come back as { status, body } instead of throws so the UI
 * can surface 400/409 inline without losing rater input. The agreement
 * endpoint is also exposed as raw text: displayed statistics must stay
 * byte-equal to what the server sent, so the dashboard lifts literals
 * straight out of the response body rather than re-serializing floats.
 */

import type {
  AgreementReport,
  Disagreement,
  LabelRecord,
  LabelSubmission,
  Progress,
  Task,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ApiResult<T> {
  status: number;
  body: T;
}

export interface ApiError {
  error: string;
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<ApiResult<T>> {
    const resp = await this.fetchImpl(this.base + path);
    return { status: resp.status, body: (await resp.json()) as T };
  }

  nextTask(rater: string): Promise<ApiResult<Task>> {
    return this.getJson<Task>(`/api/tasks/next?rater=${encodeURIComponent(rater)}`);
  }

  async postLabel(
    submission: LabelSubmission,
  ): Promise<ApiResult<LabelRecord | ApiError>> {
    const resp = await this.fetchImpl(this.base + "/api/labels", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(submission),
    });
    return {
      status: resp.status,
      body: (await resp.json()) as LabelRecord | ApiError,
    };
  }

  agreement(): Promise<ApiResult<AgreementReport>> {
    return this.getJson<AgreementReport>("/api/agreement");
  }

  /** Raw body text of /api/agreement, for byte-faithful display. */
  async agreementRaw(): Promise<{ status: number; text: string }> {
    const resp = await this.fetchImpl(this.base + "/api/agreement");
    return { status: resp.status, text: await resp.text() };
  }

  disagreements(): Promise<ApiResult<{ disagreements: Disagreement[] }>> {
    return this.getJson("/api/disagreements");
  }

  progress(): Promise<ApiResult<Progress>> {
    return this.getJson<Progress>("/api/progress");
  }
}
