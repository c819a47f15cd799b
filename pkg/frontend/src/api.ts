import type {
  GroupByPayload,
  ResultsPayload,
  RunInfo,
  TaskView,
} from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface ResultFilters {
  evaluator?: number;
  outcome_min?: number;
  outcome_max?: number;
  word_count_min?: number;
  word_count_max?: number;
  sort?: "outcome" | "word_count";
  descending?: boolean;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client for the backend's /api/v1 endpoints. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  listTasks(): Promise<{ v: number; tasks: string[] }> {
    return this.request("GET", "/api/v1/tasks");
  }

  getTask(taskId: string): Promise<TaskView> {
    return this.request("GET", `/api/v1/tasks/${encodeURIComponent(taskId)}`);
  }

  createTask(body: {
    conllu?: string;
    text?: string;
    parse_provider_url?: string;
    template: string;
    evaluators: { operator: string; argument: string; name?: string }[];
    pinned?: [number, number][];
  }): Promise<TaskView> {
    return this.request("POST", "/api/v1/tasks", body);
  }

  patchSegment(
    taskId: string,
    action: "merge" | "expand" | "set_alternatives",
    segmentId: number,
    options: string[] = [],
  ): Promise<TaskView> {
    return this.request(
      "PATCH",
      `/api/v1/tasks/${encodeURIComponent(taskId)}/segments`,
      { action, segment_id: segmentId, options },
    );
  }

  startRun(
    taskId: string,
    config: Record<string, unknown> = {},
  ): Promise<{ run_id: string; task_id: string; state: string }> {
    return this.request(
      "POST",
      `/api/v1/tasks/${encodeURIComponent(taskId)}/runs`,
      config,
    );
  }

  getRun(runId: string): Promise<RunInfo> {
    return this.request("GET", `/api/v1/runs/${encodeURIComponent(runId)}`);
  }

  getResults(runId: string, filters: ResultFilters = {}): Promise<ResultsPayload> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filters)) {
      if (value !== undefined) {
        params.set(key, String(value));
      }
    }
    const query = params.toString();
    const path = `/api/v1/runs/${encodeURIComponent(runId)}/results`;
    return this.request("GET", query ? `${path}?${query}` : path);
  }

  groupBy(
    runId: string,
    selection: number[],
    evaluator = 0,
  ): Promise<GroupByPayload> {
    return this.request(
      "POST",
      `/api/v1/runs/${encodeURIComponent(runId)}/groupby`,
      { selection, evaluator },
    );
  }

  cfText(
    runId: string,
    cfId: number,
  ): Promise<{ cf_id: number; text: string; bits: string; word_count: number }> {
    return this.request(
      "GET",
      `/api/v1/runs/${encodeURIComponent(runId)}/cf/${cfId}/text`,
    );
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      const code = payload?.code ?? "UnknownError";
      const message = payload?.message ?? `request failed (${response.status})`;
      throw new ApiError(response.status, code, message);
    }
    return payload as T;
  }
}
