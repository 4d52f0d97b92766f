// Typed client for the annotation-service HTTP API.

export interface Payload {
  question: string;
  ground_truth: string;
  rewritten_question: string;
  rewritten_condition: string;
  unsolvable_reason: string;
}

export interface Progress {
  session_id: string;
  total: number;
  annotated: number;
  accepted: number;
  rejected: number;
  remaining: number;
}

export type NextResponse =
  | { done: false; candidate_id: string; position: number; total: number; payload: Payload }
  | { done: true; progress: Progress };

export interface AnnotationBody {
  candidate_id: string;
  human_check: 0 | 1;
  difficulty_eval?: 0 | 1;
  annotator?: string;
}

export interface ApiErrorBody {
  error: { code: string; message: string; pending?: string[] };
}

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, body: ApiErrorBody | null) {
    super(body?.error?.message ?? `request failed with status ${status}`);
    this.code = body?.error?.code ?? "unknown";
    this.status = status;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    let body: ApiErrorBody | null = null;
    try {
      body = (await response.json()) as ApiErrorBody;
    } catch {
      body = null;
    }
    throw new ApiError(response.status, body);
  }
  return (await response.json()) as T;
}

export class AnnotationApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly sessionId: string = "main",
  ) {}

  private url(suffix: string): string {
    return `${this.baseUrl}/api/sessions/${encodeURIComponent(this.sessionId)}${suffix}`;
  }

  createSession(candidatesPath: string, problemsPath: string, shuffleSeed?: number) {
    return request<{ session_id: string; total: number }>(`${this.baseUrl}/api/sessions`, {
      method: "POST",
      body: JSON.stringify({
        session_id: this.sessionId,
        candidates_path: candidatesPath,
        problems_path: problemsPath,
        shuffle_seed: shuffleSeed ?? null,
      }),
    });
  }

  next(): Promise<NextResponse> {
    return request<NextResponse>(this.url("/next"));
  }

  submit(body: AnnotationBody): Promise<{ acknowledged: boolean; progress: Progress }> {
    return request(this.url("/annotations"), { method: "POST", body: JSON.stringify(body) });
  }

  progress(): Promise<Progress> {
    return request<Progress>(this.url("/progress"));
  }

  exportSession(outPath: string) {
    return request<{ accepted: number; rejected: number; out_path: string }>(
      this.url("/export"),
      { method: "POST", body: JSON.stringify({ out_path: outPath }) },
    );
  }
}
