import type {
  ActsResponse,
  ApiError,
  CheckpointStats,
  DialogAct,
  SchemaView,
  SessionCreated,
  SessionView,
} from "./types.js";

export class ServiceError extends Error {
  code: string;
  status: number;

  constructor(status: number, body: ApiError) {
    super(body.message);
    this.code = body.error;
    this.status = status;
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(base + path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const body = await res.json();
  if (!res.ok) {
    throw new ServiceError(res.status, body as ApiError);
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  createSession(checkpointId?: string): Promise<SessionCreated> {
    return request(this.base, "/sessions", {
      method: "POST",
      body: JSON.stringify(checkpointId ? { checkpoint_id: checkpointId } : {}),
    });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return request(this.base, `/sessions/${sessionId}`);
  }

  postActs(sessionId: string, acts: DialogAct[]): Promise<ActsResponse> {
    return request(this.base, `/sessions/${sessionId}/acts`, {
      method: "POST",
      body: JSON.stringify({ acts }),
    });
  }

  terminate(sessionId: string): Promise<{ status: string }> {
    return request(this.base, `/sessions/${sessionId}/terminate`, { method: "POST" });
  }

  judge(
    sessionId: string,
    verdict: "success" | "failure",
  ): Promise<{ recorded: boolean; verdict: string; sim_success: boolean }> {
    return request(this.base, `/sessions/${sessionId}/judgment`, {
      method: "POST",
      body: JSON.stringify({ verdict }),
    });
  }

  getSchema(): Promise<SchemaView> {
    return request(this.base, "/schema");
  }

  getCheckpoints(): Promise<{ checkpoints: CheckpointStats[] }> {
    return request(this.base, "/checkpoints");
  }
}
