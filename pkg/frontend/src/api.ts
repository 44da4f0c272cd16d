import type {
  ClientRow, FilterRules, PerfSample, QuotaPolicy, SessionRecord, StatusInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed wrapper over the control API. `fetchImpl` is injectable so
 * tests can run without a server. */
export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const resp = await this.fetchImpl(this.base + path, init);
    const text = await resp.text();
    if (!resp.ok) {
      let message = text;
      try {
        message = (JSON.parse(text) as { error?: string }).error ?? text;
      } catch {
        /* non-JSON error body, keep raw text */
      }
      throw new ApiError(resp.status, message);
    }
    return JSON.parse(text) as T;
  }

  getClients(): Promise<ClientRow[]> {
    return this.request("GET", "/api/clients");
  }

  getSessions(clientIp?: string): Promise<SessionRecord[]> {
    const suffix = clientIp ? `?client=${encodeURIComponent(clientIp)}` : "";
    return this.request("GET", `/api/sessions${suffix}`);
  }

  getPerf(windowSeconds?: number): Promise<PerfSample[]> {
    const suffix = windowSeconds !== undefined ? `?window=${windowSeconds}` : "";
    return this.request("GET", `/api/perf${suffix}`);
  }

  getStatus(): Promise<StatusInfo> {
    return this.request("GET", "/api/status");
  }

  putQuota(policy: Partial<QuotaPolicy>): Promise<QuotaPolicy> {
    return this.request("PUT", "/api/quota", policy);
  }

  putFilters(rules: {
    blocked_domains?: string[];
    blocked_ports?: number[];
    enabled_presets?: string[];
  }): Promise<FilterRules> {
    return this.request("PUT", "/api/filters", rules);
  }

  disconnectClient(ip: string): Promise<{ client_ip: string; terminated_sessions: number }> {
    return this.request("POST", `/api/clients/${encodeURIComponent(ip)}/disconnect`);
  }
}
