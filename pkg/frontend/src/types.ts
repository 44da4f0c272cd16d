/** Shapes of the control API responses. The dashboard renders these fields
 * verbatim; it never derives quotas, verdicts or rates on its own. */

export interface ClientRow {
  ip: string;
  identifier: string;
  first_seen: number;
  last_seen: number;
  online: boolean;
  discovery_source: string;
  bytes_up: number;
  bytes_down: number;
  session_count: number;
  live_sessions: number;
  allocated_bytes: number;
  used_bytes: number;
  blocked_until: number | null;
}

export interface SessionRecord {
  session_id: string;
  client_ip: string;
  protocol: string;
  target_host: string | null;
  target_port: number | null;
  verdict: string;
  detail: string;
  started_at: number;
  ended_at: number | null;
  bytes_up: number;
  bytes_down: number;
}

export interface PerfSample {
  timestamp: number;
  cpu_fraction: number | null;
  battery_level: number | null;
  active_connections: number;
  throughput_up: number;
  throughput_down: number;
}

export interface QuotaPolicy {
  mode: "off" | "dynamic" | "fixed";
  total_quota_bytes: number;
  per_client_quota_bytes: number;
  cooldown: number;
}

export interface FilterRules {
  blocked_domains: string[];
  blocked_ports: number[];
  presets: Record<string, string[]>;
  enabled_presets: string[];
}

export interface StatusInfo {
  vpn: { active: boolean; interface_name: string | null; detected_at: number };
  uptime_seconds: number;
  quota_policy: QuotaPolicy;
  filters: FilterRules;
  provisioning: {
    host: string;
    http_port: number;
    socks_port: number;
    pac_url: string;
    help_url: string;
    qr_payload: string;
    auth_required: boolean;
  };
}

/** One SSE frame: `id:` carries seq, `event:` the type, `data:` this body. */
export interface ApiEvent {
  seq: number;
  type: string;
  timestamp: number;
  client_ip?: string;
  identifier?: string;
  detail?: string;
  [key: string]: unknown;
}
