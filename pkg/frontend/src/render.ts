import {
  cooldownRemaining, escapeHtml, formatBytes, formatDuration,
} from "./format.js";
import type { DashboardState, Notice } from "./state.js";
import type { ClientRow, StatusInfo } from "./types.js";

/** HTML-string renderers. Pure functions of state plus the current time so
 * they are testable without a DOM; main.ts mounts the strings and wires
 * delegated event handlers by data attributes. */

export function renderStaleBanner(state: DashboardState): string {
  if (!state.stale) {
    return "";
  }
  return `<div class="banner stale" role="alert">` +
    `Control API unreachable; showing last known data.</div>`;
}

export function renderNotices(notices: Notice[]): string {
  if (notices.length === 0) {
    return "";
  }
  const items = notices.map((n) =>
    `<li class="notice ${n.kind}" data-seq="${n.seq}">` +
    `${escapeHtml(n.text)}` +
    `<button class="dismiss" data-dismiss="${n.seq}">&times;</button></li>`,
  );
  return `<ul class="notices">${items.join("")}</ul>`;
}

function usageBar(row: ClientRow): string {
  if (row.allocated_bytes <= 0) {
    return `<span class="muted">no quota</span>`;
  }
  // Percentage is presentation of two API fields, clamped for layout only.
  const pct = Math.min(100, (100 * row.used_bytes) / row.allocated_bytes);
  return `<div class="bar" title="${formatBytes(row.used_bytes)} of ${formatBytes(row.allocated_bytes)}">` +
    `<div class="bar-fill${pct >= 100 ? " full" : ""}" style="width:${pct.toFixed(1)}%"></div>` +
    `<span class="bar-label">${formatBytes(row.used_bytes)} / ${formatBytes(row.allocated_bytes)}</span>` +
    `</div>`;
}

function badges(row: ClientRow, nowSeconds: number): string {
  const parts: string[] = [];
  parts.push(row.online
    ? `<span class="badge online">online</span>`
    : `<span class="badge offline">offline</span>`);
  const remaining = cooldownRemaining(row.blocked_until, nowSeconds);
  if (remaining !== null && remaining > 0) {
    parts.push(`<span class="badge blocked">blocked ${formatDuration(remaining)}</span>`);
  }
  return parts.join(" ");
}

export function renderClientsTable(state: DashboardState, nowSeconds: number): string {
  if (state.clients.length === 0) {
    return `<p class="empty">No clients yet. Share the QR code or PAC URL to connect a device.</p>`;
  }
  const rows = state.clients.map((row) => {
    const busy = state.pendingActions.has(`disconnect:${row.ip}`);
    return `<tr data-ip="${escapeHtml(row.ip)}">` +
      `<td>${escapeHtml(row.identifier)}</td>` +
      `<td class="mono">${escapeHtml(row.ip)}</td>` +
      `<td>${badges(row, nowSeconds)}</td>` +
      `<td class="num">${formatBytes(row.bytes_up)}</td>` +
      `<td class="num">${formatBytes(row.bytes_down)}</td>` +
      `<td>${usageBar(row)}</td>` +
      `<td class="num">${row.live_sessions}</td>` +
      `<td><button class="danger" data-disconnect="${escapeHtml(row.ip)}"` +
      `${busy ? " disabled" : ""}>Disconnect</button></td>` +
      `</tr>`;
  });
  return `<table class="clients"><thead><tr>` +
    `<th>Client</th><th>IP</th><th>Status</th><th>Up</th><th>Down</th>` +
    `<th>Quota</th><th>Live</th><th></th>` +
    `</tr></thead><tbody>${rows.join("")}</tbody></table>`;
}

export function renderStatusSummary(status: StatusInfo | null): string {
  if (status === null) {
    return `<p class="empty">Loading status...</p>`;
  }
  const vpn = status.vpn.active
    ? `<span class="badge online">VPN via ${escapeHtml(status.vpn.interface_name ?? "?")}</span>`
    : `<span class="badge offline">no VPN tunnel</span>`;
  return `${vpn} <span class="muted">up ${formatDuration(status.uptime_seconds)}</span>`;
}

export function renderProvisioning(status: StatusInfo | null, qrSvg: string): string {
  if (status === null) {
    return "";
  }
  const p = status.provisioning;
  return `<div class="provisioning">` +
    `<div class="qr">${qrSvg}</div>` +
    `<dl>` +
    `<dt>Proxy</dt><dd class="mono">${escapeHtml(p.host)}:${p.http_port} (HTTP) / ` +
    `${escapeHtml(p.host)}:${p.socks_port} (SOCKS5)</dd>` +
    `<dt>PAC URL</dt><dd class="mono">${escapeHtml(p.pac_url)} ` +
    `<button data-copy="${escapeHtml(p.pac_url)}">Copy</button></dd>` +
    `<dt>Help</dt><dd><a href="${escapeHtml(p.help_url)}">${escapeHtml(p.help_url)}</a></dd>` +
    `</dl></div>`;
}
