import { ApiClient, ApiError } from "./api.js";
import { renderPerfCharts } from "./charts.js";
import { EventFeed } from "./feed.js";
import { payloadToSvg } from "./qr.js";
import {
  renderClientsTable, renderNotices, renderProvisioning, renderStaleBanner,
  renderStatusSummary,
} from "./render.js";
import {
  applyClients, applyEvent, applyPerfSnapshot, applyStatus, dismissNotice,
  initialState, markStale, needsClientRefresh, withPending, withoutPending,
  type DashboardState,
} from "./state.js";

const api = new ApiClient();
let state: DashboardState = initialState();
let perfWindow = 300;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing #${id}`);
  }
  return node;
}

function setState(next: DashboardState): void {
  state = next;
  render();
}

function render(): void {
  const now = Date.now() / 1000;
  el("banner").innerHTML = renderStaleBanner(state);
  el("notices").innerHTML = renderNotices(state.notices);
  el("status-summary").innerHTML = renderStatusSummary(state.status);
  el("clients").innerHTML = renderClientsTable(state, now);
  el("perf-charts").innerHTML = renderPerfCharts(state.perf);
  el("provisioning").innerHTML = renderProvisioning(
    state.status,
    state.status ? payloadToSvg(state.status.provisioning.qr_payload) : "",
  );
  renderSettingsForms();
}

function renderSettingsForms(): void {
  const status = state.status;
  if (status === null) {
    return;
  }
  const quotaForm = el("quota-form") as unknown as HTMLFormElement;
  if (!quotaForm.dataset.touched) {
    (quotaForm.elements.namedItem("mode") as HTMLSelectElement).value =
      status.quota_policy.mode;
    (quotaForm.elements.namedItem("total_quota_bytes") as HTMLInputElement).value =
      String(status.quota_policy.total_quota_bytes);
    (quotaForm.elements.namedItem("per_client_quota_bytes") as HTMLInputElement).value =
      String(status.quota_policy.per_client_quota_bytes);
  }
  const filterForm = el("filter-form") as unknown as HTMLFormElement;
  if (!filterForm.dataset.touched) {
    (filterForm.elements.namedItem("blocked_domains") as HTMLTextAreaElement).value =
      status.filters.blocked_domains.join("\n");
    (filterForm.elements.namedItem("blocked_ports") as HTMLInputElement).value =
      status.filters.blocked_ports.join(", ");
    const presetBox = el("presets");
    presetBox.innerHTML = Object.entries(status.filters.presets)
      .map(([name, domains]) => {
        const on = status.filters.enabled_presets.includes(name);
        return `<label class="preset"><input type="checkbox" name="preset" ` +
          `value="${name}"${on ? " checked" : ""}> ${name}` +
          `<span class="muted"> (${domains.join(", ")})</span></label>`;
      })
      .join("");
  }
}

async function refreshClients(): Promise<void> {
  try {
    setState(applyClients(state, await api.getClients()));
  } catch {
    setState(markStale(state));
  }
}

async function refreshStatus(): Promise<void> {
  try {
    setState(applyStatus(state, await api.getStatus()));
  } catch {
    setState(markStale(state));
  }
}

async function refreshPerf(): Promise<void> {
  try {
    setState(applyPerfSnapshot(state, await api.getPerf(perfWindow)));
  } catch {
    setState(markStale(state));
  }
}

function showFormError(id: string, message: string): void {
  el(id).textContent = message;
}

async function submitQuota(form: HTMLFormElement): Promise<void> {
  const data = new FormData(form);
  setState(withPending(state, "quota"));
  showFormError("quota-error", "");
  try {
    await api.putQuota({
      mode: String(data.get("mode")) as "off" | "dynamic" | "fixed",
      total_quota_bytes: Number(data.get("total_quota_bytes") || 0),
      per_client_quota_bytes: Number(data.get("per_client_quota_bytes") || 0),
    });
    delete form.dataset.touched;
    await refreshStatus();
    await refreshClients();
  } catch (err) {
    showFormError("quota-error", err instanceof ApiError ? err.message : String(err));
  } finally {
    setState(withoutPending(state, "quota"));
  }
}

async function submitFilters(form: HTMLFormElement): Promise<void> {
  const data = new FormData(form);
  const domains = String(data.get("blocked_domains") ?? "")
    .split(/\s+/).map((d) => d.trim()).filter((d) => d.length > 0);
  const ports = String(data.get("blocked_ports") ?? "")
    .split(/[\s,]+/).filter((p) => p.length > 0).map((p) => Number(p));
  const presets = data.getAll("preset").map(String);
  setState(withPending(state, "filters"));
  showFormError("filter-error", "");
  try {
    await api.putFilters({
      blocked_domains: domains,
      blocked_ports: ports,
      enabled_presets: presets,
    });
    delete form.dataset.touched;
    await refreshStatus();
  } catch (err) {
    showFormError("filter-error", err instanceof ApiError ? err.message : String(err));
  } finally {
    setState(withoutPending(state, "filters"));
  }
}

async function disconnect(ip: string): Promise<void> {
  setState(withPending(state, `disconnect:${ip}`));
  try {
    await api.disconnectClient(ip);
    await refreshClients();
  } finally {
    setState(withoutPending(state, `disconnect:${ip}`));
  }
}

function wire(): void {
  document.addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    const ip = target.dataset.disconnect;
    if (ip) {
      void disconnect(ip);
    }
    const seq = target.dataset.dismiss;
    if (seq) {
      setState(dismissNotice(state, Number(seq)));
    }
    const copy = target.dataset.copy;
    if (copy) {
      void navigator.clipboard.writeText(copy);
    }
  });
  document.addEventListener("input", (ev) => {
    const form = (ev.target as HTMLElement).closest("form");
    if (form) {
      form.dataset.touched = "1";
    }
  });
  el("quota-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    void submitQuota(ev.currentTarget as HTMLFormElement);
  });
  el("filter-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    void submitFilters(ev.currentTarget as HTMLFormElement);
  });
  el("perf-window").addEventListener("change", (ev) => {
    perfWindow = Number((ev.target as HTMLSelectElement).value);
    void refreshPerf();
  });
}

function start(): void {
  wire();
  void refreshStatus();
  void refreshClients();
  void refreshPerf();
  const feed = new EventFeed(
    "/api/events",
    (event) => {
      setState(applyEvent(state, event));
      if (needsClientRefresh(event)) {
        void refreshClients();
      }
    },
    () => {
      void refreshClients();
      void refreshStatus();
      void refreshPerf();
    },
  );
  feed.start();
  // Countdown badges and uptime tick without waiting for events.
  window.setInterval(render, 1000);
  window.setInterval(() => void refreshStatus(), 30_000);
}

start();
