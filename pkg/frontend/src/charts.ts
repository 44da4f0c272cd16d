import { formatBitsPerSecond } from "./format.js";
import type { PerfSample } from "./types.js";

/** Small dependency-free SVG time-series charts. All charts of one render
 * share the same x-domain so spikes line up vertically across series. */

export interface Series {
  label: string;
  points: Array<{ x: number; y: number | null }>;
  format: (v: number) => string;
}

const WIDTH = 600;
const HEIGHT = 120;
const PAD = 4;

export function seriesFromSamples(samples: PerfSample[]): Series[] {
  const point = (pick: (s: PerfSample) => number | null) =>
    samples.map((s) => ({ x: s.timestamp, y: pick(s) }));
  const series: Series[] = [
    {
      label: "Throughput down",
      points: point((s) => s.throughput_down),
      format: formatBitsPerSecond,
    },
    {
      label: "Throughput up",
      points: point((s) => s.throughput_up),
      format: formatBitsPerSecond,
    },
    {
      label: "CPU",
      points: point((s) => s.cpu_fraction),
      format: (v) => `${(100 * v).toFixed(0)}%`,
    },
    {
      label: "Active connections",
      points: point((s) => s.active_connections),
      format: (v) => v.toFixed(0),
    },
  ];
  // The battery chart only exists when the platform reports a battery.
  if (samples.some((s) => s.battery_level !== null)) {
    series.push({
      label: "Battery",
      points: point((s) => s.battery_level),
      format: (v) => `${v.toFixed(0)}%`,
    });
  }
  return series;
}

export function xDomain(samples: PerfSample[]): [number, number] {
  if (samples.length === 0) {
    return [0, 1];
  }
  const xs = samples.map((s) => s.timestamp);
  const min = Math.min(...xs);
  const max = Math.max(...xs);
  return [min, max > min ? max : min + 1];
}

export function polylinePoints(series: Series, domain: [number, number]): string {
  const valid = series.points.filter((p) => p.y !== null) as Array<{ x: number; y: number }>;
  if (valid.length === 0) {
    return "";
  }
  const [x0, x1] = domain;
  const yMax = Math.max(1e-9, ...valid.map((p) => p.y));
  return valid
    .map((p) => {
      const px = PAD + ((p.x - x0) / (x1 - x0)) * (WIDTH - 2 * PAD);
      const py = HEIGHT - PAD - (p.y / yMax) * (HEIGHT - 2 * PAD);
      return `${px.toFixed(1)},${py.toFixed(1)}`;
    })
    .join(" ");
}

export function renderChart(series: Series, domain: [number, number]): string {
  const valid = series.points.filter((p) => p.y !== null) as Array<{ x: number; y: number }>;
  const latest = valid.length > 0 ? series.format(valid[valid.length - 1].y) : "";
  const body = valid.length === 0
    ? `<text x="${WIDTH / 2}" y="${HEIGHT / 2}" text-anchor="middle" class="empty">no data</text>`
    : `<polyline fill="none" points="${polylinePoints(series, domain)}"></polyline>`;
  return `<figure class="chart"><figcaption>${series.label}` +
    `<span class="latest">${latest}</span></figcaption>` +
    `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" preserveAspectRatio="none">${body}</svg>` +
    `</figure>`;
}

export function renderPerfCharts(samples: PerfSample[]): string {
  if (samples.length === 0) {
    return `<p class="empty">No performance samples in this window yet.</p>`;
  }
  const domain = xDomain(samples);
  return seriesFromSamples(samples)
    .map((s) => renderChart(s, domain))
    .join("");
}
