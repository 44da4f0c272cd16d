import { describe, expect, it } from "vitest";

import {
  polylinePoints, renderPerfCharts, seriesFromSamples, xDomain,
} from "../src/charts.js";
import type { PerfSample } from "../src/types.js";

function sample(t: number, overrides: Partial<PerfSample> = {}): PerfSample {
  return {
    timestamp: t,
    cpu_fraction: 0.1,
    battery_level: null,
    active_connections: 2,
    throughput_up: 1000,
    throughput_down: 2000,
    ...overrides,
  };
}

describe("perf charts", () => {
  it("emits one point per sample", () => {
    const samples = [sample(0), sample(5), sample(10)];
    const [series] = seriesFromSamples(samples);
    const points = polylinePoints(series, xDomain(samples));
    expect(points.split(" ")).toHaveLength(3);
  });

  it("aligns every series on the same x-domain so spikes correlate", () => {
    const samples = [sample(100), sample(105), sample(110)];
    const domain = xDomain(samples);
    const html = renderPerfCharts(samples);
    const xs = new Set<string>();
    for (const series of seriesFromSamples(samples)) {
      const first = polylinePoints(series, domain).split(" ")[0].split(",")[0];
      xs.add(first);
    }
    expect(xs.size).toBe(1); // same first x coordinate in every chart
    expect(html).toContain("Throughput down");
    expect(html).toContain("Active connections");
  });

  it("hides the battery chart when the platform has no battery", () => {
    const withoutBattery = seriesFromSamples([sample(0)]);
    expect(withoutBattery.map((s) => s.label)).not.toContain("Battery");
    const withBattery = seriesFromSamples([sample(0, { battery_level: 87.5 })]);
    expect(withBattery.map((s) => s.label)).toContain("Battery");
  });

  it("renders an explicit empty state for an empty window", () => {
    expect(renderPerfCharts([])).toContain("No performance samples");
  });

  it("skips null cpu values instead of plotting zeros", () => {
    const samples = [
      sample(0, { cpu_fraction: null }),
      sample(5),
      sample(10),
    ];
    const cpu = seriesFromSamples(samples).find((s) => s.label === "CPU")!;
    expect(polylinePoints(cpu, xDomain(samples)).split(" ")).toHaveLength(2);
  });
});
