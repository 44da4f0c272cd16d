import jsQR from "jsqr";
import { describe, expect, it } from "vitest";

import { encodeMatrix, matrixToSvg, payloadToSvg, type QrMatrix } from "../src/qr.js";

/** Rasterize the module matrix into RGBA pixels so an independent decoder
 * can read the rendered code back. */
function rasterize(matrix: QrMatrix, scale = 4, quietZone = 4): {
  data: Uint8ClampedArray; width: number; height: number;
} {
  const size = (matrix.size + 2 * quietZone) * scale;
  const data = new Uint8ClampedArray(size * size * 4).fill(255);
  for (let row = 0; row < matrix.size; row += 1) {
    for (let col = 0; col < matrix.size; col += 1) {
      if (!matrix.get(row, col)) {
        continue;
      }
      for (let dy = 0; dy < scale; dy += 1) {
        for (let dx = 0; dx < scale; dx += 1) {
          const px = (quietZone + col) * scale + dx;
          const py = (quietZone + row) * scale + dy;
          const offset = (py * size + px) * 4;
          data[offset] = data[offset + 1] = data[offset + 2] = 0;
        }
      }
    }
  }
  return { data, width: size, height: size };
}

const PAYLOAD =
  "proxyshare://v1?host=192.168.43.1&http=8080&socks=1080" +
  "&help=http%3A%2F%2F192.168.43.1%3A8088%2Fhelp";

describe("qr rendering", () => {
  it("decodes back to the exact provisioning URI", () => {
    const { data, width, height } = rasterize(encodeMatrix(PAYLOAD));
    const decoded = jsQR(data, width, height);
    expect(decoded).not.toBeNull();
    expect(decoded!.data).toBe(PAYLOAD);
  });

  it("round-trips a payload with percent-encoded credentials", () => {
    const payload = PAYLOAD + "&user=al%20ice&pass=s%26cret";
    const { data, width, height } = rasterize(encodeMatrix(payload));
    expect(jsQR(data, width, height)!.data).toBe(payload);
  });

  it("renders one svg rect per dark module plus the background", () => {
    const matrix = encodeMatrix(PAYLOAD);
    let dark = 0;
    for (let row = 0; row < matrix.size; row += 1) {
      for (let col = 0; col < matrix.size; col += 1) {
        if (matrix.get(row, col)) {
          dark += 1;
        }
      }
    }
    const svg = matrixToSvg(matrix);
    expect((svg.match(/<rect /g) ?? []).length).toBe(dark + 1);
    expect(svg).toContain("<svg");
  });

  it("payloadToSvg is deterministic for a fixed payload", () => {
    expect(payloadToSvg(PAYLOAD)).toBe(payloadToSvg(PAYLOAD));
  });
});
